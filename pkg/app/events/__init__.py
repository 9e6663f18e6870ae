__all__ = ["log"]
