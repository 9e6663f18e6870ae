__all__ = ["world"]
