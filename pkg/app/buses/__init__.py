__all__ = ["network"]
