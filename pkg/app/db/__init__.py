__all__ = ["engine", "models", "repositories"]


