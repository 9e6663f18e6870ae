__all__ = ["config", "metrics", "report", "runner"]
