__all__ = ["street_map"]
