__all__ = ["link_model"]
