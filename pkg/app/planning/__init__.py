__all__ = ["planner"]
