__all__ = ["discovery", "params", "pheromone"]
