"""Energy-aware multi-task federated learning over a UAV swarm."""

__version__ = "0.1.0"
