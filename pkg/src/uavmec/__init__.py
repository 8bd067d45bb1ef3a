"""Multi-UAV mobile edge computing: simulator, graph-attention MARL agents and
decentralised federated learning with gradient-aware quantisation."""

from .config import SimConfig, load_config, make_config

__all__ = ["SimConfig", "load_config", "make_config"]
__version__ = "0.1.0"
