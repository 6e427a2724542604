"""Energy-harvesting hierarchical FL simulator with a two-phase DDPG scheduler."""

__version__ = "0.1.0"

from .config import SystemConfig, load_config, spawn_stream

__all__ = ["SystemConfig", "load_config", "spawn_stream", "__version__"]
