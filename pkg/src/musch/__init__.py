"""Window-based BFT consensus with a deterministic network simulator."""

from .scenario import Scenario
from .simnet import run
from .types import ProtocolConfig

__all__ = ["ProtocolConfig", "Scenario", "run"]
