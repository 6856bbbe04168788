"""Authenticated multicast time synchronization with a simulation harness.

The sender signs SYNC (or FOLLOWUP) messages with a per-session key announced
under its long-term key; receivers enforce sequence freshness, clamp every
correction to the drift budget, and periodically run an authenticated delay
measurement that catches asymmetric delay attacks.
"""

from .analysis import BoundsSet, RunReport, check, compute_bounds, evaluate
from .clock import ConfigError, NetParams, SimClock
from .receiver import Receiver
from .sender import Sender

__version__ = "0.1.0"

__all__ = [
    "BoundsSet",
    "ConfigError",
    "NetParams",
    "Receiver",
    "RunReport",
    "Sender",
    "SimClock",
    "check",
    "compute_bounds",
    "evaluate",
]
