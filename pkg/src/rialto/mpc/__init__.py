"""Broker-side secure computation: actors, transports and the leakage-audited gate."""

from .engine import (
    LEAKAGE_TAGS,
    Broker,
    LeakageEntry,
    LeakageLog,
    MPCEngine,
    OrderMeta,
    ProtocolAbort,
    ReconstructionGate,
    ShareBundle,
    sort_key,
    validation_challenge,
)
from .transport import InProcessTransport, SocketTransport

__all__ = [
    "LEAKAGE_TAGS",
    "Broker",
    "LeakageEntry",
    "LeakageLog",
    "MPCEngine",
    "OrderMeta",
    "ProtocolAbort",
    "ReconstructionGate",
    "ShareBundle",
    "sort_key",
    "validation_challenge",
    "InProcessTransport",
    "SocketTransport",
]
