"""Coordinator/client message vocabulary and wire-protocol errors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Union

if TYPE_CHECKING:
    from ..coordinator import RoundPlan
    from ..nncore import ArchitectureSpec, ModelWeights
    from ..trainer import NodeProfile

PROTOCOL_VERSION = 1
MAGIC = b"FEDW"
DEFAULT_PORT = 7787
# Bounds decode-side memory on small devices; configurable per codec call.
MAX_FRAME_BYTES = 256 * 1024 * 1024


class FedwireError(Exception):
    """Base class for wire-protocol failures."""


class ProtocolError(FedwireError):
    """Frame violates the protocol: bad magic, version, tag or size."""


class CorruptFrameError(FedwireError):
    """Checksum mismatch or malformed payload."""


class IncompleteFrameError(FedwireError):
    """More bytes are needed before the frame can be decoded."""

    def __init__(self, needed: int):
        super().__init__(f"frame incomplete: need at least {needed} more bytes")
        self.needed = needed


class TransportTimeoutError(FedwireError):
    """receive() exceeded its deadline; carries the elapsed duration."""

    def __init__(self, elapsed_s: float):
        super().__init__(f"receive timed out after {elapsed_s:.3f}s")
        self.elapsed_s = elapsed_s


class ConnectionLostError(FedwireError):
    """The peer disconnected mid-session."""


@dataclass(frozen=True)
class ClientMetrics:
    """Per-round client performance figures."""

    iterations_per_second: float
    epoch_losses: tuple[float, ...] = field(default_factory=tuple)
    wall_time_s: float = 0.0

    def validate(self) -> None:
        if self.iterations_per_second < 0 or self.wall_time_s < 0:
            raise ValueError("client metrics must be non-negative")


@dataclass(frozen=True)
class Register:
    client_id: str
    profile_summary: str = ""


@dataclass(frozen=True)
class ConfigPush:
    profile: "NodeProfile"
    arch: "ArchitectureSpec"
    plan: "RoundPlan"


@dataclass(frozen=True)
class WeightsDown:
    round_num: int
    weights: "ModelWeights"


@dataclass(frozen=True)
class TrainResult:
    round_num: int
    weights: "ModelWeights"
    sample_count: int
    metrics: ClientMetrics


@dataclass(frozen=True)
class EvalResult:
    round_num: int
    accuracy: float
    loss: float


@dataclass(frozen=True)
class Finish:
    reason: str


Message = Union[Register, ConfigPush, WeightsDown, TrainResult, EvalResult, Finish]
