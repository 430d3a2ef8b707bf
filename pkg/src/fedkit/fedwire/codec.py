"""Canonical binary framing for all coordinator/client messages.

Frame layout, little-endian throughout:

    magic "FEDW" | version u16 | variant tag u8 | payload length u64
    | payload | CRC-32(payload) u32

Weight payloads hold: tensor count u32, then per tensor a u16-length UTF-8
name, rank u8, dims u32[rank] and the raw little-endian float32 buffer.
Encoding is canonical (one byte string per message), so frames can be
compared and checksummed across platforms.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .messages import (
    MAGIC,
    MAX_FRAME_BYTES,
    PROTOCOL_VERSION,
    ClientMetrics,
    ConfigPush,
    CorruptFrameError,
    EvalResult,
    Finish,
    IncompleteFrameError,
    Message,
    ProtocolError,
    Register,
    TrainResult,
    WeightsDown,
)

_HEADER = struct.Struct("<4sHBQ")
_TAGS: dict[type, int] = {
    Register: 1,
    ConfigPush: 2,
    WeightsDown: 3,
    TrainResult: 4,
    EvalResult: 5,
    Finish: 6,
}


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def raw(self, b: bytes):
        self.parts.append(b)

    def u8(self, v: int):
        self.parts.append(struct.pack("<B", v))

    def u16(self, v: int):
        self.parts.append(struct.pack("<H", v))

    def u32(self, v: int):
        self.parts.append(struct.pack("<I", v))

    def u64(self, v: int):
        self.parts.append(struct.pack("<Q", v))

    def f64(self, v: float):
        self.parts.append(struct.pack("<d", v))

    def string(self, s: str):
        b = s.encode("utf-8")
        if len(b) > 0xFFFF:
            raise ValueError("string too long for wire format")
        self.u16(len(b))
        self.raw(b)

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptFrameError("payload ended prematurely")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def string(self) -> str:
        n = self.u16()
        try:
            return self._take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptFrameError(f"invalid UTF-8 in payload: {exc}") from exc

    def done(self) -> bool:
        return self.pos == len(self.buf)


def _write_weights(w: _Writer, weights) -> None:
    entries = weights.entries
    w.u32(len(entries))
    for name, arr in entries:
        w.string(name)
        w.u8(arr.ndim)
        for dim in arr.shape:
            w.u32(dim)
        w.raw(arr.astype("<f4", copy=False).tobytes())


def _read_weights(r: _Reader):
    from ..nncore import ModelWeights

    count = r.u32()
    entries = []
    for _ in range(count):
        name = r.string()
        rank = r.u8()
        shape = tuple(r.u32() for _ in range(rank))
        n_vals = 1
        for dim in shape:
            n_vals *= dim
        raw = r._take(4 * n_vals)
        arr = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        entries.append((name, arr))
    return ModelWeights(entries)


def _write_metrics(w: _Writer, m: ClientMetrics) -> None:
    w.f64(m.iterations_per_second)
    w.u32(len(m.epoch_losses))
    for loss in m.epoch_losses:
        w.f64(loss)
    w.f64(m.wall_time_s)


def _read_metrics(r: _Reader) -> ClientMetrics:
    iters = r.f64()
    losses = tuple(r.f64() for _ in range(r.u32()))
    return ClientMetrics(iterations_per_second=iters, epoch_losses=losses, wall_time_s=r.f64())


def _write_profile(w: _Writer, p) -> None:
    w.string(p.client_id)
    w.u32(p.epochs_per_round)
    w.u32(p.batch_size)
    w.f64(p.train_fraction)
    w.string(p.device_class)
    w.f64(p.speed_iters_per_s)


def _read_profile(r: _Reader):
    from ..trainer import NodeProfile

    return NodeProfile(
        client_id=r.string(),
        epochs_per_round=r.u32(),
        batch_size=r.u32(),
        train_fraction=r.f64(),
        device_class=r.string(),
        speed_iters_per_s=r.f64(),
    )


def _write_arch(w: _Writer, a) -> None:
    w.u32(a.input_size)
    w.u32(a.channels)
    w.u32(a.num_classes)
    w.u8(a.stem_stride)
    w.u8(len(a.stages))
    for blocks, width in a.stages:
        w.u32(blocks)
        w.u32(width)


def _read_arch(r: _Reader):
    from ..nncore import ArchitectureSpec

    input_size = r.u32()
    channels = r.u32()
    num_classes = r.u32()
    stem_stride = r.u8()
    stages = tuple((r.u32(), r.u32()) for _ in range(r.u8()))
    return ArchitectureSpec(
        input_size=input_size,
        channels=channels,
        num_classes=num_classes,
        stages=stages,
        stem_stride=stem_stride,
    )


def _write_plan(w: _Writer, plan) -> None:
    w.u32(plan.total_rounds)
    w.f64(-1.0 if plan.round_timeout_s is None else plan.round_timeout_s)
    w.string(plan.participation)
    opt = plan.optimizer
    w.f64(opt.learning_rate)
    w.f64(opt.momentum)
    w.u32(opt.patience)
    w.f64(opt.factor)
    w.f64(opt.min_lr)
    w.f64(opt.rel_threshold)
    w.f64(-1.0 if opt.max_grad_norm is None else opt.max_grad_norm)


def _read_plan(r: _Reader):
    from ..coordinator import RoundPlan
    from ..nncore import OptimizerConfig

    total_rounds = r.u32()
    timeout = r.f64()
    participation = r.string()
    learning_rate = r.f64()
    momentum = r.f64()
    patience = r.u32()
    factor = r.f64()
    min_lr = r.f64()
    rel_threshold = r.f64()
    max_grad_norm = r.f64()
    opt = OptimizerConfig(
        learning_rate=learning_rate,
        momentum=momentum,
        patience=patience,
        factor=factor,
        min_lr=min_lr,
        rel_threshold=rel_threshold,
        max_grad_norm=None if max_grad_norm < 0 else max_grad_norm,
    )
    return RoundPlan(
        total_rounds=total_rounds,
        round_timeout_s=None if timeout < 0 else timeout,
        participation=participation,
        optimizer=opt,
    )


def _encode_payload(msg: Message) -> bytes:
    w = _Writer()
    if isinstance(msg, Register):
        w.string(msg.client_id)
        w.string(msg.profile_summary)
    elif isinstance(msg, ConfigPush):
        _write_profile(w, msg.profile)
        _write_arch(w, msg.arch)
        _write_plan(w, msg.plan)
    elif isinstance(msg, WeightsDown):
        w.u32(msg.round_num)
        _write_weights(w, msg.weights)
    elif isinstance(msg, TrainResult):
        w.u32(msg.round_num)
        _write_weights(w, msg.weights)
        w.u64(msg.sample_count)
        _write_metrics(w, msg.metrics)
    elif isinstance(msg, EvalResult):
        w.u32(msg.round_num)
        w.f64(msg.accuracy)
        w.f64(msg.loss)
    elif isinstance(msg, Finish):
        w.string(msg.reason)
    else:
        raise TypeError(f"not a wire message: {type(msg).__name__}")
    return w.getvalue()


def _decode_payload(tag: int, payload: bytes) -> Message:
    r = _Reader(payload)
    if tag == 1:
        msg: Message = Register(client_id=r.string(), profile_summary=r.string())
    elif tag == 2:
        msg = ConfigPush(profile=_read_profile(r), arch=_read_arch(r), plan=_read_plan(r))
    elif tag == 3:
        msg = WeightsDown(round_num=r.u32(), weights=_read_weights(r))
    elif tag == 4:
        msg = TrainResult(
            round_num=r.u32(),
            weights=_read_weights(r),
            sample_count=r.u64(),
            metrics=_read_metrics(r),
        )
    elif tag == 5:
        msg = EvalResult(round_num=r.u32(), accuracy=r.f64(), loss=r.f64())
    elif tag == 6:
        msg = Finish(reason=r.string())
    else:
        raise ProtocolError(f"unknown message tag {tag}")
    if not r.done():
        raise CorruptFrameError(f"{len(payload) - r.pos} trailing payload bytes")
    return msg


def encode(msg: Message) -> bytes:
    """Message -> canonical frame bytes."""
    payload = _encode_payload(msg)
    header = _HEADER.pack(MAGIC, PROTOCOL_VERSION, _TAGS[type(msg)], len(payload))
    checksum = struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    return header + payload + checksum


def decode(buf: bytes, max_frame_bytes: int = MAX_FRAME_BYTES) -> tuple[Message, int]:
    """Decode one frame from the head of `buf`; returns (message, bytes consumed).

    Raises IncompleteFrameError when more bytes are required, ProtocolError on
    bad magic/version/tag/size and CorruptFrameError on checksum or payload
    damage.
    """
    if len(buf) < _HEADER.size:
        raise IncompleteFrameError(_HEADER.size - len(buf))
    magic, version, tag, length = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"peer speaks protocol version {version}, this side speaks {PROTOCOL_VERSION}")
    if length > max_frame_bytes:
        raise ProtocolError(f"frame of {length} bytes exceeds the {max_frame_bytes}-byte limit")
    total = _HEADER.size + length + 4
    if len(buf) < total:
        raise IncompleteFrameError(total - len(buf))
    payload = bytes(buf[_HEADER.size : _HEADER.size + length])
    (expected_crc,) = struct.unpack_from("<I", buf, _HEADER.size + length)
    actual_crc = zlib.crc32(payload) & 0xFFFFFFFF
    if actual_crc != expected_crc:
        raise CorruptFrameError(f"payload checksum {actual_crc:#010x} != {expected_crc:#010x}")
    return _decode_payload(tag, payload), total


WEIGHTS_FILE_MAGIC = b"FEDWTS01"


def encode_weights(weights) -> bytes:
    """Standalone weight payload in the frame's tensor wire format."""
    w = _Writer()
    _write_weights(w, weights)
    return w.getvalue()


def decode_weights(buf: bytes):
    r = _Reader(buf)
    weights = _read_weights(r)
    if not r.done():
        raise CorruptFrameError("trailing bytes after weight payload")
    return weights


def save_weights(weights, path) -> None:
    """Write weights to a file, bit-exact with the wire representation."""
    with open(path, "wb") as f:
        f.write(WEIGHTS_FILE_MAGIC)
        f.write(encode_weights(weights))


def load_weights(path):
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(WEIGHTS_FILE_MAGIC):
        raise ProtocolError(f"{path} is not a fedkit weights file")
    return decode_weights(blob[len(WEIGHTS_FILE_MAGIC):])


def frame_size(buf: bytes, max_frame_bytes: int = MAX_FRAME_BYTES) -> int:
    """Total size of the frame starting at buf, validating the header only."""
    if len(buf) < _HEADER.size:
        raise IncompleteFrameError(_HEADER.size - len(buf))
    magic, version, _, length = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"peer speaks protocol version {version}, this side speaks {PROTOCOL_VERSION}")
    if length > max_frame_bytes:
        raise ProtocolError(f"frame of {length} bytes exceeds the {max_frame_bytes}-byte limit")
    return _HEADER.size + length + 4
