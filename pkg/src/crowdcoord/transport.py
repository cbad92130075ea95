"""Wire schema and channels.

Frames are a 4-byte big-endian payload length followed by a UTF-8 JSON
object with a ``type`` field naming the message variant; byte-valued
fields travel base64-encoded. The same codec backs both the in-memory
simulated network (latency/drop/partition injection via ``LinkModel``)
and the loopback TCP channel, so the two are bit-compatible.
"""

from __future__ import annotations

import base64
import enum
import json
import random
import socket
import struct
from dataclasses import dataclass, field

from .errors import FrameError, InvalidInput, ProtocolError

__all__ = [
    "MessageType",
    "Message",
    "encode",
    "decode",
    "LinkModel",
    "Link",
    "deliver",
    "FramedSocket",
    "telemetry_body",
    "profile_body",
]

HEADER = struct.Struct(">I")
MAX_FRAME_BYTES = 16 * 1024 * 1024


class MessageType(enum.Enum):
    REGISTER = "register"
    HEARTBEAT = "heartbeat"
    TELEMETRY = "telemetry"
    ASSIGN_TASK = "assign_task"
    CHECKPOINT_UPLOAD = "checkpoint_upload"
    COMMIT_RESULT = "commit_result"
    ACK = "ack"
    REJECT = "reject"
    DISCONNECT_NOTICE = "disconnect_notice"


# Body keys permitted per message type; decode rejects strays so schema
# drift fails loudly instead of silently.
_ALLOWED_KEYS: dict[MessageType, set[str]] = {
    MessageType.REGISTER: {"profile", "telemetry"},
    MessageType.HEARTBEAT: {"telemetry"},
    MessageType.TELEMETRY: {"telemetry"},
    MessageType.ASSIGN_TASK: {
        "task_id", "job_id", "slice_index", "start", "stop", "slice_seed",
        "workload", "params", "start_cursor", "vars", "attempt",
    },
    MessageType.CHECKPOINT_UPLOAD: {"task_id", "cursor", "vars"},
    MessageType.COMMIT_RESULT: {"task_id", "result"},
    MessageType.ACK: {"of", "task_id"},
    MessageType.REJECT: {"of", "task_id", "reason"},
    MessageType.DISCONNECT_NOTICE: set(),
}

# Fields carrying raw bytes (or maps of raw bytes) that need base64.
_BYTES_FIELDS = {"result"}
_BYTES_MAPS = {"vars"}


@dataclass(frozen=True)
class Message:
    type: MessageType
    sender: str
    seq: int
    body: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.seq < 0:
            raise InvalidInput("sequence numbers must be non-negative")
        stray = set(self.body) - _ALLOWED_KEYS[self.type]
        if stray:
            raise ProtocolError(f"{self.type.value} body has unknown keys {sorted(stray)}")


def _encode_value(key: str, value):
    if key in _BYTES_FIELDS:
        return base64.b64encode(value).decode("ascii")
    if key in _BYTES_MAPS:
        return {name: base64.b64encode(raw).decode("ascii") for name, raw in value.items()}
    return value


def _decode_value(key: str, value):
    if key in _BYTES_FIELDS:
        return base64.b64decode(value)
    if key in _BYTES_MAPS:
        return {name: base64.b64decode(raw) for name, raw in value.items()}
    return value


def encode(msg: Message) -> bytes:
    """Frame a message: length header plus canonical JSON payload."""
    payload = {"type": msg.type.value, "sender": msg.sender, "seq": msg.seq}
    for key, value in msg.body.items():
        payload[key] = _encode_value(key, value)
    raw = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return HEADER.pack(len(raw)) + raw


def decode(frame: bytes) -> Message:
    """Inverse of :func:`encode`; raises FrameError / ProtocolError."""
    if len(frame) < HEADER.size:
        raise FrameError("frame shorter than length header")
    (length,) = HEADER.unpack(frame[: HEADER.size])
    if length == 0:
        raise FrameError("zero-length payload")
    if length > MAX_FRAME_BYTES:
        raise FrameError(f"frame of {length} bytes exceeds limit")
    payload = frame[HEADER.size :]
    if len(payload) != length:
        raise FrameError(f"expected {length} payload bytes, got {len(payload)}")
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"payload is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError("payload must be a JSON object")
    try:
        mtype = MessageType(obj.pop("type"))
    except (KeyError, ValueError) as exc:
        raise ProtocolError(f"unknown or missing message type: {exc}") from exc
    try:
        sender = obj.pop("sender")
        seq = obj.pop("seq")
    except KeyError as exc:
        raise ProtocolError(f"missing header field {exc}") from exc
    body = {key: _decode_value(key, value) for key, value in obj.items()}
    return Message(type=mtype, sender=sender, seq=seq, body=body)


def telemetry_body(snap) -> dict:
    """Wire shape of a TelemetrySnapshot (sender carries the worker id)."""
    return {
        "cpu_util": snap.cpu_util,
        "free_mem_gb": snap.free_mem_gb,
        "battery": snap.battery,
        "latency_ms": snap.latency_ms,
        "thermal": snap.thermal,
        "timestamp_s": snap.timestamp_s,
    }


def profile_body(profile) -> dict:
    """Wire shape of the capability fields a worker declares on register."""
    return {
        "id": profile.id,
        "cores": profile.cores,
        "freq_ghz": profile.freq_ghz,
        "ram_gb": profile.ram_gb,
    }


# ---------------------------------------------------------------------------
# Simulated link


@dataclass(frozen=True)
class LinkModel:
    """Fault-injection parameters for one directed channel."""

    base_latency_s: float = 0.0
    jitter_s: float = 0.0
    drop_probability: float = 0.0
    partitions: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.base_latency_s < 0.0 or self.jitter_s < 0.0:
            raise InvalidInput("latency and jitter must be non-negative")
        if not 0.0 <= self.drop_probability < 1.0:
            raise InvalidInput("drop_probability must be in [0, 1)")
        last_end = None
        for start, end in self.partitions:
            if start >= end:
                raise InvalidInput("partition window must have start < end")
            if last_end is not None and start < last_end:
                raise InvalidInput("partition windows must be ordered and disjoint")
            last_end = end

    def in_partition(self, at_s: float) -> bool:
        return any(start <= at_s < end for start, end in self.partitions)


class Link:
    """A directed channel applying a LinkModel with FIFO delivery.

    Delivery times are clamped to the previous delivery on the same
    link, so jitter can never reorder messages.
    """

    def __init__(self, model: LinkModel):
        self.model = model
        self._last_delivery_s = 0.0

    def deliver(self, send_time_s: float, rng: random.Random) -> float | None:
        """Delivery timestamp for a message sent now, or None if dropped."""
        if send_time_s < 0.0:
            raise InvalidInput("send time must be non-negative")
        if self.model.in_partition(send_time_s):
            return None
        if self.model.drop_probability > 0.0 and rng.random() < self.model.drop_probability:
            return None
        jitter = rng.uniform(0.0, self.model.jitter_s) if self.model.jitter_s > 0.0 else 0.0
        at = send_time_s + self.model.base_latency_s + jitter
        at = max(at, self._last_delivery_s)
        self._last_delivery_s = at
        return at


def deliver(link: Link, msg: Message, send_time_s: float, rng: random.Random) -> float | None:
    """Operation-style wrapper over :meth:`Link.deliver`."""
    return link.deliver(send_time_s, rng)


# ---------------------------------------------------------------------------
# Loopback TCP


class FramedSocket:
    """Blocking socket wrapper speaking the length-prefixed codec."""

    def __init__(self, sock: socket.socket):
        self._sock = sock

    def send_message(self, msg: Message) -> None:
        self._sock.sendall(encode(msg))

    def recv_message(self) -> Message | None:
        """Next message, or None on clean EOF at a frame boundary."""
        header = self._recv_exact(HEADER.size, allow_eof=True)
        if header is None:
            return None
        (length,) = HEADER.unpack(header)
        if length == 0:
            raise FrameError("zero-length payload")
        if length > MAX_FRAME_BYTES:
            raise FrameError(f"frame of {length} bytes exceeds limit")
        payload = self._recv_exact(length, allow_eof=False)
        return decode(header + payload)

    def _recv_exact(self, n: int, allow_eof: bool) -> bytes | None:
        buf = b""
        while len(buf) < n:
            chunk = self._sock.recv(n - len(buf))
            if not chunk:
                if allow_eof and not buf:
                    return None
                raise FrameError("connection closed mid-frame")
            buf += chunk
        return buf

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
