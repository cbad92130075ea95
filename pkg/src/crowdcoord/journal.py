"""Append-only per-job journal of task transitions and checkpoint records.

Records are framed exactly like wire messages (4-byte big-endian length
plus canonical JSON) so the durable format shares the transport's
encoding rules. Checkpoint chains are reconstructable by replay: Base
and Delta records extend a task's chain, a Compacted record resets it.
"""

from __future__ import annotations

import base64
import io
import json
import struct
from pathlib import Path
from typing import BinaryIO

from .checkpoint import CheckpointChain, CheckpointPolicy, CheckpointRecord, CheckpointTier
from .errors import FrameError

__all__ = ["JobJournal", "read_journal", "chains_from_journal"]

_HEADER = struct.Struct(">I")


def _jsonable(value):
    if isinstance(value, bytes):
        return {"__b64__": base64.b64encode(value).decode("ascii")}
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _from_jsonable(value):
    if isinstance(value, dict):
        if set(value) == {"__b64__"}:
            return base64.b64decode(value["__b64__"])
        return {k: _from_jsonable(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_from_jsonable(v) for v in value]
    return value


class JobJournal:
    """Writes framed JSON records to a binary stream."""

    def __init__(self, stream: BinaryIO):
        self._stream = stream

    @classmethod
    def at_path(cls, path: str | Path) -> "JobJournal":
        return cls(open(path, "wb"))

    @classmethod
    def in_memory(cls) -> "JobJournal":
        return cls(io.BytesIO())

    def record(self, kind: str, **fields) -> None:
        payload = {"kind": kind, **_jsonable(fields)}
        raw = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
        self._stream.write(_HEADER.pack(len(raw)) + raw)

    def checkpoint_record(self, record: CheckpointRecord) -> None:
        self.record(
            "checkpoint",
            task_id=record.task_id,
            seq=record.seq,
            tier=record.tier.value,
            vars=record.vars,
            cursor=record.cursor,
            created_at_s=record.created_at_s,
            checksum=record.checksum,
        )

    def buffer(self) -> bytes:
        if isinstance(self._stream, io.BytesIO):
            return self._stream.getvalue()
        raise TypeError("buffer() only works on in-memory journals")

    def close(self) -> None:
        if not isinstance(self._stream, io.BytesIO):
            self._stream.close()


def read_journal(raw: bytes) -> list[dict]:
    """Parse a journal byte stream back into record dicts."""
    records = []
    offset = 0
    while offset < len(raw):
        if offset + _HEADER.size > len(raw):
            raise FrameError("journal truncated inside a length header")
        (length,) = _HEADER.unpack(raw[offset : offset + _HEADER.size])
        offset += _HEADER.size
        if offset + length > len(raw):
            raise FrameError("journal truncated inside a record")
        records.append(_from_jsonable(json.loads(raw[offset : offset + length].decode("utf-8"))))
        offset += length
    return records


def chains_from_journal(
    raw: bytes, policy: CheckpointPolicy | None = None
) -> dict[str, CheckpointChain]:
    """Rebuild every task's checkpoint chain from a journal stream."""
    policy = policy or CheckpointPolicy()
    chains: dict[str, CheckpointChain] = {}
    for entry in read_journal(raw):
        if entry["kind"] != "checkpoint":
            continue
        record = CheckpointRecord(
            task_id=entry["task_id"],
            seq=entry["seq"],
            tier=CheckpointTier(entry["tier"]),
            vars=entry["vars"],
            cursor=entry["cursor"],
            created_at_s=entry["created_at_s"],
            checksum=entry["checksum"],
        )
        chain = chains.get(record.task_id) or CheckpointChain(
            task_id=record.task_id, policy=policy
        )
        if record.tier is CheckpointTier.COMPACTED:
            chain = CheckpointChain(
                task_id=record.task_id, policy=policy, records=(record,)
            )
        else:
            chain = CheckpointChain(
                task_id=record.task_id, policy=policy, records=chain.records + (record,)
            )
        chains[record.task_id] = chain
    return chains
