"""Tiered checkpoint chains: full snapshots, change-only deltas, and
periodic compaction that bounds recovery replay to O(k).

Variable values are opaque byte strings; this module never interprets
workload state. Each record carries a checksum over its identifying
fields, verified during recovery, which is the "validated checkpoint"
gate used before a task resumes elsewhere.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field, replace

from .errors import CorruptChain, EmptyChain, InvalidInput, StaleState

__all__ = [
    "CheckpointTier",
    "CheckpointPolicy",
    "CheckpointRecord",
    "CheckpointChain",
    "TaskState",
    "append",
    "compact",
    "recover",
    "replay_length",
    "should_checkpoint",
]

DEFAULT_COMPACTION_THRESHOLD = 50


class CheckpointTier(enum.Enum):
    BASE = "base"
    DELTA = "delta"
    COMPACTED = "compacted"


# Anchors hold the full variable set; recovery replays from the latest one.
_ANCHORS = (CheckpointTier.BASE, CheckpointTier.COMPACTED)


@dataclass(frozen=True)
class CheckpointPolicy:
    interval_s: float = 5.0
    compaction_threshold: int = DEFAULT_COMPACTION_THRESHOLD
    enabled: bool = True

    def __post_init__(self) -> None:
        if self.interval_s <= 0.0:
            raise InvalidInput("checkpoint interval must be positive")
        if self.compaction_threshold < 1:
            raise InvalidInput("compaction threshold k must be >= 1")


@dataclass(frozen=True)
class TaskState:
    """Full reconstructed task state: variable bytes plus progress cursor."""

    vars: dict[str, bytes]
    cursor: int

    def __post_init__(self) -> None:
        if self.cursor < 0:
            raise InvalidInput("cursor must be >= 0")


def _checksum(task_id: str, seq: int, tier: CheckpointTier, vars: dict[str, bytes], cursor: int) -> str:
    h = hashlib.sha256()
    h.update(f"{task_id}|{seq}|{tier.value}|{cursor}".encode())
    for name in sorted(vars):
        h.update(name.encode())
        h.update(b"\x00")
        h.update(vars[name])
        h.update(b"\x01")
    return h.hexdigest()


@dataclass(frozen=True)
class CheckpointRecord:
    task_id: str
    seq: int
    tier: CheckpointTier
    vars: dict[str, bytes]
    cursor: int
    created_at_s: float
    checksum: str = ""

    @classmethod
    def make(
        cls,
        task_id: str,
        seq: int,
        tier: CheckpointTier,
        vars: dict[str, bytes],
        cursor: int,
        created_at_s: float,
    ) -> "CheckpointRecord":
        return cls(
            task_id=task_id,
            seq=seq,
            tier=tier,
            vars=dict(vars),
            cursor=cursor,
            created_at_s=created_at_s,
            checksum=_checksum(task_id, seq, tier, vars, cursor),
        )

    def verify(self) -> None:
        if self.checksum != _checksum(self.task_id, self.seq, self.tier, self.vars, self.cursor):
            raise CorruptChain(f"checksum mismatch on {self.task_id} seq {self.seq}")


@dataclass(frozen=True)
class CheckpointChain:
    """Seq-ordered records for one task; the sole recovery source."""

    task_id: str
    policy: CheckpointPolicy = CheckpointPolicy()
    records: tuple[CheckpointRecord, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def deltas_since_anchor(self) -> int:
        count = 0
        for record in reversed(self.records):
            if record.tier in _ANCHORS:
                break
            count += 1
        return count


def _anchor_index(chain: CheckpointChain) -> int:
    for i in range(len(chain.records) - 1, -1, -1):
        if chain.records[i].tier in _ANCHORS:
            return i
    raise CorruptChain(f"chain for {chain.task_id} has no base or compacted record")


def replay_length(chain: CheckpointChain) -> int:
    """Number of records a recovery pass must visit (anchor + deltas)."""
    if not chain.records:
        raise EmptyChain(f"chain for {chain.task_id} is empty")
    return len(chain.records) - _anchor_index(chain)


def recover(chain: CheckpointChain) -> TaskState:
    """Reconstruct the latest state: newest anchor plus deltas in order.

    Verifies each visited record's checksum; raises ``CorruptChain`` on
    mismatch or when no anchor exists.
    """
    if not chain.records:
        raise EmptyChain(f"chain for {chain.task_id} is empty")
    start = _anchor_index(chain)
    anchor = chain.records[start]
    anchor.verify()
    vars = dict(anchor.vars)
    cursor = anchor.cursor
    for record in chain.records[start + 1 :]:
        record.verify()
        vars.update(record.vars)
        cursor = record.cursor
    return TaskState(vars=vars, cursor=cursor)


def compact(chain: CheckpointChain) -> CheckpointChain:
    """Fold the entire chain into a single Compacted record.

    The folded record takes the newest seq, so seq numbering continues
    without gaps, and recover() is preserved exactly.
    """
    if not chain.records:
        raise EmptyChain(f"chain for {chain.task_id} is empty")
    state = recover(chain)
    newest = chain.records[-1]
    folded = CheckpointRecord.make(
        task_id=chain.task_id,
        seq=newest.seq,
        tier=CheckpointTier.COMPACTED,
        vars=state.vars,
        cursor=state.cursor,
        created_at_s=newest.created_at_s,
    )
    return replace(chain, records=(folded,))


def append(chain: CheckpointChain, full_state: TaskState, at_s: float = 0.0) -> CheckpointChain:
    """Record a new full state: Base on an empty chain, otherwise a Delta
    holding exactly the variables whose bytes changed.

    An unchanged state (no var diff, same cursor) appends nothing. Once
    the delta run since the last anchor reaches the policy threshold k,
    the chain compacts immediately.
    """
    if not chain.records:
        record = CheckpointRecord.make(
            task_id=chain.task_id,
            seq=0,
            tier=CheckpointTier.BASE,
            vars=full_state.vars,
            cursor=full_state.cursor,
            created_at_s=at_s,
        )
        return replace(chain, records=(record,))

    current = recover(chain)
    if full_state.cursor < current.cursor:
        raise StaleState(
            f"cursor regression on {chain.task_id}: {full_state.cursor} < {current.cursor}"
        )
    missing = set(current.vars) - set(full_state.vars)
    if missing:
        raise InvalidInput(
            f"variables {sorted(missing)} vanished from {chain.task_id}; removal is unsupported"
        )
    diff = {
        name: value
        for name, value in full_state.vars.items()
        if current.vars.get(name) != value
    }
    if not diff and full_state.cursor == current.cursor:
        return chain

    record = CheckpointRecord.make(
        task_id=chain.task_id,
        seq=chain.records[-1].seq + 1,
        tier=CheckpointTier.DELTA,
        vars=diff,
        cursor=full_state.cursor,
        created_at_s=at_s,
    )
    grown = replace(chain, records=chain.records + (record,))
    if grown.deltas_since_anchor() >= chain.policy.compaction_threshold:
        return compact(grown)
    return grown


def should_checkpoint(policy: CheckpointPolicy, elapsed_since_last_s: float) -> bool:
    if elapsed_since_last_s < 0.0:
        raise InvalidInput("elapsed time must be >= 0")
    return policy.enabled and elapsed_since_last_s >= policy.interval_s
