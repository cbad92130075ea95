"""Resumable workloads: Monte Carlo estimation of e and a synthetic
tile-map digest job.

Randomness is counter-based (Philox keyed by the slice seed, a fixed
draw stride per trial), so a slice resumed from any cursor reproduces
the exact stream it would have produced in one uninterrupted run, and
results never depend on which worker executed the slice.
"""

from __future__ import annotations

import hashlib
import json
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace

import numpy as np
from numpy.random import Generator, Philox

from .errors import InvalidInput

__all__ = [
    "ResumableWorkload",
    "MonteCarloState",
    "MonteCarloWorkload",
    "TileMapState",
    "TileMapWorkload",
    "mc_run_slice",
    "mc_fold",
    "mc_estimate",
    "tile_run_slice",
    "get_workload",
    "WORKLOADS",
]

# Doubles reserved per trial in the Philox stream. advance() moves the
# counter in 4-double blocks, so the stride must be a multiple of 4.
_TRIAL_STRIDE = 32
_BATCH = 65536


def _pack_int(value: int) -> bytes:
    return struct.pack(">q", value)


def _unpack_int(raw: bytes) -> int:
    return struct.unpack(">q", raw)[0]


class ResumableWorkload(ABC):
    """Slice execution contract every workload implements.

    ``run_slice`` must be deterministic given (state, budget) alone, and
    ``deserialize(serialize(s))`` must reproduce ``s`` exactly; together
    these give byte-exact resumption from any checkpoint cursor.
    """

    name: str
    units_per_step: float = 1.0

    @abstractmethod
    def new_state(self, slice_seed: int, size: int): ...

    @abstractmethod
    def run_slice(self, state, budget_steps: int): ...

    @abstractmethod
    def serialize(self, state) -> dict[str, bytes]: ...

    @abstractmethod
    def deserialize(self, vars: dict[str, bytes]): ...

    @abstractmethod
    def cursor(self, state) -> int: ...

    @abstractmethod
    def steps_total(self, state) -> int: ...

    @abstractmethod
    def finalize(self, state) -> bytes: ...

    @abstractmethod
    def fold(self, results: list[bytes]) -> bytes: ...


# ---------------------------------------------------------------------------
# Monte Carlo estimation of e


@dataclass(frozen=True)
class MonteCarloState:
    slice_seed: int
    trials_target: int
    trials_done: int
    draw_count_sum: int

    def __post_init__(self) -> None:
        if not 0 <= self.trials_done <= self.trials_target:
            raise InvalidInput("trials_done out of range")
        if self.draw_count_sum < 2 * self.trials_done:
            raise InvalidInput("draw_count_sum below the 2-per-trial minimum")


def _trial_counts(slice_seed: int, start_trial: int, n: int) -> np.ndarray:
    """Draws-until-sum-exceeds-1 for trials [start, start+n), vectorized."""
    bit = Philox(key=slice_seed)
    bit.advance(start_trial * _TRIAL_STRIDE // 4)
    draws = Generator(bit).random((n, _TRIAL_STRIDE))
    exceeded = draws.cumsum(axis=1) > 1.0
    counts = exceeded.argmax(axis=1) + 1
    unfinished = ~exceeded[:, -1]
    if unfinished.any():
        # P(count > 32) = 1/32!; if it ever happens, keep drawing from the
        # positions after the trial's stride (they overlap the next trial's
        # stream, which is statistically harmless and stays deterministic).
        for row in np.nonzero(unfinished)[0]:
            trial = start_trial + int(row)
            total = draws[row].sum()
            count = _TRIAL_STRIDE
            bit = Philox(key=slice_seed)
            bit.advance((trial * _TRIAL_STRIDE + _TRIAL_STRIDE) // 4)
            gen = Generator(bit)
            while total <= 1.0:
                for value in gen.random(_TRIAL_STRIDE):
                    total += value
                    count += 1
                    if total > 1.0:
                        break
            counts[row] = count
    return counts


class MonteCarloWorkload(ResumableWorkload):
    """Estimates e as the mean number of uniform(0,1) draws whose running
    sum first exceeds 1 (the expectation is exactly e)."""

    name = "monte_carlo"
    units_per_step = 1.0

    def new_state(self, slice_seed: int, size: int) -> MonteCarloState:
        return MonteCarloState(
            slice_seed=slice_seed, trials_target=size, trials_done=0, draw_count_sum=0
        )

    def run_slice(self, state: MonteCarloState, budget_steps: int) -> MonteCarloState:
        return mc_run_slice(state, budget_steps)

    def serialize(self, state: MonteCarloState) -> dict[str, bytes]:
        return {
            "slice_seed": _pack_int(state.slice_seed),
            "trials_target": _pack_int(state.trials_target),
            "trials_done": _pack_int(state.trials_done),
            "draw_count_sum": _pack_int(state.draw_count_sum),
        }

    def deserialize(self, vars: dict[str, bytes]) -> MonteCarloState:
        return MonteCarloState(
            slice_seed=_unpack_int(vars["slice_seed"]),
            trials_target=_unpack_int(vars["trials_target"]),
            trials_done=_unpack_int(vars["trials_done"]),
            draw_count_sum=_unpack_int(vars["draw_count_sum"]),
        )

    def cursor(self, state: MonteCarloState) -> int:
        return state.trials_done

    def steps_total(self, state: MonteCarloState) -> int:
        return state.trials_target

    def finalize(self, state: MonteCarloState) -> bytes:
        if state.trials_done != state.trials_target:
            raise InvalidInput("slice not finished")
        payload = {"draws": state.draw_count_sum, "trials": state.trials_done}
        return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()

    def fold(self, results: list[bytes]) -> bytes:
        draws = 0
        trials = 0
        for raw in results:
            part = json.loads(raw)
            draws += part["draws"]
            trials += part["trials"]
        if trials == 0:
            raise InvalidInput("cannot fold zero trials")
        return json.dumps(
            {"draws": draws, "trials": trials}, sort_keys=True, separators=(",", ":")
        ).encode()


def mc_run_slice(state: MonteCarloState, budget_trials: int) -> MonteCarloState:
    """Execute up to ``budget_trials`` further trials of the slice."""
    if budget_trials < 1:
        raise InvalidInput("budget must be >= 1")
    remaining = state.trials_target - state.trials_done
    todo = min(budget_trials, remaining)
    if todo == 0:
        return state
    done = state.trials_done
    total = state.draw_count_sum
    while todo > 0:
        batch = min(todo, _BATCH)
        total += int(_trial_counts(state.slice_seed, done, batch).sum())
        done += batch
        todo -= batch
    return replace(state, trials_done=done, draw_count_sum=total)


def mc_fold(results: list[bytes]) -> float:
    """Combine finalized slice payloads into the e estimate."""
    return mc_estimate(MonteCarloWorkload().fold(results))


def mc_estimate(folded: bytes) -> float:
    part = json.loads(folded)
    return part["draws"] / part["trials"]


# ---------------------------------------------------------------------------
# Synthetic tile map


@dataclass(frozen=True)
class TileMapState:
    slice_seed: int
    items_total: int
    items_done: int
    digest: bytes

    def __post_init__(self) -> None:
        if not 0 <= self.items_done <= self.items_total:
            raise InvalidInput("items_done out of range")


class TileMapWorkload(ResumableWorkload):
    """Data-parallel stand-in: each item folds a keyed digest into a
    running accumulator. ``units_per_step`` models per-item compute cost
    so the harness can shrink tasks below the dispatch overhead."""

    name = "tile_map"

    def __init__(self, unit_cost: float = 1.0):
        if unit_cost <= 0.0:
            raise InvalidInput("unit_cost must be positive")
        self.units_per_step = unit_cost

    def new_state(self, slice_seed: int, size: int) -> TileMapState:
        return TileMapState(slice_seed=slice_seed, items_total=size, items_done=0, digest=b"\x00" * 32)

    def run_slice(self, state: TileMapState, budget_steps: int) -> TileMapState:
        return tile_run_slice(state, budget_steps)

    def serialize(self, state: TileMapState) -> dict[str, bytes]:
        return {
            "slice_seed": _pack_int(state.slice_seed),
            "items_total": _pack_int(state.items_total),
            "items_done": _pack_int(state.items_done),
            "digest": state.digest,
        }

    def deserialize(self, vars: dict[str, bytes]) -> TileMapState:
        return TileMapState(
            slice_seed=_unpack_int(vars["slice_seed"]),
            items_total=_unpack_int(vars["items_total"]),
            items_done=_unpack_int(vars["items_done"]),
            digest=vars["digest"],
        )

    def cursor(self, state: TileMapState) -> int:
        return state.items_done

    def steps_total(self, state: TileMapState) -> int:
        return state.items_total

    def finalize(self, state: TileMapState) -> bytes:
        if state.items_done != state.items_total:
            raise InvalidInput("slice not finished")
        payload = {"digest": state.digest.hex(), "items": state.items_done}
        return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()

    def fold(self, results: list[bytes]) -> bytes:
        parts = [json.loads(raw) for raw in results]
        payload = {
            "digests": [p["digest"] for p in parts],
            "items": sum(p["items"] for p in parts),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()


def tile_run_slice(state: TileMapState, budget_items: int) -> TileMapState:
    """Process up to ``budget_items`` further items of the slice."""
    if budget_items < 1:
        raise InvalidInput("budget must be >= 1")
    todo = min(budget_items, state.items_total - state.items_done)
    if todo == 0:
        return state
    acc = state.digest
    for index in range(state.items_done, state.items_done + todo):
        item = hashlib.blake2b(
            struct.pack(">qq", state.slice_seed, index), digest_size=16
        ).digest()
        acc = hashlib.blake2b(acc + item, digest_size=32).digest()
    return replace(state, items_done=state.items_done + todo, digest=acc)


WORKLOADS = {
    "monte_carlo": MonteCarloWorkload,
    "tile_map": TileMapWorkload,
}


def get_workload(name: str, params: dict | None = None) -> ResumableWorkload:
    if name not in WORKLOADS:
        raise InvalidInput(f"unknown workload: {name!r}")
    return WORKLOADS[name](**(params or {}))
