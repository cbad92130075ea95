"""Pluggable dispatch strategies.

A strategy owns whatever state its policy needs (rotation pointer,
credits) and answers one question: given the candidate workers that are
idle right now, who gets the next task. MCDM strategies build a live
decision matrix from telemetry and rank it; FIFO and WRR ignore
telemetry entirely.
"""

from __future__ import annotations

import enum
import random
from typing import Callable

from .decision import (
    CriterionDirection,
    DecisionMatrix,
    Ranking,
    WeightVector,
    aras_scores,
    edas_scores,
    entropy_weights,
    mabac_scores,
)
from .errors import InvalidInput, NoWorkers
from .fleet import DeviceProfile, TelemetrySnapshot

__all__ = [
    "StrategyKind",
    "DispatchMode",
    "Strategy",
    "FifoStrategy",
    "WrrStrategy",
    "McdmStrategy",
    "StrategyRegistry",
    "default_registry",
    "capability_weight",
    "select_worker",
    "dispatch_mode",
    "MCDM_CRITERIA",
]

Candidate = tuple[DeviceProfile, TelemetrySnapshot]

# Floor applied to matrix entries so zeroed telemetry (dead battery,
# idle CPU) keeps the decision module's positivity precondition.
VALUE_FLOOR = 1e-6

_B = CriterionDirection.BENEFIT
_C = CriterionDirection.COST

MCDM_CRITERIA: tuple[tuple[str, CriterionDirection], ...] = (
    ("capability", _B),
    ("free_mem_gb", _B),
    ("battery", _B),
    ("cpu_util", _C),
    ("latency_ms", _C),
    ("thermal", _C),
)


class StrategyKind(enum.Enum):
    FIFO = "fifo"
    WRR = "wrr"
    EDAS = "edas"
    ARAS = "aras"
    MABAC = "mabac"


class DispatchMode(enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


def capability_weight(profile: DeviceProfile) -> float:
    """Static capability score: cores times clock frequency."""
    return profile.cores * profile.freq_ghz


def dispatch_mode(kind: StrategyKind) -> DispatchMode:
    """FIFO pre-partitions tasks at submission (and so reproduces
    head-of-line blocking); every other strategy decides per idle worker."""
    return DispatchMode.STATIC if kind is StrategyKind.FIFO else DispatchMode.DYNAMIC


class Strategy:
    """Base selector; subclasses override :meth:`select`."""

    kind: StrategyKind

    def select(self, candidates: list[Candidate], rng: random.Random) -> str:
        raise NotImplementedError


class FifoStrategy(Strategy):
    """Rotates through workers in first-seen registration order."""

    kind = StrategyKind.FIFO

    def __init__(self) -> None:
        self._order: list[str] = []
        self._next = 0

    def note_registration(self, worker_id: str) -> None:
        if worker_id not in self._order:
            self._order.append(worker_id)

    def select(self, candidates: list[Candidate], rng: random.Random) -> str:
        if not candidates:
            raise NoWorkers("no candidate workers")
        available = {profile.id for profile, _ in candidates}
        for profile, _ in candidates:
            self.note_registration(profile.id)
        for _ in range(len(self._order)):
            worker_id = self._order[self._next % len(self._order)]
            self._next += 1
            if worker_id in available:
                return worker_id
        raise NoWorkers("rotation found no available worker")


class WrrStrategy(Strategy):
    """Smooth weighted round robin over capability weights.

    Each selection adds every candidate's weight to its credit, picks
    the max credit (ties break by ascending id), then subtracts the
    candidates' total weight from the winner, which spreads picks
    proportionally without bursts.
    """

    kind = StrategyKind.WRR

    def __init__(self) -> None:
        self._weights: dict[str, float] = {}
        self._credits: dict[str, float] = {}

    def weight_of(self, worker_id: str) -> float:
        return self._weights.get(worker_id, 0.0)

    def select(self, candidates: list[Candidate], rng: random.Random) -> str:
        if not candidates:
            raise NoWorkers("no candidate workers")
        total = 0.0
        for profile, _ in candidates:
            wid = profile.id
            if wid not in self._weights:
                self._weights[wid] = capability_weight(profile)
                self._credits.setdefault(wid, 0.0)
            self._credits[wid] += self._weights[wid]
            total += self._weights[wid]
        winner = min(
            (profile.id for profile, _ in candidates),
            key=lambda wid: (-self._credits[wid], wid),
        )
        self._credits[winner] -= total
        return winner


class McdmStrategy(Strategy):
    """Ranks candidates with one of the MCDM scorers over live telemetry
    plus static capability, weighting criteria by entropy."""

    _SCORERS: dict[StrategyKind, Callable[[DecisionMatrix, WeightVector], Ranking]] = {
        StrategyKind.EDAS: edas_scores,
        StrategyKind.ARAS: aras_scores,
        StrategyKind.MABAC: mabac_scores,
    }

    def __init__(self, kind: StrategyKind) -> None:
        if kind not in self._SCORERS:
            raise InvalidInput(f"{kind} is not an MCDM strategy")
        self.kind = kind

    def build_matrix(self, candidates: list[Candidate]) -> DecisionMatrix:
        rows = []
        ids = []
        for profile, snap in sorted(candidates, key=lambda c: c[0].id):
            ids.append(profile.id)
            raw = (
                capability_weight(profile),
                snap.free_mem_gb,
                snap.battery,
                snap.cpu_util,
                snap.latency_ms,
                snap.thermal,
            )
            rows.append([max(value, VALUE_FLOOR) for value in raw])
        return DecisionMatrix(
            alternative_ids=tuple(ids), criteria=MCDM_CRITERIA, values=rows
        )

    def select(self, candidates: list[Candidate], rng: random.Random) -> str:
        if not candidates:
            raise NoWorkers("no candidate workers")
        if len(candidates) == 1:
            return candidates[0][0].id
        matrix = self.build_matrix(candidates)
        weights = entropy_weights(matrix)
        ranking = self._SCORERS[self.kind](matrix, weights)
        return ranking.best()


class StrategyRegistry:
    """Name to strategy-factory mapping; the five built-ins are always
    present and new strategies can be added without touching dispatch."""

    def __init__(self) -> None:
        self._factories: dict[str, Callable[[], Strategy]] = {}
        self.register("fifo", FifoStrategy)
        self.register("wrr", WrrStrategy)
        self.register("edas", lambda: McdmStrategy(StrategyKind.EDAS))
        self.register("aras", lambda: McdmStrategy(StrategyKind.ARAS))
        self.register("mabac", lambda: McdmStrategy(StrategyKind.MABAC))

    def register(self, name: str, factory: Callable[[], Strategy]) -> None:
        if name in self._factories:
            raise InvalidInput(f"strategy {name!r} already registered")
        self._factories[name] = factory

    def names(self) -> list[str]:
        return sorted(self._factories)

    def create(self, name: str) -> Strategy:
        if name not in self._factories:
            raise InvalidInput(
                f"unknown strategy {name!r}; available: {', '.join(self.names())}"
            )
        return self._factories[name]()


def default_registry() -> StrategyRegistry:
    return StrategyRegistry()


def select_worker(
    strategy: Strategy, candidates: list[Candidate], rng: random.Random
) -> str:
    """Choose the worker for the next task; mutates the strategy state."""
    return strategy.select(candidates, rng)
