"""Multi-criteria decision mathematics for worker ranking.

Implements entropy-based criterion weighting and three scoring methods
(EDAS, ARAS, MABAC) over a strictly positive alternatives x criteria
matrix. All functions are pure and safe for concurrent use.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMatrix, InvalidInput, InvalidMatrix

__all__ = [
    "CriterionDirection",
    "DecisionMatrix",
    "WeightVector",
    "Ranking",
    "entropy_weights",
    "edas_scores",
    "aras_scores",
    "mabac_scores",
]

WEIGHT_SUM_TOL = 1e-9


class CriterionDirection(enum.Enum):
    BENEFIT = "benefit"  # larger is better
    COST = "cost"        # smaller is better


@dataclass(frozen=True)
class DecisionMatrix:
    """Alternatives x criteria grid of strictly positive finite values.

    Rows follow ``alternative_ids`` order, columns follow ``criteria``
    order. Validation happens at construction; downstream scorers may
    assume a well-formed matrix.
    """

    alternative_ids: tuple[str, ...]
    criteria: tuple[tuple[str, CriterionDirection], ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "alternative_ids", tuple(self.alternative_ids))
        object.__setattr__(self, "criteria", tuple(self.criteria))
        m, n = len(self.alternative_ids), len(self.criteria)
        if m < 1 or n < 1:
            raise InvalidMatrix("matrix needs at least one alternative and one criterion")
        if len(set(self.alternative_ids)) != m:
            raise InvalidMatrix("alternative ids must be unique")
        if values.shape != (m, n):
            raise InvalidMatrix(
                f"value grid shape {values.shape} does not match {m} alternatives x {n} criteria"
            )
        if not np.all(np.isfinite(values)) or not np.all(values > 0.0):
            raise InvalidMatrix("all matrix entries must be finite and strictly positive")

    @property
    def m(self) -> int:
        return len(self.alternative_ids)

    @property
    def n(self) -> int:
        return len(self.criteria)

    def directions(self) -> np.ndarray:
        """Boolean column mask, True where the criterion is Benefit."""
        return np.array(
            [d is CriterionDirection.BENEFIT for _, d in self.criteria], dtype=bool
        )


@dataclass(frozen=True)
class WeightVector:
    """Non-negative criterion weights summing to one."""

    w: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "w", tuple(float(x) for x in self.w))
        if any(x < 0.0 or not math.isfinite(x) for x in self.w):
            raise InvalidInput("weights must be finite and non-negative")
        if abs(sum(self.w) - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidInput(f"weights must sum to 1 within {WEIGHT_SUM_TOL}")

    def as_array(self) -> np.ndarray:
        return np.array(self.w, dtype=float)


@dataclass(frozen=True)
class Ranking:
    """Scores per alternative plus a deterministic descending order.

    Ties break by ascending alternative id so repeated runs produce the
    same order regardless of dict iteration details.
    """

    scores: dict[str, float]
    order: tuple[str, ...]

    @classmethod
    def from_scores(cls, scores: dict[str, float]) -> "Ranking":
        if any(not math.isfinite(s) for s in scores.values()):
            raise InvalidInput("ranking scores must be finite")
        order = tuple(sorted(scores, key=lambda a: (-scores[a], a)))
        return cls(scores=dict(scores), order=order)

    def best(self) -> str:
        return self.order[0]


def _check_weights(matrix: DecisionMatrix, weights: WeightVector) -> np.ndarray:
    if len(weights.w) != matrix.n:
        raise InvalidInput(
            f"weight vector length {len(weights.w)} does not match {matrix.n} criteria"
        )
    return weights.as_array()


def entropy_weights(matrix: DecisionMatrix) -> WeightVector:
    """Shannon-entropy criterion weights.

    Column shares p_ij = x_ij / sum_i(x_ij) feed the per-criterion
    entropy E_j = -(1/ln m) * sum_i(p_ij ln p_ij); weights are the
    normalized divergences w_j = (1 - E_j) / sum_k(1 - E_k). A constant
    column carries no discriminating information and gets weight 0;
    if every column is constant the fallback is uniform weights.
    """
    if matrix.m < 2:
        raise DegenerateMatrix("entropy weighting needs at least 2 alternatives")
    x = matrix.values
    p = x / x.sum(axis=0)
    entropy = -(p * np.log(p)).sum(axis=0) / math.log(matrix.m)
    divergence = 1.0 - entropy
    # Snap constant columns to exactly zero divergence: identical values give
    # E_j = 1 analytically, but log/sum rounding can leave a ~1e-16 residue.
    constant = np.ptp(x, axis=0) == 0.0
    divergence[constant] = 0.0
    total = divergence.sum()
    if total <= 0.0:
        return WeightVector(w=tuple([1.0 / matrix.n] * matrix.n))
    return WeightVector(w=tuple(divergence / total))


def edas_scores(matrix: DecisionMatrix, weights: WeightVector) -> Ranking:
    """EDAS appraisal: weighted positive/negative distances from the
    per-criterion average solution, normalized by the respective maxima.

    Appraisal scores land in [0, 1]; a degenerate zero maximum of either
    distance sum maps the normalized term to 1 (published convention).
    """
    w = _check_weights(matrix, weights)
    x = matrix.values
    benefit = matrix.directions()
    av = x.mean(axis=0)

    above = (x - av) / av
    below = (av - x) / av
    pda = np.where(benefit, np.maximum(0.0, above), np.maximum(0.0, below))
    nda = np.where(benefit, np.maximum(0.0, below), np.maximum(0.0, above))

    sp = pda @ w
    sn = nda @ w
    max_sp = sp.max()
    max_sn = sn.max()
    nsp = sp / max_sp if max_sp > 0.0 else np.ones_like(sp)
    nsn = 1.0 - sn / max_sn if max_sn > 0.0 else np.ones_like(sn)
    scores = (nsp + nsn) / 2.0
    return Ranking.from_scores(dict(zip(matrix.alternative_ids, scores.tolist())))


def aras_scores(matrix: DecisionMatrix, weights: WeightVector) -> Ranking:
    """ARAS utility degree relative to an appended optimal alternative.

    The optimal row takes each column's max (Benefit) or min (Cost); Cost
    columns are then replaced by reciprocals, columns normalized to unit
    sum over the m+1 rows, and K_i = S_i / S_0 for the weighted row sums.
    """
    w = _check_weights(matrix, weights)
    x = matrix.values
    benefit = matrix.directions()

    optimal = np.where(benefit, x.max(axis=0), x.min(axis=0))
    extended = np.vstack([optimal, x])
    extended = np.where(benefit, extended, 1.0 / extended)
    normalized = extended / extended.sum(axis=0)

    s = normalized @ w
    s0 = s[0]
    if s0 <= 0.0:
        raise InvalidInput("optimal-row utility is zero; cannot normalize")
    k = s[1:] / s0
    return Ranking.from_scores(dict(zip(matrix.alternative_ids, k.tolist())))


def mabac_scores(matrix: DecisionMatrix, weights: WeightVector) -> Ranking:
    """MABAC distance from the border approximation area.

    Min-max normalization per criterion direction (constant columns pin
    to 0.5, an observationally neutral choice), v_ij = w_j * (n_ij + 1),
    border g_j is the column geometric mean, and S_i = sum_j(v_ij - g_j).
    Scores may be negative.
    """
    w = _check_weights(matrix, weights)
    x = matrix.values
    benefit = matrix.directions()

    lo = x.min(axis=0)
    hi = x.max(axis=0)
    span = hi - lo
    with np.errstate(invalid="ignore", divide="ignore"):
        n_benefit = (x - lo) / span
        n_cost = (x - hi) / (lo - hi)
    n = np.where(benefit, n_benefit, n_cost)
    n[:, span == 0.0] = 0.5

    v = w * (n + 1.0)
    # Geometric mean via logs; n+1 >= 1 so v_ij = 0 only in zero-weight
    # columns, where g_j = 0 keeps the column's contribution at zero.
    g = np.zeros(matrix.n)
    positive = w > 0.0
    if positive.any():
        g[positive] = np.exp(np.log(v[:, positive]).mean(axis=0))
    scores = (v - g).sum(axis=1)
    return Ranking.from_scores(dict(zip(matrix.alternative_ids, scores.tolist())))
