"""Classic and weighted water-filling over parallel slots.

The water level is located by bisection (the budget residual is piecewise
linear and nondecreasing in the level), then polished to the exact linear
solution on the located support.  The inner loop lives in
:mod:`mobrelay._kernels` with a compiled backend when available.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionError, DomainError, UnboundedWaterLevel


@dataclass(frozen=True)
class WaterfillResult:
    """Allocation, the water level that produced it, and its unweighted rate sum."""

    powers: np.ndarray
    water_level: float
    aggregate_rate: float


def _validated(gains, weights=None):
    gains = np.ascontiguousarray(gains, dtype=np.float64)
    if gains.ndim != 1 or gains.size == 0:
        raise DimensionError("gains must be a nonempty 1-d array")
    if np.any(gains <= 0):
        raise DomainError("gains must be strictly positive")
    if weights is None:
        weights = np.ones_like(gains)
    else:
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        if weights.shape != gains.shape:
            raise DimensionError("weights must match gains in length")
        if np.any(weights < 0):
            raise DomainError("weights must be nonnegative")
    return gains, weights


def weighted_wf(gains, weights, budget: float) -> WaterfillResult:
    """Maximize sum(weights * log2(1 + p * gains)) subject to sum(p) = budget.

    The solution is ``p[i] = max(eta * weights[i] - 1/gains[i], 0)`` with the
    level ``eta`` meeting the budget.  Zero-weight slots receive zero power; a
    positive budget with all-zero weights has no finite level.
    """
    gains, weights = _validated(gains, weights)
    if budget < 0:
        raise DomainError("budget must be nonnegative")
    if budget == 0:
        return WaterfillResult(np.zeros_like(gains), 0.0, 0.0)
    if not np.any(weights > 0):
        raise UnboundedWaterLevel("positive budget but every weight is zero")
    powers, eta = _kernels.waterfill(gains, weights, budget)
    rate = float(np.sum(np.log2(1.0 + powers * gains)))
    return WaterfillResult(powers, float(eta), rate)


def classic_wf(gains, budget: float) -> WaterfillResult:
    """Equal-weight water-filling: max sum(log2(1 + p*g)) s.t. sum(p) = budget."""
    gains, weights = _validated(gains)
    if budget < 0:
        raise DomainError("budget must be nonnegative")
    if budget == 0:
        return WaterfillResult(np.zeros_like(gains), 0.0, 0.0)
    powers, eta = _kernels.waterfill(gains, weights, budget)
    rate = float(np.sum(np.log2(1.0 + powers * gains)))
    return WaterfillResult(powers, float(eta), rate)


def cwf_rate(gains, budget: float) -> float:
    """Aggregate rate of the classic water-filling allocation."""
    return classic_wf(gains, budget).aggregate_rate


def inverse_cwf(gains, target_rate: float, rtol: float = 1e-12) -> float:
    """Minimal budget whose classic water-filling rate equals ``target_rate``.

    Found by bisection on the budget; ``cwf_rate`` is continuous and strictly
    increasing, so the root is unique.
    """
    gains, _ = _validated(gains)
    if target_rate < 0:
        raise DomainError("target rate must be nonnegative")
    if target_rate == 0:
        return 0.0
    # Bracket the budget: spreading target_rate evenly over the slots is a
    # feasible (generally suboptimal) allocation, so its cost upper-bounds
    # the water-filling budget.
    per_slot = target_rate / gains.size
    hi = float(np.sum((2.0 ** per_slot - 1.0) / gains))
    while cwf_rate(gains, hi) < target_rate:
        hi *= 2.0
    lo = 0.0
    tol = rtol * max(1.0, target_rate)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = cwf_rate(gains, mid)
        if abs(r - target_rate) <= tol:
            return mid
        if r < target_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
