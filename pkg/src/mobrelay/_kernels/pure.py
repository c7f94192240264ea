"""Pure-numpy kernels: water-level bisection and forward buffer filling.

These mirror the compiled `_speed` extension exactly; the compiled module is
preferred at import time when available.  Inputs are assumed validated by the
callers (see :mod:`mobrelay.waterfill`).
"""

import numpy as np

BACKEND = "pure"

_MAX_BISECT = 200


def waterfill(gains, weights, budget):
    """Weighted water-filling by bisection on the water level.

    Solves ``powers[i] = max(eta * weights[i] - 1/gains[i], 0)`` with ``eta``
    such that ``sum(powers) == budget``.  Zero-weight slots are excluded from
    the active set and receive zero power.

    Returns ``(powers, eta)``.
    """
    gains = np.ascontiguousarray(gains, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    n = gains.shape[0]
    powers = np.zeros(n)
    if budget <= 0.0:
        return powers, 0.0
    active = weights > 0.0
    ga = gains[active]
    wa = weights[active]
    inv_g = 1.0 / ga
    lo = 0.0
    hi = (budget + inv_g.sum()) / wa.sum()
    tol = 1e-12 * max(1.0, budget)
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        total = np.maximum(mid * wa - inv_g, 0.0).sum()
        if abs(total - budget) <= tol:
            lo = hi = mid
            break
        if total < budget:
            lo = mid
        else:
            hi = mid
    eta = 0.5 * (lo + hi)
    # Polish: the residual is piecewise linear, so once bisection has located
    # the support the level solves a linear equation exactly.
    support = eta * wa - inv_g > 0.0
    if support.any():
        eta_exact = (budget + inv_g[support].sum()) / wa[support].sum()
        if np.array_equal(eta_exact * wa - inv_g > 0.0, support):
            eta = eta_exact
    powers[active] = np.maximum(eta * wa - inv_g, 0.0)
    return powers, eta


def greedy_fill(caps, cum_supply):
    """Forward-fill rates against per-slot caps and a cumulative supply.

    ``rates[k] = min(caps[k], cum_supply[k] - sum(rates[:k]))``, clamped at
    zero.  For nondecreasing ``cum_supply`` this maximizes every prefix sum,
    hence also the total.
    """
    caps = np.asarray(caps, dtype=np.float64)
    cum_supply = np.asarray(cum_supply, dtype=np.float64)
    out = np.empty_like(caps)
    sent = 0.0
    for k in range(caps.shape[0]):
        r = cum_supply[k] - sent
        if r > caps[k]:
            r = caps[k]
        if r < 0.0:
            r = 0.0
        out[k] = r
        sent += r
    return out
