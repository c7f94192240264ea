"""Generic optimization kernels used by the solver modules.

Three independent pieces:

* :func:`bisect` -- scalar root bracketing for monotone functions.
* :func:`ellipsoid_minimize` -- cutting-plane minimization of a nonsmooth
  convex function over a set described by feasibility cuts.
* A feasible-start log-barrier interior-point core (:func:`maximize_linear`)
  over smooth convex constraints, with :func:`solve_qcqp` as the typed
  front-end for quadratically constrained programs.  Constraints are objects
  exposing value/gradient and a Hessian accumulator, so quadratic and
  logarithmic-rate constraints share the same Newton machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import (DimensionError, DomainError, InfeasibleProblem,
                     NumericalFailure)

LOG2E = math.log2(math.e)


# --------------------------------------------------------------------------
# scalar bisection
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BisectResult:
    x: float
    boundary: Optional[str] = None   # "lo"/"hi" when f has no crossing inside


def bisect(f: Callable[[float], float], lo: float, hi: float,
           tol: float = 1e-12) -> BisectResult:
    """Root of a monotone scalar function on [lo, hi].

    Returns the crossing point within ``tol`` or, when f has constant sign on
    the interval, the boundary on the side the (extrapolated) root lies, with
    the ``boundary`` flag set.
    """
    if lo > hi:
        raise DomainError("bisect requires lo <= hi")
    flo, fhi = f(lo), f(hi)
    increasing = fhi >= flo
    if flo == 0.0:
        return BisectResult(lo)
    if fhi == 0.0:
        return BisectResult(hi)
    if (flo > 0) == (fhi > 0):
        if increasing:
            return BisectResult(lo, "lo") if flo > 0 else BisectResult(hi, "hi")
        return BisectResult(lo, "lo") if flo < 0 else BisectResult(hi, "hi")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return BisectResult(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return BisectResult(0.5 * (lo + hi))


# --------------------------------------------------------------------------
# ellipsoid method
# --------------------------------------------------------------------------

@dataclass
class EllipsoidState:
    center: np.ndarray
    shape_matrix: np.ndarray
    iteration: int = 0


@dataclass
class EllipsoidResult:
    point: np.ndarray
    value: float
    iterations: int
    converged: bool
    state: EllipsoidState


def ellipsoid_minimize(oracle, initial_center, initial_radius: float,
                       max_iters: int, tol: float,
                       should_stop=None) -> EllipsoidResult:
    """Minimize a convex function with subgradient and feasibility cuts.

    ``oracle(x)`` returns ``(value, subgradient, is_feasibility_cut)``.  For a
    feasibility cut, ``value`` is the (positive) constraint violation and the
    subgradient is that of the violated constraint; the point is then excluded
    from the best-value tracking.  Deep cuts are applied whenever the center
    is provably worse than the incumbent.

    Stops when the ellipsoid's radius proxy ``sqrt(trace(P))`` drops below
    ``tol`` (the whole optimal set stays inside every ellipsoid, so the center
    is then ``tol``-close to an optimum), when ``should_stop(iteration,
    best_value, state)`` returns True, or after ``max_iters`` iterations (in
    which case ``converged`` is False).
    """
    x = np.array(initial_center, dtype=np.float64)
    d = x.shape[0]
    P = np.eye(d) * float(initial_radius) ** 2
    best_val = math.inf
    best_x = x.copy()
    it = 0
    converged = False
    state = EllipsoidState(center=x, shape_matrix=P, iteration=0)
    for it in range(1, max_iters + 1):
        val, g, feas_cut = oracle(x)
        g = np.asarray(g, dtype=np.float64)
        if not feas_cut and val < best_val:
            best_val = float(val)
            best_x = x.copy()
        state.center, state.shape_matrix, state.iteration = x, P, it
        if should_stop is not None and should_stop(it, best_val, state):
            converged = True
            break
        Pg = P @ g
        gPg = float(g @ Pg)
        if not math.isfinite(gPg) or gPg <= 0.0:
            if math.isfinite(gPg) and float(np.trace(P)) <= (1e-14 * initial_radius) ** 2 * d:
                converged = True  # ellipsoid collapsed onto the optimum
                break
            raise NumericalFailure("ellipsoid shape matrix lost positive definiteness")
        norm = math.sqrt(gPg)
        alpha = 0.0
        if feas_cut:
            alpha = val / norm
        elif best_val < val:
            alpha = (val - best_val) / norm
        if alpha >= 1.0:
            # The half-space below the cut misses the ellipsoid entirely; the
            # remaining localization set is empty beyond the incumbent.
            converged = True
            break
        # A cut at depth ~1 collapses the ellipsoid to numerical rank
        # deficiency; keep a sliver so later cuts stay well posed.
        alpha = min(alpha, 0.98)
        if d == 1:
            r = math.sqrt(P[0, 0])
            x = x - 0.5 * (1.0 + alpha) * Pg / norm
            r_new = 0.5 * (1.0 - alpha) * r
            P = np.array([[r_new ** 2]])
        else:
            tau = (1.0 + d * alpha) / (d + 1.0)
            sigma = 2.0 * (1.0 + d * alpha) / ((d + 1.0) * (1.0 + alpha))
            delta = (d * d / (d * d - 1.0)) * (1.0 - alpha * alpha)
            x = x - tau * Pg / norm
            P = delta * (P - sigma * np.outer(Pg, Pg) / gPg)
            P = 0.5 * (P + P.T)
        if tol and math.sqrt(max(np.trace(P), 0.0)) <= tol:
            converged = True
            break
    point = best_x if math.isfinite(best_val) else x
    state.center, state.shape_matrix, state.iteration = x, P, it
    return EllipsoidResult(point=point, value=best_val, iterations=it,
                           converged=converged, state=state)


# --------------------------------------------------------------------------
# smooth convex constraints for the barrier core
# --------------------------------------------------------------------------

class LinearConstraint:
    """a @ z - b <= 0"""

    def __init__(self, a, b: float):
        self.a = np.asarray(a, dtype=np.float64)
        self.b = float(b)

    def value(self, z):
        return float(self.a @ z) - self.b

    def grad(self, z):
        return self.a

    def hess_accumulate(self, z, weight, H):
        pass


class QuadConstraint:
    """z @ Q @ z + q @ z + c <= 0 with symmetric PSD Q (dense or sparse)."""

    def __init__(self, Q, q, c: float):
        self.Q = sp.csr_matrix(Q)
        self.q = np.asarray(q, dtype=np.float64)
        self.c = float(c)
        q2 = ((self.Q + self.Q.T)).tocoo()  # 2*sym(Q), the constant Hessian
        self._h_rows = q2.row
        self._h_cols = q2.col
        self._h_data = q2.data
        self._Q2 = q2.tocsr()

    def value(self, z):
        Qz = self.Q @ z
        return float(z @ Qz) + float(self.q @ z) + self.c

    def grad(self, z):
        return self._Q2 @ z + self.q

    def hess_accumulate(self, z, weight, H):
        H[self._h_rows, self._h_cols] += weight * self._h_data


class LogSumConstraint:
    """lin @ z + offset - sum_j w_j * log2(1 + g_j * z[idx_j]) <= 0.

    Convex for w_j >= 0.  Entering the log-domain boundary reports +inf so the
    barrier line search backtracks.
    """

    def __init__(self, lin, offset: float, idx, gains, weights):
        self.lin = np.asarray(lin, dtype=np.float64)
        self.offset = float(offset)
        self.idx = np.asarray(idx, dtype=np.intp)
        self.gains = np.asarray(gains, dtype=np.float64)
        self.weights = np.asarray(weights, dtype=np.float64)

    def value(self, z):
        arg = 1.0 + self.gains * z[self.idx]
        if np.any(arg <= 0.0):
            return math.inf
        return float(self.lin @ z) + self.offset - float(self.weights @ np.log2(arg))

    def grad(self, z):
        g = self.lin.copy()
        arg = 1.0 + self.gains * z[self.idx]
        np.add.at(g, self.idx, -self.weights * self.gains * LOG2E / arg)
        return g

    def hess_accumulate(self, z, weight, H):
        arg = 1.0 + self.gains * z[self.idx]
        diag = self.weights * self.gains ** 2 * LOG2E / arg ** 2
        np.add.at(H, (self.idx, self.idx), weight * diag)


class _Phase1Constraint:
    """g(z) - s <= 0 over the augmented variable (z, s)."""

    def __init__(self, inner):
        self.inner = inner

    def value(self, zs):
        v = self.inner.value(zs[:-1])
        return v - zs[-1] if math.isfinite(v) else math.inf

    def grad(self, zs):
        g = np.empty(zs.shape[0])
        g[:-1] = self.inner.grad(zs[:-1])
        g[-1] = -1.0
        return g

    def hess_accumulate(self, zs, weight, H):
        self.inner.hess_accumulate(zs[:-1], weight, H[:-1, :-1])


# --------------------------------------------------------------------------
# feasible-start barrier core
# --------------------------------------------------------------------------

@dataclass
class BarrierSolution:
    point: np.ndarray
    value: float
    multipliers: np.ndarray
    newton_steps: int


def _strictly_feasible(constraints, z) -> bool:
    return all(c.value(z) < 0.0 for c in constraints)


def _newton_center(c_min, constraints, z, t, newton_tol, max_steps):
    """Newton descent on (c_min @ z) - (1/t) * sum(log(-g_i)).

    The 1/t scaling keeps the potential at the objective's magnitude for any
    barrier parameter, so termination and line-search decisions stay within
    float64 resolution even at large t.  z must start strictly feasible.
    """
    d = z.shape[0]
    m = len(constraints)
    inv_t = 1.0 / t
    steps = 0

    def phi(zz):
        total = float(c_min @ zz)
        for con in constraints:
            v = con.value(zz)
            if v >= 0.0 or not math.isfinite(v):
                return math.inf
            total -= inv_t * math.log(-v)
        return total

    phi_z = phi(z)
    for _ in range(max_steps):
        vals = np.empty(m)
        G = np.empty((m, d))
        for i, con in enumerate(constraints):
            vals[i] = con.value(z)
            G[i] = con.grad(z)
        inv = 1.0 / (-vals)
        grad = c_min + inv_t * (G.T @ inv)
        Gw = G * inv[:, None]
        H = Gw.T @ Gw
        for i, con in enumerate(constraints):
            con.hess_accumulate(z, inv[i], H)
        H *= inv_t
        step = None
        reg = 0.0
        trace_scale = max(np.trace(H) / d, 1e-30)
        for _ in range(4):
            try:
                step = np.linalg.solve(H + reg * np.eye(d), -grad)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                break
            reg = trace_scale * (1e-10 if reg == 0.0 else reg / trace_scale * 1e4)
        if step is None or not np.all(np.isfinite(step)):
            raise NumericalFailure("Newton system unsolvable in barrier centering")
        decrement = float(-grad @ step)
        if decrement <= 2.0 * max(newton_tol, 4e-15 * (1.0 + abs(phi_z))):
            break
        s = 1.0
        accepted = False
        while s >= 1e-14:
            z_try = z + s * step
            phi_try = phi(z_try)
            if phi_try <= phi_z - 0.25 * s * decrement:
                z, phi_z = z_try, phi_try
                accepted = True
                break
            s *= 0.5
        steps += 1
        if not accepted:
            break  # at numerical resolution of the centering problem
    return z, steps


def maximize_linear(objective, constraints: Sequence, z0,
                    gap_tol: float = 1e-8, t0: float = 1.0, mu: float = 10.0,
                    newton_tol: float = 1e-11,
                    max_newton: int = 80) -> BarrierSolution:
    """Maximize ``objective @ z`` over smooth convex constraints g_i(z) <= 0.

    ``z0`` must be strictly feasible.  The barrier parameter grows by ``mu``
    per outer stage until the duality-gap bound ``m/t`` falls below
    ``gap_tol`` (absolute, in objective units).
    """
    c_min = -np.asarray(objective, dtype=np.float64)
    z = np.array(z0, dtype=np.float64)
    if not _strictly_feasible(constraints, z):
        raise InfeasibleProblem("barrier start point is not strictly feasible")
    m = len(constraints)
    t = t0
    total_steps = 0
    while True:
        z, steps = _newton_center(c_min, constraints, z, t, newton_tol, max_newton)
        total_steps += steps
        if m / t <= gap_tol:
            break
        t *= mu
    mults = np.array([1.0 / (t * (-con.value(z))) for con in constraints])
    return BarrierSolution(point=z, value=float(-c_min @ z),
                           multipliers=mults, newton_steps=total_steps)


def find_strictly_feasible(constraints: Sequence, z_init,
                           margin: float = 1e-9) -> np.ndarray:
    """Phase-1: locate a strictly feasible point or certify infeasibility."""
    z = np.array(z_init, dtype=np.float64)
    if _strictly_feasible(constraints, z):
        return z
    d = z.shape[0]
    vals = [c.value(z) for c in constraints]
    if any(not math.isfinite(v) for v in vals):
        raise InfeasibleProblem("phase-1 start is outside a constraint domain")
    s0 = max(vals) * 1.1 + 1.0
    zs = np.append(z, s0)
    aug = [_Phase1Constraint(c) for c in constraints]
    c_obj = np.zeros(d + 1)
    c_obj[-1] = -1.0  # maximize -s
    t = 1.0
    while True:
        zs, _ = _newton_center(-c_obj, aug, zs, t, 1e-11, 80)
        if zs[-1] < -margin:
            return zs[:-1]
        if (len(aug) / t) <= 0.25 * margin:
            break
        t *= 10.0
    raise InfeasibleProblem("no strictly feasible point exists (phase-1 optimum >= 0)")


# --------------------------------------------------------------------------
# batched Newton path for pure-QCQP constraint sets
# --------------------------------------------------------------------------

class _BatchedQuadSet:
    """All quadratic/linear constraints of a QCQP in scatter form.

    Per-constraint sparse matvecs dominate the generic barrier loop, so the
    QCQP front-end evaluates every value/gradient/Hessian with a handful of
    vectorized scatter-adds over the stacked nonzero triplets instead.
    """

    def __init__(self, quad_constraints, linear_constraints, num_vars):
        self.d = num_vars
        rows_all, cols_all, data_all, ids_all = [], [], [], []
        lin = []
        offs = []
        for i, (Q, q, c) in enumerate(quad_constraints):
            sym = (sp.csr_matrix(Q) + sp.csr_matrix(Q).T).tocoo()  # 2*sym(Q)
            rows_all.append(sym.row)
            cols_all.append(sym.col)
            data_all.append(sym.data)
            ids_all.append(np.full(sym.nnz, i, dtype=np.intp))
            lin.append(np.asarray(q, dtype=np.float64))
            offs.append(float(c))
        for a, b in linear_constraints:
            lin.append(np.asarray(a, dtype=np.float64))
            offs.append(-float(b))
        self.m = len(lin)
        self.n_quad = len(quad_constraints)
        self.rows = np.concatenate(rows_all) if rows_all else np.empty(0, np.intp)
        self.cols = np.concatenate(cols_all) if cols_all else np.empty(0, np.intp)
        self.data = np.concatenate(data_all) if data_all else np.empty(0)
        self.ids = np.concatenate(ids_all) if ids_all else np.empty(0, np.intp)
        self.lin = np.vstack(lin) if lin else np.empty((0, num_vars))
        self.offs = np.asarray(offs)

    def values(self, z):
        vals = self.lin @ z + self.offs
        if self.data.size:
            quad = 0.5 * np.bincount(self.ids, self.data * z[self.rows] * z[self.cols],
                                     minlength=self.m)
            vals += quad
        return vals

    def grads(self, z):
        G = self.lin.copy()
        if self.data.size:
            np.add.at(G, (self.ids, self.rows), self.data * z[self.cols])
        return G

    def hess(self, weights, H):
        if self.data.size:
            np.add.at(H, (self.rows, self.cols), weights[self.ids] * self.data)


def _barrier_maximize_batched(objective, batched: _BatchedQuadSet, z0,
                              gap_tol: float, t0: float = 1.0, mu: float = 10.0,
                              max_newton: int = 200):
    """Specialized barrier loop over a batched QCQP constraint set."""
    c_min = -np.asarray(objective, dtype=np.float64)
    z = np.array(z0, dtype=np.float64)
    d = z.shape[0]
    m = batched.m
    vals = batched.values(z)
    if vals.max() >= 0.0:
        raise InfeasibleProblem("barrier start point is not strictly feasible")

    t = t0
    total_steps = 0
    while True:
        inv_t = 1.0 / t

        def phi(vals_zz, zz):
            if vals_zz.max() >= 0.0:
                return math.inf
            return float(c_min @ zz) - inv_t * float(np.log(-vals_zz).sum())

        phi_z = phi(vals, z)
        for _ in range(max_newton):
            inv = 1.0 / (-vals)
            G = batched.grads(z)
            grad = c_min + inv_t * (G.T @ inv)
            Gw = G * inv[:, None]
            H = Gw.T @ Gw
            batched.hess(inv, H)
            H *= inv_t
            try:
                step = np.linalg.solve(H, -grad)
            except np.linalg.LinAlgError:
                H[np.diag_indices_from(H)] += 1e-10 * max(np.trace(H) / d, 1e-30)
                step = np.linalg.solve(H, -grad)
            decrement = float(-grad @ step)
            if decrement <= 2.0 * max(1e-12, 4e-15 * (1.0 + abs(phi_z))):
                break
            s = 1.0
            accepted = False
            while s >= 1e-14:
                z_try = z + s * step
                vals_try = batched.values(z_try)
                phi_try = phi(vals_try, z_try)
                if phi_try <= phi_z - 0.25 * s * decrement:
                    z, vals, phi_z = z_try, vals_try, phi_try
                    accepted = True
                    break
                s *= 0.5
            total_steps += 1
            if not accepted:
                break
        if m / t <= gap_tol:
            break
        t *= mu
    mults = 1.0 / (t * (-vals))
    return z, float(-c_min @ z), mults, total_steps


# --------------------------------------------------------------------------
# QCQP front-end
# --------------------------------------------------------------------------

def _check_psd(Q, tol: float = 1e-12) -> None:
    """Check PSD by factorizing the dense principal block of the support."""
    Qc = sp.csr_matrix(Q)
    support = np.flatnonzero(np.diff(Qc.indptr))
    if support.size == 0:
        return
    S = np.asarray(Qc[np.ix_(support, support)].todense())
    S = 0.5 * (S + S.T)
    scale = max(1.0, float(np.abs(S).max()))
    off = S - np.diag(np.diag(S))
    if not off.any():
        if np.min(np.diag(S)) < -tol * scale:
            raise DomainError("quadratic constraint matrix is not PSD")
        return
    _, Dm, _ = scipy.linalg.ldl(S)
    eigs = []
    i = 0
    n = Dm.shape[0]
    while i < n:
        if i + 1 < n and (Dm[i, i + 1] != 0.0 or Dm[i + 1, i] != 0.0):
            eigs.extend(np.linalg.eigvalsh(Dm[i:i + 2, i:i + 2]))
            i += 2
        else:
            eigs.append(Dm[i, i])
            i += 1
    if min(eigs) < -tol * scale:
        raise DomainError("quadratic constraint matrix is not PSD")


@dataclass
class QcqpProblem:
    """Linear objective (to maximize) with convex quadratic/linear constraints."""

    num_vars: int
    objective: np.ndarray
    quad_constraints: List[Tuple[object, np.ndarray, float]] = field(default_factory=list)
    linear_constraints: List[Tuple[np.ndarray, float]] = field(default_factory=list)
    var_bounds: Optional[List[Tuple[Optional[float], Optional[float]]]] = None

    def validate(self) -> None:
        n = self.num_vars
        if np.asarray(self.objective).shape != (n,):
            raise DimensionError("objective length must equal num_vars")
        for Q, q, _ in self.quad_constraints:
            if sp.csr_matrix(Q).shape != (n, n) or np.asarray(q).shape != (n,):
                raise DimensionError("quadratic constraint dimensions inconsistent")
            _check_psd(Q)
        for a, _ in self.linear_constraints:
            if np.asarray(a).shape != (n,):
                raise DimensionError("linear constraint dimensions inconsistent")
        if self.var_bounds is not None and len(self.var_bounds) != n:
            raise DimensionError("var_bounds length must equal num_vars")

    def build_constraints(self) -> list:
        cons: list = [QuadConstraint(Q, q, c) for Q, q, c in self.quad_constraints]
        cons += [LinearConstraint(a, b) for a, b in self.linear_constraints]
        if self.var_bounds:
            n = self.num_vars
            for j, (lo, hi) in enumerate(self.var_bounds):
                e = np.zeros(n)
                if lo is not None:
                    e_lo = e.copy()
                    e_lo[j] = -1.0
                    cons.append(LinearConstraint(e_lo, -lo))
                if hi is not None:
                    e_hi = e.copy()
                    e_hi[j] = 1.0
                    cons.append(LinearConstraint(e_hi, hi))
        return cons


@dataclass
class QcqpSolution:
    point: np.ndarray
    value: float
    multipliers: np.ndarray
    newton_steps: int


def _refine_multipliers(objective, vals, G, mults):
    """Least-squares multipliers on the near-active set.

    Barrier multipliers satisfy stationarity only to sqrt(gap) in plain norm;
    a nonnegative least-squares fit over the active constraint gradients
    recovers it to solver precision.  Falls back to the barrier multipliers
    when the fit is no better.
    """
    import scipy.optimize

    def residual(mu):
        return float(np.abs(-objective + G.T @ mu).max())

    thresh = 1e-7 * max(1.0, float(mults.max(initial=0.0)))
    active = mults >= thresh
    if not active.any():
        return mults
    try:
        mu_act, _ = scipy.optimize.nnls(G[active].T, objective)
    except Exception:  # noqa: BLE001 - nnls convergence issues: keep barrier mults
        return mults
    refined = np.zeros_like(mults)
    refined[active] = mu_act
    return refined if residual(refined) <= residual(mults) else mults


def solve_qcqp(prob: QcqpProblem, tol: float = 1e-8,
               z0=None) -> QcqpSolution:
    """Interior-point solve of a validated convex QCQP.

    ``tol`` bounds the final duality gap (absolute, objective units); the
    returned multipliers therefore satisfy complementary slackness to
    ``tol / m`` per constraint.  ``z0`` may supply a strictly feasible start,
    otherwise phase-1 runs from the origin (or the bound box center).
    """
    prob.validate()
    if z0 is None:
        cons = prob.build_constraints()
        start = np.zeros(prob.num_vars)
        if prob.var_bounds:
            for j, (lo, hi) in enumerate(prob.var_bounds):
                if lo is not None and hi is not None:
                    start[j] = 0.5 * (lo + hi)
                elif lo is not None:
                    start[j] = lo + 1.0
                elif hi is not None:
                    start[j] = hi - 1.0
        z0 = find_strictly_feasible(cons, start)
    linear = list(prob.linear_constraints)
    if prob.var_bounds:
        for j, (lo, hi) in enumerate(prob.var_bounds):
            e = np.zeros(prob.num_vars)
            if lo is not None:
                e_lo = e.copy()
                e_lo[j] = -1.0
                linear.append((e_lo, -lo))
            if hi is not None:
                e_hi = e.copy()
                e_hi[j] = 1.0
                linear.append((e_hi, hi))
    batched = _BatchedQuadSet(prob.quad_constraints, linear, prob.num_vars)
    point, value, mults, steps = _barrier_maximize_batched(
        prob.objective, batched, z0, gap_tol=tol)
    mults = _refine_multipliers(np.asarray(prob.objective, dtype=np.float64),
                                batched.values(point), batched.grads(point),
                                mults)
    return QcqpSolution(point=point, value=value, multipliers=mults,
                        newton_steps=steps)
