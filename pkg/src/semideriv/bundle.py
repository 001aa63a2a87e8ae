"""Proximal bundle solver for nonsmooth minimization over a convex polyhedron,
driven by a pseudogradient oracle, plus the simplex-constrained QP engine it
shares with the hull-membership tests.

The direction-finding subproblem is solved in dual form

    min over lambda in the unit simplex, mu >= 0 of
        (t/2) ||G lambda + N mu||^2 + alpha^T lambda + s^T mu,

where G collects the bundle gradients, alpha the linearization errors, N the
constraint normals and s the constraint slacks at the stability center; the
trial step is d = -t (G lambda + N mu).  The QP is solved by a pairwise
Frank-Wolfe / coordinate-minimization hybrid with exact line search and an
active-support polish, capped at 2000 iterations with KKT tolerance 1e-10.

The solver is single-threaded per invocation; distinct solves may run
concurrently.  Oracles must be pure.
"""

import time
from dataclasses import dataclass, field

import numpy as np

_QP_MAX_ITER = 2000
_QP_KKT_TOL = 1e-10
#: Downshift factor for clipping negative linearization errors (nonconvexity).
_ERR_CLIP_GAMMA = 1e-8
#: Armijo-type fraction of the predicted decrease required for a serious step.
_DESCENT_M = 0.1


class InfeasibleStart(ValueError):
    """The supplied starting point violates the polyhedral constraints."""


class OracleFailure(RuntimeError):
    """The oracle raised or returned non-finite data during the solve."""


def _vec(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Polyhedron:
    """Convex polyhedron {x : A_ineq x <= b_ineq, A_eq x = b_eq}."""

    A_ineq: np.ndarray = None
    b_ineq: np.ndarray = None
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None

    @classmethod
    def unconstrained(cls):
        return cls()

    def rows(self, n):
        """Stacked inequality rows (A, b) including both signs of equalities."""
        As, bs = [], []
        if self.A_ineq is not None:
            A = np.atleast_2d(np.asarray(self.A_ineq, dtype=float))
            b = _vec(self.b_ineq)
            if A.shape != (b.size, n):
                raise ValueError(f"inequality block shapes {A.shape} / {b.shape} do not match n={n}")
            As.append(A)
            bs.append(b)
        if self.A_eq is not None:
            A = np.atleast_2d(np.asarray(self.A_eq, dtype=float))
            b = _vec(self.b_eq)
            if A.shape != (b.size, n):
                raise ValueError(f"equality block shapes {A.shape} / {b.shape} do not match n={n}")
            As.extend([A, -A])
            bs.extend([b, -b])
        if not As:
            return np.zeros((0, n)), np.zeros(0)
        return np.vstack(As), np.concatenate(bs)

    def contains(self, x, tol=1e-9):
        x = _vec(x)
        A, b = self.rows(x.size)
        if A.shape[0] == 0:
            return True
        return bool(np.all(A @ x - b <= tol))


@dataclass(frozen=True)
class OraclePoint:
    """One oracle answer: the point, the function value and one pseudogradient
    g with g^T in the declared semismooth derivative at the point."""

    x: np.ndarray
    value: float
    g: np.ndarray


def _simplex_kkt_gap(grad, lam):
    """Frank-Wolfe gap of a simplex-constrained problem; zero at optimality."""
    return float(grad @ lam - np.min(grad))


def _polish(G, alpha, t, N, s, lam, mu):
    """Solve the equality-KKT system on the active support; None if invalid."""
    k = lam.size
    p = mu.size
    S = np.flatnonzero(lam > 1e-12)
    T = np.flatnonzero(mu > 1e-12)
    if S.size == 0:
        S = np.array([int(np.argmax(lam))])
    GS = G[:, S]
    NT = N[:, T] if T.size else np.zeros((G.shape[0], 0))
    nS, nT = S.size, T.size
    K = np.zeros((nS + nT + 1, nS + nT + 1))
    K[:nS, :nS] = t * GS.T @ GS
    K[:nS, nS:nS + nT] = t * GS.T @ NT
    K[nS:nS + nT, :nS] = t * NT.T @ GS
    K[nS:nS + nT, nS:nS + nT] = t * NT.T @ NT
    K[:nS, -1] = -1.0
    K[-1, :nS] = 1.0
    rhs = np.concatenate([-alpha[S], -s[T], [1.0]])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    lam_new = np.zeros(k)
    lam_new[S] = sol[:nS]
    mu_new = np.zeros(p)
    mu_new[T] = sol[nS:nS + nT]
    if np.min(lam_new[S]) < -1e-11 or (nT and np.min(mu_new[T]) < -1e-11):
        return None
    lam_new = np.clip(lam_new, 0.0, None)
    total = lam_new.sum()
    if total <= 0:
        return None
    lam_new /= total
    mu_new = np.clip(mu_new, 0.0, None)
    return lam_new, mu_new


def _dual_qp(G, alpha, t, N=None, s=None, max_iter=_QP_MAX_ITER, kkt_tol=_QP_KKT_TOL):
    """Minimize (t/2)||G lam + N mu||^2 + alpha^T lam + s^T mu over the simplex
    (lam) and the nonnegative orthant (mu).

    Returns (lam, mu, w, resid) with w = G lam + N mu and resid the combined
    KKT residual (simplex Frank-Wolfe gap plus orthant complementarity).
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    n, k = G.shape
    alpha = _vec(alpha) if np.ndim(alpha) else np.full(k, float(alpha))
    if alpha.size != k:
        raise ValueError(f"alpha has size {alpha.size}, expected {k}")
    if t <= 0:
        raise ValueError("proximal parameter must be positive")
    if N is None:
        N = np.zeros((n, 0))
        s = np.zeros(0)
    else:
        N = np.atleast_2d(np.asarray(N, dtype=float))
        s = _vec(s)
    p = N.shape[1]

    start = int(np.argmin(0.5 * t * np.einsum("ij,ij->j", G, G) + alpha))
    lam = np.zeros(k)
    lam[start] = 1.0
    mu = np.zeros(p)
    w = G @ lam

    col_sq = np.einsum("ij,ij->j", N, N) if p else np.zeros(0)

    resid = np.inf
    for it in range(max_iter):
        grad_lam = t * (G.T @ w) + alpha
        resid = _simplex_kkt_gap(grad_lam, lam)
        if p:
            grad_mu = t * (N.T @ w) + s
            resid += float(np.sum(np.maximum(0.0, -grad_mu)) + abs(float(mu @ grad_mu)))
        scale = 1.0 + abs(0.5 * t * float(w @ w) + float(alpha @ lam) + (float(s @ mu) if p else 0.0))
        if resid <= kkt_tol * scale:
            break
        if it % 10 == 0 or resid <= 1e3 * kkt_tol * scale:
            polished = _polish(G, alpha, t, N, s, lam, mu)
            if polished is not None:
                lam_p, mu_p = polished
                w_p = G @ lam_p + (N @ mu_p if p else 0.0)
                grad_lam_p = t * (G.T @ w_p) + alpha
                res_p = _simplex_kkt_gap(grad_lam_p, lam_p)
                if p:
                    grad_mu_p = t * (N.T @ w_p) + s
                    res_p += float(np.sum(np.maximum(0.0, -grad_mu_p)) + abs(float(mu_p @ grad_mu_p)))
                if res_p < resid:
                    lam, mu, w, resid = lam_p, mu_p, w_p, res_p
                    grad_lam = t * (G.T @ w) + alpha
                    if resid <= kkt_tol * scale:
                        break
        # Pairwise Frank-Wolfe step on the simplex block.
        if k > 1:
            fw = int(np.argmin(grad_lam))
            active = np.flatnonzero(lam > 0)
            away = int(active[np.argmax(grad_lam[active])])
            if fw != away:
                dcol = G[:, fw] - G[:, away]
                denom = t * float(dcol @ dcol)
                numer = -(grad_lam[fw] - grad_lam[away])
                gamma_max = lam[away]
                if denom > 0:
                    gamma = min(max(numer / denom, 0.0), gamma_max)
                elif numer > 0:
                    gamma = gamma_max
                else:
                    gamma = 0.0
                if gamma > 0:
                    lam[fw] += gamma
                    lam[away] -= gamma
                    w = w + gamma * dcol
        # Exact coordinate minimization on each orthant coordinate.
        for j in range(p):
            if col_sq[j] <= 0:
                continue
            wj = w - N[:, j] * mu[j]
            new = max(0.0, -(t * float(N[:, j] @ wj) + s[j]) / (t * col_sq[j]))
            if new != mu[j]:
                w = wj + N[:, j] * new
                mu[j] = new
    return lam, mu, w, resid


def simplex_qp(G, alpha, t):
    """Minimize (t/2)||G lambda||^2 + alpha^T lambda over the unit simplex.

    Returns (lambda, d) where d = -t G lambda is the corresponding trial step
    of the unconstrained bundle subproblem.
    """
    lam, _, w, _ = _dual_qp(G, alpha, t)
    return lam, -t * w


def hull_membership(v, vertices, tol):
    """True iff v is within tol of the convex hull of the vertex list.

    The distance is the optimal value of the simplex QP with shifted columns,
    since sum(lambda) = 1 makes ||V lambda - v|| = ||(V - v 1^T) lambda||.
    """
    v = _vec(v)
    V = np.column_stack([_vec(p) for p in vertices])
    G = V - v[:, None]
    lam, _, w, _ = _dual_qp(G, np.zeros(V.shape[1]), 2.0)
    return float(np.linalg.norm(w)) <= tol


def hull_cone_membership(v, vertices, rays, tol):
    """True iff v is within tol of conv(vertices) + cone(rays)."""
    v = _vec(v)
    V = np.column_stack([_vec(p) for p in vertices])
    G = V - v[:, None]
    if rays is not None and len(rays):
        N = np.column_stack([_vec(r) for r in rays])
        s = np.zeros(N.shape[1])
    else:
        N, s = None, None
    _, _, w, _ = _dual_qp(G, np.zeros(V.shape[1]), 2.0, N, s)
    return float(np.linalg.norm(w)) <= tol


@dataclass
class SolveOptions:
    tol: float = 1e-6
    max_iters: int = 500
    max_oracle_calls: int = 1000
    prox_init: float = 1.0
    prox_min: float = 1e-10
    prox_max: float = 1e8
    max_bundle: int = 50

    def to_dict(self):
        return {
            "tol": self.tol,
            "max_iters": self.max_iters,
            "max_oracle_calls": self.max_oracle_calls,
            "prox_init": self.prox_init,
            "prox_min": self.prox_min,
            "prox_max": self.prox_max,
            "max_bundle": self.max_bundle,
        }


@dataclass
class BundleState:
    """Mutable solver state: stability center, cutting planes and counters.

    Each plane is (x_i, theta(x_i), g_i, alpha_i); the linearization errors
    are recomputed against the current center on every center change and
    clipped from below by _ERR_CLIP_GAMMA * ||x_i - center||^2, the standard
    downshift safeguard for nonconvex objectives.
    """

    center: np.ndarray
    center_value: float
    prox_t: float
    points: list = field(default_factory=list)
    values: list = field(default_factory=list)
    grads: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    aggregate: tuple = None
    iterations: int = 0
    oracle_calls: int = 0
    serious_steps: int = 0

    def add_plane(self, x, val, g):
        self.points.append(np.array(x, dtype=float))
        self.values.append(float(val))
        self.grads.append(np.array(g, dtype=float))
        self.errors.append(self._error_at_center(x, val, g))

    def _error_at_center(self, x, val, g):
        raw = self.center_value - val - float(np.dot(g, self.center - x))
        return max(raw, _ERR_CLIP_GAMMA * float(np.dot(self.center - x, self.center - x)))

    def move_center(self, x, val):
        self.center = np.array(x, dtype=float)
        self.center_value = float(val)
        self.errors = [
            self._error_at_center(xi, vi, gi)
            for xi, vi, gi in zip(self.points, self.values, self.grads)
        ]

    def compress(self, max_bundle, agg_g, agg_err):
        if len(self.points) <= max_bundle:
            return
        # Replace the two oldest planes with one synthetic aggregate plane
        # anchored at the current center, so its error transforms like any
        # other plane on future center moves.
        drop = len(self.points) - max_bundle + 1
        del self.points[:drop], self.values[:drop], self.grads[:drop], self.errors[:drop]
        self.points.append(self.center.copy())
        self.values.append(self.center_value - agg_err)
        self.grads.append(np.array(agg_g, dtype=float))
        self.errors.append(max(agg_err, 0.0))


@dataclass
class SolveReport:
    """Outcome of one bundle solve, serializable for the CLI report schema."""

    problem: str
    options: dict
    trace: list
    iterations: int
    oracle_calls: int
    serious_steps: int
    final_x: np.ndarray
    final_value: float
    stationarity: float
    status: str
    wall_time_s: float

    def to_dict(self, with_timing=True):
        d = {
            "problem": self.problem,
            "options": self.options,
            "trace": self.trace,
            "totals": {
                "iterations": self.iterations,
                "oracle_calls": self.oracle_calls,
                "serious_steps": self.serious_steps,
            },
            "final": {
                "x": [float(v) for v in self.final_x],
                "value": float(self.final_value),
                "stationarity": float(self.stationarity),
            },
            "status": self.status,
            "wall_time_s": float(self.wall_time_s) if with_timing else None,
        }
        return d


def _call_oracle(oracle, x, state):
    try:
        pt = oracle(np.array(x, dtype=float))
    except Exception as exc:  # propagate evaluation errors with context
        raise OracleFailure(f"oracle failed at {np.asarray(x)}: {exc}") from exc
    state.oracle_calls += 1
    val = float(pt.value)
    g = _vec(pt.g)
    if not (np.isfinite(val) and np.all(np.isfinite(g))):
        raise OracleFailure(f"oracle returned non-finite data at {np.asarray(x)}")
    return val, g


def solve(theta, oracle, uad, x0, opts=None, problem_name=""):
    """Minimize theta over the polyhedron from x0 using the bundle oracle.

    Serious steps strictly decrease the center value; null steps enrich the
    cutting-plane model without moving the center.  The stationarity measure
    is ||G lambda + N mu|| + lambda^T alpha + mu^T s, which certifies an
    approximate inclusion of zero in the convexified derivative plus the
    normal cone of the feasible set.  Terminates at opts.tol or when the
    iteration/oracle budgets are exhausted.
    """
    opts = opts or SolveOptions()
    x0 = _vec(x0)
    n = x0.size
    uad = uad or Polyhedron.unconstrained()
    A, b = uad.rows(n)
    if A.shape[0] and not uad.contains(x0):
        raise InfeasibleStart(f"x0={x0} violates the constraints")

    t_start = time.perf_counter()
    state = BundleState(center=x0.copy(), center_value=0.0, prox_t=opts.prox_init)
    v0, g0 = _call_oracle(oracle, x0, state)
    state.center_value = v0
    state.add_plane(x0, v0, g0)

    trace = [{
        "iteration": 0, "center": [float(v) for v in state.center],
        "value": v0, "step": "init", "agg_norm": float(np.linalg.norm(g0)),
        "prox_t": state.prox_t,
    }]
    stationarity = np.inf
    status = "budget_iterations"
    consecutive_serious = 0

    for _ in range(opts.max_iters):
        G = np.column_stack(state.grads)
        alpha = np.array(state.errors)
        if A.shape[0]:
            slack = b - A @ state.center
            lam, mu, w, _ = _dual_qp(G, alpha, state.prox_t, A.T, slack)
            comp = float(mu @ slack)
        else:
            lam, mu, w, _ = _dual_qp(G, alpha, state.prox_t)
            slack = np.zeros(0)
            comp = 0.0
        agg_norm = float(np.linalg.norm(w))
        agg_err = float(lam @ alpha)
        stationarity = agg_norm + agg_err + comp
        if stationarity <= opts.tol:
            status = "converged"
            break
        if state.oracle_calls >= opts.max_oracle_calls:
            status = "budget_oracle"
            break

        d = -state.prox_t * w
        if A.shape[0]:
            viol = A @ d - slack
            worst = np.max(viol)
            if worst > 0:
                # Tiny infeasibility from the inexact QP: shrink the step.
                scale = min(
                    (slack[j] / (A[j] @ d) for j in np.flatnonzero(viol > 0) if A[j] @ d > 0),
                    default=1.0,
                )
                d = d * max(0.0, min(1.0, scale))
        y = state.center + d
        predicted = state.prox_t * agg_norm**2 + agg_err + comp
        state.iterations += 1
        fy, gy = _call_oracle(oracle, y, state)

        if fy <= state.center_value - _DESCENT_M * predicted and predicted > 0:
            state.move_center(y, fy)
            state.serious_steps += 1
            consecutive_serious += 1
            if consecutive_serious >= 2:
                state.prox_t = min(state.prox_t * 2.0, opts.prox_max)
            step = "serious"
        else:
            consecutive_serious = 0
            state.prox_t = max(state.prox_t * 0.5, opts.prox_min)
            step = "null"
        state.add_plane(y, fy, gy)
        state.compress(opts.max_bundle, w, agg_err)
        trace.append({
            "iteration": state.iterations,
            "center": [float(v) for v in state.center],
            "value": state.center_value,
            "step": step,
            "agg_norm": agg_norm,
            "prox_t": state.prox_t,
        })

    return SolveReport(
        problem=problem_name,
        options=opts.to_dict(),
        trace=trace,
        iterations=state.iterations,
        oracle_calls=state.oracle_calls,
        serious_steps=state.serious_steps,
        final_x=state.center.copy(),
        final_value=state.center_value,
        stationarity=float(stationarity),
        status=status,
        wall_time_s=time.perf_counter() - t_start,
    )
