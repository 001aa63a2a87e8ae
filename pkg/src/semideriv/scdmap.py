"""Subspace-containing (SC) derivative interfaces for set-valued mappings.

A mapping F: R^n x R^m => R^m is described by an evaluator returning, at each
graph point (x, y, z), finitely many adjoint derivative subspaces, each an
m-dimensional subspace of R^(m+n+m) in (z*, x*, y*) block coordinates.  The
evaluator is problem-supplied: the subspaces are computed analytically per
problem, not derived from the graph automatically.

From the adjoint subspaces the module builds the derivative of a continuous
solution selection sigma (values {-X^T} over the regular representations) and
the pseudogradient oracle for a composed objective.  Evaluators must be pure;
nothing here caches or mutates shared state.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import subspace as sub
from .ssderiv import MatrixSet, SSDerivative, everywhere


class SCDEvaluationError(RuntimeError):
    """Derivative construction failed at a specific point."""

    def __init__(self, message, point):
        super().__init__(f"{message} at point {np.asarray(point)}")
        self.point = np.asarray(point)


@dataclass(frozen=True)
class SCDMapping:
    """A set-valued mapping described through its adjoint SC derivative.

    dims: (n, m) for F: R^n x R^m => R^m.
    sstar_eval: (x, y, z) -> list of Subspace, each of dimension m in
        R^(m+n+m) with (z*, x*, y*) block coordinates; nonempty on graph
        points.
    graph_membership: optional predicate (x, y, z) -> bool within tolerance.
    """

    dims: tuple
    sstar_eval: object
    graph_membership: object = None

    def adjoints(self, x, y, z):
        subs = list(self.sstar_eval(x, y, z))
        if not subs:
            raise SCDEvaluationError("empty adjoint SC derivative", (x, y, z))
        n, m = self.dims
        for L in subs:
            if L.ambient != m + n + m or L.dim != m:
                raise ValueError(
                    f"adjoint subspace has dim {L.dim} in R^{L.ambient}, "
                    f"expected dim {m} in R^{m + n + m}"
                )
        return subs

    def primals(self, x, y, z):
        """Primal SC derivative subspaces (tangent side), via the adjoint map.

        Each returned subspace has dimension n+m in R^((n+m)+m) with
        ((x, y), z) block coordinates.
        """
        n, m = self.dims
        return [sub.adjoint(L, (m, n + m)) for L in self.adjoints(x, y, z)]

    def on_graph(self, x, y, z):
        if self.graph_membership is None:
            raise ValueError("mapping declares no graph membership predicate")
        return bool(self.graph_membership(x, y, z))


@dataclass(frozen=True)
class GraphLipschitzRep:
    """Chart data for a graphically Lipschitzian mapping.

    phi: diffeomorphism (x, y) -> (u, w) on the chart neighborhood.
    dphi: Jacobian evaluator (x, y) -> (n+m) x (n+m) matrix.
    f: Lipschitz map u -> w whose graph is the image of the graph of F.
    bjac: u -> MatrixSet of limiting-Jacobian elements of f at u.
    """

    phi: object
    dphi: object
    f: object
    bjac: object


def sc_from_graphlip(rep, point, split):
    """Primal SC derivative subspaces from a graphically Lipschitzian chart.

    One subspace per limiting-Jacobian element A: the inverse chart Jacobian
    applied to the graph subspace of A, re-orthonormalized.  split is (n, m)
    of the ambient graph space.
    """
    n, m = split
    x, y = point
    J = np.asarray(rep.dphi(x, y), dtype=float)
    if J.shape != (n + m, n + m):
        raise ValueError(f"chart Jacobian has shape {J.shape}, expected {(n + m, n + m)}")
    sv = np.linalg.svd(J, compute_uv=False)
    if sv[-1] <= 0.0 or sv[0] / sv[-1] > 1e10:
        raise np.linalg.LinAlgError("chart Jacobian is singular: chart breakdown")
    Jinv = np.linalg.inv(J)
    u = np.asarray(rep.phi(x, y), dtype=float)[:n]
    mats = rep.bjac(u)
    out = []
    for A in mats:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        graph_cols = np.vstack([np.eye(n), A])
        out.append(sub.Subspace.from_spanning(Jinv @ graph_cols, (n, m)))
    return out


def scd_reg(mapping, point):
    """Largest kappa over the adjoint subspaces at a graph point.

    Returns math.inf when any subspace fails the regular representation,
    i.e. contains a nonzero (z*, x*, 0).
    """
    n, m = mapping.dims
    x, y, z = point
    worst = 0.0
    for L in mapping.adjoints(x, y, z):
        try:
            rep = sub.regular_rep(L, (m, n, m))
        except sub.NotRegular:
            return math.inf
        worst = max(worst, sub.kappa(rep))
    return worst


def psi_from_scd(mapping, sigma, domain=everywhere):
    """Semismooth derivative of a continuous solution selection sigma.

    The value at x collects -X^T over the regular representations of all
    adjoint subspaces at (x, sigma(x), 0); it is the derivative with respect
    to which sigma is semismooth whenever the mapping has the SC-based
    semismooth property with finite regularity modulus along the selection.
    """
    n, m = mapping.dims

    def ev(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(sigma(x), dtype=float))
        z = np.zeros(m)
        mats = []
        for L in mapping.adjoints(x, y, z):
            try:
                rep = sub.regular_rep(L, (m, n, m))
            except sub.NotRegular as exc:
                raise SCDEvaluationError(f"irregular adjoint subspace ({exc})", x) from exc
            mats.append(-rep.X.T)
        return MatrixSet.of(mats)

    return SSDerivative((m, n), ev, domain)


def theta_oracle(mapping, sigma, phi, phi_deriv, domain=everywhere):
    """Reduced objective and its pseudogradient derivative.

    Given an objective phi on R^n x R^m semismooth with respect to phi_deriv
    (1 x (n+m) values) along the graph of sigma, returns the reduced function
    theta(x) = phi(x, sigma(x)) together with the derivative whose value at x
    collects every g_x^T - g_y^T X^T over objective rows (g_x^T, g_y^T) and
    regular representations X of the adjoint subspaces at (x, sigma(x), 0).
    """
    n, m = mapping.dims
    if tuple(phi_deriv.shape) != (1, n + m):
        raise ValueError(f"objective derivative has shape {phi_deriv.shape}, expected (1, {n + m})")

    def theta(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return float(phi(x, np.atleast_1d(np.asarray(sigma(x), dtype=float))))

    sel_psi = psi_from_scd(mapping, sigma, domain)

    def ev(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(sigma(x), dtype=float))
        rows = phi_deriv(np.concatenate([x, y]))
        out = []
        for minus_xt in sel_psi(x):
            for row in rows:
                g = np.asarray(row).reshape(n + m)
                gx, gy = g[:n], g[n:]
                out.append((gx + gy @ minus_xt).reshape(1, n))
        return MatrixSet.of(out)

    return theta, SSDerivative((1, n), ev, domain)
