"""Built-in problem library: objectives, pseudogradient oracles, semismooth
derivatives, set-valued lower-level mappings and known solutions, addressable
by name from the CLI and the test suite.

The centerpiece is a desk-scale bilevel program whose lower level minimizes
f(xi, y) = max(y^2/2 - xi y, -y^2/2) over y.  Its stationary-point mapping
F(xi, y) = Clarke d/dy f(xi, y) has a piecewise-affine graph made of four
pieces with constant tangent planes, so its adjoint SC derivative can be
written down exactly; the unique global minimizer y = xi is the continuous
selection fed to the implicit pipeline.  The upper level composes a nonsmooth
objective with this selection through the nonsmooth control map
eta(x) = |x1| - |x2|.

sgn(0) is taken as +1 throughout for oracle selections, while the derivative
sets enumerate both selection values at kink points (a derivative value must
satisfy the remainder bound for every listed matrix, so supplying the full
set is the conservative choice).
"""

import itertools
import json
from dataclasses import dataclass

import numpy as np

from . import sampling
from .bundle import OraclePoint, Polyhedron
from .scdmap import SCDMapping, theta_oracle
from .ssderiv import MatrixSet, SSDerivative, everywhere
from .subspace import Subspace, adjoint, metric, swap_matrix


def sgn(t):
    """Sign selection with sgn(t) = 1 for t >= 0."""
    return 1.0 if t >= 0 else -1.0


def _sel(t):
    """All selection values of the sign at t: both signs at the kink."""
    if t > 0:
        return (1.0,)
    if t < 0:
        return (-1.0,)
    return (1.0, -1.0)


@dataclass(frozen=True)
class ProblemSpec:
    """A named problem bundle: objective, oracle, derivative and metadata.

    oracle(x).value equals theta(x) exactly (same float computation); psi is
    the semismooth derivative certified by the verification suite; box is the
    sampling region used by containment and singleton tests.
    """

    name: str
    n: int
    theta: object = None
    oracle: object = None
    psi: object = None
    x0: np.ndarray = None
    known_solution: tuple = None
    polyhedron: Polyhedron = None
    box: tuple = None
    certified_points: tuple = ()
    scd: object = None
    sigma: object = None
    graph_sampler: object = None

    @property
    def solvable(self):
        return self.oracle is not None


def _oracle_from(theta, gfun):
    def oracle(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return OraclePoint(x=x, value=theta(x), g=np.asarray(gfun(x), dtype=float))

    return oracle


# ---------------------------------------------------------------------------
# Lower-level stationary-point mapping
# ---------------------------------------------------------------------------

def lower_objective(xi, y):
    """f(xi, y) = max(y^2/2 - xi y, -y^2/2); unique global minimizer y = xi."""
    return max(0.5 * y * y - xi * y, -0.5 * y * y)


def lower_sigma(xi):
    """Analytic argmin of the lower-level objective."""
    return float(xi)


def golden_section(f, lo, hi, xtol=1e-10):
    """Golden-section search for the minimizer of a unimodal f on [lo, hi]."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)

def lower_sigma_numeric(xi, xtol=1e-10):
    """Numeric inner minimization, snapped to the analytic branch.

    Runs golden-section search on f(xi, .) over [-|xi|-1, |xi|+1] and snaps
    the result to the analytic minimizer; a discrepancy beyond 1e-6 is an
    error rather than a silently wrong solve.
    """
    xi = float(xi)
    bracket = abs(xi) + 1.0
    y = golden_section(lambda t: lower_objective(xi, t), -bracket, bracket, xtol)
    exact = lower_sigma(xi)
    if abs(y - exact) > 1e-6:
        raise RuntimeError(f"inner solve returned {y}, expected {exact} at xi={xi}")
    return exact


# Tangent planes of the four graph pieces of F = Clarke d/dy f, in (xi, y, z)
# coordinates: the two smooth derivative branches and the two vertical
# segments swept along xi.
_TANGENTS = {
    1: Subspace.from_spanning(np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 1.0]]), (2, 1)),
    2: Subspace.from_spanning(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]), (2, 1)),
    3: Subspace.from_spanning(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), (2, 1)),
    4: Subspace.from_spanning(np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]), (2, 1)),
}
_ADJOINTS = {k: adjoint(L) for k, L in _TANGENTS.items()}

_GRAPH_TOL = 1e-9


def _lower_pieces(xi, y, z, tol=_GRAPH_TOL):
    """Indices of the graph pieces whose closure contains (xi, y, z)."""
    xm, xp = min(xi, 0.0), max(xi, 0.0)
    zlo, zhi = min(0.0, -xi), max(0.0, -xi)
    ks = []
    if abs(z - (y - xi)) <= tol and (y <= xm + tol or y >= xp - tol):
        ks.append(1)
    if abs(z + y) <= tol and xm - tol <= y <= xp + tol:
        ks.append(2)
    if abs(y - xi) <= tol and zlo - tol <= z <= zhi + tol:
        ks.append(3)
    if abs(y) <= tol and zlo - tol <= z <= zhi + tol:
        ks.append(4)
    return ks


def lower_graph_membership(xi, y, z, tol=_GRAPH_TOL):
    return bool(_lower_pieces(float(xi), float(y), float(z), tol))


def lower_sstar(xi, y, z):
    """Adjoint SC derivative of the lower-level mapping at a graph point.

    Returns the adjoints of the tangent planes of every piece whose closure
    contains the point: both branches along the solution ray y = xi for
    xi != 0, and all four pieces at the origin.
    """
    xi, y, z = float(xi), float(y), float(z)
    ks = _lower_pieces(xi, y, z)
    if not ks:
        raise ValueError(f"({xi}, {y}, {z}) is not on the graph")
    return [_ADJOINTS[k] for k in ks]


def lower_graph_sampler(zbar, radius, count, seed):
    """Graph points at distance in (radius/2, radius] from zbar.

    Samples each of the four pieces in its natural 2-d parametrization plus
    the corner points shared by adjacent pieces, then filters to the shell.
    """
    zbar = np.asarray(zbar, dtype=float)
    xb, yb, zb = zbar
    per = max(count // 4, 2)
    offsets = sampling.shell_points(np.zeros(2), radius, per, seed=seed, salt="lowergraph")
    out = []

    def push(xi, y, z):
        p = np.array([xi, y, z])
        if radius / 2 < np.linalg.norm(p - zbar) <= radius and lower_graph_membership(xi, y, z):
            out.append(p)

    for dx, dp in offsets:
        # derivative branches, parametrized by (xi, y)
        xi, y = xb + dx, yb + dp
        push(xi, y, y - xi)
        push(xi, y, -y)
        # vertical segments, parametrized by (xi, z)
        xi, z = xb + dx, zb + dp
        push(xi, xi, z)
        push(xi, 0.0, z)
        # piece corners at the sampled xi
        for xi in (xb + dx, xb + dp):
            push(xi, xi, 0.0)
            push(xi, xi, -xi)
            push(xi, 0.0, 0.0)
            push(xi, 0.0, -xi)
    return out


def paper_lower_level():
    """The lower-level mapping with its continuous solution selection."""
    mapping = SCDMapping(
        dims=(1, 1),
        sstar_eval=lambda x, y, z: lower_sstar(float(np.ravel(x)[0]), float(np.ravel(y)[0]), float(np.ravel(z)[0])),
        graph_membership=lambda x, y, z: lower_graph_membership(
            float(np.ravel(x)[0]), float(np.ravel(y)[0]), float(np.ravel(z)[0])
        ),
    )
    return mapping, lambda x: np.atleast_1d(lower_sigma(float(np.ravel(x)[0])))


# ---------------------------------------------------------------------------
# Bilevel problem
# ---------------------------------------------------------------------------

def eta(x):
    """Control map feeding the upper-level variable into the lower level."""
    return abs(x[0]) - abs(x[1])


def eta_deriv():
    """Semismooth derivative of eta, enumerating both signs at kinks."""

    def ev(x):
        return MatrixSet.of([
            np.array([[s1, -s2]]) for s1, s2 in itertools.product(_sel(x[0]), _sel(x[1]))
        ])

    return SSDerivative((1, 2), ev, everywhere, lambda x: np.sqrt(2.0))


def _bilevel_sstar(x, y, z):
    """Adjoint SC derivative of the composed mapping (x, y) => F(eta(x), y).

    Each lower-level adjoint subspace is pulled back through the linearized
    control map; at kinks of eta all limiting linearizations are enumerated.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = float(np.ravel(y)[0])
    z = float(np.ravel(z)[0])
    xi = eta(x)
    lows = lower_sstar(xi, y, z)
    S31 = swap_matrix(3, 1)
    S21t = swap_matrix(2, 1).T
    subs = []
    for s1, s2 in itertools.product(_sel(x[0]), _sel(x[1])):
        M = np.array([
            [s1, -s2, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        W = S31 @ M.T @ S21t
        for L in lows:
            cand = Subspace.from_spanning(W @ L.basis, (1, 3))
            if not any(metric(cand, other) <= 1e-10 for other in subs):
                subs.append(cand)
    return subs


def bilevel_mapping():
    """The composed lower-level mapping seen from the upper-level variable."""
    return SCDMapping(
        dims=(2, 1),
        sstar_eval=_bilevel_sstar,
        graph_membership=lambda x, y, z: lower_graph_membership(
            eta(np.asarray(x, dtype=float).ravel()), float(np.ravel(y)[0]), float(np.ravel(z)[0])
        ),
    )


def bilevel_objective(x, y):
    """Upper-level objective 2|y - |x1|| - |x2| + x1^2/2."""
    y = float(np.ravel(y)[0])
    return 2.0 * abs(y - abs(x[0])) - abs(x[1]) + 0.5 * x[0] ** 2


def bilevel_objective_deriv():
    """Derivative of the upper-level objective on R^2 x R (1 x 3 rows)."""

    def ev(v):
        x1, x2, y = v
        rows = []
        for sw, s1, s2 in itertools.product(_sel(y - abs(x1)), _sel(x1), _sel(x2)):
            rows.append(np.array([[-2.0 * sw * s1 + x1, -s2, 2.0 * sw]]))
        return MatrixSet.of(rows)

    return SSDerivative((1, 3), ev)


def bilevel_theta(x):
    x = np.asarray(x, dtype=float).ravel()
    return bilevel_objective(x, lower_sigma(eta(x)))


def bilevel_oracle_g(x):
    """The single pseudogradient selection returned to the bundle solver.

    Composes the sign selections (sgn(0) = 1) with the single-valued
    selection of the lower-level derivative (1 off the kink, 0 at it).
    """
    x = np.asarray(x, dtype=float).ravel()
    xi = eta(x)
    u = lower_sigma(xi) - abs(x[0])
    su = sgn(u)
    pt = 1.0 if xi != 0.0 else 0.0
    g1 = 2.0 * su * (pt - 1.0) * sgn(x[0]) + x[0]
    g2 = -2.0 * su * pt * sgn(x[1]) - sgn(x[1])
    return np.array([g1, g2])


def paper_bilevel():
    """The bilevel test problem reduced through its lower-level selection."""
    mapping = bilevel_mapping()
    sigma = lambda x: np.atleast_1d(lower_sigma(eta(np.asarray(x, dtype=float).ravel())))
    theta, big_theta = theta_oracle(mapping, sigma, bilevel_objective, bilevel_objective_deriv())
    return ProblemSpec(
        name="paper_bilevel",
        n=2,
        theta=theta,
        oracle=_oracle_from(theta, bilevel_oracle_g),
        psi=big_theta,
        x0=np.array([5.0, -1.0]),
        known_solution=(np.zeros(2), 0.0, 1e-3),
        box=(np.array([-1.0, -1.0]), np.array([1.0, 1.0])),
        certified_points=(np.zeros(2), np.array([0.5, 0.5]), np.array([1.0, 0.0]),
                          np.array([0.0, 1.0]), np.array([0.3, -0.7])),
        scd=mapping,
        sigma=sigma,
    )


def paper_lower_level_spec():
    """Registry wrapper around the lower-level mapping (not solvable)."""
    mapping, sigma = paper_lower_level()
    return ProblemSpec(
        name="paper_lower_level",
        n=1,
        psi=_lower_selection_deriv(mapping, sigma),
        box=(np.array([-1.0]), np.array([1.0])),
        scd=mapping,
        sigma=sigma,
        graph_sampler=lower_graph_sampler,
    )


def _lower_selection_deriv(mapping, sigma):
    from .scdmap import psi_from_scd

    return psi_from_scd(mapping, sigma)


# ---------------------------------------------------------------------------
# Classic convex suite
# ---------------------------------------------------------------------------

def _l1_problem(name, n, x0, polyhedron=None, known=None):
    def theta(x):
        return float(np.sum(np.abs(x)))

    def gfun(x):
        return np.array([sgn(v) for v in x])

    def psi_ev(x):
        rows = [_sel(v) for v in x]
        return MatrixSet.of([np.array([list(combo)]) for combo in itertools.product(*rows)])

    if known is None:
        known = (np.zeros(n), 0.0, 1e-3)
    return ProblemSpec(
        name=name,
        n=n,
        theta=theta,
        oracle=_oracle_from(theta, gfun),
        psi=SSDerivative((1, n), psi_ev, everywhere, lambda x: np.sqrt(n)),
        x0=np.asarray(x0, dtype=float),
        known_solution=known,
        polyhedron=polyhedron,
        box=(-np.ones(n), np.ones(n)),
        certified_points=(np.zeros(n), np.asarray(x0, dtype=float) / 10.0),
    )


def _maxq_problem(name, quads, x0, known, box):
    """Pointwise maximum of quadratics q_i(x) = x^T diag(a_i) x / 2 + b_i^T x + c_i."""
    quads = [(np.asarray(a, dtype=float), np.asarray(b, dtype=float), float(c)) for a, b, c in quads]
    n = quads[0][1].size

    def values(x):
        return np.array([0.5 * float(x @ (a * x)) + float(b @ x) + c for a, b, c in quads])

    def theta(x):
        return float(np.max(values(x)))

    def grad_i(x, i):
        a, b, _ = quads[i]
        return a * x + b

    def gfun(x):
        return grad_i(x, int(np.argmax(values(x))))

    def psi_ev(x):
        vals = values(x)
        top = np.max(vals)
        active = np.flatnonzero(vals >= top - 1e-12)
        return MatrixSet.of([grad_i(x, int(i)).reshape(1, n) for i in active])

    return ProblemSpec(
        name=name,
        n=n,
        theta=theta,
        oracle=_oracle_from(theta, gfun),
        psi=SSDerivative((1, n), psi_ev),
        x0=np.asarray(x0, dtype=float),
        known_solution=known,
        box=box,
        certified_points=(np.asarray(known[0], dtype=float), np.asarray(x0, dtype=float)),
    )


def classic_suite():
    """Standard nonsmooth convex tests with exact oracles and known solutions."""
    l1_n2 = _l1_problem("l1_n2", 2, x0=(3.0, -2.0))
    l1_n5 = _l1_problem("l1_n5", 5, x0=(3.0, -2.0, 1.0, -4.0, 2.0))
    maxq_1d = _maxq_problem(
        "maxq_1d",
        quads=[((2.0,), (0.0,), 0.0), ((2.0,), (-4.0,), 4.0)],
        x0=(-1.0,),
        known=(np.array([1.0]), 1.0, 1e-3),
        box=(np.array([-1.0]), np.array([3.0])),
    )
    maxq_n2 = _maxq_problem(
        "maxq_n2",
        quads=[((2.0, 0.2), (0.0, 0.0), 0.0), ((0.2, 2.0), (0.0, 0.0), 0.0)],
        x0=(2.0, 1.0),
        known=(np.zeros(2), 0.0, 1e-3),
        box=(-np.ones(2), np.ones(2)),
    )
    l1_con = _l1_problem(
        "l1_x1ge1",
        2,
        x0=(3.0, -2.0),
        polyhedron=Polyhedron(A_ineq=np.array([[-1.0, 0.0]]), b_ineq=np.array([-1.0])),
        known=(np.array([1.0, 0.0]), 1.0, 1e-3),
    )
    return [l1_n2, l1_n5, maxq_1d, maxq_n2, l1_con]


# ---------------------------------------------------------------------------
# Registry and problem files
# ---------------------------------------------------------------------------

def all_problems():
    specs = classic_suite() + [paper_bilevel(), paper_lower_level_spec()]
    return {spec.name: spec for spec in specs}


def get_problem(name):
    specs = all_problems()
    if name not in specs:
        raise KeyError(f"unknown problem {name!r}; available: {', '.join(sorted(specs))}")
    return specs[name]


def load_problem_file(path):
    """Build a ProblemSpec from a JSON problem file.

    Schema (version 1): {"schema_version": 1, "name": str, "kind": "l1"|"maxq",
    "dims": n, "params": {...}, "polyhedron": {"A_ineq": [[...]], "b_ineq":
    [...], "A_eq": [[...]], "b_eq": [...]}, "x0": [...]}.  For "maxq", params
    carries "quadratics": a list of {"a": diag, "b": linear, "c": constant}.
    """
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("schema_version", 1) != 1:
        raise ValueError(f"unsupported problem schema_version {data.get('schema_version')}")
    kind = data["kind"]
    n = int(data["dims"])
    name = data.get("name", f"file:{kind}")
    poly = None
    if data.get("polyhedron"):
        p = data["polyhedron"]
        poly = Polyhedron(
            A_ineq=np.asarray(p["A_ineq"], dtype=float) if p.get("A_ineq") else None,
            b_ineq=np.asarray(p["b_ineq"], dtype=float) if p.get("b_ineq") else None,
            A_eq=np.asarray(p["A_eq"], dtype=float) if p.get("A_eq") else None,
            b_eq=np.asarray(p["b_eq"], dtype=float) if p.get("b_eq") else None,
        )
    x0 = np.asarray(data.get("x0", np.zeros(n)), dtype=float)
    if kind == "l1":
        base = _l1_problem(name, n, x0, polyhedron=poly, known=None)
        return ProblemSpec(**{**base.__dict__, "known_solution": None})
    if kind == "maxq":
        quads = [(q["a"], q["b"], q.get("c", 0.0)) for q in data["params"]["quadratics"]]
        base = _maxq_problem(name, quads, x0, known=(np.zeros(n), 0.0, 1e-3), box=(-np.ones(n), np.ones(n)))
        return ProblemSpec(**{**base.__dict__, "known_solution": None, "polyhedron": poly})
    raise ValueError(f"unknown problem kind {kind!r}")
