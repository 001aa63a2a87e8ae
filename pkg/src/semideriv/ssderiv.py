"""Semismooth-derivative algebra: finite set-valued matrix maps with a chain
rule, a sum rule, componentwise assembly, and sampled closure surrogates.

A semismooth derivative assigns to each point of an open domain a finite,
nonempty set of m x n matrices such that the first-order remainder taken with
any assigned matrix at nearby points is o(||x - xbar||).  Values are plain
finite matrix lists; continuum-valued derivatives are represented by their
extreme points, and convexification is delegated to the pointwise sampled
hull ``cocl_at``.

Evaluators must be pure functions: the module never mutates shared state, so
derivative objects can be shared freely across threads.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import sampling
from .subspace import spectral_norm

#: Entrywise tolerance below which two matrices in a set count as duplicates.
DEDUP_TOL = 1e-12
#: Number of geometric radius halvings in the closure sampling schedule.
SHELL_LEVELS = 10


class DomainError(ValueError):
    """Evaluation requested outside the declared open domain."""


def _dedup(mats, tol=DEDUP_TOL):
    """Drop duplicate matrices, exact byte matches first, then entrywise tol."""
    seen = {}
    for a in mats:
        seen.setdefault(a.tobytes(), a)
    unique = []
    for a in seen.values():
        if not any(np.max(np.abs(a - b)) <= tol for b in unique):
            unique.append(a)
    return unique


@dataclass(frozen=True)
class MatrixSet:
    """A finite set of m x n matrices, deduplicated on construction."""

    shape: tuple
    elements: tuple = field(default=())

    @classmethod
    def of(cls, mats, shape=None):
        arrays = []
        for a in mats:
            a = np.atleast_2d(np.asarray(a, dtype=float))
            arrays.append(a)
        if not arrays:
            if shape is None:
                raise ValueError("empty MatrixSet needs an explicit shape")
            return cls(tuple(shape), ())
        shp = arrays[0].shape
        for a in arrays:
            if a.shape != shp:
                raise ValueError(f"mixed shapes in MatrixSet: {a.shape} vs {shp}")
        if shape is not None and tuple(shape) != shp:
            raise ValueError(f"elements have shape {shp}, expected {tuple(shape)}")
        unique = _dedup(arrays)
        for a in unique:
            a.setflags(write=False)
        return cls(shp, tuple(unique))

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)


def everywhere(x):
    """Domain predicate accepting all of R^n."""
    return True


def box_domain(lo, hi):
    """Predicate for the open box (lo, hi) componentwise."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))

    def contains(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.all(x > lo) and np.all(x < hi))

    return contains


@dataclass(frozen=True)
class SSDerivative:
    """A set-valued derivative candidate x -> finite set of m x n matrices.

    shape: (m, n) of every value matrix.
    eval_fn: pure function returning a MatrixSet (or an iterable of matrices).
    domain: predicate for the open domain; evaluation outside raises.
    bound_hint: optional pure function x -> local norm bound, or None.
    """

    shape: tuple
    eval_fn: object
    domain: object = everywhere
    bound_hint: object = None

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not self.domain(x):
            raise DomainError(f"point {x} outside the declared domain")
        value = self.eval_fn(x)
        if not isinstance(value, MatrixSet):
            value = MatrixSet.of(value)
        if value.shape != tuple(self.shape):
            raise ValueError(f"evaluation produced shape {value.shape}, declared {self.shape}")
        if len(value) == 0:
            raise DomainError(f"empty derivative value at {x} inside the domain")
        return value


def chain(psi1, f1, psi2):
    """Derivative of the composite F2(F1(.)): all products B A.

    psi1 is a derivative for F1 (p x n values), psi2 one for F2 (m x p values
    evaluated at F1(x)).  The value at x has cardinality |psi1(x)| * |psi2(F1(x))|
    before deduplication.
    """
    p1, n = psi1.shape
    m, p2 = psi2.shape
    if p1 != p2:
        raise ValueError(f"inner dimension mismatch: {psi1.shape} vs {psi2.shape}")

    def ev(x):
        inner = psi1(x)
        y = np.atleast_1d(np.asarray(f1(x), dtype=float))
        outer = psi2(y)
        return MatrixSet.of([B @ A for A, B in itertools.product(inner, outer)])

    def dom(x):
        if not psi1.domain(x):
            return False
        y = np.atleast_1d(np.asarray(f1(x), dtype=float))
        return psi2.domain(y)

    hint = None
    if psi1.bound_hint is not None and psi2.bound_hint is not None:
        def hint(x):
            y = np.atleast_1d(np.asarray(f1(x), dtype=float))
            return psi1.bound_hint(x) * psi2.bound_hint(y)

    return SSDerivative((m, n), ev, dom, hint)


def minkowski_sum(psi1, psi2):
    """Derivative of F1 + F2: all pairwise sums of value matrices."""
    if tuple(psi1.shape) != tuple(psi2.shape):
        raise ValueError(f"shape mismatch: {psi1.shape} vs {psi2.shape}")

    def ev(x):
        return MatrixSet.of([A + B for A, B in itertools.product(psi1(x), psi2(x))])

    def dom(x):
        return psi1.domain(x) and psi2.domain(x)

    hint = None
    if psi1.bound_hint is not None and psi2.bound_hint is not None:
        def hint(x):
            return psi1.bound_hint(x) + psi2.bound_hint(x)

    return SSDerivative(psi1.shape, ev, dom, hint)


def assemble_rows(psis):
    """Stack row derivatives (1 x n values) into an m x n derivative.

    The value at x consists of every matrix obtained by choosing one row from
    each component's value set (Cartesian product).
    """
    if not psis:
        raise ValueError("need at least one row derivative")
    n = psis[0].shape[1]
    for psi in psis:
        if psi.shape[0] != 1 or psi.shape[1] != n:
            raise ValueError(f"row derivative has shape {psi.shape}, expected (1, {n})")
    m = len(psis)

    def ev(x):
        row_sets = [[np.asarray(r).reshape(n) for r in psi(x)] for psi in psis]
        return MatrixSet.of([np.vstack(rows) for rows in itertools.product(*row_sets)])

    def dom(x):
        return all(psi.domain(x) for psi in psis)

    return SSDerivative((m, n), ev, dom)


def constant(A, n=None):
    """Derivative with the single constant value A (convenience)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    ms = MatrixSet.of([A])
    return SSDerivative(A.shape, lambda x: ms, everywhere, lambda x: spectral_norm(A))


def _collect_samples(psi, x, sample_radius, sample_count, seed):
    """Matrices gathered at x and on shrinking shells around it.

    Shell radii follow sample_radius * 2^-k for k = 0..SHELL_LEVELS; points
    outside the domain are skipped.  Raises DomainError when x itself is
    outside.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mats = list(psi(x))
    for k in range(SHELL_LEVELS + 1):
        r = sample_radius * 2.0 ** (-k)
        pts = sampling.shell_points(x, r, sample_count, seed=seed, salt=f"cocl:{k}")
        for p in pts:
            if psi.domain(p):
                mats.extend(psi(p))
    return mats


def _hull_vertices(points):
    """Vertices of the convex hull of a finite point list (rows of `points`).

    Handles degenerate (affinely low-dimensional) inputs by projecting onto
    the affine hull before calling the hull routine.
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] <= 2:
        return list(range(pts.shape[0]))
    center = pts.mean(axis=0)
    Y = pts - center
    u, s, vt = np.linalg.svd(Y, full_matrices=False)
    tol = max(Y.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > max(tol, 1e-13)))
    if rank == 0:
        return [0]
    coords = Y @ vt[:rank].T
    if rank == 1:
        axis = coords[:, 0]
        return sorted({int(np.argmin(axis)), int(np.argmax(axis))})
    if pts.shape[0] <= rank + 1:
        return list(range(pts.shape[0]))
    from scipy.spatial import ConvexHull

    hull = ConvexHull(coords)
    return sorted(int(i) for i in hull.vertices)


def cocl_at(psi, x, sample_radius=1e-3, sample_count=8, seed=sampling.DEFAULT_SEED):
    """Sampled surrogate for the convexified closure value at x.

    Collects derivative values at x and at points converging to x along
    geometrically shrinking shells, then returns the vertex list of the
    convex hull of all collected matrices.  This is an inner approximation
    of the convexified closure, exact when the derivative is piecewise
    constant near x with finitely many pieces.
    """
    mats = _dedup([np.asarray(a) for a in _collect_samples(psi, x, sample_radius, sample_count, seed)])
    if len(mats) == 1:
        return MatrixSet.of(mats)
    flat = np.array([a.ravel() for a in mats])
    keep = _hull_vertices(flat)
    return MatrixSet.of([mats[i] for i in keep])


def bnd_at(psi, x, sample_radius=1e-3, sample_count=8, seed=sampling.DEFAULT_SEED):
    """Sampled surrogate for the local norm bound of the derivative at x.

    Maximum operator norm over values collected at x and on shrinking shells
    around it; a lower estimate of the exact local bound.
    """
    mats = _collect_samples(psi, x, sample_radius, sample_count, seed)
    return max(spectral_norm(a) for a in mats)


def check_bound_hint(psi, x, radius, sample_count=16, seed=sampling.DEFAULT_SEED):
    """Sampled validation that a declared bound dominates nearby value norms.

    Returns True when every element found within the given radius of x has
    operator norm at most bound_hint(x) + 1e-9; raises when no hint is set.
    """
    if psi.bound_hint is None:
        raise ValueError("derivative declares no bound hint")
    bound = float(psi.bound_hint(np.atleast_1d(np.asarray(x, dtype=float)))) + 1e-9
    mats = _collect_samples(psi, x, radius, sample_count, seed)
    return all(spectral_norm(a) <= bound for a in mats)
