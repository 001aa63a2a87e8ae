"""Numerical certification suite for semismooth derivatives and SC
derivatives of set-valued maps.

Limit statements ("the ratio tends to zero") are certified by a finite
decreasing-radius profile with a pass threshold at the smallest radius; this
is an approximation and documented as such.  All sampling is driven by the
seeded low-discrepancy generator, so every profile is reproducible
bit-for-bit, and reductions are order-insensitive maxima and counts.
"""

from dataclasses import dataclass

import numpy as np

from . import sampling
from .bundle import hull_membership
from .ssderiv import cocl_at

DEFAULT_RADII = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)


@dataclass(frozen=True)
class RatioProfile:
    """Worst first-order remainder ratios over shrinking sampling shells."""

    radii: tuple
    worst_ratio: tuple
    tol: float

    def __post_init__(self):
        r = np.asarray(self.radii)
        if r.size == 0 or np.any(np.diff(r) >= 0):
            raise ValueError("radii must be strictly decreasing")
        if not np.all(np.isfinite(self.worst_ratio)):
            raise ValueError("ratios must be finite")

    @property
    def passed(self):
        return self.worst_ratio[-1] <= self.tol

    @property
    def verdict(self):
        return "pass" if self.passed else "fail"

    def to_dict(self):
        return {
            "radii": [float(r) for r in self.radii],
            "worst_ratio": [float(r) for r in self.worst_ratio],
            "tol": float(self.tol),
            "verdict": self.verdict,
        }


def ss_ratio(F, psi, xbar, radii=DEFAULT_RADII, samples_per_shell=64,
             tol=1e-3, seed=sampling.DEFAULT_SEED):
    """Sampled semismoothness test of F with respect to psi at xbar.

    For each radius r the profile records the worst, over sampled x with
    ||x - xbar|| in (r/2, r] and all A in psi(x), of

        ||F(x) - F(xbar) - A (x - xbar)|| / ||x - xbar||.

    The verdict is a pass iff the smallest-radius ratio is at most tol.
    """
    xbar = np.atleast_1d(np.asarray(xbar, dtype=float))
    if not psi.domain(xbar):
        raise ValueError(f"base point {xbar} outside the derivative domain")
    Fbar = np.atleast_1d(np.asarray(F(xbar), dtype=float))
    worst = []
    for idx, r in enumerate(radii):
        pts = sampling.shell_points(xbar, r, samples_per_shell, seed=seed, salt=f"ssratio:{idx}")
        ratio = 0.0
        for x in pts:
            if not psi.domain(x):
                continue
            h = x - xbar
            nh = np.linalg.norm(h)
            if nh == 0.0:
                continue
            Fx = np.atleast_1d(np.asarray(F(x), dtype=float))
            for A in psi(x):
                rem = np.linalg.norm(Fx - Fbar - A @ h)
                ratio = max(ratio, rem / nh)
        worst.append(ratio)
    return RatioProfile(tuple(radii), tuple(worst), tol)


def _fd_gradient(f, z, h):
    """Central-difference gradient, or None near a detected kink.

    A point is rejected when forward and backward one-sided differences
    disagree beyond 10*h in any coordinate.
    """
    z = np.asarray(z, dtype=float)
    n = z.size
    g = np.zeros(n)
    fz = f(z)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        fp = f(z + e)
        fm = f(z - e)
        fwd = (fp - fz) / h
        bwd = (fz - fm) / h
        if abs(fwd - bwd) > 10.0 * h:
            return None
        g[i] = (fp - fm) / (2.0 * h)
    return g


def clarke_containment(f, psi, x, fd_step=1e-7, n_dirs=24, tol=1e-3,
                       sample_radius=1e-3, seed=sampling.DEFAULT_SEED):
    """Check that sampled generalized gradients lie in the convexified
    closure of psi at x.

    Gradients are estimated by central differences at nearby points where
    both one-sided differences agree (a cheap differentiability filter); each
    accepted estimate must lie within tol of the hull returned by cocl_at.
    Raises when fewer than 5 sample gradients are accepted.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    hull = [np.asarray(a).ravel() for a in cocl_at(psi, x, sample_radius=sample_radius, seed=seed)]
    grads = []
    level = 0
    while len(grads) < 5 * 3 and level < 6:
        r = sample_radius * 2.0 ** (-level)
        for z in sampling.shell_points(x, r, n_dirs, seed=seed, salt=f"clarke:{level}"):
            if not psi.domain(z):
                continue
            g = _fd_gradient(f, z, fd_step)
            if g is not None:
                grads.append(g)
        level += 1
    if len(grads) < 5:
        raise RuntimeError(f"only {len(grads)} differentiable samples near {x}; cannot test containment")
    return all(hull_membership(g, hull, tol) for g in grads)


def singleton_fraction(psi, box, n_samples, sample_radius=1e-6, sample_count=2,
                       seed=sampling.DEFAULT_SEED):
    """Fraction of box samples at which the sampled convexified closure is a
    singleton.

    For a semismooth derivative this fraction approaches one: the set of
    points with a multi-valued convexified closure has Lebesgue measure zero.
    """
    lo, hi = box
    pts = sampling.box_points(lo, hi, n_samples, seed=seed, salt="singleton")
    hits = 0
    for x in pts:
        if not psi.domain(x):
            continue
        if len(cocl_at(psi, x, sample_radius=sample_radius, sample_count=sample_count, seed=seed)) == 1:
            hits += 1
    return hits / n_samples


def scd_ss_ratio(scd, zbar, graph_sampler, radii=DEFAULT_RADII,
                 samples_per_shell=32, tol=1e-3, seed=sampling.DEFAULT_SEED):
    """Primal SC-derivative semismoothness test at a graph point zbar.

    For each radius the profile records the worst, over sampled graph points
    z with ||z - zbar|| in (r/2, r] and all primal subspaces L at z, of
    dist(z - zbar, L) / ||z - zbar||; the subspaces are the adjoints of the
    mapping's adjoint SC derivative.  Raises when a shell yields no sample.
    """
    zbar = np.atleast_1d(np.asarray(zbar, dtype=float))
    worst = []
    for idx, r in enumerate(radii):
        pts = graph_sampler(zbar, r, samples_per_shell, sampling.derive_seed(seed, f"scdss:{idx}"))
        pts = [np.atleast_1d(np.asarray(z, dtype=float)) for z in pts]
        pts = [z for z in pts if r / 2 < np.linalg.norm(z - zbar) <= r]
        if not pts:
            raise RuntimeError(f"graph sampler produced no points in shell radius {r} around {zbar}")
        ratio = 0.0
        for z in pts:
            h = z - zbar
            nh = np.linalg.norm(h)
            n, m = scd.dims
            x, y, zz = z[:n], z[n:n + m], z[n + m:]
            for L in scd.primals(x, y, zz):
                ratio = max(ratio, L.distance_to(h) / nh)
        worst.append(ratio)
    return RatioProfile(tuple(radii), tuple(worst), tol)
