"""Deterministic low-discrepancy sampling shared by the whole package.

Every sampling routine derives its stream from (seed, salt) so that repeated
calls with the same arguments are bit-for-bit reproducible, independent of
call order anywhere else in the process.
"""

import zlib

import numpy as np
from scipy.stats import norm, qmc

DEFAULT_SEED = 0x5EED


def derive_seed(seed, salt):
    """Mix a user seed with a purpose string into a 32-bit stream seed."""
    return (int(seed) * 0x9E3779B1 + zlib.crc32(salt.encode("utf-8"))) % (2**32)


def unit_cube(count, dim, seed=DEFAULT_SEED, salt=""):
    """Scrambled Halton points in [0, 1)^dim, shape (count, dim)."""
    engine = qmc.Halton(d=dim, scramble=True, seed=derive_seed(seed, salt))
    return engine.random(count)


def sphere_directions(count, dim, seed=DEFAULT_SEED, salt=""):
    """Low-discrepancy unit vectors in R^dim, shape (count, dim).

    Gaussian inverse transform of Halton points, normalized. Degenerate
    (near-zero) draws are renormalized against a fallback axis direction.
    """
    u = unit_cube(count, dim, seed, salt)
    z = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    norms = np.linalg.norm(z, axis=1)
    bad = norms < 1e-12
    if np.any(bad):
        z[bad] = 0.0
        z[bad, 0] = 1.0
        norms[bad] = 1.0
    return z / norms[:, None]


def shell_points(center, radius, count, seed=DEFAULT_SEED, salt=""):
    """Points x with ||x - center|| in (radius/2, radius], shape (count, dim).

    Directions and radial factors come from one joint Halton stream so the
    first n points of a longer draw coincide with a shorter draw (nested).
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    dim = center.size
    u = unit_cube(count, dim + 1, seed, salt)
    z = norm.ppf(np.clip(u[:, :dim], 1e-12, 1 - 1e-12))
    norms = np.linalg.norm(z, axis=1)
    bad = norms < 1e-12
    if np.any(bad):
        z[bad] = 0.0
        z[bad, 0] = 1.0
        norms[bad] = 1.0
    dirs = z / norms[:, None]
    radii = radius * (0.5 + 0.5 * u[:, dim])
    return center[None, :] + radii[:, None] * dirs


def box_points(lo, hi, count, seed=DEFAULT_SEED, salt=""):
    """Uniform low-discrepancy points in the box [lo, hi], shape (count, dim)."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    u = unit_cube(count, lo.size, seed, salt)
    return lo[None, :] + u * (hi - lo)[None, :]
