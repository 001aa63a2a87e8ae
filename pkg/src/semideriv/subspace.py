"""Linear-subspace machinery for the metric space of n-dimensional subspaces
of R^(n+m).

A subspace is stored as an orthonormal basis matrix (QR/SVD-orthonormalized on
construction); the orthogonal projection matrix is materialized on demand.
The metric between two subspaces of the same ambient space is the spectral
norm of the difference of their projections.  The adjoint of L sends
(u*, v*) in the orthogonal complement of L to (-v*, u*); it is an isometric
involution that swaps the two ambient blocks.
"""

from dataclasses import dataclass

import numpy as np

#: Entrywise orthonormality tolerance enforced on construction.
ORTHO_TOL = 1e-12
#: Two subspaces are considered equal when their metric is below this.
EQUAL_TOL = 1e-8
#: Condition-number threshold beyond which a y*-block counts as singular.
REGULARITY_COND_MAX = 1e10
#: Ambient size above which the spectral norm switches to power iteration.
_SVD_AMBIENT_MAX = 64


class NotRegular(ValueError):
    """The subspace admits no rge(Z, X, I) representation: its y*-block is
    singular, i.e. it contains a nonzero element of the form (z*, x*, 0)."""


def spectral_norm(M):
    """Operator (2-)norm of a matrix.

    Uses a full SVD for small matrices and power iteration on M^T M above
    ``_SVD_AMBIENT_MAX`` rows/columns.
    """
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    if max(M.shape) <= _SVD_AMBIENT_MAX:
        return float(np.linalg.norm(M, 2))
    # Power iteration with a deterministic start; adequate for the rare
    # large-ambient case, which the rest of the package never hits.
    v = np.ones(M.shape[1]) / np.sqrt(M.shape[1])
    s = 0.0
    for _ in range(500):
        w = M.T @ (M @ v)
        nw = np.linalg.norm(w)
        if nw < 1e-300:
            return 0.0
        v_new = w / nw
        s_new = np.sqrt(nw)
        if abs(s_new - s) <= 1e-14 * max(1.0, s_new):
            return float(s_new)
        v, s = v_new, s_new
    return float(s)


def _orthonormalize(columns):
    """Orthonormal basis for the column span, dropping dependent columns."""
    A = np.asarray(columns, dtype=float)
    if A.ndim != 2 or A.shape[1] == 0:
        raise ValueError("need a nonempty 2-d array of spanning columns")
    if not np.all(np.isfinite(A)):
        raise ValueError("spanning columns must be finite")
    u, s, _ = np.linalg.svd(A, full_matrices=False)
    tol = max(A.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    if rank == 0:
        raise ValueError("spanning columns are all zero")
    return u[:, :rank]


@dataclass(frozen=True)
class Subspace:
    """A linear subspace of R^(n+m) with a declared (n, m) block split.

    basis: orthonormal (n+m) x dim matrix whose columns span the subspace.
    split: (n, m) sizes of the two coordinate blocks; n + m equals ambient.
    """

    basis: np.ndarray
    split: tuple

    def __post_init__(self):
        n, m = self.split
        if n < 1 or m < 0:
            raise ValueError(f"invalid split {self.split}")
        B = self.basis
        if B.shape[0] != n + m:
            raise ValueError(f"basis has {B.shape[0]} rows, split {self.split} needs {n + m}")
        gram = B.T @ B
        if np.max(np.abs(gram - np.eye(B.shape[1]))) > 1e-10:
            raise ValueError("basis columns are not orthonormal")
        B.setflags(write=False)

    @property
    def ambient(self):
        return self.basis.shape[0]

    @property
    def dim(self):
        return self.basis.shape[1]

    @classmethod
    def from_spanning(cls, columns, split):
        """Subspace spanned by the given columns (orthonormalized, rank-reduced)."""
        return cls(_orthonormalize(columns), tuple(split))

    def projection(self):
        """The symmetric idempotent projection matrix B B^T."""
        return self.basis @ self.basis.T

    def distance_to(self, v):
        """Euclidean distance from a vector to the subspace."""
        v = np.asarray(v, dtype=float)
        return float(np.linalg.norm(v - self.basis @ (self.basis.T @ v)))

    def orthogonal_complement(self):
        """The orthogonal complement, carrying the same split."""
        B = self.basis
        u, _, _ = np.linalg.svd(B, full_matrices=True)
        return Subspace(np.ascontiguousarray(u[:, self.dim:]), self.split)


def from_graph(A):
    """Subspace {(u, A u) : u in R^n} for an m x n matrix, split (n, m)."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("from_graph expects an m x n matrix")
    m, n = A.shape
    return Subspace.from_spanning(np.vstack([np.eye(n), A]), (n, m))


def metric(L1, L2):
    """Spectral norm of the difference of the orthogonal projections."""
    if L1.ambient != L2.ambient:
        raise ValueError(f"ambient mismatch: {L1.ambient} vs {L2.ambient}")
    return spectral_norm(L1.projection() - L2.projection())


def is_same(L1, L2, tol=EQUAL_TOL):
    return metric(L1, L2) <= tol


def swap_matrix(n, m):
    """The orthogonal block matrix S mapping (u, v) in R^n x R^m to (-v, u)."""
    S = np.zeros((n + m, n + m))
    S[:m, n:] = -np.eye(m)
    S[m:, :n] = np.eye(n)
    return S


def swap_transform(M, split):
    """S M^T S^T for the block swap S of the given (n, m) split.

    This is the matrix transform carrying a primal graphical derivative to
    the adjoint side: applied to rge(I, A^T) for the inverse-Jacobian form.
    """
    n, m = split
    M = np.asarray(M, dtype=float)
    if M.shape != (n + m, n + m):
        raise ValueError(f"matrix shape {M.shape} does not match split {split}")
    S = swap_matrix(n, m)
    return S @ M.T @ S.T


def adjoint(L, split=None):
    """Adjoint subspace {(-v*, u*) : (u*, v*) in L^perp}.

    For L of dimension n in R^(n+m) the result has dimension m in R^(m+n)
    with split (m, n).  Applying adjoint twice returns the original subspace,
    and the map is an isometry for the projection metric.
    """
    if split is None:
        split = L.split
    n, m = split
    if L.ambient != n + m:
        raise ValueError(f"split {split} does not match ambient {L.ambient}")
    if L.dim != n:
        raise ValueError(f"adjoint needs dim {n}, got {L.dim}")
    Bperp = L.orthogonal_complement().basis  # (n+m) x m
    return Subspace(np.ascontiguousarray(swap_matrix(n, m) @ Bperp), (m, n))


@dataclass(frozen=True)
class RegularAdjointRep:
    """The rge(Z, X, I) representation of a regular adjoint subspace.

    Z is m x m, X is n x m; the represented subspace consists of all
    (Z p, X p, p) with p in R^m.
    """

    Z: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        self.Z.setflags(write=False)
        self.X.setflags(write=False)

    @property
    def dims(self):
        return self.X.shape  # (n, m)


def regular_rep(Lstar, split):
    """Compute (Z, X) with Lstar = rge(Z, X, I) for the (m, n, m) split.

    Partitions an orthonormal basis B into (B_z, B_x, B_y) blocks and forms
    Z = B_z B_y^{-1}, X = B_x B_y^{-1}.  Raises NotRegular when the y*-block
    is singular beyond the condition threshold, i.e. when the subspace
    contains a nonzero (z*, x*, 0).
    """
    m, n, m2 = split
    if m != m2:
        raise ValueError(f"split {split} must be of the form (m, n, m)")
    if Lstar.ambient != m + n + m or Lstar.dim != m:
        raise ValueError(
            f"need a dim-{m} subspace of R^{m + n + m}, got dim {Lstar.dim} in R^{Lstar.ambient}"
        )
    B = Lstar.basis
    Bz, Bx, By = B[:m], B[m:m + n], B[m + n:]
    sv = np.linalg.svd(By, compute_uv=False)
    if sv[-1] <= 0.0 or sv[0] / sv[-1] > REGULARITY_COND_MAX:
        raise NotRegular("y*-block is singular: subspace contains a nonzero (z*, x*, 0)")
    By_inv = np.linalg.inv(By)
    return RegularAdjointRep(Z=Bz @ By_inv, X=Bx @ By_inv)


def from_regular_rep(rep):
    """Reconstruct the adjoint subspace rge(Z, X, I) from its representation."""
    n, m = rep.dims
    return Subspace.from_spanning(np.vstack([rep.Z, rep.X, np.eye(m)]), (m, n + m))


def kappa(rep):
    """Operator norm of the stacked (m+n) x m matrix [Z; X].

    Equals sup of ||(z*, x*)|| over elements (z*, x*, y*) of the subspace
    with ||y*|| <= 1.
    """
    return spectral_norm(np.vstack([rep.Z, rep.X]))
