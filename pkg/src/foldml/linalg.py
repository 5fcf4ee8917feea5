"""Dense symmetric-matrix kernels, a Jacobi eigensolver with pseudo-inverse,
closest-column search, and a run-length-encoded sparse vector."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionError, NotPSDError, NumericError

_EPS = float(np.finfo(np.float64).eps)


@lru_cache(maxsize=None)
def _tril_indices(d):
    rows, cols = np.tril_indices(d)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


@lru_cache(maxsize=None)
def _diag_positions(d):
    i = np.arange(d)
    pos = i * (i + 3) // 2
    pos.setflags(write=False)
    return pos


class SymMatrixLower:
    """Symmetric d x d matrix stored as its packed lower triangle.

    Entry (i, j) with j <= i lives at packed index i*(i+1)//2 + j, so only
    d*(d+1)//2 values are kept and the reconstructed matrix is symmetric by
    construction.
    """

    __slots__ = ("d", "packed")

    def __init__(self, d, packed=None):
        d = int(d)
        if d < 1:
            raise DimensionError(f"dimension must be >= 1, got {d}")
        size = d * (d + 1) // 2
        if packed is None:
            packed = np.zeros(size)
        else:
            packed = np.asarray(packed, dtype=np.float64)
            if packed.shape != (size,):
                raise DimensionError(
                    f"packed storage for d={d} must have {size} entries, got {packed.shape}"
                )
        self.d = d
        self.packed = packed

    @classmethod
    def from_full(cls, a):
        """Build from the lower triangle of a square array."""
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"need a square matrix, got shape {a.shape}")
        rows, cols = _tril_indices(a.shape[0])
        return cls(a.shape[0], a[rows, cols].copy())

    def to_full(self):
        """Reconstruct the full symmetric matrix."""
        full = np.zeros((self.d, self.d))
        rows, cols = _tril_indices(self.d)
        full[rows, cols] = self.packed
        strict = rows != cols
        full[cols[strict], rows[strict]] = self.packed[strict]
        return full

    def copy(self):
        return SymMatrixLower(self.d, self.packed.copy())

    def rank_one_update(self, x, weight=1.0):
        """Accumulate weight * x x^T, touching only the lower triangle
        (d*(d+1)/2 multiply-adds). Mutates and returns self."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.d,):
            raise DimensionError(f"expected a length-{self.d} vector, got shape {x.shape}")
        rows, cols = _tril_indices(self.d)
        self.packed += weight * x[rows] * x[cols]
        return self

    def add_gram_block(self, x_block, weights=None):
        """Accumulate the (optionally row-weighted) Gram matrix of a row
        block: sum_i w_i x_i x_i^T. Mutates and returns self."""
        if x_block.shape[1] != self.d:
            raise DimensionError(
                f"expected rows of length {self.d}, got {x_block.shape[1]}"
            )
        if weights is None:
            gram = x_block.T @ x_block
        else:
            gram = (x_block * weights[:, None]).T @ x_block
        rows, cols = _tril_indices(self.d)
        self.packed += gram[rows, cols]
        return self

    def add(self, other):
        """Entrywise sum with another matrix of the same dimension; pure."""
        if not isinstance(other, SymMatrixLower) or other.d != self.d:
            raise DimensionError(
                f"cannot add matrices of dimension {self.d} and {getattr(other, 'd', '?')}"
            )
        return SymMatrixLower(self.d, self.packed + other.packed)

    def diagonal(self):
        return self.packed[_diag_positions(self.d)]


def rank_one_update(m, x, weight=1.0):
    """Module-level alias for SymMatrixLower.rank_one_update."""
    return m.rank_one_update(x, weight)


@dataclass(frozen=True)
class EigenDecomposition:
    """Symmetric eigendecomposition with rank-truncated pseudo-inverse.

    eigenvalues are ascending; eigenvector j is eigenvectors[:, j];
    condition_no is the ratio of extreme retained eigenvalues, +inf when
    rank < d.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    pseudo_inverse: np.ndarray
    condition_no: float
    rank: int


def symmetric_eigen(a, max_sweeps=50):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric
    matrix via cyclic Jacobi rotations.

    Adequate for the moderate dimensions used here (a few hundred); each
    rotation is a vectorized row/column update.
    """
    a = np.array(a, dtype=np.float64)
    d = a.shape[0]
    v = np.eye(d)
    if d == 1:
        return a[0].copy(), v
    for sweep in range(max_sweeps):
        rows, cols = _tril_indices(d)
        strict = rows != cols
        off = float(np.abs(a[rows[strict], cols[strict]]).sum())
        scale = float(np.abs(np.diagonal(a)).max())
        if off <= 1e-14 * max(1.0, scale) * d:
            break
        thresh = 0.2 * off / (d * d) if sweep < 3 else 0.0
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                g = 100.0 * abs(apq)
                # off-diagonal negligible next to both diagonals: hard-zero
                if sweep > 3 and abs(a[p, p]) + g == abs(a[p, p]) and abs(a[q, q]) + g == abs(a[q, q]):
                    a[p, q] = a[q, p] = 0.0
                    continue
                if abs(apq) <= thresh:
                    continue
                h = a[q, q] - a[p, p]
                if abs(h) + g == abs(h):
                    t = apq / h
                else:
                    theta = 0.5 * h / apq
                    t = 1.0 / (abs(theta) + np.sqrt(1.0 + theta * theta))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                tau = s / (1.0 + c)
                delta = t * apq
                app = a[p, p] - delta
                aqq = a[q, q] + delta
                rp = a[p].copy()
                rq = a[q].copy()
                new_p = rp - s * (rq + tau * rp)
                new_q = rq + s * (rp - tau * rq)
                new_p[p] = app
                new_p[q] = 0.0
                new_q[q] = aqq
                new_q[p] = 0.0
                a[p, :] = new_p
                a[:, p] = new_p
                a[q, :] = new_q
                a[:, q] = new_q
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    w = np.diagonal(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def spd_pseudo_inverse(m):
    """Eigendecompose a symmetric PSD matrix and form its Moore-Penrose
    pseudo-inverse.

    Eigenvalues below d * eps * lambda_max count as zero (rank deficiency);
    an eigenvalue below the negated cutoff raises NotPSDError since Gram
    matrices must be PSD.
    """
    if isinstance(m, SymMatrixLower):
        if not np.all(np.isfinite(m.packed)):
            raise NumericError("matrix has non-finite entries")
        full = m.to_full()
    else:
        full = np.asarray(m, dtype=np.float64)
        if full.ndim != 2 or full.shape[0] != full.shape[1]:
            raise DimensionError(f"need a square matrix, got shape {full.shape}")
        if not np.all(np.isfinite(full)):
            raise NumericError("matrix has non-finite entries")
    d = full.shape[0]
    w, v = symmetric_eigen(full)
    lam_max = max(float(w[-1]), 0.0)
    tol = d * _EPS * lam_max
    if float(w[0]) < -tol:
        raise NotPSDError(
            f"eigenvalue {w[0]:.6g} below -{tol:.6g}; matrix is not positive semi-definite"
        )
    retained = w > tol
    rank = int(retained.sum())
    inv_vals = np.where(retained, 1.0 / np.where(retained, w, 1.0), 0.0)
    pinv = (v * inv_vals) @ v.T
    pinv = 0.5 * (pinv + pinv.T)
    if rank < d or rank == 0:
        condition_no = float("inf")
    else:
        condition_no = float(w[-1] / w[0])
    return EigenDecomposition(
        eigenvalues=w,
        eigenvectors=v,
        pseudo_inverse=pinv,
        condition_no=condition_no,
        rank=rank,
    )


def closest_column(m, b):
    """Index of the column of m closest to b in squared Euclidean distance,
    plus that distance. Ties break toward the lowest index."""
    m = np.asarray(m, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] < 1:
        raise DimensionError(f"need a d x k matrix with k >= 1, got shape {m.shape}")
    if b.shape != (m.shape[0],):
        raise DimensionError(
            f"vector length {b.shape} does not match matrix rows {m.shape[0]}"
        )
    diff = m - b[:, None]
    d2 = np.einsum("ij,ij->j", diff, diff)
    idx = int(np.argmin(d2))
    return idx, float(d2[idx])


class SparseVectorRLE:
    """Run-length-encoded vector: repeated identical values compress into
    (value, run_length) pairs. Zero gets no special treatment."""

    __slots__ = ("values", "run_lengths", "logical_length")

    def __init__(self, values, run_lengths, logical_length):
        values = np.asarray(values, dtype=np.float64)
        run_lengths = np.asarray(run_lengths, dtype=np.int64)
        if values.shape != run_lengths.shape or values.ndim != 1:
            raise DimensionError("values and run_lengths must be equal-length 1-D arrays")
        if values.size and run_lengths.min() < 1:
            raise DimensionError("run lengths must be >= 1")
        if values.size > 1 and np.any(values[1:] == values[:-1]):
            raise DimensionError("adjacent runs must not share a value")
        if int(run_lengths.sum()) != int(logical_length):
            raise DimensionError(
                f"run lengths sum to {int(run_lengths.sum())}, expected {logical_length}"
            )
        self.values = values
        self.run_lengths = run_lengths
        self.logical_length = int(logical_length)

    @property
    def n_runs(self):
        return int(self.values.size)

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense, dtype=np.float64)
        n = dense.size
        if n == 0:
            return cls(np.empty(0), np.empty(0, dtype=np.int64), 0)
        starts = np.r_[0, np.flatnonzero(dense[1:] != dense[:-1]) + 1]
        lengths = np.diff(np.r_[starts, n])
        return cls(dense[starts], lengths, n)

    @classmethod
    def from_runs(cls, runs, logical_length=None):
        values = [v for v, _ in runs]
        lengths = [l for _, l in runs]
        total = int(sum(lengths))
        if logical_length is None:
            logical_length = total
        return cls(np.asarray(values, dtype=np.float64), np.asarray(lengths, dtype=np.int64), logical_length)

    def to_dense(self):
        return np.repeat(self.values, self.run_lengths)


def rle_dot_with_segments(a, b):
    """Dot product by run intersection, plus the number of segments visited
    (at most n_runs(a) + n_runs(b))."""
    if a.logical_length != b.logical_length:
        raise DimensionError(
            f"length mismatch: {a.logical_length} vs {b.logical_length}"
        )
    n = a.logical_length
    if n == 0:
        return 0.0, 0
    ia = ib = 0
    end_a = int(a.run_lengths[0])
    end_b = int(b.run_lengths[0])
    prev = 0
    acc = 0.0
    segments = 0
    while True:
        stop = min(end_a, end_b)
        acc += float(a.values[ia]) * float(b.values[ib]) * (stop - prev)
        segments += 1
        if stop == n:
            return acc, segments
        prev = stop
        if end_a == stop:
            ia += 1
            end_a += int(a.run_lengths[ia])
        if end_b == stop:
            ib += 1
            end_b += int(b.run_lengths[ib])


def rle_dot(a, b):
    """Dot product of two RLE vectors without densifying either side."""
    value, _ = rle_dot_with_segments(a, b)
    return value
