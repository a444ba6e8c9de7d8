"""Linear operator layer: design matrices and the first-difference operator.

The difference operator maps x in R^n to (x_1 - x_2, ..., x_{n-1} - x_n) and
is never materialized; its action and adjoint are plain array expressions.
Design matrices wrap either a dense array or a CSC sparse matrix behind one
interface so the solvers above never branch on storage.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = [
    "apply_B",
    "apply_Bt",
    "DesignMatrix",
]


def apply_B(x):
    """Forward difference, maps R^n to R^{n-1}.

    Returns an empty vector when ``x`` has a single entry.
    """
    x = np.asarray(x, dtype=np.float64)
    return x[:-1] - x[1:]


def apply_Bt(z, n=None):
    """Adjoint of :func:`apply_B`, maps R^{n-1} back to R^n.

    Parameters
    ----------
    z : array_like, shape (n-1,)
        Dual vector.
    n : int, optional
        Ambient dimension. Defaults to ``len(z) + 1``.
    """
    z = np.asarray(z, dtype=np.float64)
    if n is None:
        n = z.shape[0] + 1
    if z.shape[0] != n - 1:
        raise ValueError(f"expected {n - 1} entries, got {z.shape[0]}")
    out = np.zeros(n)
    out[: n - 1] += z
    out[1:] -= z
    return out


class DesignMatrix:
    """Design matrix with dense and sparse (CSC) backings.

    Dense storage is kept column-major so that column gathers are cheap.
    All products are allocation-light and deterministic.
    """

    def __init__(self, mat):
        if sp.issparse(mat):
            csc = mat.tocsc()
            csc.sort_indices()
            self._sp = csc.astype(np.float64)
            self._dense = None
            self.m, self.n = csc.shape
        else:
            arr = np.asfortranarray(np.asarray(mat, dtype=np.float64))
            if arr.ndim != 2:
                raise ValueError("design matrix must be 2-dimensional")
            self._dense = arr
            self._sp = None
            self.m, self.n = arr.shape

    @property
    def is_sparse(self):
        return self._sp is not None

    @property
    def shape(self):
        return (self.m, self.n)

    def toarray(self):
        if self._dense is not None:
            return np.array(self._dense)
        return self._sp.toarray()

    def mat_vec(self, x):
        """A @ x."""
        if self._dense is not None:
            return self._dense @ x
        return self._sp @ x

    def rmat_vec(self, y):
        """A.T @ y."""
        if self._dense is not None:
            return self._dense.T @ y
        return self._sp.T @ y

    def gather_cols_dense(self, idx):
        """Dense m-by-len(idx) copy of the selected columns."""
        idx = np.asarray(idx, dtype=np.intp)
        if self._dense is not None:
            return np.asfortranarray(self._dense[:, idx])
        out = np.zeros((self.m, idx.shape[0]), order="F")
        indptr, indices, data = self._sp.indptr, self._sp.indices, self._sp.data
        for j, c in enumerate(idx):
            out[indices[indptr[c]:indptr[c + 1]], j] = data[indptr[c]:indptr[c + 1]]
        return out

    def gather_cols_mat_vec(self, idx, u):
        """Product of the column subset A[:, idx] with u, no dense copy."""
        idx = np.asarray(idx, dtype=np.intp)
        u = np.asarray(u, dtype=np.float64)
        if idx.shape[0] != u.shape[0]:
            raise ValueError("index set and vector length differ")
        if self._dense is not None:
            return self._dense[:, idx] @ u
        indptr, indices, data = self._sp.indptr, self._sp.indices, self._sp.data
        out = np.zeros(self.m)
        lens = indptr[idx + 1] - indptr[idx]
        if lens.sum() == 0:
            return out
        flat = _segment_ranges(indptr[idx], lens)
        np.add.at(out, indices[flat], data[flat] * np.repeat(u, lens))
        return out

    def gather_cols_rmat_vec(self, idx, y):
        """Adjoint gather product, A[:, idx].T @ y."""
        idx = np.asarray(idx, dtype=np.intp)
        if self._dense is not None:
            return self._dense[:, idx].T @ y
        indptr, indices, data = self._sp.indptr, self._sp.indices, self._sp.data
        lens = indptr[idx + 1] - indptr[idx]
        out = np.zeros(idx.shape[0])
        if lens.sum() == 0:
            return out
        flat = _segment_ranges(indptr[idx], lens)
        prod = data[flat] * y[indices[flat]]
        # segment sums over the per-column runs
        bounds = np.concatenate(([0], np.cumsum(lens)))
        cs = np.concatenate(([0.0], np.cumsum(prod)))
        out = cs[bounds[1:]] - cs[bounds[:-1]]
        return out

    def block_sum_cols(self, starts, lengths, weights, mask=None):
        """Weighted sums of disjoint column ranges, as a dense m-by-k block.

        Column j of the result is ``weights[j] * sum_{c in range_j} A[:, c]``
        where range_j covers ``starts[j] : starts[j] + lengths[j]`` and, when
        ``mask`` is given, only columns with a nonzero mask entry contribute.
        Ranges must be disjoint, in order, and inside [0, n).
        """
        starts = np.asarray(starts, dtype=np.intp)
        lengths = np.asarray(lengths, dtype=np.intp)
        weights = np.asarray(weights, dtype=np.float64)
        k = starts.shape[0]
        if lengths.shape[0] != k or weights.shape[0] != k:
            raise ValueError("starts, lengths, weights must have equal length")
        prev_end = 0
        for j in range(k):
            s, e = starts[j], starts[j] + lengths[j]
            if s < prev_end or s < 0 or e > self.n:
                raise ValueError("column ranges must be disjoint, ordered, in range")
            prev_end = e
        out = np.zeros((self.m, k), order="F")
        for j in range(k):
            s, e = starts[j], starts[j] + lengths[j]
            if mask is not None:
                u = weights[j] * np.asarray(mask[s:e], dtype=np.float64)
            else:
                u = np.full(e - s, weights[j])
            if self._dense is not None:
                out[:, j] = self._dense[:, s:e] @ u
            else:
                out[:, j] = self._sp[:, s:e] @ u
        return out

    def col_norms(self):
        """Euclidean norm of each column."""
        if self._dense is not None:
            return np.sqrt(np.einsum("ij,ij->j", self._dense, self._dense))
        sq = self._sp.multiply(self._sp)
        return np.sqrt(np.asarray(sq.sum(axis=0)).ravel())

    def scale_cols(self, scale):
        """New matrix with column j divided by scale[j]."""
        scale = np.asarray(scale, dtype=np.float64)
        if scale.shape[0] != self.n:
            raise ValueError("one scale per column required")
        if np.any(scale == 0):
            raise ValueError("zero scale")
        if self._dense is not None:
            return DesignMatrix(self._dense / scale[None, :])
        d = sp.diags(1.0 / scale)
        return DesignMatrix(self._sp @ d)

    def gram_mm(self):
        """Dense m-by-m Gram matrix A @ A.T."""
        if self._dense is not None:
            return self._dense @ self._dense.T
        return (self._sp @ self._sp.T).toarray()


def _segment_ranges(starts, lens):
    """Concatenated integer ranges [s, s+len) for each segment, vectorized."""
    total = int(lens.sum())
    rep = np.repeat(starts, lens)
    ramp = np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens)
    return rep + ramp
