"""Factor-once, solve-many tridiagonal elimination for complex systems."""
from __future__ import annotations

import numpy as np
import scipy.linalg


class TridiagonalFactor:
    """Thomas elimination factors of a (complex) tridiagonal matrix.

    Parameters
    ----------
    lower, diag, upper : ndarray
        Sub-, main and super-diagonal; ``lower`` and ``upper`` have length
        ``n - 1``.

    The elimination is only stable without pivoting for diagonally
    dominant matrices.  When the matrix is not row-wise diagonally dominant
    the factor falls back to LAPACK's partially pivoted banded solver.
    Right-hand sides may carry trailing batch axes; each column is
    processed with identical elementwise arithmetic, so results do not
    depend on how columns are grouped.
    """

    def __init__(self, lower, diag, upper):
        diag = np.asarray(diag)
        lower = np.asarray(lower)
        upper = np.asarray(upper)
        n = diag.shape[0]
        if lower.shape != (n - 1,) or upper.shape != (n - 1,):
            raise ValueError("off-diagonals must have length n - 1")
        dtype = np.result_type(lower, diag, upper, np.complex128)
        self.n = n
        self.lower = lower.astype(dtype)
        self.diag = diag.astype(dtype)
        self.upper = upper.astype(dtype)

        off = np.zeros(n)
        off[1:] += np.abs(lower)
        off[:-1] += np.abs(upper)
        self.pivoting = not np.all(np.abs(diag) > off)
        if self.pivoting:
            ab = np.zeros((3, n), dtype=dtype)
            ab[0, 1:] = self.upper
            ab[1] = self.diag
            ab[2, :-1] = self.lower
            self._ab = ab
            return

        # modified super-diagonal and pivots of the forward sweep
        cp = np.empty(max(n - 1, 0), dtype=dtype)
        piv = np.empty(n, dtype=dtype)
        piv[0] = self.diag[0]
        for k in range(1, n):
            cp[k - 1] = self.upper[k - 1] / piv[k - 1]
            piv[k] = self.diag[k] - self.lower[k - 1] * cp[k - 1]
        if np.any(piv == 0):
            raise np.linalg.LinAlgError("zero pivot in tridiagonal elimination")
        self._cp = cp
        self._inv_piv = 1.0 / piv

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs)
        if rhs.shape[0] != self.n:
            raise ValueError(f"right-hand side has {rhs.shape[0]} rows, expected {self.n}")
        if self.pivoting:
            flat = rhs.reshape(self.n, -1).astype(self._ab.dtype)
            out = scipy.linalg.solve_banded((1, 1), self._ab, flat)
            return out.reshape(rhs.shape)

        # a 2-D view keeps every row update on numpy's array loops; scalar
        # complex arithmetic rounds differently and would break batch invariance
        b = rhs.reshape(self.n, -1)
        x = np.empty(b.shape, dtype=np.result_type(rhs, self.diag))
        lower, cp, inv_piv = self.lower[:, None], self._cp[:, None], self._inv_piv[:, None]
        x[0] = b[0] * inv_piv[0]
        for k in range(1, self.n):
            x[k] = (b[k] - lower[k - 1] * x[k - 1]) * inv_piv[k]
        for k in range(self.n - 2, -1, -1):
            x[k] -= cp[k] * x[k + 1]
        return x.reshape(rhs.shape)

    def toarray(self) -> np.ndarray:
        return (
            np.diag(self.diag) + np.diag(self.lower, -1) + np.diag(self.upper, 1)
        )
