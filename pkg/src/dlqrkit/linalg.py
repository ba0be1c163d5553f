"""Dense real matrix kernel: eigenvalues, definiteness tests, linear solves.

Everything else in the package funnels its numerics through this module.
The heavy lifting is delegated to LAPACK via numpy/scipy: general
eigenvalues by Hessenberg reduction + shifted QR (``dgeev``), symmetric
eigenvalues by ``dsyevd``, definiteness by Cholesky, linear systems by LU
with partial pivoting (``dgetrf``).  This module adds the validation,
error taxonomy and tolerances the callers rely on.  Scope is desk-sized
dense matrices (dim up to a few tens); no sparse or complex storage.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


class LinalgError(Exception):
    """Base class for numerical kernel failures."""


class DimensionError(LinalgError):
    """Input has the wrong shape for the requested operation."""


class ConvergenceError(LinalgError):
    """An iterative factorization hit its sweep cap without converging."""


class SingularityError(LinalgError):
    """A linear system is numerically singular (pivot below threshold)."""


class DefinitenessError(LinalgError):
    """A matrix required to be positive definite is not."""


# Pivot below SINGULARITY_RTOL * ||M|| is treated as an exact zero.
SINGULARITY_RTOL = 1e-13


def _validate(a: np.ndarray, what: str) -> np.ndarray:
    if a.ndim != 2:
        raise DimensionError(f"{what} must be 2-D, got ndim={a.ndim}")
    if a.size == 0:
        raise DimensionError(f"{what} must be non-empty")
    if not np.isfinite(a).all():
        raise ValueError(f"{what} contains NaN or Inf entries")
    return a


def as_array(m, *, square: bool = False, what: str = "matrix") -> np.ndarray:
    """Coerce Matrix/SymMatrix/array-like to a validated float ndarray."""
    if isinstance(m, (Matrix, SymMatrix)):
        a = m.array
    else:
        a = np.array(m, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        _validate(a, what)
    if square and a.shape[0] != a.shape[1]:
        raise DimensionError(f"{what} must be square, got shape {a.shape}")
    return a


def as_sym_array(m, *, what: str = "matrix") -> np.ndarray:
    """Like :func:`as_array` but returns the symmetric part of the input."""
    a = as_array(m, square=True, what=what)
    return 0.5 * (a + a.T)


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


class Matrix:
    """Immutable dense real matrix.  Rejects NaN/Inf at construction."""

    __slots__ = ("_a",)

    def __init__(self, data):
        a = np.array(data, dtype=float)
        if a.ndim == 1:
            a = a.reshape(1, -1)
        _validate(a, "Matrix")
        a.flags.writeable = False
        self._a = a

    @classmethod
    def from_flat(cls, rows: int, cols: int, entries) -> "Matrix":
        """Build from row-major flat entries."""
        e = np.asarray(entries, dtype=float)
        if e.size != rows * cols:
            raise DimensionError(
                f"expected {rows * cols} entries, got {e.size}")
        return cls(e.reshape(rows, cols))

    @property
    def rows(self) -> int:
        return self._a.shape[0]

    @property
    def cols(self) -> int:
        return self._a.shape[1]

    @property
    def entries(self) -> np.ndarray:
        """Flat row-major copy of the entries."""
        return self._a.reshape(-1).copy()

    @property
    def array(self) -> np.ndarray:
        return self._a

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._a, dtype=dtype)

    def __repr__(self):
        return f"Matrix({self._a.tolist()!r})"


class SymMatrix:
    """Symmetric matrix; only the upper triangle is stored.

    Symmetry is structural: reconstruction mirrors the stored triangle, so
    the full matrix is symmetric by construction rather than by test.
    """

    __slots__ = ("_dim", "_upper", "_full")

    def __init__(self, data, *, rtol: float = 1e-8):
        a = as_array(data, square=True, what="SymMatrix")
        scale = 1.0 + float(np.abs(a).max())
        if float(np.abs(a - a.T).max()) > rtol * scale:
            raise ValueError("SymMatrix input is not symmetric")
        self._init_from_full(symmetrize(a))

    def _init_from_full(self, a: np.ndarray) -> None:
        n = a.shape[0]
        self._dim = n
        self._upper = a[np.triu_indices(n)].copy()
        self._upper.flags.writeable = False
        full = np.triu(a) + np.triu(a, 1).T
        full.flags.writeable = False
        self._full = full

    @classmethod
    def from_upper(cls, dim: int, entries) -> "SymMatrix":
        """Build from the flat upper triangle (row-major, dim*(dim+1)/2)."""
        e = np.asarray(entries, dtype=float)
        if e.size != dim * (dim + 1) // 2:
            raise DimensionError(
                f"expected {dim * (dim + 1) // 2} entries, got {e.size}")
        full = np.zeros((dim, dim))
        full[np.triu_indices(dim)] = e
        obj = cls.__new__(cls)
        obj._init_from_full(full + np.triu(full, 1).T)
        _validate(obj._full, "SymMatrix")
        return obj

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def entries(self) -> np.ndarray:
        """Flat upper-triangle copy."""
        return self._upper.copy()

    @property
    def array(self) -> np.ndarray:
        return self._full

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._full, dtype=dtype)

    def __repr__(self):
        return f"SymMatrix({self._full.tolist()!r})"


def spectral_radius(m) -> float:
    """Largest eigenvalue modulus of a square matrix.

    Eigenvalues come from Hessenberg reduction followed by shifted QR
    iteration (LAPACK ``dgeev``/``dhseqr``, sweep cap 30 per eigenvalue).
    """
    a = as_array(m, square=True)
    try:
        eigs = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"QR iteration did not converge: {exc}") from exc
    return float(np.max(np.abs(eigs)))


def min_eig_sym(m) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(as_sym_array(m))[0])


def default_pd_margin(m) -> float:
    """Default strictness margin for definiteness tests: 1e-9 * (1 + ||M||)."""
    a = as_sym_array(m)
    return 1e-9 * (1.0 + float(np.linalg.norm(a)))


def is_pd(m, margin: float | None = None) -> bool:
    """True iff M - margin*I admits a Cholesky factorization.

    ``margin=None`` uses :func:`default_pd_margin`; pass 0.0 for a plain
    positive-definiteness test.
    """
    a = as_sym_array(m)
    if margin is None:
        margin = default_pd_margin(a)
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    shifted = a - margin * np.eye(a.shape[0])
    try:
        np.linalg.cholesky(shifted)
    except np.linalg.LinAlgError:
        return False
    return True


def solve_linear(m, rhs) -> np.ndarray:
    """Solve M @ W = RHS by LU with partial pivoting.

    Raises :class:`SingularityError` when the smallest pivot falls below
    ``SINGULARITY_RTOL * ||M||_F``.
    """
    a = as_array(m, square=True)
    b = np.array(rhs, dtype=float)
    if not np.isfinite(b).all():
        raise ValueError("right-hand side contains NaN or Inf entries")
    rhs_rows = b.shape[0] if b.ndim >= 1 else 1
    if rhs_rows != a.shape[0]:
        raise DimensionError(
            f"row mismatch: matrix is {a.shape}, rhs has {rhs_rows} rows")
    lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= SINGULARITY_RTOL * float(np.linalg.norm(a)):
        raise SingularityError(
            f"matrix numerically singular (min pivot {pivots.min():.3e})")
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
