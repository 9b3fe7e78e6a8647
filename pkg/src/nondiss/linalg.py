"""Dense real matrix kernels: antisymmetrization, eigenvalues, Kronecker
machinery, matrix exponential, norms.

All functions are pure and operate on plain numpy arrays.  ``vec`` uses
column-major (Fortran) stacking so that vec(A @ X @ B) = kron(B.T, A) @ vec(X).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "TOL",
    "Tolerances",
    "antisymmetrize",
    "eig_general",
    "expm",
    "fro_norm",
    "kron",
    "spectral_norm",
    "unvec",
    "vec",
]


@dataclass(frozen=True)
class Tolerances:
    """Numeric tolerances shared by the library and its test suite."""

    antisym_residual: float = 1e-14
    eig_real_part: float = 1e-8
    expm_relative: float = 1e-8
    power_iteration: float = 1e-8
    power_iteration_cap: int = 10_000
    fd_jacobian_relative: float = 1e-5
    grad_check_relative: float = 1e-4


TOL = Tolerances()


def _as_square(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def antisymmetrize(w: np.ndarray) -> np.ndarray:
    """Return W - W^T (skew-symmetric part scaled by 2 on the off-diagonal)."""
    w = _as_square(w)
    return w - w.T


def eig_general(a: np.ndarray) -> np.ndarray:
    """All eigenvalues (with multiplicity) of a real square matrix.

    LAPACK's Hessenberg reduction + shifted QR under the hood.  Raises
    ``FloatingPointError`` on non-convergence or non-finite input.
    """
    a = _as_square(a)
    if not np.all(np.isfinite(a)):
        raise FloatingPointError("eig_general: non-finite input")
    try:
        return np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:  # QR iteration cap exceeded
        raise FloatingPointError(f"eig_general: {exc}") from exc


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization (Fortran order)."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(v)
    if v.size != rows * cols:
        raise ValueError(f"unvec: {v.size} values cannot fill {rows}x{cols}")
    return v.reshape(rows, cols, order="F")


def expm(a: np.ndarray, t: float = 1.0) -> np.ndarray:
    """e^{tA} via scaling-and-squaring Pade approximation."""
    a = _as_square(a)
    return scipy.linalg.expm(t * a)


def fro_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float)))


def spectral_norm(a: np.ndarray, tol: float | None = None, cap: int | None = None) -> float:
    """Largest singular value by power iteration on A^T A."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"spectral_norm: expected a matrix, got shape {a.shape}")
    if a.size == 0 or not np.any(a):
        return 0.0
    tol = TOL.power_iteration if tol is None else tol
    cap = TOL.power_iteration_cap if cap is None else cap
    rng = np.random.default_rng(0)
    v = rng.standard_normal(a.shape[1])
    v /= np.linalg.norm(v)
    s_prev = 0.0
    for _ in range(cap):
        u = a @ v
        v = a.T @ u
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return 0.0
        v /= nv
        s = float(np.linalg.norm(a @ v))
        if abs(s - s_prev) <= tol * max(1.0, s):
            return s
        s_prev = s
    raise FloatingPointError("spectral_norm: power iteration did not converge")
