"""Dense complex matrix helpers used by every estimator.

Quantum dimensions in this package stay small (a few hundred at most for
large-spin runs), so everything is dense numpy. Matrices are plain complex
ndarrays; the helpers here add the checks and constructors the estimators
need on top of the usual numpy algebra.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, ModelError

EXPM_MAX_DIM = 64


def as_complex_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return a square, finite complex matrix."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {m.shape}")
    if m.shape[0] < 1:
        raise DimensionMismatchError(f"{name} must have dimension >= 1")
    if not np.all(np.isfinite(m.view(float))):
        raise ModelError(f"{name} contains non-finite entries")
    return m


def adjoint(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def herm_defect(a: np.ndarray) -> float:
    """Max entrywise deviation from Hermiticity, max |A - A^dag|."""
    return float(np.max(np.abs(a - adjoint(a))))


def is_hermitian(a: np.ndarray, tol: float = 1e-10) -> bool:
    return herm_defect(a) <= tol


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Project onto the Hermitian part, (A + A^dag)/2."""
    return 0.5 * (a + adjoint(a))


def trace(a: np.ndarray) -> complex:
    return complex(np.trace(a))


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(a, b)


def expm_small(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring, restricted to dim <= 64.

    Larger matrices are out of contract here; propagation at big dimension
    goes through the explicit time steppers instead.
    """
    m = as_complex_matrix(a, "expm operand")
    if m.shape[0] > EXPM_MAX_DIM:
        raise DimensionMismatchError(
            f"expm_small supports dim <= {EXPM_MAX_DIM}, got {m.shape[0]}"
        )
    return scipy.linalg.expm(m)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


# Fixed 2x2 operators.
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)


def spin_operators(s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spin matrices (Sx, Sy, Sz) for total spin s, hbar = 1.

    Basis ordering is ascending magnetic number m = -s..s, so Sz is
    diag(-s, ..., s).
    """
    two_s = round(2 * s)
    if two_s < 1 or abs(2 * s - two_s) > 1e-12:
        raise ModelError(f"total spin must be a positive half-integer, got {s}")
    dim = two_s + 1
    m = -s + np.arange(dim)
    sz = np.diag(m).astype(complex)
    # raising operator: <m+1|S+|m> = sqrt(s(s+1) - m(m+1))
    raise_amp = np.sqrt(s * (s + 1) - m[:-1] * (m[:-1] + 1))
    sp = np.zeros((dim, dim), dtype=complex)
    sp[np.arange(1, dim), np.arange(dim - 1)] = raise_amp
    sm = sp.conj().T
    sx = 0.5 * (sp + sm)
    sy = (sp - sm) / 2j
    return sx, sy, sz


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT; columns are the momentum eigenstates |p>, p = 0..n-1."""
    q = np.arange(n)
    return np.exp(2j * np.pi * np.outer(q, q) / n) / np.sqrt(n)


def require_psd(a: np.ndarray, name: str = "matrix", tol: float = 1e-10) -> np.ndarray:
    m = as_complex_matrix(a, name)
    if herm_defect(m) > tol * max(1.0, float(np.max(np.abs(m)))):
        raise ModelError(f"{name} must be Hermitian")
    w = np.linalg.eigvalsh(symmetrize(m))
    if w.min() < -tol * max(1.0, w.max(), 1.0):
        raise ModelError(f"{name} must be positive semidefinite, min eig {w.min():.3e}")
    return m
