"""Hermitian linear-algebra helpers used throughout the package.

All matrices are plain ``numpy`` arrays.  Hermitian input is checked
against an absolute tolerance before any spectral routine touches it, so
numerical noise never silently turns into a complex eigenvalue.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

HERMITIAN_TOL = 1e-9
UNITARY_TOL = 1e-10
BRANCH_TOL = 1e-12


class NonHermitian(ValueError):
    """Raised when a matrix is not Hermitian within tolerance."""


class NotUnitary(ValueError):
    """Raised when a matrix is not unitary within tolerance."""


class BranchAmbiguity(ValueError):
    """Raised when the principal logarithm is ill-defined (eigenphase at -pi)."""


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues and matching orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def hermitian_residual(m: np.ndarray) -> float:
    m = np.asarray(m)
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def check_hermitian(m, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``m`` symmetrised, or raise :class:`NonHermitian`."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonHermitian(f"expected a square matrix, got shape {m.shape}")
    res = hermitian_residual(m)
    if res > tol:
        raise NonHermitian(f"matrix is not Hermitian (residual {res:.3e} > {tol:.1e})")
    return 0.5 * (m + m.conj().T)


def eigh(m, tol: float = HERMITIAN_TOL) -> Spectrum:
    """Deterministic Hermitian eigendecomposition.

    Eigenvalues are ascending.  Each eigenvector is rescaled by a phase so
    that its largest-magnitude entry is real and positive, which makes the
    output reproducible across calls.
    """
    h = check_hermitian(m, tol)
    w, v = np.linalg.eigh(h)
    idx = np.argmax(np.abs(v), axis=0)
    pivots = v[idx, np.arange(v.shape[1])]
    phases = np.where(np.abs(pivots) > 0, pivots / np.abs(pivots), 1.0)
    return Spectrum(w, v / phases)


def eigvalsh(m) -> np.ndarray:
    m = np.asarray(m)
    return np.linalg.eigvalsh(0.5 * (m + m.conj().swapaxes(-1, -2)))


def min_eigenvalue(m) -> float:
    return float(eigvalsh(m)[..., 0].min()) if np.ndim(m) > 2 else float(eigvalsh(m)[0])


def max_eigenvalue(m) -> float:
    return float(eigvalsh(m)[..., -1].max()) if np.ndim(m) > 2 else float(eigvalsh(m)[-1])


def is_psd(m, tol: float = 1e-10) -> bool:
    """True when the smallest eigenvalue is >= -tol (relative to the norm)."""
    w = eigvalsh(m)
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    return bool(w.size == 0 or w.min() >= -tol * scale)


def psd_sqrt(m) -> np.ndarray:
    """Square root of a PSD matrix (tiny negative eigenvalues are clipped)."""
    w, v = np.linalg.eigh(0.5 * (np.asarray(m) + np.asarray(m).conj().T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def inv_sqrt(m) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (np.asarray(m) + np.asarray(m).conj().T))
    if w.min() <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return (v / np.sqrt(w)) @ v.conj().T


def anticommutator(a, b) -> np.ndarray:
    return a @ b + b @ a


def unitary_residual(u) -> float:
    u = np.asarray(u)
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def check_unitary(u, tol: float = UNITARY_TOL) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise NotUnitary(f"expected a square matrix, got shape {u.shape}")
    res = unitary_residual(u)
    if res > tol:
        raise NotUnitary(f"matrix is not unitary (residual {res:.3e} > {tol:.1e})")
    return u


def principal_log(u, tol: float = UNITARY_TOL) -> np.ndarray:
    """Hermitian ``H`` with ``exp(iH) = u`` and spectrum in (-pi, pi].

    Uses a complex Schur decomposition, which is diagonal for a normal
    matrix, so the eigenvectors stay orthonormal even for degenerate
    eigenphases.
    """
    u = check_unitary(u, tol)
    t, z = scipy.linalg.schur(u, output="complex")
    lam = np.diag(t)
    phases = np.angle(lam)
    if np.any(phases < -np.pi + BRANCH_TOL):
        raise BranchAmbiguity("an eigenphase lies on the branch cut at -pi")
    h = (z * phases) @ z.conj().T
    return 0.5 * (h + h.conj().T)


def expi(h, t: float = 1.0) -> np.ndarray:
    """``exp(i t H)`` for Hermitian ``H``."""
    w, v = np.linalg.eigh(check_hermitian(h))
    return (v * np.exp(1j * t * w)) @ v.conj().T


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def haar_unitary(d: int, seed=None) -> np.ndarray:
    """Haar-distributed ``d x d`` unitary (QR of a Ginibre matrix, phase-fixed)."""
    rng = _as_rng(seed)
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def haar_isometry(d_in: int, d_out: int, seed=None) -> np.ndarray:
    """Haar-random isometry ``V`` (``d_out x d_in``, ``V^H V = I``)."""
    return haar_unitary(d_out, seed)[:, :d_in]
