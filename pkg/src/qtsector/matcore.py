"""Dense complex matrix primitives shared by all other modules.

Everything here operates on plain ``numpy`` complex arrays.  Spectral
cutoffs use absolute tolerances (operators are O(1) and dimensions small),
and eigenvector phases are fixed so decompositions are reproducible.
"""

import numpy as np

DEFAULT_TOL_SUPP = 1e-9


class DimensionError(ValueError):
    """Input matrix has incompatible or non-square shape."""


class NotPSDError(ValueError):
    """Matrix expected to be positive semidefinite has a negative eigenvalue
    below the allowed tolerance."""


def _check_square(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m.real)) or not np.all(np.isfinite(m.imag)):
        raise ValueError("matrix entries must be finite")
    return m


def hermitize(m: np.ndarray) -> np.ndarray:
    """Return (M + M†)/2."""
    m = _check_square(m)
    return (m + m.conj().T) / 2


def eig_hermitian(h: np.ndarray):
    """Eigendecomposition of a Hermitian matrix with a fixed convention.

    Returns ``(w, v)`` with eigenvalues ``w`` sorted descending and the
    columns of ``v`` orthonormal eigenvectors.  The first component of each
    eigenvector with modulus above 1e-12 is rotated to be real positive, so
    repeated runs give identical output.
    """
    h = _check_square(h)
    w, v = np.linalg.eigh(h)
    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = v[:, order]
    for j in range(v.shape[1]):
        col = v[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size:
            phase = col[nz[0]] / abs(col[nz[0]])
            v[:, j] = col / phase
    return w, v


def support_projector(h: np.ndarray, tol_supp: float = DEFAULT_TOL_SUPP) -> np.ndarray:
    """Orthogonal projector onto the span of eigenvectors with eigenvalue > tol."""
    w, v = eig_hermitian(h)
    if w[-1] < -tol_supp:
        raise NotPSDError(f"matrix has eigenvalue {w[-1]:.3e} < -{tol_supp:.1e}")
    cols = v[:, w > tol_supp]
    return cols @ cols.conj().T


def support_basis(h: np.ndarray, tol_supp: float = DEFAULT_TOL_SUPP) -> np.ndarray:
    """Orthonormal basis (columns) of the support of a PSD matrix."""
    w, v = eig_hermitian(h)
    if w[-1] < -tol_supp:
        raise NotPSDError(f"matrix has eigenvalue {w[-1]:.3e} < -{tol_supp:.1e}")
    return v[:, w > tol_supp]


def psd_power(h: np.ndarray, p: float, tol_supp: float = DEFAULT_TOL_SUPP) -> np.ndarray:
    """Functional calculus λ -> λ**p on the support of a PSD matrix.

    Eigenvalues below ``tol_supp`` are mapped to 0 (Penrose convention for
    negative powers); eigenvalues in [-tol_supp, 0) are clipped to 0 first.
    """
    w, v = eig_hermitian(h)
    if w[-1] < -tol_supp:
        raise NotPSDError(f"matrix has eigenvalue {w[-1]:.3e} < -{tol_supp:.1e}")
    f = np.zeros_like(w)
    mask = w > tol_supp
    f[mask] = w[mask] ** p
    return (v * f) @ v.conj().T


def trace_norm(m: np.ndarray) -> float:
    """Sum of singular values."""
    m = _check_square(m)
    return float(np.linalg.svd(m, compute_uv=False).sum())


def clip_to_state(rho: np.ndarray, tol_supp: float = DEFAULT_TOL_SUPP) -> np.ndarray:
    """Hermitize, clip small negative eigenvalues and renormalize to trace 1."""
    w, v = eig_hermitian(hermitize(rho))
    w = np.clip(w, 0.0, None)
    s = w.sum()
    if s <= 0:
        raise NotPSDError("state collapsed to zero after clipping")
    return (v * (w / s)) @ v.conj().T
