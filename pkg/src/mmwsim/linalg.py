"""Dense complex linear-algebra kernels shared by every other module.

Thin, contract-checked wrappers around LAPACK via numpy. All routines are
pure functions of their inputs and safe to call from parallel workers.
"""

import numpy as np

__all__ = [
    "svd",
    "cholesky_upper",
    "pinv",
    "nullspace_basis",
    "kron",
    "khatri_rao",
]


def _as_matrix(a, name="A"):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return a


def svd(a):
    """Thin SVD of a complex matrix.

    Returns (u, s, v) with a = u @ diag(s) @ v.conj().T, singular values
    sorted descending and u, v having orthonormal columns. LAPACK
    non-convergence surfaces as numpy.linalg.LinAlgError.
    """
    a = _as_matrix(a)
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    return u, s, vh.conj().T


def cholesky_upper(c):
    """Upper-triangular Cholesky factor d with c = d^H d.

    Raises numpy.linalg.LinAlgError when c is not positive definite.
    """
    c = _as_matrix(c, "C")
    lower = np.linalg.cholesky(c)
    return lower.conj().T


def pinv(a, tol=None):
    """Moore-Penrose pseudo-inverse via SVD.

    Singular values <= tol are treated as zero. The default tolerance is
    max(rows, cols) * machine-eps * s_max.
    """
    a = _as_matrix(a)
    u, s, v = svd(a)
    if tol is None:
        tol = max(a.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    if tol < 0:
        raise ValueError("tol must be >= 0")
    keep = s > tol
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (v * inv_s) @ u.conj().T


def nullspace_basis(a, tol=1e-10):
    """Orthonormal basis of the (numerical) nullspace of a Hermitian PSD matrix.

    Rank counts eigenvalues > tol * lambda_max; the returned columns u
    satisfy a @ u ~ 0 and u^H u = I. An all-zero input yields the identity
    (the nullspace is everything).
    """
    a = _as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError("nullspace_basis expects a square (Hermitian PSD) matrix")
    w, vecs = np.linalg.eigh(a)  # ascending eigenvalues
    lam_max = w[-1].real
    if lam_max <= 0.0:
        return np.eye(a.shape[0], dtype=complex)
    rank = int(np.count_nonzero(w > tol * lam_max))
    dim = a.shape[0] - rank
    return vecs[:, :dim].astype(complex)


def kron(a, b):
    """Kronecker product with finite-entry validation."""
    a = _as_matrix(a)
    b = _as_matrix(b, "B")
    return np.kron(a, b)


def khatri_rao(a, b):
    """Columnwise Khatri-Rao product: column j is kron(a[:, j], b[:, j])."""
    a = _as_matrix(a)
    b = _as_matrix(b, "B")
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"khatri_rao needs equal column counts, got {a.shape[1]} and {b.shape[1]}"
        )
    # (m, 1, c) * (1, n, c) -> (m*n, c), matching kron ordering per column
    out = a[:, None, :] * b[None, :, :]
    return out.reshape(a.shape[0] * b.shape[0], a.shape[1])
