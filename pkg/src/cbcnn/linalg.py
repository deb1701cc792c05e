"""Symmetric eigendecomposition by cyclic Jacobi rotations.

Hand-rolled rather than delegated so the whole pipeline stays bit-stable
under one convention: eigenvalues descending, eigenvectors column-wise
orthonormal, and each eigenvector's largest-magnitude component positive
(first such component on ties).  Covariance matrices here are at most a
few hundred square, well inside Jacobi's comfort zone.
"""

import numpy as np

from .errors import NotSquareError, NotSymmetricError, NonFiniteError
from .validation import check_matrix

_SYMMETRY_RTOL = 1e-10
_OFFDIAG_RTOL = 1e-12
_MAX_SWEEPS = 100


def _offdiag_norm(a):
    return np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))


def fix_eigvec_signs(vectors):
    """Flip columns so the largest-magnitude entry (first on ties) is positive."""
    v = np.array(vectors, dtype=np.float64)
    for j in range(v.shape[1]):
        col = v[:, j]
        pivot = np.argmax(np.abs(col) == np.abs(col).max())
        if col[pivot] < 0:
            v[:, j] = -col
    return v


def sym_eig(m):
    """Eigen-decompose a symmetric matrix.

    Returns (eigenvalues, eigenvectors): eigenvalues sorted descending,
    eigenvectors as matching columns.  Convergence: off-diagonal Frobenius
    norm <= 1e-12 * ||m||_F, at most 100 sweeps.
    """
    a = check_matrix(m, "m")
    n, cols = a.shape
    if n != cols:
        raise NotSquareError(f"matrix is {n}x{cols}")
    norm = np.sqrt(np.sum(a * a))
    asym = np.abs(a - a.T).max()
    if norm > 0 and asym > _SYMMETRY_RTOL * np.abs(a).max():
        raise NotSymmetricError(f"asymmetry {asym:g} exceeds tolerance")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("matrix contains NaN or Inf")

    a = (a + a.T) / 2.0
    v = np.eye(n)
    for _ in range(_MAX_SWEEPS):
        if _offdiag_norm(a) <= _OFFDIAG_RTOL * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                with np.errstate(over="ignore"):
                    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if not np.isfinite(theta):
                    # apq is negligible against the diagonal gap; rotation
                    # angle underflows, leave the element for the threshold
                    continue
                t = np.copysign(1.0, theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # two-sided rotation in the (p, q) plane
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq

    eigenvalues = np.diag(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    return eigenvalues[order], fix_eigvec_signs(v[:, order])
