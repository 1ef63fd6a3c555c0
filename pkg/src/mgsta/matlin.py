"""Small dense matrix kernel: symmetric part, Gramian, extreme eigenvalues.

Every function accepts a single ``(n, n)`` matrix or a stack ``(..., n, n)``
and operates on the trailing two axes, so the bound estimator can push a
whole sample batch through in one call.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError, SingularMatrixError

SYMMETRY_RTOL = 1e-12


def _square(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise DimensionError(f"expected square matrix, got shape {M.shape}")
    return M


def transpose(M: np.ndarray) -> np.ndarray:
    return np.swapaxes(M, -1, -2)


def sym(M) -> np.ndarray:
    """Symmetric component ``(M + M^T) / 2``.

    Symmetry of the result is exact: entry (i, j) and (j, i) are computed
    from the same two floating-point addends.
    """
    M = _square(M)
    return 0.5 * (M + transpose(M))


def gram(M) -> np.ndarray:
    """Gramian ``M^T M``, symmetrised so that it is exactly symmetric."""
    M = _square(M)
    return sym(transpose(M) @ M)


def eig_sym_extremes(S, rtol: float = SYMMETRY_RTOL) -> tuple[np.ndarray, np.ndarray]:
    """Smallest and largest eigenvalue of a symmetric matrix (or stack).

    Raises:
        ContractError: if ``S`` is not symmetric to ``rtol`` relative to its
            largest entry.
    """
    S = _square(S)
    scale = np.max(np.abs(S), axis=(-1, -2), keepdims=True)
    asym = np.max(np.abs(S - transpose(S)), axis=(-1, -2), keepdims=True)
    if np.any(asym > rtol * np.maximum(scale, np.finfo(float).tiny)):
        raise ContractError("eig_sym_extremes requires a symmetric matrix")
    w = np.linalg.eigvalsh(S)
    return w[..., 0], w[..., -1]


def lambda_min(S) -> np.ndarray:
    return eig_sym_extremes(S)[0]


def lambda_max(S) -> np.ndarray:
    return eig_sym_extremes(S)[1]


def spectral_norm(M) -> np.ndarray:
    """``||M||_2`` computed as ``sqrt(lambda_max(Gram{M}))``."""
    return np.sqrt(np.maximum(lambda_max(gram(M)), 0.0))


def invert(M, rtol: float = 1e-12) -> np.ndarray:
    """Inverse of a square matrix (or stack) with a relative singularity guard.

    The matrix is rejected when ``|det M| <= rtol * ||M||_F ** n``; a
    relative test keeps the guard meaningful for the robot matrices whose
    entries span many orders of magnitude.
    """
    M = _square(M)
    n = M.shape[-1]
    det = np.linalg.det(M)
    scale = np.linalg.norm(M, axis=(-1, -2)) ** n
    bad = ~(np.abs(det) > rtol * scale)
    if np.any(bad):
        raise SingularMatrixError(
            f"matrix is numerically singular (det={np.min(np.abs(det)):.3e})",
            det=det,
        )
    return np.linalg.inv(M)
