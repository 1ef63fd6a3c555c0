"""Generalised multivariable super-twisting nonlinearities and control law.

The controller is

    u     = -k1 * phi1(x) + b * G0^{-1} v
    v_dot = -k2 * phi2(x)

with ``phi1(x) = (alpha |x|^-p + beta) x`` and ``phi2 = J phi1 = c phi1``.

All functions broadcast over leading axes: ``x`` may be ``(n,)`` or
``(..., n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import matlin
from .errors import ContractError, SingularityError

# Below this norm x is treated as the origin; |x|^-p would otherwise overflow.
ORIGIN_GUARD = 1e-150


@dataclass(frozen=True)
class StaParams:
    """Controller constants.

    ``alpha``, ``beta``, ``b`` and ``p`` are free design choices; ``k1`` and
    ``k2`` are the gains produced by the design procedure (zero gains are
    accepted so that open-loop runs can be expressed).
    """

    alpha: float = 1.0
    beta: float = 1.0
    b: float = 1.0
    p: float = 0.5
    k1: float = 0.0
    k2: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "b"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0 < self.p <= 0.5:
            raise ContractError(f"p must lie in (0, 1/2], got {self.p}")
        if self.k1 < 0 or self.k2 < 0:
            raise ContractError("gains k1, k2 must be non-negative")
        for name in ("alpha", "beta", "b", "p", "k1", "k2"):
            if not np.isfinite(getattr(self, name)):
                raise ContractError(f"{name} must be finite")

    def with_gains(self, k1: float, k2: float) -> "StaParams":
        return replace(self, k1=float(k1), k2=float(k2))


def _norm(x: np.ndarray) -> np.ndarray:
    return np.linalg.norm(x, axis=-1)


def _nonzero_norm(x: np.ndarray, what: str) -> np.ndarray:
    r = _norm(x)
    if np.any(r < ORIGIN_GUARD):
        raise SingularityError(f"{what} is undefined at x = 0")
    return r


def phi1(x, sp: StaParams) -> np.ndarray:
    """``(alpha |x|^-p + beta) x``, extended continuously by 0 at the origin."""
    x = np.asarray(x, dtype=float)
    r = _norm(x)
    at_origin = r < ORIGIN_GUARD
    safe = np.where(at_origin, 1.0, r)
    gain = sp.alpha * safe ** (-sp.p) + sp.beta
    return np.where(at_origin[..., None], 0.0, gain[..., None] * x)


def c_scalar(x, sp: StaParams) -> np.ndarray:
    """``alpha (1 - p) |x|^-p + beta``; unbounded (and rejected) at x = 0."""
    x = np.asarray(x, dtype=float)
    r = _nonzero_norm(x, "c(x)")
    return sp.alpha * (1.0 - sp.p) * r ** (-sp.p) + sp.beta


def jacobian_phi1(x, sp: StaParams) -> np.ndarray:
    """Jacobian of phi1, ``(alpha r^-p + beta) I - alpha p r^-p x x^T / r^2``."""
    x = np.asarray(x, dtype=float)
    r = _nonzero_norm(x, "J(x)")
    n = x.shape[-1]
    rp = r ** (-sp.p)
    outer = x[..., :, None] * x[..., None, :]
    J = (sp.alpha * rp + sp.beta)[..., None, None] * np.eye(n) - (
        sp.alpha * sp.p * rp / r**2
    )[..., None, None] * outer
    return matlin.sym(J)


def phi2(x, sp: StaParams) -> np.ndarray:
    """``c(x) phi1(x)``; the selection 0 is taken at the origin."""
    x = np.asarray(x, dtype=float)
    r = _norm(x)
    at_origin = r < ORIGIN_GUARD
    safe = np.where(at_origin, 1.0, r)
    rp = safe ** (-sp.p)
    gain = (sp.alpha * (1.0 - sp.p) * rp + sp.beta) * (sp.alpha * rp + sp.beta)
    return np.where(at_origin[..., None], 0.0, gain[..., None] * x)


def script_j(x, sp: StaParams) -> np.ndarray:
    """Normalised Jacobian ``J(x) / c(x)``.

    Eigenvalue 1 along ``x`` and
    ``(alpha + beta r^p) / (alpha (1 - p) + beta r^p)`` on the orthogonal
    complement, so ``I <= J/c < I / (1 - p)``.
    """
    x = np.asarray(x, dtype=float)
    return jacobian_phi1(x, sp) / c_scalar(x, sp)[..., None, None]


def script_j_upper(r, sp: StaParams) -> np.ndarray:
    """The repeated eigenvalue of ``J/c`` at norm ``r``."""
    rp = np.asarray(r, dtype=float) ** sp.p
    return (sp.alpha + sp.beta * rp) / (sp.alpha * (1.0 - sp.p) + sp.beta * rp)


def control_and_derivative(x, v, G0, sp: StaParams) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the control and the integrator derivative.

    Args:
        x: controlled output (sliding variable), shape ``(n,)``.
        v: integrator state, shape ``(n,)``.
        G0: nominal input matrix at the current point, ``(n, n)``.

    Returns:
        ``(u, v_dot)``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    G0inv = matlin.invert(G0)
    u = -sp.k1 * phi1(x, sp) + sp.b * (G0inv @ v[..., None])[..., 0]
    v_dot = -sp.k2 * phi2(x, sp)
    return u, v_dot
