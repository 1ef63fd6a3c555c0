"""Quadratic Lyapunov certificate for the closed loop and its numerical checks.

In the coordinates ``zeta = (phi1(x), v + b^-1 (I + DeltaG)^-1 f2)`` the
candidate is ``V = 1/2 zeta^T P zeta`` with ``P = [[p1 I, -I], [-I, p2 I]]``
and its derivative along trajectories is ``-c(x) zeta^T Q zeta``.  ``Q`` is
assembled from three blocks evaluated pointwise; positive definiteness is
tested through the Schur complement of ``Q22``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import matlin
from .bounds import UncertainPlant
from .errors import CertificateError, DimensionError
from .sta import ORIGIN_GUARD, StaParams, c_scalar, phi1, script_j


@dataclass(frozen=True)
class LyapCert:
    """Weights of ``V``; ``P`` is positive definite iff ``p1 p2 > 1``."""

    p1: float
    p2: float

    def __post_init__(self):
        if not (self.p1 > 0 and self.p2 > 0):
            raise CertificateError("certificate needs p1 > 0 and p2 > 0")
        if not self.p1 * self.p2 > 1:
            raise CertificateError(
                f"certificate requires p1 p2 > 1, got p1 p2 = {self.p1 * self.p2:.6g}")

    @classmethod
    def from_dict(cls, d: dict) -> "LyapCert":
        return cls(float(d["p1"]), float(d["p2"]))


def _batch(t, z, plant: UncertainPlant):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    if z.shape[-1] != plant.state_dim:
        raise DimensionError(f"state has {z.shape[-1]} entries, plant expects {plant.state_dim}")
    t = np.broadcast_to(t, z.shape[:1]).copy()
    return t, z, single


def _mv(A, x):
    return (A @ x[..., None])[..., 0]


def zeta_coords(t, z, v, plant: UncertainPlant, sp: StaParams) -> np.ndarray:
    """``(phi1(x), v + b^-1 (I + DeltaG)^-1 f2)`` stacked into ``2n`` entries.

    Raises:
        SingularMatrixError: if ``I + DeltaG`` is singular at a sample.
    """
    t, zb, single = _batch(t, z, plant)
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if v.shape[-1] != plant.n:
        raise DimensionError(f"v has {v.shape[-1]} entries, expected {plant.n}")
    x = plant.x_of(zb)
    IG = np.eye(plant.n) + plant.DeltaG(t, zb)
    f2bar = _mv(matlin.invert(IG), plant.f2(t, zb))
    out = np.concatenate([phi1(x, sp), v + f2bar / sp.b], axis=-1)
    return out[0] if single else out


def lyap_value(zeta, cert: LyapCert) -> np.ndarray:
    """``1/2 (p1 |zeta1|^2 - 2 zeta1 . zeta2 + p2 |zeta2|^2)``."""
    zeta = np.asarray(zeta, dtype=float)
    n = zeta.shape[-1] // 2
    z1, z2 = zeta[..., :n], zeta[..., n:]
    return 0.5 * (cert.p1 * np.sum(z1 * z1, -1) - 2.0 * np.sum(z1 * z2, -1)
                  + cert.p2 * np.sum(z2 * z2, -1))


@dataclass
class QBlocks:
    """``Q11``, ``Q21``, ``Q22`` (each ``(..., n, n)``) and ``c`` at the point."""

    Q11: np.ndarray
    Q21: np.ndarray
    Q22: np.ndarray
    c: np.ndarray


def build_q_blocks(t, z, plant: UncertainPlant, sp: StaParams, cert: LyapCert) -> QBlocks:
    """Evaluate the blocks of ``Q`` with ``A = Delta3 / c``.

    Raises:
        SingularityError: at ``x = 0``.
        SingularMatrixError: if ``G`` is singular.
    """
    t, zb, single = _batch(t, z, plant)
    n, b, p1, p2 = plant.n, sp.b, cert.p1, cert.p2
    I = np.eye(n)
    x = plant.x_of(zb)
    c = c_scalar(x, sp)
    J = script_j(x, sp)
    dG = plant.DeltaG(t, zb)
    G = (I + dG) @ plant.G0(t, zb)
    K1 = sp.k1 * I - matlin.invert(G) @ plant.Delta1(t, zb)
    K2 = sp.k2 * I - plant.Delta2(t, zb)
    A = plant.Delta3(t, zb) / c[:, None, None]
    GK1 = G @ K1
    W = K2 + A @ GK1
    IG = I + dG
    Q11 = matlin.sym(p1 * GK1 - W)
    Q21 = -J @ GK1 + p2 * W + b * matlin.transpose(IG) @ (matlin.transpose(A) - p1 * I)
    Q22 = b * matlin.sym(J @ IG - p2 * A @ IG)
    if single:
        return QBlocks(Q11[0], Q21[0], Q22[0], c[0])
    return QBlocks(Q11, Q21, Q22, c)


def assemble_q(q: QBlocks) -> np.ndarray:
    """The symmetric ``2n x 2n`` matrix ``[[Q11, Q21^T], [Q21, Q22]]``."""
    top = np.concatenate([q.Q11, matlin.transpose(q.Q21)], axis=-1)
    bot = np.concatenate([q.Q21, q.Q22], axis=-1)
    return matlin.sym(np.concatenate([top, bot], axis=-2))


def schur_min_eig(q: QBlocks) -> tuple[np.ndarray, np.ndarray]:
    """``(lambda_min(Q22), lambda_min(Q11 - Q21^T Q22^-1 Q21))``.

    The Schur value is ``-inf`` wherever ``Q22`` is not positive definite.
    """
    l22 = matlin.lambda_min(q.Q22)
    pd22 = l22 > 0
    Q22 = np.where(pd22[..., None, None], q.Q22, np.eye(q.Q22.shape[-1]))
    S = q.Q11 - matlin.transpose(q.Q21) @ np.linalg.solve(Q22, q.Q21)
    ls = matlin.lambda_min(matlin.sym(S))
    return l22, np.where(pd22, ls, -np.inf)


def default_margin(q: QBlocks) -> np.ndarray:
    return 1e-9 * matlin.spectral_norm(assemble_q(q))


def q_positive_definite(q: QBlocks, margin=None) -> bool:
    """True iff ``Q22 > 0`` and the Schur complement exceeds ``margin``
    at every point contained in ``q`` (default margin ``1e-9 |Q|``)."""
    l22, ls = schur_min_eig(q)
    if not np.all(l22 > 0):
        return False
    m = default_margin(q) if margin is None else margin
    return bool(np.all(ls > m))


@dataclass
class MonitorReport:
    """Result of :func:`monitor_trajectory`.

    ``vdot_negative_fraction`` is over pre-convergence samples (1.0 when
    there are none); ``q_violation`` is the largest amount by which the
    Schur eigenvalue falls short of the margin (0 means PD everywhere);
    residuals are ``|v + b^-1 (I + DeltaG)^-1 f2|`` after convergence.
    """

    samples: int
    pre_convergence_samples: int
    t_conv: float | None
    vdot_negative_fraction: float
    vdot_max: float
    q_checked: int
    q_violation: float
    q_worst_time: float | None
    residual_max: float
    residual_mean_last: float
    residual_tol: float
    f2_max: float
    vdot_fraction_required: float = 0.99

    @property
    def checks(self) -> dict[str, bool]:
        return {
            "vdot_negative": self.vdot_negative_fraction >= self.vdot_fraction_required,
            "q_positive_definite": self.q_violation == 0.0,
            "residual": self.residual_mean_last <= self.residual_tol,
        }

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checks"] = self.checks
        d["passed"] = self.passed
        return d


def monitor_trajectory(trace, plant: UncertainPlant, sp: StaParams, cert: LyapCert,
                       eps: float = 1e-2, hold=None, last: float = 1.0,
                       chunk: int = 20_000) -> MonitorReport:
    """Check decrease of ``V``, definiteness of ``Q`` and the perturbation
    estimate along a simulated trace.

    ``trace`` needs ``t``, ``z`` (plant evaluation states), ``v`` and
    ``norm_s``.  The residual tolerance is ``10 dt max(1, max |f2|)`` applied
    to the mean over the final ``last`` seconds after convergence.
    """
    from .simulator import detect_convergence

    t = np.asarray(trace.t, dtype=float)
    z = np.asarray(trace.z, dtype=float)
    v = np.asarray(trace.v, dtype=float)
    N = t.shape[0]
    if z.shape != (N, plant.state_dim) or v.shape != (N, plant.n):
        raise DimensionError("trace dimensions do not match the plant")
    dt = float(t[1] - t[0]) if N > 1 else 1.0

    zeta = zeta_coords(t, z, v, plant, sp)
    V = lyap_value(zeta, cert)
    t_conv = detect_convergence(t, trace.norm_s, eps, hold)
    k_conv = N if t_conv is None else int(np.searchsorted(t, t_conv - 0.5 * dt))

    # central differences at interior pre-convergence samples
    interior = np.arange(1, min(k_conv, N - 1))
    vdot = (V[interior + 1] - V[interior - 1]) / (2.0 * dt)
    frac = float(np.mean(vdot < 0)) if interior.size else 1.0
    vdot_max = float(vdot.max()) if interior.size else 0.0

    x = plant.x_of(z)
    idx = np.flatnonzero(np.linalg.norm(x, axis=-1) > ORIGIN_GUARD)
    worst, worst_t = 0.0, None
    for lo in range(0, idx.size, chunk):
        sel = idx[lo:lo + chunk]
        q = build_q_blocks(t[sel], z[sel], plant, sp, cert)
        l22, ls = schur_min_eig(q)
        short = np.maximum(default_margin(q) - np.where(l22 > 0, ls, -np.inf), 0.0)
        short = np.where(np.isinf(short), np.finfo(float).max, short)
        k = int(np.argmax(short))
        if short[k] > worst:
            worst, worst_t = float(short[k]), float(t[sel][k])

    f2_max = float(np.max(np.linalg.norm(plant.f2(t, z), axis=-1))) if N else 0.0
    res = np.linalg.norm(zeta[:, plant.n:], axis=-1)
    post = res[k_conv:]
    tail = res[(t >= t[-1] - last) & (np.arange(N) >= k_conv)] if N else res
    return MonitorReport(
        samples=N,
        pre_convergence_samples=int(min(k_conv, N)),
        t_conv=t_conv,
        vdot_negative_fraction=frac,
        vdot_max=vdot_max,
        q_checked=int(idx.size),
        q_violation=worst,
        q_worst_time=worst_t,
        residual_max=float(post.max()) if post.size else float("inf"),
        residual_mean_last=float(tail.mean()) if tail.size else float("inf"),
        residual_tol=10.0 * dt * max(1.0, f2_max),
        f2_max=f2_max,
    )
