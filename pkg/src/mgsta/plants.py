"""Concrete uncertain plants: the omnidirectional robot and a 2-channel toy.

Robot model (task space, ``q = (x, y, theta)``)::

    q_ddot = M^-1 [ (ka re / ra) R(theta)^T u - C(q_dot) q_dot - f_r(q_dot) + w ]

with ``u = E nu`` the aggregated input.  For control, the sliding variable is
``s = Theta q_err + q_err_dot`` and the closed loop reads
``s_dot = f(t, s) + G u`` with ``G = (I + dM) M0``.

The robot's uncertainty decomposition is written in evaluation coordinates
``z = (q_err, s)`` (six entries) so that the sampling box can place ``s``
directly, including a shell around ``s = 0``.  For a constant-velocity
reference ``q = q_err + q_d(t)`` and ``q_dot = s - Theta q_err + qd_dot``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import matlin
from .bounds import UncertainPlant
from .errors import ContractError, DomainError
from .sta import StaParams, jacobian_phi1, phi1, phi2

_B = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
_E3 = np.array([0.0, 0.0, 1.0])


def _vec3(v, name) -> tuple[float, float, float]:
    a = np.broadcast_to(np.asarray(v, dtype=float), (3,))
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{name} must be finite")
    return tuple(float(x) for x in a)


@dataclass(frozen=True)
class RobotParams:
    """True physical parameters (Table 1 defaults) and nominal values.

    ``Mn`` is a scalar (meaning ``Mn * I``) or a 3x3 nested list.
    """

    m1: float = 2.8
    m2: float = 0.38
    J1: float = 0.0608
    J2: float = 3.24e-4
    J3: float = 4.69e-4
    Jm: float = 5.7e-7
    L: float = 0.11
    l1: float = 0.1524
    l2: float = 0.1505
    r: float = 0.042
    ka: float = 0.013
    ra: float = 1.9
    re: float = 58.0
    fv: tuple[float, float, float] = (1e-4, 1e-4, 1e-4)
    fd: tuple[float, float, float] = (1e-4, 1e-4, 1e-4)
    Mn: float | tuple = 7.7341
    kan: float = 0.013
    ran: float = 1.9
    ren: float = 57.0

    def __post_init__(self):
        object.__setattr__(self, "fv", _vec3(self.fv, "fv"))
        object.__setattr__(self, "fd", _vec3(self.fd, "fd"))
        for f in fields(self):
            if f.name in ("fv", "fd", "Mn"):
                continue
            if not getattr(self, f.name) > 0:
                raise ContractError(f"robot parameter {f.name} must be > 0")
        if min(self.fv + self.fd) <= 0:
            raise ContractError("friction coefficients must be > 0")
        Mn = self.nominal_inertia()
        if not np.all(np.linalg.eigvalsh(matlin.sym(Mn)) > 0):
            raise ContractError("nominal inertia Mn must be positive definite")
        if isinstance(self.Mn, list):
            object.__setattr__(self, "Mn", tuple(tuple(r) for r in self.Mn))

    @classmethod
    def from_dict(cls, d: dict) -> "RobotParams":
        return cls(**d)

    def nominal_inertia(self) -> np.ndarray:
        Mn = np.asarray(self.Mn, dtype=float)
        return Mn * np.eye(3) if Mn.ndim == 0 else Mn.reshape(3, 3)

    @property
    def wheel_inertia(self) -> float:
        return self.J2 + self.Jm * self.re**2

    @property
    def E(self) -> np.ndarray:
        L = self.L
        return np.array([[1, 1, 1, 1], [1, -1, 1, -1], [L, -L, -L, L]], dtype=float) / self.r

    @property
    def M(self) -> np.ndarray:
        M1 = self.m1 + 4 * self.m2
        M3 = 4 * self.m2 * (self.l1**2 + self.l2**2) + self.J1 + 4 * self.J3
        E = self.E
        return matlin.sym(np.diag([M1, M1, M3]) + self.wheel_inertia * (E @ E.T))

    @property
    def coriolis_gain(self) -> float:
        return 4.0 / self.r**2 * self.wheel_inertia

    @property
    def input_gain(self) -> float:
        return self.ka * self.re / self.ra

    @property
    def nominal_input_gain(self) -> float:
        return self.kan * self.ren / self.ran


def rotation(theta) -> np.ndarray:
    """Planar rotation ``R(theta)`` (batched over ``theta``)."""
    th = np.asarray(theta, dtype=float)
    c, s = np.cos(th), np.sin(th)
    R = np.zeros(th.shape + (3, 3))
    R[..., 0, 0] = c
    R[..., 0, 1] = s
    R[..., 1, 0] = -s
    R[..., 1, 1] = c
    R[..., 2, 2] = 1.0
    return R


def robot_matrices(q, q_dot, params: RobotParams) -> dict[str, np.ndarray]:
    """``M, R, E, C, f_v, f_d`` at a configuration."""
    q = np.asarray(q, dtype=float)
    q_dot = np.asarray(q_dot, dtype=float)
    C = params.coriolis_gain * np.tanh(q_dot[..., 2])[..., None, None] * _B
    return {
        "M": params.M,
        "R": rotation(q[..., 2]),
        "E": params.E,
        "C": C,
        "f_v": np.asarray(params.fv) * q_dot,
        "f_d": np.asarray(params.fd) * np.tanh(q_dot),
    }


def robot_accel(t, q, q_dot, u, w, params: RobotParams) -> np.ndarray:
    """Task-space acceleration with the true parameters."""
    m = robot_matrices(q, q_dot, params)
    RT = matlin.transpose(m["R"])
    rhs = (
        params.input_gain * (RT @ np.asarray(u, dtype=float)[..., None])[..., 0]
        - (m["C"] @ np.asarray(q_dot, dtype=float)[..., None])[..., 0]
        - m["f_v"]
        - m["f_d"]
        + np.asarray(w, dtype=float)
    )
    return np.linalg.solve(m["M"], rhs[..., None])[..., 0]


def armature_voltages(u, params: RobotParams) -> np.ndarray:
    """Wheel voltages ``nu = E^+ u`` (right pseudo-inverse), reporting only."""
    E = params.E
    Ep = E.T @ np.linalg.inv(E @ E.T)
    return (Ep @ np.asarray(u, dtype=float)[..., None])[..., 0]


@dataclass(frozen=True)
class Reference:
    """Constant-velocity reference ``q_d(t) = q0 + velocity * t``.

    ``Theta`` is the sliding-surface gain (scalar means ``Theta * I``).
    """

    q0: tuple[float, float, float] = (0.0, 0.0, np.pi / 4)
    velocity: tuple[float, float, float] = (0.5, 0.5, 0.0)
    Theta: float | tuple = 2.0

    def __post_init__(self):
        object.__setattr__(self, "q0", _vec3(self.q0, "q0"))
        object.__setattr__(self, "velocity", _vec3(self.velocity, "velocity"))
        if isinstance(self.Theta, list):
            object.__setattr__(self, "Theta", tuple(tuple(r) for r in self.Theta))
        Th = self.theta_matrix
        if not np.all(np.linalg.eigvalsh(matlin.sym(Th)) > 0):
            raise ContractError("Theta must be positive definite")

    @classmethod
    def from_dict(cls, d: dict) -> "Reference":
        return cls(**d)

    @property
    def theta_matrix(self) -> np.ndarray:
        Th = np.asarray(self.Theta, dtype=float)
        return Th * np.eye(3) if Th.ndim == 0 else Th.reshape(3, 3)

    def q_d(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.asarray(self.q0) + t[..., None] * np.asarray(self.velocity)

    def qd_dot(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(np.asarray(self.velocity), t.shape + (3,)).copy()

    def qd_ddot(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.zeros(t.shape + (3,))


def sliding_state(q, q_dot, ref: Reference, t) -> np.ndarray:
    """``s = Theta (q - q_d) + (q_dot - qd_dot)``."""
    e = np.asarray(q, dtype=float) - ref.q_d(t)
    ed = np.asarray(q_dot, dtype=float) - ref.qd_dot(t)
    return (ref.theta_matrix @ e[..., None])[..., 0] + ed


@dataclass(frozen=True)
class Disturbance:
    """Bounded sinusoidal disturbance ``w(t) = amplitude * sin(omega t)``."""

    amplitude: tuple[float, float, float] = (0.0, 0.0, 0.0)
    omega: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "amplitude", _vec3(self.amplitude, "amplitude"))

    @classmethod
    def from_dict(cls, d: dict) -> "Disturbance":
        return cls(**d)

    def w(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.asarray(self.amplitude) * np.sin(self.omega * t)[..., None]

    def w_dot(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.asarray(self.amplitude) * self.omega * np.cos(self.omega * t)[..., None]


def _mv(A, x):
    return (A @ x[..., None])[..., 0]


class _RobotTerms:
    """Shared evaluation of the robot decomposition at ``(t, z)``."""

    def __init__(self, params: RobotParams, ref: Reference, sp: StaParams, dist: Disturbance):
        self.params, self.ref, self.sp, self.dist = params, ref, sp, dist
        self.M = params.M
        self.Minv = matlin.invert(self.M)
        self.Th = ref.theta_matrix
        self.Mn_inv = matlin.invert(params.nominal_inertia())
        self.Fv = np.diag(params.fv)
        self.Fd = np.diag(params.fd)
        ratio = params.input_gain / params.nominal_input_gain
        # R(theta) cancels in Mbar M0^-1, so dM is constant.
        self.dM = ratio * self.Minv @ params.nominal_inertia() - np.eye(3)
        self.D = matlin.invert(np.eye(3) + self.dM)

    def unpack(self, t, z):
        t = np.asarray(t, dtype=float)
        z = np.asarray(z, dtype=float)
        qe, s = z[..., :3], z[..., 3:]
        qd_dot = self.ref.qd_dot(t)
        theta = qe[..., 2] + self.ref.q_d(t)[..., 2]
        q_dot = s - _mv(self.Th, qe) + qd_dot
        return t, qe, s, theta, q_dot, qd_dot

    def check(self, t, z):
        theta = self.unpack(t, z)[3]
        if np.any(np.abs(theta) >= np.pi / 2):
            raise DomainError("robot decomposition requires |theta| < pi/2")

    def C(self, q_dot):
        return self.params.coriolis_gain * np.tanh(q_dot[..., 2])[..., None, None] * _B

    def G0(self, t, z):
        theta = self.unpack(t, z)[3]
        return self.params.nominal_input_gain * self.Mn_inv @ matlin.transpose(rotation(theta))

    def DeltaG(self, t, z):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(self.dM, t.shape + (3, 3)).copy()

    def Delta1(self, t, z):
        *_, q_dot, _ = self.unpack(t, z)
        return self.Th - self.Minv @ (self.C(q_dot) + self.Fv)

    def f(self, t, z):
        """Total drift ``Theta q_err_dot - qd_ddot + M^-1[-C q_dot - f_r + w]``."""
        t, qe, s, theta, q_dot, qd_dot = self.unpack(t, z)
        qe_dot = q_dot - qd_dot
        force = (
            -_mv(self.C(q_dot), q_dot)
            - np.asarray(self.params.fv) * q_dot
            - np.asarray(self.params.fd) * np.tanh(q_dot)
            + self.dist.w(t)
        )
        return _mv(self.Th, qe_dot) - self.ref.qd_ddot(t) + _mv(self.Minv, force)

    def f2(self, t, z):
        # grouped as in the decomposition: q_err term, reference term,
        # dry friction, disturbance, and the part of Delta1 s not in Delta1 phi1
        t, qe, s, theta, q_dot, qd_dot = self.unpack(t, z)
        C = self.C(q_dot)
        K = self.Minv @ (C @ self.Th + self.Fv @ self.Th) - self.Th @ self.Th
        g = phi1(s, self.sp) - s
        return (
            _mv(K, qe)
            - self.ref.qd_ddot(t)
            - _mv(self.Minv @ (C + self.Fv), qd_dot)
            - _mv(self.Minv, np.asarray(self.params.fd) * np.tanh(q_dot))
            + _mv(self.Minv, self.dist.w(t))
            - _mv(self.Delta1(t, z), g)
        )

    def _derivative_split(self, t, z):
        """Return ``(Delta3, r)`` with ``d/dt[(I+dM)^-1 f2] = Delta3 s_dot + r``."""
        t, qe, s, theta, q_dot, qd_dot = self.unpack(t, z)
        n = 3
        sech2 = 1.0 - np.tanh(q_dot) ** 2
        C = self.C(q_dot)
        g = phi1(s, self.sp) - s
        arm = _mv(self.Th, qe) - qd_dot + g
        H = self.Minv @ (
            self.params.coriolis_gain * sech2[..., 2, None, None]
            * (_B @ arm[..., None]) * _E3
            - self.Fd * sech2[..., None, :]
        )
        D1 = self.Delta1(t, z)
        J = jacobian_phi1(s, self.sp)
        Delta3 = self.D @ (H - D1 @ (J - np.eye(n)))
        K = self.Minv @ (C @ self.Th + self.Fv @ self.Th) - self.Th @ self.Th
        qe_dot = s - _mv(self.Th, qe)
        r = _mv(self.D, _mv(K - H @ self.Th, qe_dot) + _mv(self.Minv, self.dist.w_dot(t)))
        return Delta3, r

    def Delta3(self, t, z):
        return self._derivative_split(t, z)[0]

    def Delta2(self, t, z):
        # rank-one so that Delta2 phi2(s) equals the non-s_dot remainder exactly
        _, r = self._derivative_split(t, z)
        s = np.asarray(z, dtype=float)[..., 3:]
        p2 = phi2(s, self.sp)
        nrm2 = np.sum(p2 * p2, axis=-1)
        safe = np.where(nrm2 > 0, nrm2, 1.0)
        out = r[..., :, None] * p2[..., None, :] / safe[..., None, None]
        return np.where((nrm2 > 0)[..., None, None], out, 0.0)


def robot_uncertain_plant(params: RobotParams, ref: Reference, sp: StaParams,
                          disturbance: Disturbance | None = None) -> UncertainPlant:
    """Uncertainty decomposition of the robot in coordinates ``z = (q_err, s)``.

    ``G0 = (kan ren / ran) Mn^-1 R^T``, ``DeltaG = dM = Mbar M0^-1 - I``,
    ``Delta1 = Theta - M^-1 (C + Fv)`` so that ``f1 = Delta1 phi1(s)``, and
    ``f2 = f - f1``.  ``Delta3`` is the exact coefficient of ``s_dot`` in the
    time derivative of ``(I + dM)^-1 f2`` and ``Delta2`` the rank-one matrix
    that carries the remainder onto ``phi2(s)``; together they reproduce the
    derivative identically.

    Raises:
        ContractError: if the reference velocity is not constant (only the
            constant-velocity :class:`Reference` is supported).
    """
    if not isinstance(ref, Reference):
        raise ContractError("robot decomposition needs a constant-velocity Reference")
    terms = _RobotTerms(params, ref, sp, disturbance or Disturbance())

    def checked(fn):
        def wrapped(t, z):
            terms.check(t, z)
            return fn(t, z)
        return wrapped

    return UncertainPlant(
        n=3,
        state_dim=6,
        G0=checked(terms.G0),
        DeltaG=terms.DeltaG,
        Delta1=terms.Delta1,
        Delta2=terms.Delta2,
        Delta3=terms.Delta3,
        f2=terms.f2,
        x_slice=slice(3, 6),
        name="robot",
        check_domain=terms.check,
    )


def robot_drift(params: RobotParams, ref: Reference, sp: StaParams, t, z,
                disturbance: Disturbance | None = None) -> np.ndarray:
    """Total drift ``f(t, z)`` of the sliding dynamics (for cross-checks)."""
    return _RobotTerms(params, ref, sp, disturbance or Disturbance()).f(t, z)


# ---------------------------------------------------------------------------
# academic two-channel example


@dataclass(frozen=True)
class AcademicParams:
    """Coupling ``g(t) = clip(g_bar * sin(omega t + phase), -g_bar, g_bar)``."""

    g_bar: float = 0.2
    omega: float = 10.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.g_bar >= 0:
            raise ContractError("g_bar must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "AcademicParams":
        return cls(**d)

    def g(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.clip(self.g_bar * np.sin(self.omega * t + self.phase), -self.g_bar, self.g_bar)


def academic_plant(params: AcademicParams) -> UncertainPlant:
    """``G0 = I``, ``DeltaG = [[0, g], [g, 0]]``, no drift perturbation."""

    def zeros(t, z):
        return np.zeros(np.shape(t) + (2, 2))

    def G0(t, z):
        return np.broadcast_to(np.eye(2), np.shape(t) + (2, 2)).copy()

    def DeltaG(t, z):
        g = params.g(t)
        out = np.zeros(np.shape(t) + (2, 2))
        out[..., 0, 1] = g
        out[..., 1, 0] = g
        return out

    def f2(t, z):
        return np.zeros(np.shape(t) + (2,))

    return UncertainPlant(n=2, state_dim=2, G0=G0, DeltaG=DeltaG, Delta1=zeros,
                          Delta2=zeros, Delta3=zeros, f2=f2, name="academic")


# ---------------------------------------------------------------------------
# closed-loop models used by the simulator


@dataclass
class RobotModel:
    """Robot closed loop; simulation state is ``(q, q_dot)``."""

    params: RobotParams = field(default_factory=RobotParams)
    ref: Reference = field(default_factory=Reference)
    disturbance: Disturbance = field(default_factory=Disturbance)
    q0: tuple[float, float, float] = (0.0, 0.0, 0.0)
    q_dot0: tuple[float, float, float] = (0.0, 0.0, 0.0)

    n = 3
    state_names = ("x", "y", "theta")
    ref_names = ("xd", "yd", "thetad")

    def initial_state(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.q0, float), np.asarray(self.q_dot0, float)])

    def reference(self, t) -> np.ndarray:
        return self.ref.q_d(t)

    def sliding(self, t, state) -> np.ndarray:
        return sliding_state(state[..., :3], state[..., 3:], self.ref, t)

    def nominal_G0(self, t, state) -> np.ndarray:
        R = rotation(np.asarray(state)[..., 2])
        return self.params.nominal_input_gain * matlin.invert(self.params.nominal_inertia()) @ matlin.transpose(R)

    def derivative(self, t, state, u) -> np.ndarray:
        q, qd = state[:3], state[3:]
        return np.concatenate([qd, robot_accel(t, q, qd, u, self.disturbance.w(t), self.params)])

    def uncertain_state(self, t, state) -> np.ndarray:
        qe = state[..., :3] - self.ref.q_d(t)
        return np.concatenate([qe, self.sliding(t, state)], axis=-1)

    def uncertain_plant(self, sp: StaParams) -> UncertainPlant:
        return robot_uncertain_plant(self.params, self.ref, sp, self.disturbance)

    def recorded(self, state) -> np.ndarray:
        return np.asarray(state)[..., :3]

    def state_from_record(self, t, recorded, s) -> np.ndarray:
        """Rebuild ``(q, q_dot)`` from logged ``q`` and ``s``."""
        t = np.asarray(t, dtype=float)
        qe = recorded - self.ref.q_d(t)
        q_dot = s - (self.ref.theta_matrix @ qe[..., None])[..., 0] + self.ref.qd_dot(t)
        return np.concatenate([recorded, q_dot], axis=-1)


@dataclass
class AcademicModel:
    """``x_dot = (I + DeltaG(t)) u``; the state is the controlled output."""

    params: AcademicParams = field(default_factory=AcademicParams)
    x0: tuple[float, float] = (1.0, -0.5)

    n = 2
    state_names = ("x1", "x2")
    ref_names = ()

    def initial_state(self) -> np.ndarray:
        return np.asarray(self.x0, dtype=float).copy()

    def reference(self, t) -> np.ndarray:
        return np.zeros(np.shape(t) + (0,))

    def sliding(self, t, state) -> np.ndarray:
        return np.asarray(state, dtype=float)

    def nominal_G0(self, t, state) -> np.ndarray:
        return np.eye(2)

    def derivative(self, t, state, u) -> np.ndarray:
        g = float(self.params.g(t))
        G = np.array([[1.0, g], [g, 1.0]])
        return G @ u

    def uncertain_state(self, t, state) -> np.ndarray:
        return np.asarray(state, dtype=float)

    def uncertain_plant(self, sp: StaParams) -> UncertainPlant:
        return academic_plant(self.params)

    def recorded(self, state) -> np.ndarray:
        return np.asarray(state)

    def state_from_record(self, t, recorded, s) -> np.ndarray:
        return np.asarray(recorded, dtype=float)
