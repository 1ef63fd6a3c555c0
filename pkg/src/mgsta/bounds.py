"""Sampling-based estimation of the uncertainty bound constants.

A plant is described by an :class:`UncertainPlant` callback bundle.  The
constants are extremes of eigenvalues of matrix expressions built from those
callbacks and from ``J/c`` of the controller, taken over a
:class:`SamplingDomain`.  The evaluation is a pure map over samples followed
by a min/max reduction, so the result does not depend on sample order or on
how the samples are split into chunks.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np
from scipy.stats import qmc

from . import matlin
from .errors import AssumptionViolation, ContractError
from .sta import ORIGIN_GUARD, StaParams, c_scalar, script_j

Callback = Callable[[np.ndarray, np.ndarray], np.ndarray]

DEFAULT_SAFETY = 1.05


@dataclass(frozen=True)
class UncertainPlant:
    """Callback bundle ``G0, DeltaG, Delta1, Delta2, Delta3, f2``.

    Every callback takes ``(t, z)`` with ``t`` of shape ``(N,)`` and ``z`` of
    shape ``(N, state_dim)`` and returns ``(N, n, n)`` matrices (``(N, n)``
    for ``f2``).  ``z`` is the plant's evaluation state; the controlled
    output ``x`` is the slice ``z[..., x_slice]``.
    """

    n: int
    state_dim: int
    G0: Callback
    DeltaG: Callback
    Delta1: Callback
    Delta2: Callback
    Delta3: Callback
    f2: Callback
    x_slice: slice = slice(None)
    name: str = "plant"
    check_domain: Callable[[np.ndarray, np.ndarray], None] | None = None

    def x_of(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z)[..., self.x_slice]

    def G(self, t, z) -> np.ndarray:
        return (np.eye(self.n) + self.DeltaG(t, z)) @ self.G0(t, z)


@dataclass(frozen=True)
class SamplingDomain:
    """Box in plant-state coordinates plus a time interval.

    ``lower``/``upper``/``counts`` describe a tensor grid over the state box.
    In addition, a logarithmic shell of controlled-output norms is sampled
    around the origin (``shell_norms`` times a fixed direction set, combined
    with the grid nodes of the remaining coordinates), and optionally
    ``random_samples`` seeded Latin-hypercube points.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    counts: tuple[int, ...]
    t_range: tuple[float, float] = (0.0, 1.0)
    t_count: int = 2
    shell_norms: tuple[float, ...] = tuple(np.logspace(-6, 0, 13))
    shell_directions: int = 64
    random_samples: int = 0
    seed: int = 0

    def __post_init__(self):
        if not (len(self.lower) == len(self.upper) == len(self.counts)):
            raise ContractError("lower, upper and counts must have equal length")
        for lo, hi, k in zip(self.lower, self.upper, self.counts):
            if not lo < hi:
                raise ContractError(f"domain axis needs min < max, got [{lo}, {hi}]")
            if k < 2:
                raise ContractError("grid counts must be >= 2")
        if not self.t_range[0] < self.t_range[1]:
            raise ContractError("time interval needs t0 < t1")
        if self.t_count < 2:
            raise ContractError("t_count must be >= 2")
        if any(r <= 0 for r in self.shell_norms):
            raise ContractError("shell norms must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingDomain":
        d = dict(d)
        for k in ("lower", "upper", "counts", "t_range", "shell_norms"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


_MIN_KEYS = ("g_m", "gamma1")


@dataclass(frozen=True)
class BoundConstants:
    """All constants consumed by the feasibility test and the gain design."""

    g_m: float
    g_M: float
    delta1: float = 0.0
    delta2: float = 0.0
    delta3: float = 0.0
    gamma1: float = 1.0
    gamma2: float = 1.0
    gamma3: float = 0.0
    gamma4: float = 0.0
    gamma5: float = 0.0
    mu1: float = 0.0
    mu2: float = 0.0
    mu3: float = 0.0
    mu4: float = 0.0
    theta1: float = 0.0
    theta2: float = 0.0
    theta3: float = 0.0
    theta4: float = 0.0
    theta5: float = 0.0
    theta6: float = 0.0
    theta7: float = 0.0
    theta8: float = 0.0
    theta9: float = 0.0
    theta10: float = 0.0
    theta11: float = 0.0
    theta12: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ContractError(f"{f.name} must be finite, got {v}")
        problems = []
        if not self.g_m > 0:
            problems.append("g_m > 0")
        if not self.g_M >= self.g_m:
            problems.append("g_M >= g_m")
        if min(self.delta1, self.delta2, self.delta3) < 0:
            problems.append("delta_i >= 0")
        if not self.gamma1 > 0:
            problems.append("gamma1 > 0")
        if not self.gamma2 >= self.gamma1:
            problems.append("gamma2 >= gamma1")
        if min(self.gamma3, self.gamma4, self.gamma5) < 0:
            problems.append("gamma3, gamma4, gamma5 >= 0")
        if problems:
            raise ContractError("invalid bound constants: " + ", ".join(problems))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BoundConstants":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ContractError(f"unknown constant fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "BoundConstants":
        return cls.from_dict(json.loads(text))


@dataclass
class Witness:
    raw: float
    t: float
    state: list[float]


@dataclass
class BoundsReport:
    """Estimated constants together with the sample attaining each extreme."""

    constants: BoundConstants
    raw: dict[str, float]
    witnesses: dict[str, Witness] = field(default_factory=dict)
    n_samples: int = 0
    safety: float = DEFAULT_SAFETY

    def to_dict(self) -> dict:
        return {
            "constants": self.constants.to_dict(),
            "raw": self.raw,
            "witnesses": {k: asdict(w) for k, w in self.witnesses.items()},
            "n_samples": self.n_samples,
            "safety": self.safety,
        }


# ---------------------------------------------------------------------------
# sampling


def _directions(n: int, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    base = [np.eye(n), -np.eye(n)]
    signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * n, indexing="ij")).reshape(n, -1).T
    base.append(signs / np.sqrt(n))
    if count > 0:
        r = rng.standard_normal((count, n))
        base.append(r / np.linalg.norm(r, axis=1, keepdims=True))
    return np.vstack(base)


def sample_domain(dom: SamplingDomain, plant: UncertainPlant) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic sample set ``(t, z)`` for a domain.

    Samples whose controlled output is (numerically) zero are dropped:
    ``J/c`` and ``c`` are undefined there, and the shell supplies the limit.
    """
    d = plant.state_dim
    if len(dom.lower) != d:
        raise ContractError(f"domain has {len(dom.lower)} axes, plant state has {d}")
    axes = [np.linspace(lo, hi, k) for lo, hi, k in zip(dom.lower, dom.upper, dom.counts)]
    ts = np.linspace(dom.t_range[0], dom.t_range[1], dom.t_count)

    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    parts_z = [np.repeat(grid, len(ts), axis=0)]
    parts_t = [np.tile(ts, len(grid))]

    x_idx = np.arange(d)[plant.x_slice]
    other = np.setdiff1d(np.arange(d), x_idx)
    if len(dom.shell_norms):
        dirs = _directions(plant.n, dom.shell_directions, dom.seed)
        xs = (np.asarray(dom.shell_norms)[:, None, None] * dirs[None]).reshape(-1, plant.n)
        if len(other):
            o_axes = [axes[i] for i in other]
            o_nodes = np.stack(np.meshgrid(*o_axes, indexing="ij"), axis=-1).reshape(-1, len(other))
        else:
            o_nodes = np.zeros((1, 0))
        shell = np.zeros((len(o_nodes) * len(xs), d))
        shell[:, other] = np.repeat(o_nodes, len(xs), axis=0)
        shell[:, x_idx] = np.tile(xs, (len(o_nodes), 1))
        parts_z.append(np.repeat(shell, len(ts), axis=0))
        parts_t.append(np.tile(ts, len(shell)))

    if dom.random_samples > 0:
        lhs = qmc.LatinHypercube(d=d + 1, seed=dom.seed).random(dom.random_samples)
        lo = np.array([dom.t_range[0], *dom.lower])
        hi = np.array([dom.t_range[1], *dom.upper])
        pts = qmc.scale(lhs, lo, hi)
        parts_t.append(pts[:, 0])
        parts_z.append(pts[:, 1:])

    t = np.concatenate(parts_t)
    z = np.concatenate(parts_z)
    keep = np.linalg.norm(z[:, x_idx], axis=1) >= ORIGIN_GUARD
    return t[keep], z[keep]


# ---------------------------------------------------------------------------
# pointwise quantities


def _two_sym(M):
    return 2.0 * matlin.sym(M)


def _T(M):
    return matlin.transpose(M)


def pointwise_quantities(plant: UncertainPlant, t, z, sp: StaParams, keys=None) -> dict[str, np.ndarray]:
    """Per-sample extreme eigenvalues (or norms) behind every constant.

    Returns a dict mapping constant name to an ``(N,)`` array; min-type
    constants (``g_m``, ``gamma1``) hold smallest eigenvalues, everything
    else largest eigenvalues or spectral norms.
    """
    n = plant.n
    I = np.eye(n)
    x = plant.x_of(z)
    G0 = plant.G0(t, z)
    DG = plant.DeltaG(t, z)
    D1 = plant.Delta1(t, z)
    D2 = plant.Delta2(t, z)
    D3 = plant.Delta3(t, z)
    Jc = script_j(x, sp)
    c = c_scalar(x, sp)
    G = (I + DG) @ G0
    IDG = I + DG
    A = D3 / c[:, None, None]
    b = sp.b

    AG = A @ G
    JG = Jc @ G
    Y = A @ IDG * b + _T(D1) @ Jc          # A(I+dG) b + D1^T J
    W = _T(D2) + _T(D1) @ _T(A)            # D2^T + D1^T A^T
    U = _T(IDG) @ _T(A) * b + Jc @ D1      # (I+dG^T) A^T b + J D1
    D2AD1 = D2 + A @ D1

    hi = matlin.lambda_max
    out = {}

    def want(k):
        return keys is None or k in keys

    if want("g_m") or want("g_M"):
        w_lo, w_hi = matlin.eig_sym_extremes(G + _T(G))
        out["g_m"], out["g_M"] = w_lo, w_hi
    if want("delta1"):
        out["delta1"] = matlin.spectral_norm(D1)
    if want("delta2"):
        out["delta2"] = matlin.spectral_norm(D2)
    if want("delta3"):
        out["delta3"] = matlin.spectral_norm(D3)
    if want("gamma1") or want("gamma2"):
        w_lo, w_hi = matlin.eig_sym_extremes(_two_sym(Jc @ IDG))
        out["gamma1"], out["gamma2"] = w_lo, w_hi
    lazy = {
        "gamma3": lambda: hi(matlin.gram(JG)),
        "gamma4": lambda: hi(_two_sym(DG @ JG)),
        "gamma5": lambda: hi(matlin.gram(_T(DG))),
        "mu1": lambda: hi(_two_sym(D1)),
        "mu2": lambda: hi(_two_sym(AG)),
        "mu3": lambda: hi(_two_sym(A @ D1 + D2)),
        "mu4": lambda: hi(_two_sym(A @ IDG)),
        "theta1": lambda: hi(_two_sym(_T(G) @ Jc @ AG)),
        "theta2": lambda: hi(matlin.gram(AG)),
        "theta3": lambda: hi(_two_sym(Y @ JG)),
        "theta4": lambda: hi(_two_sym(W @ JG)),
        "theta5": lambda: hi(_two_sym(Y @ AG)),
        "theta6": lambda: hi(_two_sym(DG @ AG)),
        "theta7": lambda: hi(_two_sym(W @ AG)),
        "theta8": lambda: hi(_two_sym(DG @ U)),
        "theta9": lambda: hi(_two_sym(DG @ D2AD1)),
        "theta10": lambda: hi(_two_sym(W @ U)),
        "theta11": lambda: hi(matlin.gram(D2AD1)),
        "theta12": lambda: hi(matlin.gram(U)),
    }
    for k, fn in lazy.items():
        if want(k):
            out[k] = fn()
    return out


ALL_KEYS = tuple(f.name for f in fields(BoundConstants))
ASSUMPTION_KEYS = ("g_m", "g_M", "delta1", "delta2", "delta3", "gamma1", "gamma2")
GAMMA_KEYS = ("gamma3", "gamma4", "gamma5")
MU_THETA_KEYS = tuple(k for k in ALL_KEYS if k.startswith(("mu", "theta")))


def reduce_samples(plant, t, z, sp, keys=ALL_KEYS, chunk: int = 50_000) -> tuple[dict, dict]:
    """Min/max reduction of :func:`pointwise_quantities` over samples.

    Returns ``(raw, argext)`` where ``raw[k]`` is the extreme value and
    ``argext[k]`` the index of the sample attaining it (first occurrence).
    """
    raw: dict[str, float] = {}
    arg: dict[str, int] = {}
    N = len(t)
    if N == 0:
        raise ContractError("empty sample set")
    for start in range(0, N, chunk):
        sl = slice(start, min(start + chunk, N))
        if plant.check_domain is not None:
            plant.check_domain(t[sl], z[sl])
        vals = pointwise_quantities(plant, t[sl], z[sl], sp, keys)
        for k in keys:
            v = vals[k]
            i = int(np.argmin(v) if k in _MIN_KEYS else np.argmax(v))
            cand = float(v[i])
            better = (
                k not in raw
                or (cand < raw[k] if k in _MIN_KEYS else cand > raw[k])
            )
            if better:
                raw[k], arg[k] = cand, start + i
    return raw, arg


def _inflate(v: float, s: float) -> float:
    # conservative direction for an upper bound
    return v * s if v >= 0 else v / s


def _deflate(v: float, s: float) -> float:
    # conservative direction for a lower bound
    return v / s if v >= 0 else v * s


def apply_safety(raw: dict[str, float], safety: float) -> dict[str, float]:
    if safety < 1:
        raise ContractError("safety factor must be >= 1")
    out = {}
    for k, v in raw.items():
        out[k] = _deflate(v, safety) if k in _MIN_KEYS else _inflate(v, safety)
    for k in ("gamma3", "gamma4", "gamma5"):
        if k in out:
            out[k] = max(out[k], 0.0)
    return out


def _check_assumption(raw, t, z, arg):
    if "g_m" in raw and not raw["g_m"] > 0:
        i = arg["g_m"]
        raise AssumptionViolation(
            f"G + G^T is not positive definite: lambda_min = {raw['g_m']:.6g} "
            f"at t={t[i]:.6g}, state={z[i].tolist()}",
            which="g_m", value=raw["g_m"], witness=(float(t[i]), z[i].tolist()),
        )
    if "gamma1" in raw and not raw["gamma1"] > 0:
        i = arg["gamma1"]
        raise AssumptionViolation(
            f"2 Sym{{J/c (I + DeltaG)}} is not positive definite: lambda_min = "
            f"{raw['gamma1']:.6g} at t={t[i]:.6g}, state={z[i].tolist()}",
            which="gamma1", value=raw["gamma1"], witness=(float(t[i]), z[i].tolist()),
        )


def _scan(plant, dom, sp, keys, safety):
    t, z = sample_domain(dom, plant)
    raw, arg = reduce_samples(plant, t, z, sp, keys)
    _check_assumption(raw, t, z, arg)
    scaled = apply_safety(raw, safety)
    wit = {k: Witness(raw[k], float(t[i]), z[i].tolist()) for k, i in arg.items()}
    return scaled, raw, wit, len(t)


def estimate_assumption(plant: UncertainPlant, dom: SamplingDomain, sp: StaParams,
                        safety: float = DEFAULT_SAFETY) -> dict[str, float]:
    """``g_m, g_M, delta1..3, gamma1, gamma2``.

    Raises:
        AssumptionViolation: if ``G + G^T`` or ``2 Sym{J/c (I + DeltaG)}``
            fails to be positive definite at some sample.
    """
    return _scan(plant, dom, sp, ASSUMPTION_KEYS, safety)[0]


def estimate_gammas(plant: UncertainPlant, dom: SamplingDomain, sp: StaParams,
                    safety: float = DEFAULT_SAFETY) -> dict[str, float]:
    """``gamma3, gamma4, gamma5``."""
    return _scan(plant, dom, sp, GAMMA_KEYS, safety)[0]


def estimate_mus_thetas(plant: UncertainPlant, dom: SamplingDomain, sp: StaParams,
                        safety: float = DEFAULT_SAFETY) -> dict[str, float]:
    """``mu1..mu4`` and ``theta1..theta12`` with ``A = Delta3 / c``."""
    return _scan(plant, dom, sp, MU_THETA_KEYS, safety)[0]


def estimate_bounds(plant: UncertainPlant, dom: SamplingDomain, sp: StaParams,
                    safety: float = DEFAULT_SAFETY) -> BoundsReport:
    """Every constant in one pass, with argmax/argmin witnesses."""
    scaled, raw, wit, n = _scan(plant, dom, sp, ALL_KEYS, safety)
    return BoundsReport(BoundConstants(**scaled), raw, wit, n, safety)
