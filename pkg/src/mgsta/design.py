"""Feasibility test and constant-gain selection for the MGSTA.

The procedure works on the :class:`~mgsta.bounds.BoundConstants` only:

1. check ``gamma1 g_m > gamma4 + 2 sqrt(gamma3 gamma5)``;
2. pick ``p2`` small enough that ``gamma1 > p2 mu4`` and ``p1`` large enough
   that ``alpha1 < 0`` and the discriminant ``alpha1^2 - 4 alpha2 alpha0`` is
   positive, with ``p1 p2 > 1``;
3. set ``k2 = b p1 / p2`` and take ``k1`` between the two positive roots of
   ``alpha2 k1^2 + alpha1 k1 + alpha0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .bounds import BoundConstants
from .errors import ContractError, DesignSearchError, InfeasibleError
from .sta import StaParams


@dataclass(frozen=True)
class DesignOptions:
    """Search grids for ``(p1, p2)``.

    ``p2`` is scanned downwards on a log grid starting at
    ``0.99 gamma1 / mu4`` (or ``p2_start_free`` when ``mu4 <= 0``); for each
    ``p2``, ``p1`` is scanned upwards until every condition holds.
    """

    p2_count: int = 80
    p2_min: float = 1e-8
    p2_start_free: float = 10.0
    p1_min: float = 1e-3
    p1_max: float = 1e16
    p1_count: int = 400
    k1_cap: float = 1e6

    @classmethod
    def from_dict(cls, d: dict) -> "DesignOptions":
        return cls(**d)


@dataclass(frozen=True)
class DesignInputs:
    constants: BoundConstants
    sp: StaParams
    options: DesignOptions = field(default_factory=DesignOptions)

    @property
    def b(self) -> float:
        return self.sp.b


@dataclass
class DesignResult:
    p1: float
    p2: float
    k2: float
    k1_interval: tuple[float, float]
    k1: float
    intermediates: dict[str, float]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["k1_interval"] = list(self.k1_interval)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DesignResult":
        d = dict(d)
        d["k1_interval"] = tuple(d["k1_interval"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def feasibility_margin(c: BoundConstants) -> float:
    return c.gamma1 * c.g_m - c.gamma4 - 2.0 * math.sqrt(c.gamma3 * c.gamma5)


def check_feasibility(c: BoundConstants) -> tuple[bool, float]:
    """``(margin > 0, margin)`` for the input-matrix uncertainty condition."""
    m = feasibility_margin(c)
    return m > 0, m


def eval_xi_gamma(p1: float, p2: float, inputs: DesignInputs) -> dict[str, float]:
    """The auxiliary functions Xi1, Xi2, Xi3, Gamma0, Gamma1, Gamma2."""
    if not (p1 > 0 and p2 > 0):
        raise ContractError("p1 and p2 must be positive")
    c, b = inputs.constants, inputs.b
    xi1 = (c.theta8 + c.theta9 * p2 + c.theta10 * p2 / (b * p1)
           + c.theta11 * p2**2 / (b * p1) + c.theta12 / (b * p1))
    xi2 = (c.theta3 + (c.theta4 + c.theta5) * p2 + c.theta7 * p2**2) / b
    xi3 = (c.gamma3 + c.theta1 * p2 + c.theta2 * p2**2) / b
    g1t = c.gamma1 - p2 * c.mu4
    gamma0 = (xi2 + g1t * c.mu2) / p1 + (c.theta6 + c.mu4 * c.g_m) * p2
    gamma1 = (gamma0 + c.gamma4 - c.gamma1 * c.g_m) ** 2 - 4.0 * b * xi3 * c.gamma5
    gamma2 = 4.0 * xi3 * ((2.0 * b / p2 + c.mu1 + c.mu3 / p1) * g1t + xi1)
    return {"Xi1": xi1, "Xi2": xi2, "Xi3": xi3,
            "Gamma0": gamma0, "Gamma1": gamma1, "Gamma2": gamma2}


def eval_alphas(p1: float, p2: float, inputs: DesignInputs) -> tuple[float, float, float]:
    """Coefficients ``(alpha0, alpha1, alpha2)`` of the quadratic in ``k1``.

    Raises:
        ContractError: unless ``gamma1 > p2 * mu4``.
    """
    c, b = inputs.constants, inputs.b
    g1t = c.gamma1 - p2 * c.mu4
    if not g1t > 0:
        raise ContractError(f"requires gamma1 > p2*mu4 (gamma1 - p2*mu4 = {g1t:.6g})")
    xg = eval_xi_gamma(p1, p2, inputs)
    alpha2 = xg["Xi3"] / g1t
    alpha1 = (xg["Xi2"] + c.gamma4 * p1 + c.theta6 * p1 * p2) / g1t + c.mu2 - c.g_m * p1
    alpha0 = (2.0 * b * p1 / p2 + c.mu1 * p1 + c.mu3
              + (c.gamma5 * b * p1 + xg["Xi1"]) * b * p1 / (b * g1t))
    return alpha0, alpha1, alpha2


def quadratic(k1: float, alphas: tuple[float, float, float]) -> float:
    a0, a1, a2 = alphas
    return a2 * k1 * k1 + a1 * k1 + a0


def k1_interval(alphas, cap: float) -> tuple[float, float]:
    """Open interval of ``k1`` on which the quadratic is negative.

    Uses the cancellation-free root pair when ``alpha2 > 0``; for
    ``alpha2 == 0`` the linear solution ``k1 > -alpha0/alpha1`` capped at
    ``cap``.
    """
    a0, a1, a2 = alphas
    if a2 == 0.0:
        return -a0 / a1, cap
    disc = math.sqrt(a1 * a1 - 4.0 * a2 * a0)
    q = -a1 + disc          # a1 < 0, so no cancellation
    return 2.0 * a0 / q, q / (2.0 * a2)


def _conditions(p1, p2, inputs) -> tuple[list[str], dict]:
    c = inputs.constants
    failed = []
    xg = eval_xi_gamma(p1, p2, inputs)
    if not c.gamma1 * c.g_m - c.gamma4 - xg["Gamma0"] > 0:
        failed.append("alpha1_negative")
    if not xg["Gamma1"] * p1 > xg["Gamma2"]:
        failed.append("discriminant_positive")
    if not p1 * p2 > 1:
        failed.append("p1p2_gt_1")
    if not xg["Xi3"] >= 0:
        failed.append("alpha2_nonnegative")
    return failed, xg


def design_gains(inputs: DesignInputs) -> DesignResult:
    """Search ``(p1, p2)`` and return gains satisfying every design inequality.

    Raises:
        InfeasibleError: if the feasibility margin is not positive.
        DesignSearchError: if the grids are exhausted; ``last_failed`` names
            the conditions violated at the last candidate.
    """
    c, opt = inputs.constants, inputs.options
    ok, margin = check_feasibility(c)
    if not ok:
        raise InfeasibleError(f"input-matrix uncertainty too large: margin = {margin:.6g}", margin)

    p2_start = 0.99 * c.gamma1 / c.mu4 if c.mu4 > 0 else opt.p2_start_free
    p2_grid = np.geomspace(p2_start, min(opt.p2_min, p2_start), opt.p2_count)
    p1_grid = np.geomspace(opt.p1_min, opt.p1_max, opt.p1_count)
    last_failed = ["p2_bound"]
    for p2 in p2_grid:
        p2 = float(p2)
        if not c.gamma1 > p2 * c.mu4:
            last_failed = ["p2_bound"]
            continue
        for p1 in p1_grid:
            p1 = float(p1)
            failed, xg = _conditions(p1, p2, inputs)
            if failed:
                last_failed = failed
                continue
            alphas = eval_alphas(p1, p2, inputs)
            lo, hi = k1_interval(alphas, opt.k1_cap)
            if not (0 < lo < hi) or not math.isfinite(hi):
                last_failed = ["k1_interval"]
                continue
            k1 = 0.5 * (lo + hi)
            if not quadratic(k1, alphas) < 0:
                last_failed = ["quadratic_negative"]
                continue
            a0, a1, a2 = alphas
            inter = dict(xg, alpha0=a0, alpha1=a1, alpha2=a2,
                         gamma1_tilde=c.gamma1 - p2 * c.mu4, margin=margin)
            return DesignResult(p1=p1, p2=p2, k2=inputs.b * p1 / p2,
                                k1_interval=(lo, hi), k1=k1, intermediates=inter)
    raise DesignSearchError(
        "no (p1, p2) satisfied the design inequalities; last failed: " + ", ".join(last_failed),
        last_failed,
    )


def result_for_gains(k1: float, k2: float, p2: float, inputs: DesignInputs) -> DesignResult:
    """Wrap externally chosen gains for :func:`verify_gain_selection`.

    ``p1`` follows from ``k2 = b p1 / p2``.
    """
    p1 = k2 * p2 / inputs.b
    c = inputs.constants
    xg = eval_xi_gamma(p1, p2, inputs)
    try:
        a0, a1, a2 = eval_alphas(p1, p2, inputs)
    except ContractError:
        a0 = a1 = a2 = math.nan
    if a1 < 0 and a1 * a1 - 4.0 * a2 * a0 > 0:
        lo, hi = k1_interval((a0, a1, a2), inputs.options.k1_cap)
    else:
        lo = hi = math.nan
    inter = dict(xg, alpha0=a0, alpha1=a1, alpha2=a2,
                 gamma1_tilde=c.gamma1 - p2 * c.mu4, margin=feasibility_margin(c))
    return DesignResult(p1=p1, p2=p2, k2=k2, k1_interval=(lo, hi), k1=k1, intermediates=inter)


@dataclass
class Check:
    name: str
    slack: float
    passed: bool


@dataclass
class VerificationReport:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(ch.passed for ch in self.checks)

    def failed(self) -> list[str]:
        return [ch.name for ch in self.checks if not ch.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [asdict(ch) for ch in self.checks]}


def verify_gain_selection(result: DesignResult, inputs: DesignInputs) -> VerificationReport:
    """Re-evaluate every design inequality at ``result``; slack > 0 means pass."""
    c, b = inputs.constants, inputs.b
    p1, p2, k1, k2 = result.p1, result.p2, result.k1, result.k2
    checks: list[Check] = []

    def add(name, slack):
        slack = float(slack)
        checks.append(Check(name, slack, bool(slack > 0)))

    add("feasibility", feasibility_margin(c))
    g1t = c.gamma1 - p2 * c.mu4
    add("p2_bound", g1t)
    xg = eval_xi_gamma(p1, p2, inputs)
    add("alpha1_negative_condition", c.gamma1 * c.g_m - c.gamma4 - xg["Gamma0"])
    add("discriminant_condition", xg["Gamma1"] * p1 - xg["Gamma2"])
    add("p1p2_gt_1", p1 * p2 - 1.0)
    k2_ref = b * p1 / p2
    add("k2_relation", 1e-9 * abs(k2_ref) - abs(k2 - k2_ref) + np.finfo(float).tiny)
    add("k1_positive", k1)
    if g1t > 0:
        alphas = eval_alphas(p1, p2, inputs)
        a0, a1, a2 = alphas
        add("alpha1_negative", -a1)
        add("discriminant", a1 * a1 - 4.0 * a2 * a0)
        add("quadratic_negative", -quadratic(k1, alphas))
    else:
        for name in ("alpha1_negative", "discriminant", "quadratic_negative"):
            add(name, math.nan)
    return VerificationReport(checks)
