import json
import math

import numpy as np
import pytest

from mgsta.bounds import BoundConstants
from mgsta.design import (DesignInputs, DesignOptions, DesignResult, check_feasibility,
                          design_gains, eval_alphas, eval_xi_gamma, feasibility_margin,
                          k1_interval, quadratic, result_for_gains, verify_gain_selection)
from mgsta.errors import ContractError, DesignSearchError, InfeasibleError
from mgsta.sta import StaParams

# constants listed for the robot example (the remaining fields are unused
# by the feasibility test)
PUBLISHED = dict(g_m=0.0714, g_M=5.2696, delta1=2.0, delta2=4.0080, delta3=1.3434,
                 gamma1=1.9957, gamma2=3.2688, gamma3=18.4838, gamma4=2.5907e-4,
                 gamma5=4.6706e-6)

ZEROED = BoundConstants(g_m=1.0, g_M=1.0, gamma1=1.0, gamma2=1.0)
SP1 = StaParams(alpha=1.0, beta=1.0, b=1.0, p=0.5)


def random_feasible(rng) -> BoundConstants:
    """Random constants with a positive feasibility margin."""
    while True:
        g_m = rng.uniform(0.05, 2.0)
        gamma1 = rng.uniform(0.5, 3.0)
        gamma3 = rng.uniform(0.1, 20.0)
        budget = gamma1 * g_m * rng.uniform(0.1, 0.9)
        gamma4 = budget * rng.uniform(0.0, 0.5)
        gamma5 = ((budget - gamma4) / 2.0) ** 2 / gamma3 * rng.uniform(0.0, 1.0)
        d = dict(g_m=g_m, g_M=g_m * rng.uniform(1, 5), delta1=rng.uniform(0, 3),
                 delta2=rng.uniform(0, 5), delta3=rng.uniform(0, 2), gamma1=gamma1,
                 gamma2=gamma1 * rng.uniform(1, 3), gamma3=gamma3, gamma4=gamma4, gamma5=gamma5)
        for i in range(1, 5):
            d[f"mu{i}"] = rng.uniform(-0.5, 3.0)
        for i in range(1, 13):
            d[f"theta{i}"] = rng.uniform(-0.5, 5.0)
        c = BoundConstants(**d)
        if feasibility_margin(c) > 0:
            return c


def test_published_margin():
    ok, m = check_feasibility(BoundConstants(**PUBLISHED))
    assert ok
    assert m == pytest.approx(0.14249 - 0.018842, abs=1e-4)
    assert m == pytest.approx(0.12365, abs=1e-4)


def test_delta_g_free_always_feasible():
    c = BoundConstants(g_m=0.01, g_M=1.0, gamma1=0.01, gamma2=1.0, gamma3=1e6)
    assert check_feasibility(c) == (True, pytest.approx(1e-4))


def test_margin_monotone_in_gamma4_gamma5(rng):
    c = random_feasible(rng)
    base = feasibility_margin(c)
    for s in (0.5, 0.1, 0.0):
        d = dict(c.to_dict(), gamma4=c.gamma4 * s, gamma5=c.gamma5 * s)
        assert feasibility_margin(BoundConstants(**d)) >= base


def test_xi_gamma_zeroed():
    xg = eval_xi_gamma(3.0, 0.7, DesignInputs(ZEROED, SP1))
    assert xg == {"Xi1": 0.0, "Xi2": 0.0, "Xi3": 0.0, "Gamma0": 0.0, "Gamma1": 1.0, "Gamma2": 0.0}


def test_xi3_is_gamma3_over_b():
    c = BoundConstants(**PUBLISHED)
    for p2 in (1e-3, 0.5, 7.0):
        xg = eval_xi_gamma(1.0, p2, DesignInputs(c, StaParams(b=3.0, p=0.4)))
        assert xg["Xi3"] == pytest.approx(6.1613, abs=1e-4)


def test_gamma0_limit():
    rng = np.random.default_rng(3)
    inputs = DesignInputs(random_feasible(rng), SP1)
    vals = [eval_xi_gamma(10.0**k, 10.0**-k, inputs)["Gamma0"] for k in range(2, 9)]
    assert abs(vals[-1]) < 1e-6 * max(1.0, abs(vals[0]))


def test_alphas_zeroed():
    p1, p2 = 2.0, 1.0
    a0, a1, a2 = eval_alphas(p1, p2, DesignInputs(ZEROED, SP1))
    assert (a0, a1, a2) == (2 * p1 / p2, -p1, 0.0)
    # linear case: quadratic < 0  <=>  k1 > 2 / p2
    lo, hi = k1_interval((a0, a1, a2), 1e6)
    assert lo == pytest.approx(2 / p2) and hi == 1e6
    assert quadratic(2 / p2 + 1e-9, (a0, a1, a2)) < 0 < quadratic(2 / p2 - 1e-9, (a0, a1, a2))


def test_alphas_guard():
    c = BoundConstants(g_m=1.0, g_M=1.0, gamma1=1.0, gamma2=1.0, gamma3=1.0, mu4=2.0)
    with pytest.raises(ContractError, match="gamma1 > p2"):
        eval_alphas(1.0, 0.5, DesignInputs(c, SP1))
    # near the boundary alpha2 blows up
    a2 = [eval_alphas(1.0, 0.5 - e, DesignInputs(c, SP1))[2] for e in (1e-2, 1e-4, 1e-6)]
    assert a2[0] < a2[1] < a2[2]


def test_zeroed_design_verifies():
    inputs = DesignInputs(ZEROED, SP1.with_gains(0, 0))
    r = design_gains(inputs)
    assert r.k2 == pytest.approx(SP1.b * r.p1 / r.p2)
    assert r.k1_interval[0] == pytest.approx(2.0 / r.p2)
    assert verify_gain_selection(r, inputs).passed
    # the hand example: p2 = 1, p1 = 2, any k1 > 2
    hand = result_for_gains(k1=2.5, k2=2 * SP1.b, p2=1.0, inputs=inputs)
    assert hand.p1 == pytest.approx(2.0)
    assert verify_gain_selection(hand, inputs).passed


def test_closure_randomized():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        inputs = DesignInputs(random_feasible(rng), StaParams(b=rng.uniform(0.5, 5), p=0.4))
        r = design_gains(inputs)
        rep = verify_gain_selection(r, inputs)
        assert rep.passed, rep.failed()
        assert all(ch.slack > 0 for ch in rep.checks)
        a = eval_alphas(r.p1, r.p2, inputs)
        assert quadratic(r.k1, a) < 0
        lo, hi = r.k1_interval
        if a[2] > 0:
            scale = max(abs(a[0]), abs(a[1]) * hi, a[2] * hi * hi)
            assert abs(quadratic(lo, a)) <= 1e-8 * scale
            assert abs(quadratic(hi, a)) <= 1e-8 * scale


def test_k1_outside_interval_fails():
    rng = np.random.default_rng(5)
    inputs = DesignInputs(random_feasible(rng), SP1)
    r = design_gains(inputs)
    lo, hi = r.k1_interval
    for k1 in (hi * (1 + 1e-6), lo * (1 - 1e-6)):
        bad = DesignResult(r.p1, r.p2, r.k2, r.k1_interval, k1, r.intermediates)
        rep = verify_gain_selection(bad, inputs)
        assert rep.failed() == ["quadratic_negative"]
        assert [c.slack for c in rep.checks if c.name == "quadratic_negative"][0] < 0


def test_design_deterministic():
    rng = np.random.default_rng(9)
    inputs = DesignInputs(random_feasible(rng), SP1)
    assert design_gains(inputs) == design_gains(inputs)


def test_infeasible_raises_both_ways():
    d = dict(PUBLISHED, gamma5=PUBLISHED["gamma5"] * 1e6)
    inputs = DesignInputs(BoundConstants(**d), SP1)
    with pytest.raises(InfeasibleError) as e:
        design_gains(inputs)
    assert e.value.margin < 0 and e.value.last_failed == ["feasibility"]
    with pytest.raises(DesignSearchError):
        design_gains(inputs)


def test_search_exhaustion_names_failed_condition():
    rng = np.random.default_rng(11)
    c = random_feasible(rng)
    opts = DesignOptions(p1_min=1e-3, p1_max=1e-2, p1_count=3, p2_count=2)
    with pytest.raises(DesignSearchError) as e:
        design_gains(DesignInputs(c, SP1, opts))
    assert not isinstance(e.value, InfeasibleError)
    assert e.value.last_failed


def test_hand_gains_report_violations():
    # the published gains with the published constants: feasibility holds but
    # the k2 = b p1/p2 relation pins p1, and the mu/theta-free design
    # inequalities are evaluated with their slacks
    c = BoundConstants(**PUBLISHED)
    sp = StaParams(alpha=1, beta=1, b=3, p=0.4)
    r = result_for_gains(42.0, 13.0, p2=1.0, inputs=DesignInputs(c, sp))
    rep = verify_gain_selection(r, DesignInputs(c, sp))
    names = [ch.name for ch in rep.checks]
    assert names == ["feasibility", "p2_bound", "alpha1_negative_condition",
                     "discriminant_condition", "p1p2_gt_1", "k2_relation", "k1_positive",
                     "alpha1_negative", "discriminant", "quadratic_negative"]
    assert rep.checks[0].passed
    assert not rep.passed


def test_result_json_roundtrip():
    inputs = DesignInputs(ZEROED, SP1)
    r = design_gains(inputs)
    back = DesignResult.from_dict(json.loads(r.to_json()))
    assert back == r
    assert math.isclose(back.k1, r.k1)
