import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgsta import sta
from mgsta.errors import ContractError, SingularityError
from mgsta.sta import StaParams

SP = StaParams(alpha=1.0, beta=1.0, b=1.0, p=0.5)


def test_params_validation():
    with pytest.raises(ContractError):
        StaParams(p=0.6)
    with pytest.raises(ContractError):
        StaParams(p=0.0)
    with pytest.raises(ContractError):
        StaParams(alpha=-1.0)
    with pytest.raises(ContractError):
        StaParams(k1=-1.0)
    assert StaParams(p=0.5).with_gains(2, 3).k2 == 3.0


def test_phi1_examples():
    np.testing.assert_allclose(sta.phi1([4.0, 0.0], SP), [6.0, 0.0])
    np.testing.assert_array_equal(sta.phi1([0.0, 0.0], SP), [0.0, 0.0])
    # pure linear term when alpha -> small and p fixed
    x = np.array([3.0, 4.0])
    np.testing.assert_allclose(sta.phi1(x, SP), (5 ** -0.5 + 1) * x)


def test_c_scalar_and_origin():
    assert sta.c_scalar([4.0, 0.0], SP) == pytest.approx(0.5 * 0.5 + 1.0)
    with pytest.raises(SingularityError):
        sta.c_scalar([0.0, 0.0], SP)
    with pytest.raises(SingularityError):
        sta.jacobian_phi1(np.zeros(3), SP)


def test_phi2_at_origin_is_zero():
    np.testing.assert_array_equal(sta.phi2(np.zeros(3), SP), np.zeros(3))


def fd_jacobian(f, x, h=1e-6):
    n = x.size
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (f(x + e) - f(x - e)) / (2 * h)
    return J


@pytest.mark.parametrize("p", [0.1, 0.25, 0.4, 0.5])
def test_jacobian_vs_finite_differences(rng, p):
    sp = StaParams(alpha=1.3, beta=0.7, p=p)
    for _ in range(20):
        x = rng.standard_normal(3) * rng.uniform(0.1, 3.0)
        J = sta.jacobian_phi1(x, sp)
        Jfd = fd_jacobian(lambda y: sta.phi1(y, sp), x)
        np.testing.assert_allclose(J, Jfd, rtol=1e-6, atol=1e-6 * np.abs(J).max())


def test_phi2_identities(rng):
    sp = StaParams(alpha=2.0, beta=0.5, p=0.3)
    x = rng.standard_normal((200, 3)) * 10.0 ** rng.uniform(-4, 2, (200, 1))
    p2 = sta.phi2(x, sp)
    Jp1 = (sta.jacobian_phi1(x, sp) @ sta.phi1(x, sp)[..., None])[..., 0]
    cp1 = sta.c_scalar(x, sp)[:, None] * sta.phi1(x, sp)
    np.testing.assert_allclose(p2, Jp1, rtol=1e-12)
    np.testing.assert_allclose(p2, cp1, rtol=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.05, 0.5), st.floats(0.1, 5), st.floats(0.1, 5),
       st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=3))
def test_script_j_eigenvalues(p, alpha, beta, xs):
    x = np.asarray(xs)
    r = np.linalg.norm(x)
    if r < 1e-6:
        return
    sp = StaParams(alpha=alpha, beta=beta, p=p)
    w = np.linalg.eigvalsh(sta.script_j(x, sp))
    upper = sta.script_j_upper(r, sp)
    np.testing.assert_allclose(np.sort(w), np.sort([1.0, upper, upper]), atol=1e-10)
    assert 1.0 <= upper < 1.0 / (1.0 - p)


def test_script_j_along_x_is_one(rng):
    x = rng.standard_normal(4)
    Jc = sta.script_j(x, SP)
    np.testing.assert_allclose(Jc @ x, x, rtol=1e-12)


def test_control_law():
    sp = SP.with_gains(2.0, 3.0)
    x = np.array([4.0, 0.0])
    v = np.array([1.0, -1.0])
    G0 = np.diag([2.0, 4.0])
    u, vd = sta.control_and_derivative(x, v, G0, sp)
    np.testing.assert_allclose(u, -2.0 * np.array([6.0, 0.0]) + np.array([0.5, -0.25]))
    np.testing.assert_allclose(vd, -3.0 * 1.25 * np.array([6.0, 0.0]))
