from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from vmcoal.errors import PreconditionError, ValidationError
from vmcoal.inversion import (
    Method,
    eta_fixed_point,
    f_z,
    fixed_point_iterates,
    flow_path,
    invert_minimal,
    jacobian_F,
    minimal_curve,
    ode_flow_invert,
    psi,
)
from vmcoal.linalg import RegionLabel, rho_scaled

BIP = [[0.0, 1.0], [1.0, 0.0]]


def scalar_root(z):
    # smaller root of y e^-y = z e^-z on (0, 1), independent bracketing oracle
    u = z * math.exp(-z)
    return brentq(lambda y: y * math.exp(-y) - u, 0.0, 1.0, xtol=1e-15)


Y2 = scalar_root(2.0)


def weight_matrices(k_max=3):
    def build(args):
        k, vals, zero = args
        A = np.array(vals).reshape(k, k)
        A[np.array(zero).reshape(k, k)] = 0.0
        A = np.triu(A) + np.triu(A, 1).T
        # keep irreducible by forcing a chain
        for i in range(k - 1):
            if A[i, i + 1] == 0:
                A[i, i + 1] = A[i + 1, i] = 0.5
        if k == 1 and A[0, 0] == 0:
            A[0, 0] = 1.0
        return A

    return st.integers(1, k_max).flatmap(
        lambda k: st.tuples(
            st.just(k),
            st.lists(st.floats(0.2, 2.0), min_size=k * k, max_size=k * k),
            st.lists(st.booleans(), min_size=k * k, max_size=k * k),
        )
    ).map(build)


def test_oracle_sanity():
    assert Y2 == pytest.approx(0.4063757, abs=1e-7)
    assert Y2 * math.exp(-Y2) == pytest.approx(2 * math.exp(-2), rel=1e-14)


def test_psi_examples():
    assert psi([1.0], [[1.0]])[0] == pytest.approx(math.exp(-1), rel=1e-15)
    np.testing.assert_allclose(psi([1, 1], BIP), [math.exp(-1)] * 2, rtol=1e-15)
    np.testing.assert_allclose(psi([2, 0.25], BIP), [2 * math.exp(-0.25), 0.25 * math.exp(-2)], rtol=1e-15)


def test_psi_rejects_bad_input():
    with pytest.raises(ValidationError):
        psi([0.0, 1.0], BIP)
    with pytest.raises(ValidationError):
        psi([1.0], BIP)


def test_invert_scalar_benchmark():
    res = invert_minimal([2.0], [[1.0]])
    assert res.y[0] == pytest.approx(Y2, abs=1e-10)
    assert res.region_of_input is RegionLabel.EXTERIOR


def test_invert_bipartite_symmetric():
    res = invert_minimal([2.0, 2.0], BIP)
    np.testing.assert_allclose(res.y, [Y2, Y2], atol=1e-10)
    assert np.all(res.y < 2.0)


def test_invert_interior_and_boundary_are_identity():
    z = np.array([0.3, 0.7])
    res = invert_minimal(z, BIP)
    assert res.region_of_input is RegionLabel.INTERIOR
    np.testing.assert_allclose(res.y, z, rtol=1e-12)
    res = invert_minimal([1.0, 1.0], BIP)
    assert res.region_of_input is RegionLabel.BOUNDARY
    np.testing.assert_array_equal(res.y, [1.0, 1.0])


def test_invert_rejects_reducible_and_unknown_method():
    with pytest.raises(ValidationError):
        invert_minimal([1.0, 1.0], [[1, 0], [0, 1]])
    with pytest.raises(PreconditionError):
        invert_minimal([2.0], [[1.0]], method="bisection")
    with pytest.raises(PreconditionError):
        invert_minimal([0.5], [[1.0]], method="ode")


@settings(max_examples=40, deadline=None)
@given(weight_matrices(), st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3), st.floats(0.05, 0.98))
def test_round_trip_inside_closed_region(V, raw, target):
    k = V.shape[0]
    z = np.array(raw[:k])
    z *= target / rho_scaled(V, z)
    res = invert_minimal(z, V)
    np.testing.assert_allclose(res.y, z, rtol=1e-8, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(weight_matrices(), st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3), st.floats(1.001, 4.0))
def test_exterior_inverse_is_minimal_and_inside(V, raw, target):
    k = V.shape[0]
    z = np.array(raw[:k])
    z *= target / rho_scaled(V, z)
    res = invert_minimal(z, V)
    assert res.residual <= 1e-10 * max(1.0, float(np.max(psi(z, V))))
    assert rho_scaled(V, res.y) <= 1 + 1e-10
    assert np.all(res.y < z)
    # y is the limit of the monotone iteration from below, hence below every solution
    np.testing.assert_allclose(psi(res.y, V), psi(z, V), rtol=1e-9)


def test_fixed_point_iterates_increase():
    z = np.array([2.0])
    u = psi(z, [[1.0]])
    it = fixed_point_iterates(u, [[1.0]], max_iter=50)
    prev = next(it)
    for y in it:
        assert y[0] >= prev[0]
        assert y[0] <= Y2 + 1e-15
        prev = y


def test_fixed_point_and_ode_agree():
    rng = np.random.default_rng(7)
    for _ in range(5):
        A = rng.uniform(0.2, 2.0, (3, 3))
        V = np.triu(A) + np.triu(A, 1).T
        z = rng.uniform(0.2, 1.0, 3)
        z *= rng.uniform(1.05, 3.0) / rho_scaled(V, z)
        a = invert_minimal(z, V, method="fixed_point").y
        b = ode_flow_invert(z, V).y
        assert np.max(np.abs(a - b)) <= 1e-7


def test_eta_examples():
    c = eta_fixed_point([2.0], [[1.0]])
    assert c.eta[0] == pytest.approx(0.5, abs=1e-12)
    assert 2 * (1 - c.eta[0]) == pytest.approx(1 / c.eta[0] - 1, abs=1e-12)
    c = eta_fixed_point([math.e], [[1.0]])
    assert c.eta[0] == pytest.approx(math.exp(-1), abs=1e-12)
    c = eta_fixed_point([2.0, 2.0], BIP)
    np.testing.assert_allclose(c.eta, [0.5, 0.5], atol=1e-12)
    assert c.rho_eta == pytest.approx(1.0, abs=1e-9)
    assert c.eta1_residual < 1e-12
    assert np.all(c.f_value > 0)


def test_eta_requires_exterior():
    with pytest.raises(PreconditionError):
        eta_fixed_point([0.5], [[1.0]])


def test_ode_flow_scalar_and_monitors():
    z = np.array([2.0])
    V = [[1.0]]
    res = ode_flow_invert(z, V)
    assert res.method is Method.ODE_FLOW
    assert res.y[0] == pytest.approx(Y2, abs=1e-9)
    cert = eta_fixed_point(z, V)
    x_half, x_end = flow_path(z, V, cert, [0.5, 1.0])
    assert np.max(np.abs(f_z(x_half, z, V) - 0.5 * cert.f_value)) <= 1e-9
    assert np.max(np.abs(f_z(x_end, z, V))) <= 1e-9
    assert res.flow_monitor <= 1e-9


def test_ode_flow_near_boundary():
    # eta is close to 1 here, which forces a very small delta
    z = np.array([1.0005, 1.0005])
    res = invert_minimal(z, BIP)
    assert res.method in (Method.ODE_FLOW, Method.NEWTON_POLISH)
    assert rho_scaled(BIP, res.y) <= 1 + 1e-10
    assert np.all(res.y < z)
    expected = scalar_root(1.0005)
    np.testing.assert_allclose(res.y, [expected] * 2, atol=1e-8)


def test_minimal_curve_examples():
    assert minimal_curve([1.0], [[1.0]], 0.7)[0] == pytest.approx(0.7, rel=1e-12)
    assert minimal_curve([1.0], [[1.0]], 2.0)[0] == pytest.approx(Y2, abs=1e-10)
    np.testing.assert_allclose(minimal_curve([1, 1], BIP, 1.0), [1, 1], rtol=1e-12)
    with pytest.raises(PreconditionError):
        minimal_curve([1.0], [[1.0]], 0.0)


def test_minimal_curve_decays_after_gelation():
    t = 16.0
    y = minimal_curve([1.0], [[1.0]], t)
    assert y[0] / t < 1e-3


def test_jacobian_examples():
    z = np.array([0.4, 0.9])
    np.testing.assert_allclose(jacobian_F(z, z, BIP), np.eye(2) - np.diag(z) @ np.array(BIP), rtol=1e-15)
    J = jacobian_F([Y2], [2.0], [[1.0]])
    assert J[0, 0] == pytest.approx(1 - 2 * math.exp(Y2 - 2), rel=1e-14)
    assert J[0, 0] == pytest.approx(1 - Y2, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(weight_matrices(), st.lists(st.floats(0.1, 2.0), min_size=6, max_size=6))
def test_jacobian_matches_finite_differences(V, raw):
    k = V.shape[0]
    x, z = np.array(raw[:k]), np.array(raw[3 : 3 + k])

    def F(x):
        return x - z * np.exp(V @ (x - z))

    h = 1e-6
    fd = np.column_stack([(F(x + h * e) - F(x - h * e)) / (2 * h) for e in np.eye(k)])
    J = jacobian_F(x, z, V)
    assert np.max(np.abs(J - fd)) <= 1e-6 * max(1.0, np.max(np.abs(J)))
