from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import jostwang_laplacians, liouville_symbolic, _r
from todabif.closed_forms import (
    JostWangParams,
    LiouvilleParams,
    gudnason_mu,
    jostwang_derivatives,
    jostwang_eval,
    liouville_eval,
    radial_laplacian,
)


def test_liouville_value_at_origin_mu2():
    U, dU, d2U = liouville_eval(LiouvilleParams(mu=2.0, delta=1.0), 0.0)
    assert U == pytest.approx(math.log(0.25), abs=1e-15)
    assert dU == 0.0


def test_liouville_far_field_constant():
    r = 1e6
    U, _, _ = liouville_eval(LiouvilleParams(mu=0.0, delta=1.0), r)
    assert U + 4 * math.log(r) == pytest.approx(math.log(32.0), abs=1e-9)


def test_liouville_residual_specific_point():
    p = LiouvilleParams(mu=-1.0, delta=2.0)
    U, dU, d2U = liouville_eval(p, 3.0)
    assert abs(-d2U - dU / 3.0 - (2 + p.mu) * math.exp(U)) < 1e-12


def test_liouville_matches_symbolic_derivatives():
    U, dU, d2U = liouville_symbolic(-0.5, 1.5)
    p = LiouvilleParams(mu=-0.5, delta=1.5)
    for r in (0.3, 2.0, 17.0):
        got = liouville_eval(p, r)
        exp = [float(e.subs(_r, r)) for e in (U, dU, d2U)]
        np.testing.assert_allclose(got, exp, rtol=1e-13, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(
    mu=st.floats(-1.99, 10.0),
    delta=st.floats(1e-3, 1e3),
)
def test_liouville_residual_property(mu, delta):
    p = LiouvilleParams(mu=mu, delta=delta)
    r = np.concatenate([[0.0], np.logspace(-4, 4, 60)])
    U, dU, d2U = liouville_eval(p, r)
    res = -radial_laplacian(r, dU, d2U) - (2 + mu) * np.exp(U)
    scale = np.maximum(1.0, (2 + mu) * np.exp(U) + np.abs(d2U))
    assert np.all(np.abs(res) <= 1e-10 * scale)


@settings(max_examples=40, deadline=None)
@given(mu=st.floats(-1.9, 3.0), delta=st.floats(0.01, 100.0), r=st.floats(0.0, 1e4))
def test_liouville_scaling_covariance(mu, delta, r):
    U1 = liouville_eval(LiouvilleParams(mu=mu, delta=delta), r)[0]
    U2 = liouville_eval(LiouvilleParams(mu=mu, delta=1.0), r / math.sqrt(delta))[0]
    assert U1 == pytest.approx(U2 - math.log(delta), abs=1e-11)


@pytest.mark.parametrize("bad", [dict(mu=-2.0, delta=1.0), dict(mu=0.0, delta=0.0), dict(mu=-3.0, delta=1.0)])
def test_liouville_rejects(bad):
    with pytest.raises(ValueError):
        LiouvilleParams(**bad)


def test_liouville_rejects_off_center():
    with pytest.raises(ValueError):
        liouville_eval(LiouvilleParams(mu=0.0, delta=1.0, center=(1.0, 0.0)), 1.0)


def test_jostwang_origin():
    u, v = jostwang_eval(JostWangParams(1.0, 1.0), 0.0)
    assert u == pytest.approx(math.log(4.0), abs=1e-15)
    assert v == pytest.approx(math.log(16.0), abs=1e-15)


@pytest.mark.parametrize("a1,a2,r", [(1.0, 2.0, 1.5), (0.7, 1.3, 0.2), (2.0, 0.5, 12.0)])
def test_jostwang_derivatives_match_symbolic(a1, a2, r):
    u, du, d2u, v, dv, d2v = jostwang_derivatives(JostWangParams(a1, a2), r)
    su, sv, lu, lv = jostwang_laplacians(a1, a2, r)
    assert u == pytest.approx(su, rel=1e-13)
    assert v == pytest.approx(sv, rel=1e-13)
    assert radial_laplacian(r, du, d2u) == pytest.approx(lu, rel=1e-11, abs=1e-13)
    assert radial_laplacian(r, dv, d2v) == pytest.approx(lv, rel=1e-11, abs=1e-13)


def test_jostwang_solves_cartan_system_analytically():
    p = JostWangParams(1.0, 2.0)
    r = np.concatenate([[0.0], np.logspace(-3, 3, 50)])
    u, du, d2u, v, dv, d2v = jostwang_derivatives(p, r)
    ru = -radial_laplacian(r, du, d2u) - 2 * np.exp(u) + np.exp(v)
    rv = -radial_laplacian(r, dv, d2v) - 2 * np.exp(v) + np.exp(u)
    assert np.max(np.abs(ru)) < 1e-11
    assert np.max(np.abs(rv)) < 1e-11


def test_jostwang_second_order_fd_residual():
    p = JostWangParams(1.0, 2.0)
    r0 = 1.5
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        rr = np.array([r0 - h, r0, r0 + h])
        u, v = jostwang_eval(p, rr)
        lap = (u[2] - 2 * u[1] + u[0]) / h**2 + (u[2] - u[0]) / (2 * h * r0)
        errs.append(abs(-lap - 2 * math.exp(u[1]) + math.exp(v[1])))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8)


def test_jostwang_log_decay():
    p = JostWangParams(1.0, 1.0)
    r = np.linspace(1.0, 1e3, 200)
    u, v = jostwang_eval(p, r)
    assert np.all(np.isfinite(u)) and np.all(np.isfinite(v))
    assert np.ptp(u + 4 * np.log(r)) < 10 and np.ptp(v + 4 * np.log(r)) < 10


@pytest.mark.parametrize("a1,a2", [(0.0, 1.0), (1.0, -1.0)])
def test_jostwang_rejects(a1, a2):
    with pytest.raises(ValueError):
        JostWangParams(a1, a2)


def test_gudnason_examples():
    assert gudnason_mu(1.0, 1.0) == 0.0
    assert gudnason_mu(1.0, 3.0) == pytest.approx(-1.0, abs=1e-15)
    assert gudnason_mu(2.0, 1e-12) == pytest.approx(2.0, abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_gudnason_range(a, b):
    assert -2.0 < gudnason_mu(a, b) < 2.0


@pytest.mark.parametrize("a,b", [(0.0, 1.0), (1.0, 0.0), (-1.0, 2.0)])
def test_gudnason_rejects(a, b):
    with pytest.raises(ValueError):
        gudnason_mu(a, b)
