from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import assoc_legendre_value, rodrigues_value
from todabif.radial_calculus import make_grid
from todabif.spectral import (
    SpectralMode,
    bifurcation_mu,
    eigencondition,
    kernel_radial,
    legendre_P,
    legendre_P_assoc,
    nearest_mode,
    scaling_mode,
    spectrum,
    translation_modes,
)


def test_P2_values():
    np.testing.assert_array_equal(legendre_P(2, np.array([-1.0, 0.0, 1.0])), [1.0, -0.5, 1.0])


@pytest.mark.parametrize("n", range(0, 15))
def test_endpoint_values(n):
    assert legendre_P(n, 1.0) == 1.0
    assert legendre_P(n, -1.0) == (-1) ** n


def test_P5_against_rodrigues():
    assert legendre_P(5, 0.3) == pytest.approx(float(rodrigues_value(5, Fraction(3, 10))), abs=1e-15)


def test_recurrence_vs_rodrigues_grid():
    ts = [Fraction(k, 10) for k in range(-10, 11)]
    for n in range(13):
        exact = np.array([float(rodrigues_value(n, t)) for t in ts])
        got = legendre_P(n, np.array([float(t) for t in ts]))
        assert np.max(np.abs(got - exact)) <= 1e-12


def test_orthogonality():
    x, w = np.polynomial.legendre.leggauss(20)
    for n in range(9):
        for m in range(9):
            val = np.sum(w * legendre_P(n, x) * legendre_P(m, x))
            exp = 2.0 / (2 * n + 1) if n == m else 0.0
            assert abs(val - exp) < 1e-10


def test_rejects_out_of_range():
    with pytest.raises(ValueError):
        legendre_P(2, 1.0 + 1e-9)
    legendre_P(2, 1.0 + 1e-13)


def test_assoc():
    assert legendre_P_assoc(4, 0, 0.37) == pytest.approx(legendre_P(4, 0.37), abs=1e-15)
    assert legendre_P_assoc(1, 1, 0.0) == pytest.approx(-1.0, abs=1e-15)
    assert legendre_P_assoc(2, 2, 0.5) == pytest.approx(2.25, abs=1e-14)
    with pytest.raises(ValueError):
        legendre_P_assoc(2, 3, 0.1)


@pytest.mark.parametrize("n,m,t", [(3, 1, 0.2), (4, 2, -0.6), (5, 3, 0.9), (6, 6, 0.1)])
def test_assoc_symbolic(n, m, t):
    assert legendre_P_assoc(n, m, t) == pytest.approx(assoc_legendre_value(n, m, t), rel=1e-12, abs=1e-14)


def test_bifurcation_values():
    assert bifurcation_mu(1) == 0.0
    assert bifurcation_mu(2) == -1.0
    assert bifurcation_mu(3) == float(Fraction(-10, 7))


def test_bifurcation_exact_rational():
    for n in range(40):
        exact = Fraction(2 * (2 - n - n * n), 2 + n + n * n)
        assert bifurcation_mu(n) == float(exact)


def test_monotone_and_limit():
    vals = [bifurcation_mu(n) for n in range(60)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > -2 and vals[-1] < -1.99


def test_eigencondition_examples():
    assert eigencondition(-1.0) == 2
    assert eigencondition(0.0) == 1
    assert eigencondition(-0.5) is None


def test_eigencondition_inverse():
    for n in range(21):
        assert eigencondition(bifurcation_mu(n)) == n


@settings(max_examples=100, deadline=None)
@given(st.floats(-1.999, 1.999))
def test_eigencondition_only_at_mu_n(mu):
    n = eigencondition(mu)
    if n is not None:
        assert abs(bifurcation_mu(n) - mu) < 1e-8


def test_nearest_mode():
    n, dist = nearest_mode(-1.0003)
    assert n == 2 and dist < 1e-3


def test_spectrum_multiplicity():
    modes = spectrum(5)
    assert [(m.n, m.mu_n, m.multiplicity) for m in modes[:3]] == [(1, 0.0, 3), (2, -1.0, 5), (3, bifurcation_mu(3), 7)]
    assert all(isinstance(m, SpectralMode) and m.kind == "radial-kernel" for m in modes)
    assert modes[1].eigenfunction(np.array([0.0])) == pytest.approx(-0.5)


def test_kernel_radial_samples():
    g = make_grid(64)
    k1 = kernel_radial(1, g)
    np.testing.assert_allclose(k1, (8 - g.nodes_r**2) / (8 + g.nodes_r**2), atol=1e-14)
    assert kernel_radial(3, g)[0] == 1.0
    with pytest.raises(ValueError):
        kernel_radial(0, g)
    from todabif.radial_calculus import RadialGrid

    gg = RadialGrid.from_t(np.array([1.0, 0.0, -0.5]))
    assert kernel_radial(2, gg)[1] == -0.5


def test_scaling_mode():
    from todabif.radial_calculus import RadialGrid

    g = RadialGrid.from_t(np.array([1.0, 0.0, -0.999999]))
    s = scaling_mode(g)
    assert s[0] == 1.0 and s[1] == 0.0 and s[2] == pytest.approx(-1.0, abs=1e-5)


def test_translation_modes_shape():
    a, b = translation_modes(np.array([0.0, 1.0]), np.array([0.0, np.pi / 2]))
    np.testing.assert_allclose(a, [0.0, np.cos(np.pi / 2) / 9.0], atol=1e-15)
    np.testing.assert_allclose(b, [0.0, 1.0 / 9.0])


def test_kernel_annihilated_by_discrete_operator():
    from todabif.radial_calculus import sphere_laplacian_apply

    for n in range(1, 7):
        errs = []
        for N in (200, 400):
            g = make_grid(N)
            P = kernel_radial(n, g)
            # -Δ_S P - n(n+1) P is the sphere form of -ΔP - (2-μ_n) e^{U_{μ_n}} P
            res = -sphere_laplacian_apply(P, g) - n * (n + 1) * P
            errs.append(np.max(np.abs(res[1:-1])) / g.h**2)
        assert errs[1] < 2 * (n * (n + 1)) ** 2
        assert errs[1] == pytest.approx(errs[0], rel=0.2)
