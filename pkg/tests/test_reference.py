import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from morsepart.errors import PreconditionError
from morsepart.reference import (
    BARENBLATT_A,
    BARENBLATT_C,
    BarenblattParams,
    barenblatt,
    barenblatt_cdf,
    barenblatt_density,
    barenblatt_quantile,
    barenblatt_support,
    fd_pme_solve,
    l2_distance,
    l2_distance_to_barenblatt,
)
from morsepart.transport import PiecewiseConstantDensity


def test_constant_from_unit_mass():
    # re-derive C: int (C - xi^2/12)_+ dxi = 1 with support |xi| <= sqrt(12 C)
    def mass(C):
        a = math.sqrt(12 * C)
        return quad(lambda xi: C - xi * xi / 12, -a, a)[0]

    lo, hi = 0.1, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if mass(mid) < 1 else (lo, mid)
    assert BARENBLATT_C == pytest.approx(lo, rel=1e-12)
    assert BARENBLATT_C == pytest.approx(0.3605623925768521, rel=1e-15)
    assert BARENBLATT_A == pytest.approx(9 ** (1 / 3), rel=1e-15)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_unit_mass(t):
    lo, hi = barenblatt_support(t)
    assert quad(lambda x: barenblatt(x, t), lo, hi, epsabs=1e-13)[0] == pytest.approx(1.0, abs=1e-10)
    assert hi == pytest.approx(math.sqrt(12 * BARENBLATT_C) * (t / 2) ** (1 / 3), rel=1e-14)
    assert barenblatt(hi, t) == pytest.approx(0.0, abs=1e-15)
    assert barenblatt(hi * 1.01, t) == 0.0


def test_solves_pme():
    # finite-difference residual of rho_t - 1/2 (rho^2)_xx at interior points
    t, h, k = 1.0, 1e-3, 1e-5
    x = np.linspace(-0.9, 0.9, 37) * barenblatt_support(t)[1]
    rho_t = (barenblatt(x, t + k) - barenblatt(x, t - k)) / (2 * k)
    sq = lambda y: barenblatt(y, t) ** 2
    lap = (sq(x + h) - 2 * sq(x) + sq(x - h)) / h ** 2
    assert np.max(np.abs(rho_t - 0.5 * lap)) <= 1e-6


@given(st.floats(1e-6, 1 - 1e-6), st.floats(0.1, 10))
def test_quantile_inverts_cdf(z, t):
    assert barenblatt_cdf(barenblatt_quantile(z, t), t) == pytest.approx(z, abs=1e-12)


@pytest.mark.parametrize("x", [-1.0, -0.3, 0.0, 0.7])
def test_cdf_matches_quadrature(x):
    lo, _ = barenblatt_support(1.0)
    assert barenblatt_cdf(x, 1.0) == pytest.approx(quad(lambda y: barenblatt(y, 1.0), lo, x)[0], abs=1e-12)


def test_params_positions():
    p = BarenblattParams(1.0)
    x = p.positions(10)
    assert x[0] == pytest.approx(barenblatt_support(1.0)[0], rel=1e-12)
    np.testing.assert_allclose(np.diff(barenblatt_cdf(x, 1.0)), 0.1, atol=1e-12)
    with pytest.raises(PreconditionError):
        BarenblattParams(0.0)


def test_nonpositive_time():
    with pytest.raises(PreconditionError):
        barenblatt(0.0, 0.0)


class TestFiniteDifference:
    def run(self, M, T=0.5):
        L = 1.25 * barenblatt_support(1.0 + T)[1]
        edges = np.linspace(-L, L, M + 1)
        out = fd_pme_solve(barenblatt_density(1.0, edges), T, (-L, L, M))
        return out, l2_distance_to_barenblatt(out, 1.0 + T)

    def test_oracle_accuracy(self):
        out, err = self.run(4000)
        assert err <= 5e-3
        assert out.mass == pytest.approx(1.0, abs=1e-10)

    def test_first_order_convergence(self):
        errs = [self.run(M)[1] for M in (250, 500, 1000)]
        # frozen from the convergence study on this grid; first order in dx
        assert errs[0] == pytest.approx(2.5722e-3, rel=1e-3)
        for a, b in zip(errs, errs[1:]):
            assert 0.4 <= b / a <= 0.6

    def test_flattening_bump(self):
        d = PiecewiseConstantDensity([-0.5, 0.5], [1.0])
        out = fd_pme_solve(d, 0.2, (-2.0, 2.0, 400))
        assert out.values.max() < 1.0
        assert out.mass == pytest.approx(1.0, abs=1e-10)

    def test_grid_errors(self):
        d = PiecewiseConstantDensity([-0.5, 0.5], [1.0])
        with pytest.raises(PreconditionError):
            fd_pme_solve(d, 0.1, (-0.5, 0.5, 100))
        with pytest.raises(PreconditionError):
            fd_pme_solve(d, 0.1, (-2.0, 2.0, 20))


def test_l2_distance():
    a = PiecewiseConstantDensity([0.0, 1.0], [1.0])
    b = PiecewiseConstantDensity([0.0, 2.0], [0.5])
    assert l2_distance(a, b) == pytest.approx(math.sqrt(0.25 + 0.25), rel=1e-15)
    exact = barenblatt_density(1.0, np.linspace(-1.7, 1.7, 20001))
    assert l2_distance_to_barenblatt(exact, 1.0) <= 1e-4
