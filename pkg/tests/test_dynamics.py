import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from morsepart import kernel
from morsepart.dynamics import (
    ParticleState,
    Tolerances,
    detach_overlaps,
    gap_lower_bound,
    integrate,
    rhs_convolution,
    rhs_difference_quotient,
)
from morsepart.errors import IntegrationError, PreconditionError

HALF_1_MINUS_E1 = 0.5 * (1 - math.exp(-1.0))


def direct_velocities(x, eps):
    """Literal pairwise form: difference quotients of w over neighbour gaps."""
    x = np.asarray(x, dtype=float)
    N = x.size - 1
    v = np.zeros_like(x)
    for i in range(N + 1):
        for j in range(N):
            # (1/N) sum_j (w(x_i - x_{j+1}) - w(x_i - x_j)) / (x_{j+1} - x_j)
            v[i] += (kernel.w(eps, x[i] - x[j + 1]) - kernel.w(eps, x[i] - x[j])) / (x[j + 1] - x[j]) / N
    return v


strict_states = st.builds(
    lambda n, eps, seed: ParticleState(
        np.cumsum(np.random.default_rng(seed).uniform(1e-3, 1.0, n + 1)), 0.0, eps
    ),
    st.integers(1, 60),
    st.floats(0.05, 2.0),
    st.integers(0, 2 ** 31),
)


class TestRhs:
    @pytest.mark.parametrize("fn", [rhs_difference_quotient, rhs_convolution])
    def test_two_particles(self, fn):
        v = fn(ParticleState([-0.5, 0.5], 0.0, 1.0))
        np.testing.assert_allclose(v, [-HALF_1_MINUS_E1, HALF_1_MINUS_E1], rtol=1e-14)

    @given(strict_states)
    def test_matches_pairwise_sum(self, s):
        np.testing.assert_allclose(rhs_difference_quotient(s), direct_velocities(s.positions, s.epsilon),
                                   rtol=1e-10, atol=1e-12 / s.epsilon ** 2)

    @given(strict_states)
    def test_routes_agree(self, s):
        a, b = rhs_difference_quotient(s), rhs_convolution(s)
        assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(b))

    def test_equally_spaced(self):
        s = ParticleState(np.linspace(0, 1, 5), 0.0, 1.0)
        a, b = rhs_difference_quotient(s), rhs_convolution(s)
        assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(b))

    @given(st.integers(1, 40), st.floats(0.05, 2.0), st.integers(0, 2 ** 31))
    def test_antisymmetric(self, n, eps, seed):
        half = np.cumsum(np.random.default_rng(seed).uniform(0.01, 1.0, n))
        x = np.concatenate((-half[::-1], [0.0], half))
        v = rhs_difference_quotient(ParticleState(x, 0.0, eps))
        np.testing.assert_allclose(v, -v[::-1], atol=1e-12 * np.max(np.abs(v)))

    def test_interior_velocity_small(self):
        N, eps = 2000, 0.05
        x = np.linspace(-10, 10, N + 1)
        v = rhs_difference_quotient(ParticleState(x, 0.0, eps))
        dist = np.minimum(x - x[0], x[-1] - x)
        bound = 0.5 / eps * np.exp(-dist / eps)
        # rounding floor of the O(N) sums
        assert np.all(np.abs(v) <= bound + 1e-12)
        assert np.max(np.abs(v[N // 4 : 3 * N // 4])) <= 1e-12

    def test_cluster_velocities_ordered(self):
        s = detach_overlaps(ParticleState([0.0, 0.0, 0.0, 0.0, 1.0], 0.0, 0.5), 1e-6)
        v = rhs_difference_quotient(s)
        assert np.all(np.diff(v[:4]) > 0)

    @pytest.mark.parametrize("fn", [rhs_difference_quotient, rhs_convolution])
    def test_ties_rejected(self, fn):
        with pytest.raises(PreconditionError):
            fn(ParticleState([0.0, 0.0, 1.0], 0.0, 1.0))


class TestState:
    def test_validation(self):
        with pytest.raises(PreconditionError):
            ParticleState([1.0, 0.0], 0.0, 1.0)
        with pytest.raises(PreconditionError):
            ParticleState([0.0, np.nan], 0.0, 1.0)
        with pytest.raises(PreconditionError):
            ParticleState([0.0, 1.0], 0.0, 0.0)

    def test_gaps(self):
        s = ParticleState([0.0, 0.25, 1.0], 0.0, 1.0)
        assert s.N == 2
        np.testing.assert_allclose(s.gaps, [0.25, 0.75])


class TestDetach:
    def test_pair(self):
        out = detach_overlaps(ParticleState([0.0, 0.0], 0.0, 1.0), 1e-9)
        np.testing.assert_allclose(out.positions, [-5e-10, 5e-10], rtol=1e-12)

    def test_cluster_and_neighbour(self):
        out = detach_overlaps(ParticleState([0.0, 0.0, 0.0, 1.0], 0.0, 1.0), 1e-9)
        np.testing.assert_allclose(out.positions, [-5e-10, 0.0, 5e-10, 1.0], rtol=1e-12, atol=1e-25)

    def test_strict_unchanged(self):
        s = ParticleState([0.0, 0.5, 2.0], 0.0, 1.0)
        assert detach_overlaps(s, 1e-3) is s

    @given(st.lists(st.integers(-3, 3), min_size=2, max_size=30), st.floats(1e-9, 0.5))
    def test_properties(self, ints, eta):
        x = np.sort(np.array(ints, dtype=float))
        s = ParticleState(x, 0.0, 1.0)
        out = detach_overlaps(s, eta)
        assert np.all(np.diff(out.positions) > 0)
        assert np.mean(out.positions) == pytest.approx(np.mean(x), abs=1e-12)
        assert np.max(np.abs(out.positions - x)) <= 0.5 * eta + 1e-15


class TestGapBound:
    def test_values(self):
        assert gap_lower_bound(0.0, 0.3, 0.5, 10) == 0.3
        assert gap_lower_bound(1e6, 0.3, 0.5, 10) == pytest.approx(0.1, rel=1e-15)
        eps = 0.4
        assert gap_lower_bound(2 * eps ** 3 * math.log(2), 0.0, eps, 8) == pytest.approx(eps / 8, rel=1e-14)


class TestIntegrate:
    def test_symmetric_pair_stays_symmetric(self):
        tr = integrate(ParticleState([-0.3, 0.3], 0.0, 1.0), 1.0)
        x = tr.positions
        np.testing.assert_allclose(x[:, 0], -x[:, 1], atol=1e-10)
        assert np.all(np.diff(x[:, 1]) > 0)

    def test_dirac_gaps(self):
        tr = integrate(ParticleState(np.zeros(51), 0.0, 0.2), 1.0, record_steps=True)
        assert tr.detached
        assert np.all(tr.final.gaps >= 0.9 * gap_lower_bound(1.0, 0.0, 0.2, 50))
        assert min(tr.steps.min_gap_ratio) >= 0.9

    def test_snapshots_hit_exactly(self):
        times = [0.1, 0.25, 0.5]
        tr = integrate(ParticleState([-1.0, 0.0, 1.0], 0.0, 0.5), 0.5, snapshots=times)
        np.testing.assert_array_equal(tr.times, [0.0] + times)

    def test_bad_snapshots(self):
        with pytest.raises(PreconditionError):
            integrate(ParticleState([-1.0, 1.0], 0.0, 0.5), 0.5, snapshots=[0.0, 0.2])
        with pytest.raises(PreconditionError):
            integrate(ParticleState([-1.0, 1.0], 0.0, 0.5), 0.0)

    def test_tolerance_halving_self_consistent(self):
        s = ParticleState(np.linspace(-1, 1, 21) ** 3, 0.0, 0.3)
        ref = integrate(s, 0.5, tol=Tolerances(rel=1e-12), snapshots=[0.5]).final.positions
        coarse = integrate(s, 0.5, tol=Tolerances(rel=1e-6), snapshots=[0.5]).final.positions
        fine = integrate(s, 0.5, tol=Tolerances(rel=5e-7), snapshots=[0.5]).final.positions
        err_coarse = np.max(np.abs(coarse - ref))
        assert np.max(np.abs(coarse - fine)) <= 2 * err_coarse + 1e-14
        assert err_coarse <= 1e-4

    @pytest.mark.parametrize("eta", [1e-4, 1e-6])
    def test_detachment_sensitivity_linear_in_eta(self, eta):
        s = ParticleState(np.zeros(51), 0.0, 0.2)
        ref = integrate(s, 1.0, eta=eta / 100, snapshots=[1.0]).final.positions
        x = integrate(s, 1.0, eta=eta, snapshots=[1.0]).final.positions
        assert np.max(np.abs(x - ref)) <= 0.1 * eta

    def test_step_underflow_reports_state(self):
        s = ParticleState(np.linspace(0, 1, 11), 0.0, 0.05)
        with pytest.raises(IntegrationError) as info:
            integrate(s, 1.0, tol=Tolerances(rel=1e-8, dt_min=1.0))
        assert info.value.state is not None

    def test_dense_output_between_steps(self):
        s = ParticleState(np.linspace(-1, 1, 11), 0.0, 0.3)
        tr = integrate(s, 0.2, snapshots=[0.2], record_steps=True, dense_points=3)
        t = np.array([st.time for st in tr.dense])
        assert np.all(np.diff(t) > 0)
        # every dense state is close to an accurate run stopped at the same time
        probe = tr.dense[len(tr.dense) // 2]
        ref = integrate(s, probe.time, tol=Tolerances(rel=1e-12), snapshots=[probe.time]).final
        assert np.max(np.abs(probe.positions - ref.positions)) <= 1e-6
