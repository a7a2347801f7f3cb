import math

import numpy as np
import pytest
from scipy import special

from chaoskit import bounds
from chaoskit.bounds import (
    BoundInputs,
    PreconditionError,
    RateLadder,
    ToleranceError,
    betainc_regularized,
    cdf_sum_identity,
    density_sum_bound,
    density_sum_identity,
    entropy_bound_higher_order,
    entropy_bound_pairwise,
    entropy_bound_reversed,
    hypoexp_cdf,
    hypoexp_cdf_bound,
    hypoexp_cdf_montecarlo,
    hypoexp_cdf_quadrature,
    hypoexp_scaled_density,
    lipschitz_constants,
    quadratic_transport_constant,
    select_truncation_order,
    series_stats,
    series_tail_hypothesis,
    transport_constant_from_exp_moment,
)
from chaoskit.model import SeriesCoefficients


class TestBetaInc:
    def test_against_scipy(self, rng):
        for _ in range(300):
            a = rng.uniform(0.05, 50.0)
            b = rng.uniform(0.05, 50.0)
            x = rng.uniform(0.0, 1.0)
            assert betainc_regularized(a, b, x) == pytest.approx(
                special.betainc(a, b, x), abs=1e-12
            )

    def test_endpoints(self):
        assert betainc_regularized(2.0, 3.0, 0.0) == 0.0
        assert betainc_regularized(2.0, 3.0, 1.0) == 1.0

    def test_large_first_shape(self):
        a = 100_000.0
        for x in (0.2, 0.5, 0.9):
            assert betainc_regularized(a, 1.5, x) == pytest.approx(
                special.betainc(a, 1.5, x), abs=1e-12
            )

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            betainc_regularized(-1.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            betainc_regularized(1.0, 1.0, 1.5)


class TestCdfRoutes:
    def test_level0_is_exponential_cdf(self):
        lad = RateLadder(1.0, 1.0)
        assert hypoexp_cdf(lad, 0, math.log(2.0)) == pytest.approx(0.5, abs=1e-14)

    def test_equal_rates_power_form(self):
        lad = RateLadder(1.0, 1.0)
        t = math.log(2.0)
        assert hypoexp_cdf(lad, 2, t) == pytest.approx(0.125, abs=1e-13)
        assert hypoexp_cdf_quadrature(lad, 2, t) == pytest.approx(0.125, abs=1e-10)

    def test_three_route_agreement_spot(self):
        lad = RateLadder(2.0, 1.0)
        closed = hypoexp_cdf(lad, 3, 0.7)
        quad = hypoexp_cdf_quadrature(lad, 3, 0.7)
        assert abs(closed - quad) < 1e-8
        est, _ = hypoexp_cdf_montecarlo(lad, 3, 0.7, 10**6, seed=123)
        known_se = math.sqrt(closed * (1 - closed) / 10**6)
        assert abs(est - closed) <= 4.0 * known_se

    def test_cdf_edge_cases(self):
        lad = RateLadder(0.5, 2.0)
        assert hypoexp_cdf(lad, 4, 0.0) == 0.0
        assert hypoexp_cdf(lad, 4, 1e4) == pytest.approx(1.0, abs=1e-12)
        with pytest.raises(ValueError):
            hypoexp_cdf(lad, 2, -0.1)
        with pytest.raises(ValueError):
            hypoexp_cdf(lad, -1, 0.1)

    def test_quadrature_level_cap(self):
        with pytest.raises(ValueError):
            hypoexp_cdf_quadrature(RateLadder(1.0, 1.0), 6, 0.5)

    def test_quadrature_level0_is_exact(self):
        lad = RateLadder(1.7, 0.6)
        for t in (0.05, 0.8, 2.0):
            assert hypoexp_cdf_quadrature(lad, 0, t) == pytest.approx(
                -math.expm1(-lad.a * t), abs=1e-14
            )

    def test_quadrature_self_refinement(self):
        # refining the discretization moves the value by far less than the
        # stated 1e-10 tolerance, including at the stiffest grid corner
        for a, b, lvl, t in [(5.0, 5.0, 5, 2.0), (2.0, 1.0, 3, 0.7)]:
            lad = RateLadder(a, b)
            coarse = hypoexp_cdf_quadrature(lad, lvl, t)
            fine = hypoexp_cdf_quadrature(lad, lvl, t, n_nodes=224, panels=8, order=22)
            assert abs(coarse - fine) < 1e-12

    def test_montecarlo_edges(self):
        lad = RateLadder(1.0, 1.0)
        assert hypoexp_cdf_montecarlo(lad, 2, 0.0, 10**4, 1) == (0.0, 0.0)
        est, se = hypoexp_cdf_montecarlo(lad, 2, 1e3, 10**4, 1)
        assert est == 1.0 and se == 0.0
        with pytest.raises(ValueError):
            hypoexp_cdf_montecarlo(lad, 1, 1.0, 10, 1)

    def test_montecarlo_deterministic_and_calibrated(self):
        lad = RateLadder(1.0, 1.0)
        t = math.log(2.0)
        a1 = hypoexp_cdf_montecarlo(lad, 1, t, 10**6, seed=7)
        a2 = hypoexp_cdf_montecarlo(lad, 1, t, 10**6, seed=7)
        assert a1 == a2
        closed = hypoexp_cdf(lad, 1, t)  # 0.25 for these rates
        assert closed == pytest.approx(0.25, abs=1e-13)
        assert abs(a1[0] - closed) <= 4.0 * a1[1]

    def test_montecarlo_grid_matches_closed_and_is_deterministic(self):
        lad = RateLadder(2.0, 1.0)
        ts = (0.1, 0.5, 1.0)
        est, se = bounds.hypoexp_cdf_montecarlo_grid(lad, 3, ts, 10**5, seed=11)
        est2, _ = bounds.hypoexp_cdf_montecarlo_grid(lad, 3, ts, 10**5, seed=11)
        assert np.array_equal(est, est2)
        assert est.shape == (4, 3)
        for lvl in range(4):
            for it, t in enumerate(ts):
                closed = hypoexp_cdf(lad, lvl, t)
                known_se = math.sqrt(closed * (1 - closed) / 10**5)
                assert abs(est[lvl, it] - closed) <= 5.0 * known_se
        with pytest.raises(ValueError):
            bounds.hypoexp_cdf_montecarlo_grid(lad, 2, (0.5,), 10, seed=1)

    def test_monotone_in_time_and_level(self):
        lad = RateLadder(1.5, 0.7)
        ts = [0.1, 0.4, 0.9, 1.7]
        for lvl in range(4):
            vals = [hypoexp_cdf(lad, lvl, t) for t in ts]
            assert all(b >= a for a, b in zip(vals, vals[1:]))
        for t in ts:
            vals = [hypoexp_cdf(lad, lvl, t) for lvl in range(6)]
            assert all(b <= a + 1e-14 for a, b in zip(vals, vals[1:]))


class TestScaledDensity:
    def test_level0(self):
        assert hypoexp_scaled_density(RateLadder(1.0, 2.0), 0, 1.0) == pytest.approx(
            math.exp(-1.0)
        )

    def test_matches_cdf_finite_difference(self):
        lad = RateLadder(2.0, 1.0)
        t, h, lvl = 0.7, 1e-5, 2
        fd = (hypoexp_cdf(lad, lvl, t + h) - hypoexp_cdf(lad, lvl, t - h)) / (
            2.0 * h * lad.rate(lvl)
        )
        assert hypoexp_scaled_density(lad, lvl, t) == pytest.approx(fd, abs=1e-6)

    def test_zero_at_origin_for_positive_level(self):
        assert hypoexp_scaled_density(RateLadder(1.0, 1.0), 3, 0.0) == 0.0


class TestSubgaussianBound:
    def test_saturates_at_one(self):
        # large t pushes e^{-bt} below the Beta mean: trivial bound
        assert hypoexp_cdf_bound(RateLadder(5.0, 0.5), 0, 10.0) == 1.0

    def test_frozen_value(self):
        lad = RateLadder(1.0, 1.0)
        expected = math.exp(-2.0 * 12.0 * (math.exp(-0.1) - 1.0 / 11.0) ** 2)
        assert hypoexp_cdf_bound(lad, 9, 0.1) == pytest.approx(expected, rel=1e-14)
        assert hypoexp_cdf(lad, 9, 0.1) <= expected

    def test_asymptotic_decay_rate(self):
        lad = RateLadder(1.0, 1.0)
        lvl, t = 200, 0.05
        bound = hypoexp_cdf_bound(lad, lvl, t)
        rate = -math.log(bound) / lvl
        assert rate == pytest.approx(2.0 * math.exp(-2.0 * lad.b * t), rel=0.1)

    def test_domination_on_grid(self):
        for a in (0.5, 1.0, 2.0, 5.0):
            for b in (0.5, 1.0, 2.0, 5.0):
                lad = RateLadder(a, b)
                for lvl in range(6):
                    for t in (0.1, 0.5, 1.0, 2.0):
                        assert hypoexp_cdf(lad, lvl, t) <= hypoexp_cdf_bound(
                            lad, lvl, t
                        ) + 1e-12


class TestSumIdentities:
    def test_power0_equal_rates_geometric(self):
        lad = RateLadder(1.0, 1.0)
        closed, truncated = cdf_sum_identity(lad, 0, 0.5)
        assert closed == pytest.approx(math.expm1(0.5), rel=1e-14)
        assert truncated == pytest.approx(closed, rel=1e-9)

    @pytest.mark.parametrize(
        "a,b,p,t", [(2.0, 1.0, 1, 0.5), (3.0, 1.0, 2, 0.3), (1.0, 2.0, 3, 0.4)]
    )
    def test_truncated_matches_closed(self, a, b, p, t):
        closed, truncated = cdf_sum_identity(RateLadder(a, b), p, t)
        assert abs(closed - truncated) / closed <= 1e-8

    def test_density_identity_small_time(self):
        closed, truncated = density_sum_identity(RateLadder(1.0, 1.0), 1e-8)
        assert abs(closed - truncated) / closed <= 1e-6
        assert closed == pytest.approx(1.0, rel=1e-6)  # single surviving term a^2

    def test_density_identity_moderate_time(self):
        closed, truncated = density_sum_identity(RateLadder(2.0, 1.0), 0.4)
        assert abs(closed - truncated) / closed <= 1e-8

    def test_density_envelope_scaling_and_domination(self):
        lad = RateLadder(2.0, 1.0)
        ratio = density_sum_bound(lad, 1.0) / density_sum_bound(lad, 0.5)
        assert ratio == pytest.approx(math.exp(lad.b), rel=1e-12)
        closed, truncated = density_sum_identity(lad, 0.8)
        assert truncated <= density_sum_bound(lad, 0.8)
        assert closed <= density_sum_bound(lad, 0.8)

    def test_density_requires_positive_time(self):
        with pytest.raises(ValueError):
            density_sum_identity(RateLadder(1.0, 1.0), 0.0)

    def test_cap_exceeded_raises(self):
        with pytest.raises(ToleranceError):
            cdf_sum_identity(RateLadder(5.0, 5.0), 2, 2.0)

    def test_explicit_terms_validated(self):
        lad = RateLadder(1.0, 1.0)
        with pytest.raises(ToleranceError):
            cdf_sum_identity(lad, 0, 1.0, terms=3)
        closed, truncated = cdf_sum_identity(lad, 0, 1.0, terms=2000)
        assert truncated == pytest.approx(closed, rel=1e-9)


class TestSeriesStats:
    def test_geometric_closed_forms(self):
        s = SeriesCoefficients.geometric(0.5)
        stats = series_stats(s, p_list=(0, 1, 2), x_list=(1.0, 4.0, 6.5))
        rho = 0.5
        assert stats.moments[0] == pytest.approx(1.0, rel=1e-10)
        assert stats.moments[1] == pytest.approx(1.0 / (1 - rho), rel=1e-10)
        assert stats.moments[2] == pytest.approx((1 + rho) / (1 - rho) ** 2, rel=1e-10)
        for x in (1.0, 4.0, 6.5):
            assert stats.tails[x] == pytest.approx(rho ** math.floor(x), rel=1e-9)

    def test_finite_single_term(self):
        stats = series_stats(
            SeriesCoefficients.finite([1.0]), p_list=(0, 2), x_list=(1.0,)
        )
        assert stats.moments[0] == 1.0
        assert stats.moments[2] == 1.0
        assert stats.tails[1.0] == 0.0

    def test_super_geometric_tail_hypothesis(self):
        s = SeriesCoefficients.super_geometric(0.0, 1.5, 2.0)
        c1, c2, q = series_tail_hypothesis(s)
        stats = series_stats(s, p_list=(0,), x_list=tuple(float(x) for x in range(1, 9)))
        for x, tail in stats.tails.items():
            assert tail <= c1 * math.exp(-c2 * x**q) + 1e-15

    def test_power_cap(self):
        with pytest.raises(ValueError):
            series_stats(SeriesCoefficients.geometric(0.5), p_list=(4,))


class TestSelectTruncationOrder:
    def test_eta_near_one_for_fast_tails(self):
        # unit-mass series with a huge linear tail rate
        s = SeriesCoefficients.super_geometric(0.0, 1000.0, 1.0)
        ell, exponent = select_truncation_order(s, T=1.0, n=100, k=1, mode="subexp")
        assert exponent == pytest.approx(2.0 * (1000.0 - 4.0) / (1000.0 + 8.0), rel=1e-9)
        assert ell >= 1

    def test_boundary_rate_is_rejected(self):
        s = SeriesCoefficients.super_geometric(0.0, 0.4, 1.0)
        with pytest.raises(ValueError):
            select_truncation_order(s, T=0.1, n=100, k=1, mode="subexp")

    def test_floor_formula(self):
        # mass 1, T = 1/8 so the denominator is exactly 1; log(n/k) near 8
        s = SeriesCoefficients.super_geometric(0.0, 50.0, 1.0)
        n = 2981  # log(2981) = 8.0000141...
        ell, exponent = select_truncation_order(s, T=0.125, n=n, k=1, mode="subexp_q", eps=0.5)
        assert ell == 4
        assert exponent == pytest.approx(1.5)

    def test_clamped_to_one(self):
        s = SeriesCoefficients.geometric(0.5)
        ell, _ = select_truncation_order(s, T=0.02, n=3, k=2, mode="subexp")
        assert ell == 1

    def test_finite_family_rejected(self):
        with pytest.raises(ValueError):
            select_truncation_order(
                SeriesCoefficients.finite([1.0]), T=0.1, n=100, k=1, mode="subexp"
            )

    def test_subexp_q_needs_eps(self):
        s = SeriesCoefficients.geometric(0.5)
        with pytest.raises(ValueError):
            select_truncation_order(s, T=0.02, n=100, k=1, mode="subexp_q")


class TestBoundCalculators:
    def test_pairwise_zero_constants(self):
        rep = entropy_bound_pairwise(BoundInputs(C0=0.0, gamma=1.0, M=0.0, T=1.0, n=100, k=2))
        assert rep.total == 0.0
        assert rep.constants["C"] == 0.0

    def test_pairwise_frozen_example(self):
        rep = entropy_bound_pairwise(BoundInputs(C0=1.0, gamma=1.0, M=1.0, T=0.0, n=10, k=1))
        assert rep.constants["C"] == pytest.approx(8.0)
        assert rep.terms["k_over_n_squared"] == pytest.approx(0.16)
        assert rep.terms["exponential"] == pytest.approx(
            8.0 * math.exp(-2.0 * 10.0 * (1.0 - 0.1) ** 2), rel=1e-14
        )

    def test_pairwise_k_equals_n_saturates_exponential(self):
        inp = BoundInputs(C0=1.0, gamma=0.1, M=1.0, T=1.0, n=10, k=10)
        rep = entropy_bound_pairwise(inp)
        assert rep.terms["exponential"] == pytest.approx(rep.constants["C"])

    def test_pairwise_precondition(self):
        with pytest.raises(PreconditionError) as err:
            entropy_bound_pairwise(BoundInputs(C0=1.0, gamma=1.0, M=1.0, T=1.0, n=16, k=1))
        assert err.value.required_n == pytest.approx(6.0 * math.e)

    def test_total_is_sum_of_terms(self):
        rep = entropy_bound_pairwise(BoundInputs(C0=1.0, gamma=0.5, M=2.0, T=0.3, n=50, k=5))
        assert rep.total == pytest.approx(sum(rep.terms.values()), rel=1e-15)

    def test_reversed_zero(self):
        rep = entropy_bound_reversed(0.0, 0.0, 1.0, 100, 2)
        assert rep.total == 0.0

    def test_reversed_frozen_example(self):
        rep = entropy_bound_reversed(0.0, 1.0, 0.1, 100, 2)
        assert rep.constants["gamma"] == pytest.approx(2.0)
        assert rep.constants["C"] == pytest.approx(0.4 * math.exp(0.4), rel=1e-14)
        gap = math.exp(-0.2) - 0.02
        expected = (
            2.0 * rep.constants["C"] * 4.0 / 10**4
            + rep.constants["C"] * math.exp(-200.0 * gap * gap)
        )
        assert rep.total == pytest.approx(expected, rel=1e-13)

    def test_reversed_k_scaling(self):
        r1 = entropy_bound_reversed(1.0, 1.0, 0.2, 1000, 2)
        r2 = entropy_bound_reversed(1.0, 1.0, 0.2, 1000, 4)
        assert r2.terms["k_over_n_squared"] == pytest.approx(
            4.0 * r1.terms["k_over_n_squared"], rel=1e-15
        )

    def test_higher_order_finite_range_tail_vanishes(self):
        s = SeriesCoefficients.finite([0.4, 0.3, 0.2])
        rep = entropy_bound_higher_order(1.0, s, 0.1, 1000, 2, ell=3)
        assert rep.terms["series_tail"] == 0.0

    def test_higher_order_zero_series(self):
        s = SeriesCoefficients.finite([0.0, 0.0])
        n, k, ell = 1000, 2, 3
        rep = entropy_bound_higher_order(1.0, s, 0.1, n, k, ell)
        gap = 1.0 - k / (2.0 * n)
        assert rep.total == pytest.approx(math.exp(-(n / ell) * gap * gap), rel=1e-13)

    def test_higher_order_geometric_frozen(self):
        s = SeriesCoefficients.geometric(0.5)
        C0, T, n, k, ell = 1.0, 0.1, 10**4, 2, 4
        rep = entropy_bound_higher_order(C0, s, T, n, k, ell)
        assert rep.constants["mass"] == pytest.approx(1.0, rel=1e-10)
        assert rep.constants["second_moment"] == pytest.approx(6.0, rel=1e-10)
        assert rep.constants["tail_at_order"] == pytest.approx(0.5**4, rel=1e-9)
        assert rep.terms["initial"] == pytest.approx(
            16.0 * math.exp(16.0 * 0.1 * 4) * 4.0 / 10**8, rel=1e-9
        )
        assert rep.terms["second_order"] == pytest.approx(
            9.0 * 36.0 * math.exp(24.0 * 0.4) * 8.0 / (4.0 * 10**8), rel=1e-9
        )
        assert rep.terms["series_tail"] == pytest.approx(
            math.exp(8.0 * 0.4) * 0.5**8 * 2.0 / 4.0, rel=1e-9
        )

    def test_higher_order_precondition(self):
        s = SeriesCoefficients.geometric(0.5)
        with pytest.raises(PreconditionError):
            entropy_bound_higher_order(1.0, s, 0.1, 10, 4, ell=2)


class TestConstants:
    def test_exp_moment_transport_values(self):
        assert transport_constant_from_exp_moment(1.0, 0.0) == pytest.approx(2.0)
        assert transport_constant_from_exp_moment(2.0, 1.0) == pytest.approx(2.0)
        assert transport_constant_from_exp_moment(0.5, 3.0) == pytest.approx(16.0)
        with pytest.raises(ValueError):
            transport_constant_from_exp_moment(0.0, 1.0)

    def test_lipschitz_constants_vanish_with_L(self):
        M, gamma = lipschitz_constants(1e-8, 1.0, 1.0, 0.0, 1.0, 1.0, 1)
        assert M < 1e-14 and gamma < 1e-14

    def test_lipschitz_constants_frozen(self):
        M, gamma = lipschitz_constants(1.0, 1.0, 0.1, 0.0, 1.0, 1.0, 1)
        assert M == pytest.approx(8.0 * math.exp(1.6) * (1.0 + 1.0 + 0.0 + 0.8), rel=1e-13)
        assert gamma == pytest.approx(3.0 * 1.0 * math.exp(0.3), rel=1e-13)

    def test_lipschitz_constants_continuous_at_switch(self):
        T = 0.25
        lo = lipschitz_constants(1.0, 2 * T - 1e-9, T, 0.0, 1.0, 1.0, 1)[1]
        hi = lipschitz_constants(1.0, 2 * T + 1e-9, T, 0.0, 1.0, 1.0, 1)[1]
        assert lo == pytest.approx(hi, rel=1e-6)

    def test_quadratic_transport_values(self):
        assert quadratic_transport_constant(1.0, 1.0, 0.0) == pytest.approx(6.0)
        assert quadratic_transport_constant(4.0, 1.0, 1.0) == pytest.approx(
            12.0 * math.exp(3.0), rel=1e-14
        )
        lo = quadratic_transport_constant(2.0 - 1e-9, 1.0, 0.5)
        hi = quadratic_transport_constant(2.0 + 1e-9, 1.0, 0.5)
        assert lo == pytest.approx(hi, rel=1e-6)


def test_rate_ladder_validation():
    with pytest.raises(ValueError):
        RateLadder(0.0, 1.0)
    with pytest.raises(ValueError):
        RateLadder(1.0, -1.0)
    lad = RateLadder(2.0, 0.5)
    assert lad.shape == 4.0
    assert lad.rate(3) == pytest.approx(3.5)
