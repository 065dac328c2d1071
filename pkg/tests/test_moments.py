import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rcmlab.connfn import exponential, hard_disk, make_variant
from rcmlab.moments import (
    ModelConfig,
    ModelError,
    check_domination,
    domination_constants,
    excess_variance_bracket,
    isolation_prob,
    limit_mean_excess,
    limit_var_excess,
    limit_var_isolated,
    mean_excess,
    mean_excess_unscaled,
    mean_isolated,
    pair_factor,
    swapped_truncation_means,
    var_excess,
    var_excess_unscaled,
    var_isolated,
    variance_ratio,
)
from rcmlab.quadrature import Region, unit_box
from rcmlab.stats import StatRequest, replicate_many


K1 = Region((0.0,), (1.0,))


def lens_area(s):
    return 2 * math.acos(s / 2) - (s / 2) * math.sqrt(4 - s * s)


class TestFactors:
    def test_isolation_prob_examples(self):
        dead = hard_disk(1.0).truncate_inside(0.0)
        assert isolation_prob(3.7, dead, 2).value == 1.0
        assert isolation_prob(1.0, hard_disk(1.0), 2).value == pytest.approx(
            math.exp(-math.pi), rel=1e-9
        )
        assert isolation_prob(2.0, exponential(1.0), 1).value == pytest.approx(
            math.exp(-4.0), rel=1e-9
        )

    def test_pair_factor_examples(self):
        disk = hard_disk(1.0)
        assert pair_factor(0.0, disk, disk, 1.0, 2).value == 1.0
        assert pair_factor(1.0, disk, disk, 2.0, 2).value == 1.0
        assert pair_factor(1.0, disk, disk, 1.0, 2).value == pytest.approx(
            math.exp(lens_area(1.0)), rel=1e-9
        )

    def test_pair_factor_at_least_one(self):
        for s in (0.0, 0.5, 1.5, 4.0):
            assert pair_factor(2.0, exponential(1.0), exponential(1.0), s, 1).value >= 1.0

    @given(st.floats(0.2, 4.0), st.floats(0.1, 2.0))
    def test_split_product_identity(self, R, mu):
        # iso(mu, g_R) * iso(mu, g^R) = iso(mu, g)
        g = exponential(1.0)
        p_in = isolation_prob(mu, make_variant(g, "inside", R=R), 1).value
        p_out = isolation_prob(mu, make_variant(g, "outside", R=R), 1).value
        assert p_in * p_out == pytest.approx(isolation_prob(mu, g, 1).value, rel=1e-9)

    def test_negative_intensity_rejected(self):
        with pytest.raises(ModelError):
            isolation_prob(-1.0, exponential(1.0), 1)


class TestModelConfig:
    def test_lambda_scaling(self):
        cfg = ModelConfig(d=2, lam=1.5, K=unit_box(2), g=exponential(1.0), n=4.0)
        assert cfg.lam_n == pytest.approx(1.5 * 16)

    def test_explicit_rule(self):
        cfg = ModelConfig(
            d=1, lam=1.0, K=K1, g=exponential(1.0), n=2.0,
            density_rule=((1.0, 1.1), (2.0, 2.3)),
        )
        assert cfg.lam_n == 2.3
        with pytest.raises(ModelError):
            _ = cfg.at_n(4.0).lam_n

    def test_validation(self):
        with pytest.raises(ModelError):
            ModelConfig(d=4, lam=1.0, K=unit_box(1), g=exponential(1.0))
        with pytest.raises(ModelError):
            ModelConfig(d=1, lam=0.0, K=K1, g=exponential(1.0))
        with pytest.raises(ModelError):
            ModelConfig(d=1, lam=1.0, K=K1, g=exponential(1.0), n=0.5)
        with pytest.raises(ModelError):
            ModelConfig(d=2, lam=1.0, K=K1, g=exponential(1.0))


class TestUnscaledMoments:
    def test_mean_bounded_support_vanishes(self):
        # once the cut covers the whole support nothing can be excess
        assert mean_excess_unscaled(1.0, hard_disk(1.0), 2.0, K1, 1).value == pytest.approx(
            0.0, abs=1e-12
        )

    def test_mean_analytic_example(self):
        got = mean_excess_unscaled(1.0, exponential(1.0), 2.0, unit_box(2), 2).value
        in_mass = 2 * math.pi * (1 - 3 * math.exp(-2))
        out_mass = 2 * math.pi * 3 * math.exp(-2)
        expect = math.exp(-in_mass) * (1 - math.exp(-out_mass))
        assert got == pytest.approx(expect, rel=1e-9)

    def test_mean_tiny_intensity(self):
        assert mean_excess_unscaled(1e-12, exponential(1.0), 2.0, K1, 1).value == pytest.approx(
            0.0, abs=1e-11
        )

    def test_var_bounded_support_vanishes(self):
        got = var_excess_unscaled(1.0, hard_disk(1.0), 2.0, K1, 1).value
        assert got == pytest.approx(0.0, abs=1e-9)

    def test_wide_radius_precondition(self):
        with pytest.raises(ModelError):
            mean_excess_unscaled(1.0, exponential(1.0), 0.5, K1, 1)
        with pytest.raises(ModelError):
            var_excess_unscaled(1.0, exponential(1.0), 1.0, K1, 1)

    def test_against_monte_carlo(self):
        # dual route for the wide-radius formulas; also covers the unpinned
        # geometry question (R / n = 2 > diam K at n = 1)
        lam, R = 1.0, 2.0
        g = exponential(1.0)
        cfg = ModelConfig(d=1, lam=lam, K=K1, g=g, n=1.0)
        out = replicate_many(
            cfg, [StatRequest(name="L", kind="excess", r0=R)], 20000, base_seed=424242
        )
        sample = out["L"]
        mean = mean_excess_unscaled(lam, g, R, K1, 1).value
        var = var_excess_unscaled(lam, g, R, K1, 1).value
        assert mean == pytest.approx(mean_excess(cfg, R).value, rel=1e-10)
        assert abs(sample.mean - mean) <= 3 * sample.se_mean
        assert abs(sample.variance - var) <= 3 * sample.bootstrap_se_var()


class TestScaledMoments:
    def test_mean_vanishes_when_cut_covers_support(self):
        cfg = ModelConfig(d=1, lam=1.0, K=K1, g=hard_disk(1.0), n=2.0)
        assert mean_excess(cfg, 2.0).value == pytest.approx(0.0, abs=1e-12)
        assert var_excess(cfg, 2.0).value == pytest.approx(0.0, abs=1e-9)

    def test_mean_closed_form(self):
        cfg = ModelConfig(d=1, lam=1.0, K=K1, g=exponential(1.0), n=2.0)
        p_in = math.exp(-2 * (1 - math.exp(-1)))
        p_out = math.exp(-2 * math.exp(-1))
        assert mean_excess(cfg, 1.0).value == pytest.approx(2 * p_in * (1 - p_out), rel=1e-9)

    def test_n1_matches_unscaled(self):
        cfg = ModelConfig(d=1, lam=1.3, K=K1, g=exponential(0.8), n=1.0)
        a = mean_excess(cfg, 2.0).value
        b = mean_excess_unscaled(1.3, exponential(0.8), 2.0, K1, 1).value
        assert a == pytest.approx(b, rel=1e-12)

    def test_variance_positive_and_exceeds_nothing_weird(self):
        cfg = ModelConfig(d=1, lam=1.0, K=K1, g=exponential(1.0), n=2.0)
        v = var_excess(cfg, 1.0).value
        assert v > 0


class TestIsolatedMoments:
    def test_mean(self):
        cfg = ModelConfig(d=1, lam=1.0, K=K1, g=exponential(1.0), n=2.0)
        assert mean_isolated(cfg).value == pytest.approx(2 * math.exp(-2), rel=1e-9)

    def test_limit_var_toward_poisson(self):
        # weak interaction: variance density approaches the Poisson value 1
        weak = hard_disk(0.05)
        val = limit_var_isolated(0.01, weak, 1).value
        assert val == pytest.approx(1.0, abs=2e-3)

    def test_limit_var_positive(self):
        assert limit_var_isolated(1.0, hard_disk(1.0), 2).value > 0
        assert limit_var_isolated(1.0, exponential(1.0), 1).value > 0


class TestLimits:
    def test_limit_mean_analytic_d2(self):
        in_mass = 2 * math.pi * (1 - 2 * math.exp(-1))
        out_mass = 2 * math.pi * 2 * math.exp(-1)
        expect = math.exp(-in_mass) * (1 - math.exp(-out_mass))
        got = limit_mean_excess(1.0, exponential(1.0), 1.0, 2).value
        assert got == pytest.approx(expect, rel=1e-9)

    def test_limit_mean_large_R(self):
        assert limit_mean_excess(1.0, exponential(1.0), 40.0, 1).value == pytest.approx(
            0.0, abs=1e-12
        )

    def test_limit_var_decays_in_R(self):
        v1 = limit_var_excess(1.0, exponential(1.0), 1.0, 1).value
        v8 = limit_var_excess(1.0, exponential(1.0), 8.0, 1).value
        assert 0 < v8 < v1

    def test_ratio_is_one_for_covered_support(self):
        assert variance_ratio(1.0, hard_disk(1.0), 2.0, 1).value == pytest.approx(
            1.0, abs=1e-10
        )

    def test_ratio_small_R_inverse_limit(self):
        lam, g = 1.0, exponential(1.0)
        tiny = variance_ratio(lam, g, 1e-6, 1).value
        assert tiny == pytest.approx(1.0 / limit_var_isolated(lam, g, 1).value, rel=1e-3)


class TestSwappedTruncation:
    def test_sequence_decreases_to_zero(self):
        rows = swapped_truncation_means(1.0, exponential(1.0), 2.0, K1, 1, (1.0, 2.0, 4.0, 8.0))
        vals = [r.value for r in rows]
        assert vals[0] > 0.03  # positive base case before the collapse
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-6

    def test_bounded_support_exact_zero(self):
        rows = swapped_truncation_means(1.0, hard_disk(1.0), 2.0, K1, 1, (1.0, 2.0, 4.0))
        assert all(r.value == 0.0 for r in rows)

    def test_scaling_identity_with_widened_cut(self):
        # iso(lam_n, scale-then-cut) equals iso(lam_n / n^d, widened cut)
        g = exponential(1.0)
        n, R, lam_n = 4.0, 2.0, 4.0
        lhs = isolation_prob(lam_n, make_variant(g, "scale_then_cut", R=R, n=n), 1).value
        rhs = isolation_prob(lam_n / n, make_variant(g, "inside_scaled_radius", R=R, n=n), 1).value
        assert lhs == pytest.approx(rhs, rel=1e-9)

    def test_requires_wide_radius(self):
        with pytest.raises(ModelError):
            swapped_truncation_means(1.0, exponential(1.0), 0.5, K1, 1, (1.0,))


class TestDomination:
    def test_exponential_constants(self):
        const = domination_constants(1.0, exponential(1.0), 1)
        assert const.N == 1.0
        assert const.M == pytest.approx(2 * math.log(8), rel=1e-6)
        expect_pair = max(8 * math.e, 8 * (math.exp(8) - 1))
        assert const.C_pair == pytest.approx(expect_pair, rel=1e-5)
        assert const.C_total == pytest.approx(4 * (1 + const.C_pair))

    def test_tiny_intensity_trivial(self):
        const = domination_constants(1e-9, exponential(1.0), 1)
        assert const.C_total == pytest.approx(4.0, rel=1e-6)

    def test_bounded_support_fallback(self):
        const = domination_constants(1.0, hard_disk(1.0), 2)
        assert "fallback" in const.note
        assert const.C_pair == pytest.approx(4 * math.pi * math.exp(4 * math.pi), rel=1e-8)
        check = check_domination(
            1.0, hard_disk(1.0), 2, radii=[0.5, 1.0, 1.9, 2.5, 4.0],
            R_list=(0.5, 2.0), n_list=(1.0, 2.0),
        )
        assert check.ok, (check.worst_margin, check.worst_pair_margin)

    def test_bracket_vanishes_beyond_double_support(self):
        bracket = excess_variance_bracket(1.0, hard_disk(1.0), 0.5, 2)
        assert bracket(3.0) == pytest.approx(0.0, abs=1e-10)

    def test_grid_inequality_exponential(self):
        radii = [float(x) for x in np.geomspace(0.05, 10.0, 10)]
        check = check_domination(
            1.0, exponential(1.0), 1, radii, R_list=(0.5, 2.0), n_list=(1.0, 4.0)
        )
        assert check.ok, (check.worst_margin, check.worst_pair_margin)


class TestVarIsolatedFormula:
    def test_var_equals_mean_for_negligible_interaction(self):
        # nearly independent points: the count is nearly Poisson
        cfg = ModelConfig(d=1, lam=0.05, K=K1, g=hard_disk(0.01), n=1.0)
        assert var_isolated(cfg).value == pytest.approx(mean_isolated(cfg).value, rel=1e-2)
