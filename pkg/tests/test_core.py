"""
core の単体テスト

閉形式の量を同時分布テーブルの全列挙と照合する。
"""

import math

import numpy as np
import pytest
from scipy.special import perm
from scipy.stats import binom, nchypergeom_fisher

from bbcd.models import Direction, Params, StochasticOrder
from bbcd.services import core
from bbcd.services.errors import CapacityError, DomainError, SupportError
from config import Config
from tests.conftest import random_grid

NORMALIZATION_TOL = 1e-12
ORACLE_REL = 1e-9
SLICE_TOL = 1e-12
CHAIN_TOL = 1e-10
GRADIENT_REL = 1e-6

GRID_200 = random_grid(200, seed=20240501)
GRID_20 = random_grid(20, seed=7)
GRID_SMALL_N = random_grid(20, seed=11, n_max=15)


def _axes(params):
    return np.arange(params.n1 + 1, dtype=float), np.arange(params.n2 + 1, dtype=float)


class TestParams:
    """パラメータの検証"""

    @pytest.mark.parametrize('kwargs', [
        dict(n1=0, n2=5, p1=0.5, p2=0.5, t=1.0),
        dict(n1=5, n2=5, p1=0.0, p2=0.5, t=1.0),
        dict(n1=5, n2=5, p1=0.5, p2=1.0, t=1.0),
        dict(n1=5, n2=5, p1=0.5, p2=0.5, t=0.0),
        dict(n1=5, n2=5, p1=0.5, p2=0.5, t=-1.0),
        dict(n1=2.5, n2=5, p1=0.5, p2=0.5, t=1.0),
    ])
    def test_invalid_params_rejected(self, kwargs):
        with pytest.raises(DomainError):
            Params(**kwargs)

    def test_odds(self):
        params = Params(3, 4, 0.2, 0.75, 1.0)
        assert params.q1 == pytest.approx(0.25)
        assert params.q2 == pytest.approx(3.0)
        assert params.cells == 20


class TestPmf:

    @pytest.mark.parametrize('params', GRID_200)
    def test_table_sums_to_one(self, params):
        table = core.build_table(params)
        assert abs(table.probs.sum() - 1.0) <= NORMALIZATION_TOL

    def test_independence_is_product_of_binomials(self):
        params = Params(6, 9, 0.3, 0.7, 1.0)
        for x in range(7):
            for y in range(10):
                expected = binom.pmf(x, 6, 0.3) * binom.pmf(y, 9, 0.7)
                assert core.pmf(params, x, y) == pytest.approx(expected, abs=1e-12)

    def test_outside_support(self, scenario1):
        assert core.pmf(scenario1, 11, 0) == 0.0
        assert core.pmf(scenario1, -1, 0) == 0.0
        assert core.pmf(scenario1, 1.5, 2) == 0.0
        assert core.log_pmf(scenario1, 0, 11) == -math.inf

    def test_pmf_matches_table(self, scenario1):
        table = core.build_table(scenario1)
        assert core.pmf(scenario1, 3, 7) == pytest.approx(table.probs[3, 7], rel=1e-12)
        assert core.log_pmf(scenario1, 3, 7) == pytest.approx(table.log_probs[3, 7], rel=1e-12)

    def test_extreme_dependence_stays_finite(self):
        params = Params(200, 200, 0.5, 0.5, 1e-3)
        table = core.build_table(params)
        assert np.all(np.isfinite(table.log_probs))
        assert abs(table.probs.sum() - 1.0) <= 1e-10

    def test_capacity(self, scenario1):
        with pytest.raises(CapacityError):
            core.build_table(scenario1, mem_cap=100)

    def test_table_is_read_only(self, scenario1):
        table = core.build_table(scenario1)
        with pytest.raises(ValueError):
            table.probs[0, 0] = 1.0

    def test_swap_symmetry(self):
        params = Params(5, 7, 0.3, 0.8, 0.4)
        np.testing.assert_allclose(core.build_table(params).probs.T,
                                   core.build_table(params.swapped()).probs, atol=1e-15)
        assert core.log_pmf(params, 2, 6) == pytest.approx(
            core.log_pmf(params.swapped(), 6, 2), rel=1e-14)


class TestTableCache:

    def test_small_tables_are_reused(self, scenario1):
        assert core.build_table(scenario1) is core.build_table(scenario1)

    def test_cache_is_bounded(self):
        for n in range(1, 3 * Config.TABLE_CACHE_SIZE + 1):
            core.build_table(Params(n, n, 0.4, 0.6, 0.7))
        info = core._cached_table.cache_info()
        assert info.maxsize == Config.TABLE_CACHE_SIZE
        assert info.currsize <= Config.TABLE_CACHE_SIZE

    def test_large_tables_are_not_kept(self, monkeypatch):
        monkeypatch.setattr(Config, 'TABLE_CACHE_CELLS', 10)
        core._cached_table.cache_clear()
        params = Params(6, 6, 0.4, 0.6, 0.7)
        first = core.build_table(params)
        assert core.build_table(params) is not first
        assert core._cached_table.cache_info().currsize == 0
        np.testing.assert_array_equal(first.probs, core.build_table(params).probs)


class TestNormalizingConstant:

    @pytest.mark.parametrize('params', GRID_20)
    def test_lower_bounds(self, params):
        """K^{-1} は x=0 の行と y=0 の列の和以上"""
        log_k_inv = core.log_norm_constant(params)
        assert log_k_inv >= params.n1 * math.log1p(-params.p1) - 1e-12
        assert log_k_inv >= params.n2 * math.log1p(-params.p2) - 1e-12

    @pytest.mark.parametrize('params', [p for p in GRID_200 if p.t <= 1.0][:20])
    def test_at_most_one_for_negative_dependence(self, params):
        assert core.log_norm_constant(params) <= 1e-12

    def test_independence_gives_one(self):
        assert core.log_norm_constant(Params(7, 3, 0.2, 0.9, 1.0)) == pytest.approx(0.0, abs=1e-12)

    def test_s_function_matches_direct_sum(self):
        n1, n2, q1, q2, t = 3, 2, 0.5, 2.0, 0.7
        direct = sum(
            math.comb(n1, x) * q1 ** x * math.comb(n2, y) * q2 ** y * t ** (x * y)
            for x in range(n1 + 1) for y in range(n2 + 1)
        )
        assert math.exp(core.log_s_function(n1, n2, q1, q2, t)) == pytest.approx(direct, rel=1e-12)

    def test_s_function_hand_values(self):
        assert core.log_s_function(1, 1, 1.0, 1.0, 0.5) == pytest.approx(math.log(3.5), rel=1e-14)
        assert core.log_s_function(2, 2, 1.0, 1.0, 1.0) == pytest.approx(math.log(16.0), rel=1e-14)

    def test_s_function_swap(self):
        assert core.log_s_function(3, 5, 0.4, 1.7, 0.3) == pytest.approx(
            core.log_s_function(5, 3, 1.7, 0.4, 0.3), rel=1e-14)

    @pytest.mark.parametrize('t', [0.4, 1.0, 1.7])
    def test_p2_near_one(self, t):
        """p2 → 1 で K^{-1} → p2^{n2} (1 - p1 + t^{n2} p1)^{n1}"""
        p1, p2 = 0.3, 1.0 - 1e-12
        closed = 3 * math.log(p2) + 2 * math.log(1.0 - p1 + t ** 3 * p1)
        assert core.log_norm_constant(Params(2, 3, p1, p2, t)) == pytest.approx(closed, abs=1e-8)


class TestMarginalsAndMoments:

    @pytest.mark.parametrize('params', GRID_200)
    def test_marginals_and_means(self, params):
        table = core.build_table(params)
        x, y = _axes(params)
        np.testing.assert_allclose(core.marginal_x(params), table.row_sums(), rtol=ORACLE_REL, atol=1e-300)
        np.testing.assert_allclose(core.marginal_y(params), table.col_sums(), rtol=ORACLE_REL, atol=1e-300)
        assert core.mean_closed_form(params, 'x') == pytest.approx(x @ table.row_sums(), rel=ORACLE_REL)
        assert core.mean_closed_form(params, 'y') == pytest.approx(y @ table.col_sums(), rel=ORACLE_REL)

    @pytest.mark.parametrize('params', GRID_200[:50])
    def test_factorial_moments(self, params):
        table = core.build_table(params)
        x, y = _axes(params)
        for r in range(4):
            for s in range(4):
                enumerated = perm(x, r) @ table.probs @ perm(y, s)
                value = core.factorial_moment(params, r, s)
                assert value == pytest.approx(enumerated, rel=ORACLE_REL, abs=1e-300)

    def test_factorial_moment_edges(self, scenario1):
        assert core.factorial_moment(scenario1, 0, 0) == pytest.approx(1.0, rel=1e-12)
        assert core.factorial_moment(scenario1, 11, 1) == 0.0
        with pytest.raises(DomainError):
            core.factorial_moment(scenario1, -1, 0)
        with pytest.raises(DomainError):
            core.factorial_moment(scenario1, 1.5, 0)

    @pytest.mark.parametrize('params', GRID_20)
    def test_pgf_derivative_gives_means(self, params):
        h = 1e-6
        table = core.build_table(params)
        x, y = _axes(params)
        dx = (core.pgf(params, 1 + h, 1) - core.pgf(params, 1 - h, 1)) / (2 * h)
        dy = (core.pgf(params, 1, 1 + h) - core.pgf(params, 1, 1 - h)) / (2 * h)
        assert dx == pytest.approx(x @ table.row_sums(), rel=GRADIENT_REL, abs=1e-9)
        assert dy == pytest.approx(y @ table.col_sums(), rel=GRADIENT_REL, abs=1e-9)

    def test_transforms_at_origin(self, scenario1):
        assert core.pgf(scenario1, 1.0, 1.0) == pytest.approx(1.0, rel=1e-12)
        assert core.mgf(scenario1, 0.0, 0.0) == pytest.approx(1.0, rel=1e-12)
        assert core.mgf(scenario1, 0.3, -0.2) == pytest.approx(
            core.pgf(scenario1, math.exp(0.3), math.exp(-0.2)), rel=1e-12)

    def test_pgf_domain(self, scenario1):
        with pytest.raises(DomainError):
            core.pgf(scenario1, 0.0, 1.0)

    @pytest.mark.parametrize('s1, s2', [(0.5, 2.0), (1.3, 0.1), (3.0, 3.0)])
    def test_pgf_independence(self, s1, s2):
        params = Params(4, 3, 0.2, 0.7, 1.0)
        expected = (1 - 0.2 + 0.2 * s1) ** 4 * (1 - 0.7 + 0.7 * s2) ** 3
        assert core.pgf(params, s1, s2) == pytest.approx(expected, rel=1e-12)

    def test_transforms_overflow_to_inf(self):
        params = Params(30, 30, 0.5, 0.5, 1.0)
        assert core.pgf(params, 1e30, 1.0) == math.inf
        assert core.mgf(params, 100.0, 0.0) == math.inf
        assert core.log_pgf(params, 1e30, 1.0) > 700.0

    def test_moments_scenario1(self, scenario1):
        summary = core.moments(scenario1)
        table = core.build_table(scenario1)
        x, y = _axes(scenario1)
        mean_x = x @ table.row_sums()
        assert summary.mean_x == pytest.approx(mean_x, rel=1e-12)
        assert summary.var_x == pytest.approx((x - mean_x) ** 2 @ table.row_sums(), rel=1e-10)
        assert summary.corr < 0

    @pytest.mark.parametrize('params', GRID_200)
    def test_correlation_sign(self, params):
        corr = core.moments(params).corr
        if params.t < 1.0:
            assert corr < 0
        else:
            assert corr > 0

    @pytest.mark.parametrize('params', [Params(5, 8, 0.3, 0.6, 1.0), Params(30, 1, 0.9, 0.05, 1.0)])
    def test_independence_has_zero_correlation(self, params):
        assert abs(core.moments(params).corr) <= 1e-12

    def test_dispersion_is_one_under_independence(self):
        dx, dy = core.marginal_dispersion(Params(8, 12, 0.35, 0.6, 1.0))
        assert dx == pytest.approx(1.0, rel=1e-10)
        assert dy == pytest.approx(1.0, rel=1e-10)

    @pytest.mark.parametrize('params', GRID_SMALL_N)
    def test_log_partition_gradient(self, params):
        """自然パラメータでの log S の勾配は (E[X], E[Y], E[XY])"""
        theta = np.array(core.natural_parameters(params))
        expected = core.sufficient_statistic_means(params)
        h = 1e-5
        for i in range(3):
            step = np.zeros(3)
            step[i] = h
            grad = (core.log_partition_natural(params.n1, params.n2, theta + step)
                    - core.log_partition_natural(params.n1, params.n2, theta - step)) / (2 * h)
            assert grad == pytest.approx(expected[i], rel=GRADIENT_REL, abs=1e-8)

    def test_log_partition_matches_natural(self, scenario1):
        theta = core.natural_parameters(scenario1)
        assert core.log_partition(scenario1) == pytest.approx(
            core.log_partition_natural(10, 10, theta), rel=1e-12)


class TestConditionals:

    @pytest.mark.parametrize('params', GRID_20)
    def test_table_slices_are_binomial(self, params):
        table = core.build_table(params)
        for x in range(params.n1 + 1):
            row = table.probs[x] / table.probs[x].sum()
            cond = core.conditional_y_given_x(params, x)
            np.testing.assert_allclose(row, binom.pmf(np.arange(params.n2 + 1), cond.n, cond.p),
                                       atol=SLICE_TOL)
        for y in range(params.n2 + 1):
            col = table.probs[:, y] / table.probs[:, y].sum()
            np.testing.assert_allclose(col, core.conditional_x_given_y(params, y).pmf(), atol=SLICE_TOL)

    def test_conditional_parameters(self, scenario1):
        cond = core.conditional_x_given_y(scenario1, 0)
        assert cond.n == 10 and cond.p == 0.5
        cond = core.conditional_y_given_x(scenario1, 3)
        p = 0.9 * 0.8 ** 3 / (0.1 + 0.9 * 0.8 ** 3)
        assert cond.p == pytest.approx(p, rel=1e-14)
        assert core.regression_y_on_x(scenario1, 3) == pytest.approx(10 * p, rel=1e-14)
        assert core.conditional_variance_y_given_x(scenario1, 3) == pytest.approx(10 * p * (1 - p), rel=1e-12)

    def test_conditional_variance_x_given_y(self, scenario1):
        p = 0.5 * 0.8 ** 4 / (0.5 + 0.5 * 0.8 ** 4)
        assert core.conditional_variance_x_given_y(scenario1, 4) == pytest.approx(10 * p * (1 - p), rel=1e-12)
        table = core.build_table(scenario1)
        x, _ = _axes(scenario1)
        col = table.probs[:, 4] / table.probs[:, 4].sum()
        direct = x ** 2 @ col - (x @ col) ** 2
        assert core.conditional_variance_x_given_y(scenario1, 4) == pytest.approx(direct, rel=1e-10)

    def test_regressions_decrease_when_t_below_one(self, scenario1):
        values = [core.regression_x_on_y(scenario1, y) for y in range(11)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_conditioning_outside_support(self, scenario1):
        with pytest.raises(SupportError):
            core.conditional_x_given_y(scenario1, 11)
        with pytest.raises(SupportError):
            core.conditional_y_given_x(scenario1, -1)


class TestConditionalGivenSum:

    def test_independence_is_extended_hypergeometric(self):
        params = Params(6, 8, 0.3, 0.55, 1.0)
        odds = params.q1 / params.q2
        for u in (0, 3, 7, 14):
            support = np.array(core.sum_support(params, u))
            expected = nchypergeom_fisher.pmf(support, 14, 6, u, odds)
            np.testing.assert_allclose(core.conditional_given_sum(params, u), expected, atol=1e-10)

    def test_matches_normalized_antidiagonal(self, scenario1):
        u = 9
        xs = list(core.sum_support(scenario1, u))
        weights = np.array([core.pmf(scenario1, x, u - x) for x in xs])
        np.testing.assert_allclose(core.conditional_given_sum(scenario1, u), weights / weights.sum(),
                                   rtol=1e-12)

    def test_sum_out_of_range(self, scenario1):
        with pytest.raises(DomainError):
            core.conditional_given_sum(scenario1, 21)

    def test_sum_pmf_independent_equal_p(self):
        params = Params(4, 7, 0.35, 0.35, 1.0)
        np.testing.assert_allclose(core.sum_pmf(params), binom.pmf(np.arange(12), 11, 0.35), atol=1e-12)


class TestComparisons:

    @pytest.mark.parametrize('params', GRID_20)
    def test_prob_x_less_y(self, params):
        direct = sum(core.pmf(params, x, y)
                     for x in range(params.n1 + 1) for y in range(params.n2 + 1) if x < y)
        assert core.prob_x_less_y(params) == pytest.approx(direct, rel=1e-10, abs=1e-15)
        assert sum(core.comparison_probabilities(params)) == pytest.approx(1.0, abs=1e-12)

    def test_symmetric_case(self):
        less, equal, greater = core.comparison_probabilities(Params(5, 5, 0.4, 0.4, 0.6))
        assert less == pytest.approx(greater, rel=1e-12)

    @pytest.mark.parametrize('params', GRID_20)
    def test_max_min(self, params):
        table = core.build_table(params)
        size = max(params.n1, params.n2) + 1
        direct_max = np.zeros(size)
        direct_min = np.zeros(size)
        for x in range(params.n1 + 1):
            for y in range(params.n2 + 1):
                direct_max[max(x, y)] += table.probs[x, y]
                direct_min[min(x, y)] += table.probs[x, y]
        np.testing.assert_allclose(core.max_pmf(params), direct_max, atol=1e-14)
        np.testing.assert_allclose(core.min_pmf(params), direct_min, atol=1e-14)
        survival = core.min_survival(params)
        assert survival[-1] == 0.0
        assert survival[0] == pytest.approx(1.0 - direct_min[0], abs=1e-12)


class TestStochasticOrder:

    def test_equal(self):
        assert core.stochastic_order(Params(6, 6, 0.3, 0.3, 0.5)) is StochasticOrder.EQUAL

    def test_dominance(self):
        assert core.stochastic_order(Params(10, 10, 0.6, 0.4, 1.0)) is StochasticOrder.X_DOMINATES
        assert core.stochastic_order(Params(10, 10, 0.4, 0.6, 1.0)) is StochasticOrder.Y_DOMINATES

    def test_dominance_under_negative_dependence(self):
        assert core.stochastic_order(Params(10, 10, 0.8, 0.3, 0.5)) is StochasticOrder.X_DOMINATES
        assert core.stochastic_order(Params(10, 10, 0.3, 0.8, 0.5)) is StochasticOrder.Y_DOMINATES

    def test_incomparable(self):
        # binomial(10, 0.5) と binomial(40, 0.1): 生存関数が交差する
        assert core.stochastic_order(Params(10, 40, 0.5, 0.1, 1.0)) is StochasticOrder.INCOMPARABLE


class TestRecurrences:

    @pytest.mark.parametrize('params', GRID_20)
    def test_chain_reaches_corner(self, params):
        k = min(params.n1, params.n2)
        paths = [
            [Direction.X] * params.n1 + [Direction.Y] * params.n2,
            [Direction.Y] * params.n2 + [Direction.X] * params.n1,
            [Direction.DIAGONAL] * k + [Direction.X] * (params.n1 - k) + [Direction.Y] * (params.n2 - k),
        ]
        target = core.log_pmf(params, params.n1, params.n2)
        for path in paths:
            m, n, log_value = core.chain_recurrence(params, path)
            assert (m, n) == (params.n1, params.n2)
            assert log_value == pytest.approx(target, abs=CHAIN_TOL)

    def test_single_steps(self, scenario1):
        base = core.pmf(scenario1, 2, 3)
        assert core.recurrence_step(scenario1, 'x', 3, 3, base) == pytest.approx(
            core.pmf(scenario1, 3, 3), rel=1e-12)
        assert core.recurrence_step(scenario1, 'y', 2, 4, base) == pytest.approx(
            core.pmf(scenario1, 2, 4), rel=1e-12)
        assert core.recurrence_step(scenario1, 'diagonal', 3, 4, base) == pytest.approx(
            core.pmf(scenario1, 3, 4), rel=1e-12)

    def test_log_step_matches_log_pmf(self, scenario2):
        base = core.log_pmf(scenario2, 20, 20)
        step = core.log_recurrence_step(scenario2, Direction.DIAGONAL, 21, 21, base)
        assert step == pytest.approx(core.log_pmf(scenario2, 21, 21), abs=1e-10)

    def test_step_outside_support(self, scenario1):
        with pytest.raises(SupportError):
            core.recurrence_step(scenario1, Direction.X, 0, 3, 0.1)
        with pytest.raises(SupportError):
            core.recurrence_step(scenario1, Direction.DIAGONAL, 11, 1, 0.1)


class TestTotalVariation:

    def test_padding(self):
        assert core.total_variation([0.5, 0.5], [0.5, 0.25, 0.25]) == pytest.approx(0.25)

    def test_identical(self, scenario1):
        probs = core.build_table(scenario1).probs
        assert core.total_variation(probs, probs) == 0.0
