"""
sample のテスト

ギブスサンプラーは厳密なテーブルとの全変動距離で検証する。
"""

import io

import numpy as np
import pytest
from scipy.stats import binom, chisquare

from bbcd.models import GibbsConfig, Params, SampleData
from bbcd.services.core import build_table, moments, total_variation
from bbcd.services.errors import DomainError
from bbcd.services.infer import chi_square_gof
from bbcd.services.sample import (
    draw_binomial,
    empirical_table,
    exact_sample,
    gibbs_sample,
    make_rng,
    run_chains,
    spawn_seeds,
)

FAST_TV = 0.04
ACCEPTANCE_TV = 0.015
GATE_ALPHA = 0.01
GATE_RUNS = 100
GATE_PASSES = 95


def _pooled_p_value(observed, expected, min_expected=5.0):
    """期待度数が min_expected 未満の隣接ビンをまとめて χ² 検定"""
    obs_bins, exp_bins = [], []
    o = e = 0.0
    for ob, ex in zip(observed, expected):
        o += ob
        e += ex
        if e >= min_expected:
            obs_bins.append(o)
            exp_bins.append(e)
            o = e = 0.0
    if e > 0:
        obs_bins[-1] += o
        exp_bins[-1] += e
    return chisquare(obs_bins, exp_bins).pvalue


def _tv_to_exact(sample, params):
    return total_variation(empirical_table(sample.pairs, params.n1, params.n2),
                           build_table(params).probs)


class TestGibbsConfig:

    @pytest.mark.parametrize('kwargs', [
        dict(n_samples=0, seed=1),
        dict(n_samples=10, seed=-1),
        dict(n_samples=10, seed=2 ** 64),
        dict(n_samples=10, seed=1, thin=0),
        dict(n_samples=10, seed=1, burn_in=-5),
        dict(n_samples=10, seed=1, init=(0,)),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(DomainError):
            GibbsConfig(**kwargs)

    def test_init_outside_support(self, scenario1):
        with pytest.raises(DomainError):
            gibbs_sample(scenario1, GibbsConfig(n_samples=5, seed=1, init=(11, 0)))


class TestRng:

    def test_same_seed_same_stream(self):
        a = make_rng(42).random(5)
        b = make_rng(42).random(5)
        np.testing.assert_array_equal(a, b)

    def test_spawned_seeds_are_distinct_and_reproducible(self):
        seeds = spawn_seeds(123, 4)
        assert len(set(seeds)) == 4
        assert seeds == spawn_seeds(123, 4)
        assert all(0 <= s < 2 ** 64 for s in seeds)

    def test_draw_binomial_mean(self):
        rng = make_rng(5)
        draws = [draw_binomial(rng, 20, 0.3) for _ in range(20000)]
        assert np.mean(draws) == pytest.approx(6.0, abs=0.05)
        assert all(0 <= d <= 20 for d in draws)

    @pytest.mark.slow
    @pytest.mark.parametrize('n', [1, 10, 50])
    @pytest.mark.parametrize('p', [0.1, 0.5, 0.9])
    def test_draw_binomial_goodness_of_fit(self, n, p):
        support = np.arange(n + 1)
        expected = 500 * binom.pmf(support, n, p)
        passes = 0
        for seed in range(GATE_RUNS):
            rng = make_rng(seed)
            draws = [draw_binomial(rng, n, p) for _ in range(500)]
            observed = np.bincount(draws, minlength=n + 1)
            passes += _pooled_p_value(observed, expected) >= GATE_ALPHA
        assert passes >= GATE_PASSES


class TestGibbsSampler:

    def test_reproducible(self, scenario1):
        config = GibbsConfig(n_samples=500, seed=2024)
        a = gibbs_sample(scenario1, config)
        b = gibbs_sample(scenario1, config)
        np.testing.assert_array_equal(a.pairs, b.pairs)

    def test_different_seeds_differ(self, scenario1):
        a = gibbs_sample(scenario1, GibbsConfig(n_samples=500, seed=1))
        b = gibbs_sample(scenario1, GibbsConfig(n_samples=500, seed=2))
        assert not np.array_equal(a.pairs, b.pairs)

    def test_pairs_in_support(self, scenario1):
        sample = gibbs_sample(scenario1, GibbsConfig(n_samples=1000, seed=3, thin=2))
        assert sample.pairs.shape == (1000, 2)
        assert sample.xs.min() >= 0 and sample.xs.max() <= 10
        assert sample.ys.min() >= 0 and sample.ys.max() <= 10

    def test_metadata(self, scenario1):
        sample = gibbs_sample(scenario1, GibbsConfig(n_samples=10, seed=9, burn_in=3))
        meta = sample.metadata()
        assert meta['method'] == 'gibbs'
        assert meta['rng_algorithm'] == 'PCG64'
        assert meta['config']['seed'] == 9
        assert meta['config']['burn_in'] == 3
        assert meta['params'] == scenario1.to_dict()

    def test_write_csv(self, scenario1):
        sample = gibbs_sample(scenario1, GibbsConfig(n_samples=3, seed=9))
        out = io.StringIO()
        sample.write_csv(out)
        lines = out.getvalue().splitlines()
        assert lines[0] == 'x,y'
        assert len(lines) == 4

    def test_close_to_exact_table(self, scenario1):
        sample = gibbs_sample(scenario1, GibbsConfig(n_samples=20000, seed=11))
        assert _tv_to_exact(sample, scenario1) <= FAST_TV

    def test_sample_means(self):
        params = Params(8, 6, 0.4, 0.5, 0.6)
        sample = gibbs_sample(params, GibbsConfig(n_samples=20000, seed=12))
        summary = moments(params)
        assert sample.xs.mean() == pytest.approx(summary.mean_x, abs=0.1)
        assert sample.ys.mean() == pytest.approx(summary.mean_y, abs=0.1)

    @pytest.mark.slow
    @pytest.mark.parametrize('params', [
        Params(10, 10, 0.5, 0.9, 0.8),
        Params(25, 25, 0.1, 0.2, 0.1),
    ])
    def test_acceptance_tv(self, params):
        sample = gibbs_sample(params, GibbsConfig(n_samples=100_000, seed=20240501))
        assert _tv_to_exact(sample, params) <= ACCEPTANCE_TV

    @pytest.mark.slow
    def test_independent_means_within_three_standard_errors(self):
        params = Params(10, 10, 0.5, 0.9, 1.0)
        sample = gibbs_sample(params, GibbsConfig(n_samples=100_000, seed=0))
        se_x = np.sqrt(10 * 0.5 * 0.5 / 100_000)
        se_y = np.sqrt(10 * 0.9 * 0.1 / 100_000)
        assert abs(sample.xs.mean() - 5.0) <= 3 * se_x
        assert abs(sample.ys.mean() - 9.0) <= 3 * se_y


class TestRunChains:

    def test_chains_use_spawned_seeds(self, scenario1):
        config = GibbsConfig(n_samples=200, seed=77, burn_in=10)
        chains = run_chains(scenario1, config, n_chains=3, max_workers=2)
        assert [c.config_used.seed for c in chains] == spawn_seeds(77, 3)
        again = run_chains(scenario1, config, n_chains=3)
        for a, b in zip(chains, again):
            np.testing.assert_array_equal(a.pairs, b.pairs)

    def test_needs_one_chain(self, scenario1):
        with pytest.raises(DomainError):
            run_chains(scenario1, GibbsConfig(n_samples=5, seed=1), n_chains=0)


class TestExactSampler:

    def test_close_to_exact_table(self, scenario1):
        sample = exact_sample(scenario1, 20000, seed=8)
        assert sample.method == 'exact'
        assert _tv_to_exact(sample, scenario1) <= 0.03

    def test_reproducible(self, scenario2):
        a = exact_sample(scenario2, 1000, seed=8)
        b = exact_sample(scenario2, 1000, seed=8)
        np.testing.assert_array_equal(a.pairs, b.pairs)

    @pytest.mark.slow
    def test_four_cells_are_uniform(self):
        params = Params(1, 1, 0.5, 0.5, 1.0)
        sample = exact_sample(params, 40_000, seed=31)
        np.testing.assert_allclose(empirical_table(sample.pairs, 1, 1), np.full((2, 2), 0.25), atol=0.01)

    @pytest.mark.slow
    def test_chi_square_acceptance(self, scenario1):
        passes = 0
        for seed in range(GATE_RUNS):
            sample = exact_sample(scenario1, 2000, seed=seed)
            gof = chi_square_gof(SampleData.from_pairs(sample.pairs), scenario1, n_estimated_params=0)
            passes += gof.p_value >= GATE_ALPHA
        assert passes >= GATE_PASSES


class TestEmpiricalTable:

    def test_relative_frequencies(self):
        table = empirical_table(np.array([[0, 0], [1, 2], [1, 2], [0, 1]]), 1, 2)
        assert table.shape == (2, 3)
        assert table.sum() == pytest.approx(1.0)
        assert table[1, 2] == pytest.approx(0.5)

    def test_outside_support(self):
        with pytest.raises(DomainError):
            empirical_table(np.array([[3, 0]]), 2, 2)
