"""
BBCD Sampling

ギブスサンプラーと、有限の台上の逆関数法による厳密サンプラー。
厳密サンプラーはギブスサンプラーの検証用オラクルとして使う。

乱数は numpy の PCG64。SeedSequence で独立な子シードに分割できる。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List

import numpy as np

from config import Config
from bbcd.models import GibbsConfig, Params, SamplePairs
from bbcd.services.core import build_table, conditional_success_probability
from bbcd.services.errors import DomainError

logger = logging.getLogger(__name__)


def make_rng(seed: int) -> np.random.Generator:
    """シード付きの PCG64 ジェネレータ"""
    if Config.RNG_ALGORITHM != 'PCG64':
        raise DomainError(f"unsupported RNG algorithm: {Config.RNG_ALGORITHM}")
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(seed: int, k: int) -> List[int]:
    """親シードから独立な k 個の64bit子シードを作る"""
    children = np.random.SeedSequence(seed).spawn(k)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def draw_binomial(rng: np.random.Generator, n: int, p: float) -> int:
    """binomial(n, p) を1つ生成

    numpy の実装は n·min(p,1-p) が小さいとき逆関数法、それ以外は BTPE 法。
    """
    return int(rng.binomial(n, p))


def _success_tables(params: Params):
    """Y|X=x と X|Y=y の成功確率を x, y ごとに前計算"""
    p_y_given_x = [conditional_success_probability(params.p2, params.t, x) for x in range(params.n1 + 1)]
    p_x_given_y = [conditional_success_probability(params.p1, params.t, y) for y in range(params.n2 + 1)]
    return p_y_given_x, p_x_given_y


def gibbs_sample(params: Params, config: GibbsConfig) -> SamplePairs:
    """ギブスサンプラー

    1スイープで Y|X=x を引き、続けて X|Y=y を引く。
    burn_in スイープを捨て、以後 thin スイープごとに1点を残す。
    """
    config.check_support(params)
    rng = make_rng(config.seed)
    p_y_given_x, p_x_given_y = _success_tables(params)
    n1, n2 = params.n1, params.n2

    x, y = config.init
    pairs = np.empty((config.n_samples, 2), dtype=np.int64)

    for _ in range(config.burn_in):
        y = draw_binomial(rng, n2, p_y_given_x[x])
        x = draw_binomial(rng, n1, p_x_given_y[y])

    for i in range(config.n_samples):
        for _ in range(config.thin):
            y = draw_binomial(rng, n2, p_y_given_x[x])
            x = draw_binomial(rng, n1, p_x_given_y[y])
        pairs[i, 0] = x
        pairs[i, 1] = y

    logger.info(
        f"Gibbs sampling done: {config.n_samples} draws "
        f"(burn_in={config.burn_in}, thin={config.thin}, seed={config.seed})"
    )
    return SamplePairs(pairs=pairs, params_used=params, config_used=config, method='gibbs')


def run_chains(params: Params, config: GibbsConfig, n_chains: int,
               max_workers: int = 1) -> List[SamplePairs]:
    """独立な複数チェーン。子シードは config.seed から分割し、結果はチェーン順"""
    if n_chains < 1:
        raise DomainError(f"n_chains must be >= 1, got {n_chains}")
    configs = [
        GibbsConfig(
            n_samples=config.n_samples,
            seed=seed,
            burn_in=config.burn_in,
            thin=config.thin,
            init=config.init,
        )
        for seed in spawn_seeds(config.seed, n_chains)
    ]
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(lambda c: gibbs_sample(params, c), configs))


def exact_sample(params: Params, n_samples: int, seed: int, mem_cap: int = None) -> SamplePairs:
    """平坦化したテーブルの累積分布に対する逆関数法（i.i.d.）"""
    config = GibbsConfig(n_samples=n_samples, seed=seed, burn_in=0, thin=1)
    table = build_table(params, mem_cap)
    cdf = np.cumsum(table.probs.ravel())
    rng = make_rng(config.seed)
    u = rng.random(config.n_samples) * cdf[-1]
    index = np.minimum(np.searchsorted(cdf, u, side='right'), cdf.size - 1)
    xs, ys = np.divmod(index, params.n2 + 1)
    pairs = np.column_stack([xs, ys]).astype(np.int64)
    logger.info(f"Exact sampling done: {config.n_samples} draws (seed={config.seed})")
    return SamplePairs(pairs=pairs, params_used=params, config_used=config, method='exact')


def empirical_table(pairs: np.ndarray, n1: int, n2: int) -> np.ndarray:
    """サンプルの相対度数行列 (n1+1)x(n2+1)"""
    pairs = np.asarray(pairs, dtype=np.int64)
    if pairs.size and (pairs[:, 0].max() > n1 or pairs[:, 1].max() > n2 or pairs.min() < 0):
        raise DomainError(f"pairs fall outside [0,{n1}]x[0,{n2}]")
    counts = np.zeros((n1 + 1, n2 + 1))
    np.add.at(counts, (pairs[:, 0], pairs[:, 1]), 1.0)
    return counts / max(len(pairs), 1)
