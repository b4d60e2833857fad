"""
Poisson Limit

n1, n2 → ∞、n1 p1 = λ1、n2 p2 = λ2 を保ったときの極限である
二変量ポアソン条件付き分布 BPD(λ1, λ2, t) と、BBCD との全変動距離。
"""

import logging
import math
import numbers
from functools import lru_cache
from typing import Dict, Iterable, List

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import poisson

from config import Config
from bbcd.models import Params, PoissonLimitParams
from bbcd.services.core import build_table, total_variation
from bbcd.services.errors import DomainError, TruncationError

logger = logging.getLogger(__name__)


def _log_kernel(limit: PoissonLimitParams, truncation: int) -> np.ndarray:
    """log[λ1^x λ2^y t^{xy} / (x! y!)], 0 <= x, y <= truncation"""
    k = np.arange(truncation + 1, dtype=np.float64)
    lx = k * math.log(limit.lambda1) - gammaln(k + 1.0)
    ly = k * math.log(limit.lambda2) - gammaln(k + 1.0)
    return lx[:, None] + ly[None, :] + np.outer(k, k) * math.log(limit.t)


@lru_cache(maxsize=64)
def _log_normalizer(limit: PoissonLimitParams, truncation: int, tail_tol: float) -> float:
    log_z = float(logsumexp(_log_kernel(limit, truncation)))
    # t <= 1 なので箱の外の質量は e^{λ1+λ2}(P(N1>T) + P(N2>T)) 以下
    outside = poisson.sf(truncation, limit.lambda1) + poisson.sf(truncation, limit.lambda2)
    tail_bound = math.exp(limit.lambda1 + limit.lambda2 - log_z) * outside
    if tail_bound > tail_tol:
        raise TruncationError(
            f"truncation {truncation} leaves tail mass up to {tail_bound:.3e} (> {tail_tol:.1e}) "
            f"for lambda=({limit.lambda1}, {limit.lambda2})"
        )
    return log_z


def _resolve(truncation, tail_tol):
    truncation = Config.POISSON_TRUNCATION if truncation is None else truncation
    if isinstance(truncation, bool) or not isinstance(truncation, numbers.Integral) or truncation < 0:
        raise DomainError(f"truncation must be a nonnegative integer, got {truncation!r}")
    tail_tol = Config.POISSON_TAIL_TOL if tail_tol is None else float(tail_tol)
    return int(truncation), tail_tol


def poisson_limit_pmf(limit: PoissonLimitParams, x: int, y: int,
                      truncation: int = None, tail_tol: float = None) -> float:
    """BPD の確率 P(x, y)。正規化は [0, truncation]^2 の有限和"""
    truncation, tail_tol = _resolve(truncation, tail_tol)
    log_z = _log_normalizer(limit, truncation, tail_tol)
    for value in (x, y):
        if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 0:
            return 0.0
    x, y = int(x), int(y)
    log_value = (
        x * math.log(limit.lambda1) + y * math.log(limit.lambda2)
        + x * y * math.log(limit.t)
        - math.lgamma(x + 1) - math.lgamma(y + 1)
    )
    return math.exp(log_value - log_z)


def poisson_limit_table(limit: PoissonLimitParams, truncation: int = None,
                        tail_tol: float = None) -> np.ndarray:
    """BPD の確率行列 (truncation+1)x(truncation+1)"""
    truncation, tail_tol = _resolve(truncation, tail_tol)
    log_z = _log_normalizer(limit, truncation, tail_tol)
    return np.exp(_log_kernel(limit, truncation) - log_z)


def limit_params(params: Params) -> PoissonLimitParams:
    """BBCD パラメータに対応する極限 (n1 p1, n2 p2, t)"""
    return PoissonLimitParams.from_params(params)


def limit_tv_ladder(lambda1: float, lambda2: float, t: float, ns: Iterable[int],
                    truncation: int = None, tail_tol: float = None,
                    mem_cap: int = None) -> List[Dict[str, float]]:
    """BBCD(n, n, λ1/n, λ2/n, t) と BPD(λ1, λ2, t) の全変動距離を n ごとに計算"""
    limit = PoissonLimitParams(lambda1, lambda2, t)
    bpd = poisson_limit_table(limit, truncation, tail_tol)
    ladder = []
    for n in ns:
        if isinstance(n, bool) or not isinstance(n, numbers.Integral):
            raise DomainError(f"ladder entries must be integers, got {n!r}")
        if n <= max(limit.lambda1, limit.lambda2):
            raise DomainError(f"n={n} must exceed both lambdas so that p = lambda/n < 1")
        params = Params(int(n), int(n), limit.lambda1 / n, limit.lambda2 / n, limit.t)
        tv = total_variation(build_table(params, mem_cap).probs, bpd)
        logger.info(f"limit ladder n={n}: TV={tv:.6e}")
        ladder.append({'n': int(n), 'tv': tv})
    return ladder
