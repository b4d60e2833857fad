"""
BBCD Core

BBCD(n1, n2, p1, p2, t) の確率関数と派生量。
確率はすべて対数空間で計算し、和は log-sum-exp でとる（t^{xy} のアンダーフロー対策）。
閉形式で求める量は、同時分布テーブルの全列挙と照合できるようにしてある。

定理の表記のうち誤植があるもの（条件付き和の指数、対角漸化式、階乗モーメントの t の指数、
P(X<Y) と max の閉形式）は、同時確率の比から導き直した形で実装し、
比較・最大・最小の分布は列挙を主経路にしている。
"""

import logging
import math
import numbers
from functools import lru_cache
from typing import Iterable, Sequence, Tuple

import numpy as np
from scipy.special import expit, gammaln, logit, logsumexp

from config import Config
from bbcd.models import (
    LOG_ZERO,
    ConditionalBinomial,
    Direction,
    JointTable,
    MomentSummary,
    Params,
    StochasticOrder,
)
from bbcd.services.errors import CapacityError, DomainError, SupportError

logger = logging.getLogger(__name__)

# exp() がオーバーフローしない log の上限
_LOG_FLOAT_MAX = math.log(np.finfo(np.float64).max)


# ============================================
# 対数二項係数
# ============================================

@lru_cache(maxsize=256)
def _log_factorials(n: int) -> np.ndarray:
    values = gammaln(np.arange(n + 1, dtype=np.float64) + 1.0)
    values.setflags(write=False)
    return values


@lru_cache(maxsize=256)
def log_binomial_row(n: int) -> np.ndarray:
    """log C(n, k), k = 0..n"""
    lf = _log_factorials(n)
    row = lf[n] - lf - lf[::-1]
    row.setflags(write=False)
    return row


def _is_count(value) -> bool:
    return isinstance(value, numbers.Integral) and not isinstance(value, bool)


def _require_count(name, value, minimum=0) -> int:
    if not _is_count(value) or value < minimum:
        raise DomainError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def _require_positive(name, value) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0.0):
        raise DomainError(f"{name} must be finite and > 0, got {value}")
    return value


# ============================================
# S 関数と正規化定数
# ============================================

def _log_s_terms(n1: int, n2: int, log_q1: float, log_q2: float, log_t: float) -> np.ndarray:
    """S の各項の対数 log[C(n1,x) q1^x C(n2,y) q2^y t^{xy}]"""
    x = np.arange(n1 + 1, dtype=np.float64)
    y = np.arange(n2 + 1, dtype=np.float64)
    return (
        (log_binomial_row(n1) + x * log_q1)[:, None]
        + (log_binomial_row(n2) + y * log_q2)[None, :]
        + np.outer(x, y) * log_t
    )


def _log_s_from_logs(n1: int, n2: int, log_q1: float, log_q2: float, log_t: float) -> float:
    return float(logsumexp(_log_s_terms(n1, n2, log_q1, log_q2, log_t)))


def log_s_function(n1: int, n2: int, q1: float, q2: float, t: float) -> float:
    """log S(n1, n2, q1, q2, t)

    S = Σ_x Σ_y C(n1,x) q1^x C(n2,y) q2^y t^{xy}
    """
    n1 = _require_count('n1', n1)
    n2 = _require_count('n2', n2)
    q1 = _require_positive('q1', q1)
    q2 = _require_positive('q2', q2)
    t = _require_positive('t', t)
    return _log_s_from_logs(n1, n2, math.log(q1), math.log(q2), math.log(t))


@lru_cache(maxsize=1024)
def _log_norm(params: Params) -> Tuple[float, float]:
    """(log K_B^{-1}, log S)"""
    log_s = log_s_function(params.n1, params.n2, params.q1, params.q2, params.t)
    log_k_inv = params.n1 * math.log1p(-params.p1) + params.n2 * math.log1p(-params.p2) + log_s
    return log_k_inv, log_s


def log_norm_constant(params: Params) -> float:
    """log K_B^{-1} = n1 log(1-p1) + n2 log(1-p2) + log S"""
    return _log_norm(params)[0]


def natural_parameters(params: Params) -> Tuple[float, float, float]:
    """指数型分布族の自然パラメータ (log q1, log q2, log t)"""
    return math.log(params.q1), math.log(params.q2), math.log(params.t)


def log_partition(params: Params) -> float:
    """自然パラメータの関数としての対数分配関数 log S

    勾配は十分統計量の期待値 (E[X], E[Y], E[XY]) に一致する。
    """
    return _log_norm(params)[1]


def log_partition_natural(n1: int, n2: int, theta: Sequence[float]) -> float:
    """log S を自然パラメータ theta = (θ1, θ2, θ3) で評価"""
    theta1, theta2, theta3 = (float(v) for v in theta)
    return _log_s_from_logs(_require_count('n1', n1), _require_count('n2', n2), theta1, theta2, theta3)


# ============================================
# 確率関数と同時分布テーブル
# ============================================

def log_pmf(params: Params, x, y) -> float:
    """log P(X=x, Y=y)。台の外は LOG_ZERO"""
    if not (_is_count(x) and _is_count(y)):
        return LOG_ZERO
    if not (0 <= x <= params.n1 and 0 <= y <= params.n2):
        return LOG_ZERO
    x, y = int(x), int(y)
    return (
        -log_norm_constant(params)
        + log_binomial_row(params.n1)[x]
        + log_binomial_row(params.n2)[y]
        + x * math.log(params.p1)
        + y * math.log(params.p2)
        + (params.n1 - x) * math.log1p(-params.p1)
        + (params.n2 - y) * math.log1p(-params.p2)
        + x * y * math.log(params.t)
    )


def pmf(params: Params, x, y) -> float:
    return math.exp(log_pmf(params, x, y))


def _compute_table(params: Params) -> JointTable:
    log_q1, log_q2, log_t = natural_parameters(params)
    terms = _log_s_terms(params.n1, params.n2, log_q1, log_q2, log_t)
    log_k_inv, log_s = _log_norm(params)
    log_probs = terms - log_s
    probs = np.exp(log_probs)
    log_probs.setflags(write=False)
    probs.setflags(write=False)
    return JointTable(params=params, probs=probs, log_probs=log_probs, log_norm=log_k_inv)


# キャッシュに残るのは TABLE_CACHE_CELLS 以下のテーブルを最大 TABLE_CACHE_SIZE 個まで
_cached_table = lru_cache(maxsize=Config.TABLE_CACHE_SIZE)(_compute_table)


def build_table(params: Params, mem_cap: int = None) -> JointTable:
    """同時確率行列を作成（行 x、列 y）"""
    cap = Config.TABLE_MEM_CAP if mem_cap is None else int(mem_cap)
    if params.cells > cap:
        raise CapacityError(
            f"support of {params.cells} cells exceeds the table cap of {cap}"
        )
    if params.cells <= Config.TABLE_CACHE_CELLS:
        return _cached_table(params)
    return _compute_table(params)


# ============================================
# 周辺分布・モーメント
# ============================================

def _log_weight(p: float, log_t: float, k: np.ndarray) -> np.ndarray:
    """log[1 - p + p t^k]"""
    return np.logaddexp(math.log1p(-p), math.log(p) + k * log_t)


def marginal_x(params: Params) -> np.ndarray:
    """P(X=x), x = 0..n1

    K_B C(n1,x) p1^x (1-p1)^{n1-x} [1-p2+t^x p2]^{n2}
    """
    x = np.arange(params.n1 + 1, dtype=np.float64)
    log_m = (
        log_binomial_row(params.n1)
        + x * math.log(params.p1)
        + (params.n1 - x) * math.log1p(-params.p1)
        + params.n2 * _log_weight(params.p2, math.log(params.t), x)
        - log_norm_constant(params)
    )
    return np.exp(log_m)


def marginal_y(params: Params) -> np.ndarray:
    return marginal_x(params.swapped())


def mean_closed_form(params: Params, axis: str = 'x') -> float:
    """E[X]（axis='y' なら E[Y]）を一重和の閉形式で計算

    E[X] = n1 p1 K_B Σ_j C(n1-1,j) p1^j (1-p1)^{n1-1-j} [1-p2+p2 t^{j+1}]^{n2}
    """
    if axis == 'y':
        return mean_closed_form(params.swapped(), 'x')
    if axis != 'x':
        raise DomainError(f"axis must be 'x' or 'y', got {axis!r}")
    n1 = params.n1
    j = np.arange(n1, dtype=np.float64)
    terms = (
        log_binomial_row(n1 - 1)
        + j * math.log(params.p1)
        + (n1 - 1 - j) * math.log1p(-params.p1)
        + params.n2 * _log_weight(params.p2, math.log(params.t), j + 1.0)
    )
    log_mean = math.log(n1 * params.p1) - log_norm_constant(params) + float(logsumexp(terms))
    return math.exp(log_mean)


def moments(params: Params, mem_cap: int = None) -> MomentSummary:
    """平均・分散・共分散・相関（2次はテーブルから）"""
    table = build_table(params, mem_cap)
    probs = table.probs
    x = np.arange(params.n1 + 1, dtype=np.float64)
    y = np.arange(params.n2 + 1, dtype=np.float64)
    px = table.row_sums()
    py = table.col_sums()
    mean_x = float(x @ px)
    mean_y = float(y @ py)
    dx = x - mean_x
    dy = y - mean_y
    var_x = float((dx * dx) @ px)
    var_y = float((dy * dy) @ py)
    cov = float(dx @ probs @ dy)
    corr = cov / math.sqrt(var_x * var_y) if var_x > 0 and var_y > 0 else 0.0
    corr = min(1.0, max(-1.0, corr))

    _check_oracle('mean_x', mean_closed_form(params, 'x'), mean_x)
    _check_oracle('mean_y', mean_closed_form(params, 'y'), mean_y)

    return MomentSummary(
        mean_x=mean_x,
        mean_y=mean_y,
        var_x=var_x,
        var_y=var_y,
        cov=cov,
        corr=corr,
    )


def _check_oracle(name, closed_form, enumerated, tol=None):
    tol = Config.ORACLE_TOLERANCE if tol is None else tol
    scale = max(abs(enumerated), 1e-300)
    if abs(closed_form - enumerated) / scale > tol:
        logger.warning(
            f"{name}: closed form {closed_form!r} disagrees with enumeration {enumerated!r}"
        )


def sufficient_statistic_means(params: Params, mem_cap: int = None) -> Tuple[float, float, float]:
    """(E[X], E[Y], E[XY])"""
    table = build_table(params, mem_cap)
    x = np.arange(params.n1 + 1, dtype=np.float64)
    y = np.arange(params.n2 + 1, dtype=np.float64)
    return (
        float(x @ table.row_sums()),
        float(y @ table.col_sums()),
        float(x @ table.probs @ y),
    )


def marginal_dispersion(params: Params, mem_cap: int = None) -> Tuple[float, float]:
    """周辺分散 / 同じ n と平均をもつ二項分布の分散（>1 で過分散）"""
    summary = moments(params, mem_cap)
    bx = summary.mean_x * (1.0 - summary.mean_x / params.n1)
    by = summary.mean_y * (1.0 - summary.mean_y / params.n2)
    return summary.var_x / bx, summary.var_y / by


def factorial_moment(params: Params, r: int, s: int) -> float:
    """E[X_(r) Y_(s)]（下降階乗の同時モーメント）

    n1_(r) n2_(s) q1^r q2^s t^{rs} S(n1-r, n2-s, t^s q1, t^r q2, t) / S(n1, n2, q1, q2, t)
    r > n1 または s > n2 では下降階乗が台全体で 0 になるので 0 を返す。
    """
    r = _require_count('r', r)
    s = _require_count('s', s)
    if r > params.n1 or s > params.n2:
        return 0.0
    lf1 = _log_factorials(params.n1)
    lf2 = _log_factorials(params.n2)
    log_q1, log_q2, log_t = natural_parameters(params)
    log_value = (
        (lf1[params.n1] - lf1[params.n1 - r])
        + (lf2[params.n2] - lf2[params.n2 - s])
        + r * log_q1
        + s * log_q2
        + r * s * log_t
        + _log_s_from_logs(params.n1 - r, params.n2 - s, log_q1 + s * log_t, log_q2 + r * log_t, log_t)
        - log_partition(params)
    )
    return math.exp(log_value)


# ============================================
# 生成関数
# ============================================

def _exp_or_inf(log_value: float) -> float:
    """float で表せない大きさは inf"""
    if log_value > _LOG_FLOAT_MAX:
        logger.warning(f"generating function value exp({log_value:.1f}) overflows; returning inf")
        return math.inf
    return math.exp(log_value)


def log_pgf(params: Params, s1: float, s2: float) -> float:
    s1 = _require_positive('s1', s1)
    s2 = _require_positive('s2', s2)
    log_q1, log_q2, log_t = natural_parameters(params)
    return (
        _log_s_from_logs(params.n1, params.n2, log_q1 + math.log(s1), log_q2 + math.log(s2), log_t)
        - log_partition(params)
    )


def pgf(params: Params, s1: float, s2: float) -> float:
    """E[s1^X s2^Y] = S(n1, n2, s1 q1, s2 q2, t) / S(n1, n2, q1, q2, t)"""
    return _exp_or_inf(log_pgf(params, s1, s2))


def mgf(params: Params, t1: float, t2: float) -> float:
    """E[exp(t1 X + t2 Y)] = pgf(exp t1, exp t2)"""
    t1, t2 = float(t1), float(t2)
    if not (math.isfinite(t1) and math.isfinite(t2)):
        raise DomainError(f"mgf arguments must be finite, got ({t1}, {t2})")
    log_q1, log_q2, log_t = natural_parameters(params)
    return _exp_or_inf(
        _log_s_from_logs(params.n1, params.n2, log_q1 + t1, log_q2 + t2, log_t)
        - log_partition(params)
    )


# ============================================
# 条件付き分布・回帰
# ============================================

def conditional_success_probability(p: float, t: float, k: int) -> float:
    """t^k p / (1 - p + t^k p)"""
    if k == 0 or t == 1.0:
        return p
    return float(expit(logit(p) + k * math.log(t)))


def conditional_x_given_y(params: Params, y: int) -> ConditionalBinomial:
    """X | Y=y ~ binomial(n1, t^y p1 / (1 - p1 + t^y p1))"""
    if not _is_count(y) or not 0 <= y <= params.n2:
        raise SupportError(f"y={y!r} outside [0, {params.n2}]")
    return ConditionalBinomial(params.n1, conditional_success_probability(params.p1, params.t, int(y)))


def conditional_y_given_x(params: Params, x: int) -> ConditionalBinomial:
    """Y | X=x ~ binomial(n2, t^x p2 / (1 - p2 + t^x p2))"""
    if not _is_count(x) or not 0 <= x <= params.n1:
        raise SupportError(f"x={x!r} outside [0, {params.n1}]")
    return ConditionalBinomial(params.n2, conditional_success_probability(params.p2, params.t, int(x)))


def regression_x_on_y(params: Params, y: int) -> float:
    """E[X | Y=y]"""
    return conditional_x_given_y(params, y).mean


def regression_y_on_x(params: Params, x: int) -> float:
    return conditional_y_given_x(params, x).mean


def conditional_variance_x_given_y(params: Params, y: int) -> float:
    return conditional_x_given_y(params, y).variance


def conditional_variance_y_given_x(params: Params, x: int) -> float:
    return conditional_y_given_x(params, x).variance


def sum_support(params: Params, u: int) -> range:
    """X+Y=u のときの x の範囲"""
    return range(max(0, u - params.n2), min(u, params.n1) + 1)


def conditional_given_sum(params: Params, u: int, mem_cap: int = None) -> np.ndarray:
    """P(X=x | X+Y=u), x = max(0,u-n2)..min(u,n1)

    重みは C(n1,x) C(n2,u-x) [p1(1-p2)/(p2(1-p1))]^x t^{x(u-x)} に比例する。
    テーブルの反対角を対数空間で正規化する。
    """
    if not _is_count(u) or not 0 <= u <= params.n1 + params.n2:
        raise DomainError(f"u={u!r} outside [0, {params.n1 + params.n2}]")
    table = build_table(params, mem_cap)
    xs = np.array(sum_support(params, int(u)))
    log_slice = table.log_probs[xs, u - xs]
    log_total = float(logsumexp(log_slice))
    if not math.isfinite(log_total):
        raise DomainError(f"P(X+Y={u}) is zero")
    return np.exp(log_slice - log_total)


def sum_pmf(params: Params, mem_cap: int = None) -> np.ndarray:
    """P(X+Y=u), u = 0..n1+n2"""
    table = build_table(params, mem_cap)
    n1, n2 = params.n1, params.n2
    totals = np.add.outer(np.arange(n1 + 1), np.arange(n2 + 1))
    return np.bincount(totals.ravel(), weights=table.probs.ravel(), minlength=n1 + n2 + 1)


# ============================================
# 比較確率（stress-strength）
# ============================================

def comparison_probabilities(params: Params, mem_cap: int = None) -> Tuple[float, float, float]:
    """(P(X<Y), P(X=Y), P(X>Y)) を列挙で計算"""
    probs = build_table(params, mem_cap).probs
    less = float(np.triu(probs, k=1).sum())
    equal = float(np.trace(probs))
    greater = float(np.tril(probs, k=-1).sum())
    return less, equal, greater


def prob_x_less_y(params: Params, mem_cap: int = None) -> float:
    """R = P(X < Y)"""
    return comparison_probabilities(params, mem_cap)[0]


# ============================================
# 漸化式
# ============================================

def _check_step(params: Params, direction: Direction, m, n):
    if not (_is_count(m) and _is_count(n)):
        raise SupportError(f"indices must be integers, got ({m!r}, {n!r})")
    min_m = 1 if direction in (Direction.X, Direction.DIAGONAL) else 0
    min_n = 1 if direction in (Direction.Y, Direction.DIAGONAL) else 0
    if not (min_m <= m <= params.n1 and min_n <= n <= params.n2):
        raise SupportError(
            f"{direction.value}-step to ({m}, {n}) needs m in [{min_m},{params.n1}], "
            f"n in [{min_n},{params.n2}]"
        )


def log_recurrence_ratio(params: Params, direction, m: int, n: int) -> float:
    """log[P(m,n) / P(前のセル)]"""
    direction = Direction(direction)
    _check_step(params, direction, m, n)
    log_q1, log_q2, log_t = natural_parameters(params)
    if direction is Direction.X:
        return n * log_t + log_q1 + math.log(params.n1 - m + 1) - math.log(m)
    if direction is Direction.Y:
        return m * log_t + log_q2 + math.log(params.n2 - n + 1) - math.log(n)
    return (
        log_q1 + log_q2 + (m + n - 1) * log_t
        + math.log(params.n1 - m + 1) - math.log(m)
        + math.log(params.n2 - n + 1) - math.log(n)
    )


def recurrence_step(params: Params, direction, m: int, n: int, base: float) -> float:
    """前のセルの確率 base から P(X=m, Y=n) を求める

    x: (m-1, n) -> (m, n)、y: (m, n-1) -> (m, n)、diagonal: (m-1, n-1) -> (m, n)
    """
    return base * math.exp(log_recurrence_ratio(params, direction, m, n))


def log_recurrence_step(params: Params, direction, m: int, n: int, log_base: float) -> float:
    return log_base + log_recurrence_ratio(params, direction, m, n)


_STEP_OFFSETS = {
    Direction.X: (1, 0),
    Direction.Y: (0, 1),
    Direction.DIAGONAL: (1, 1),
}


def chain_recurrence(params: Params, path: Iterable) -> Tuple[int, int, float]:
    """(0,0) から path に沿って漸化式をつなぎ、終点と log P を返す"""
    m, n = 0, 0
    log_value = log_pmf(params, 0, 0)
    for step in path:
        direction = Direction(step)
        dm, dn = _STEP_OFFSETS[direction]
        m, n = m + dm, n + dn
        log_value = log_recurrence_step(params, direction, m, n, log_value)
    return m, n, log_value


# ============================================
# 確率順序
# ============================================

def _survival(pmf_values: np.ndarray, length: int) -> np.ndarray:
    """P(Z > k), k = 0..length-1"""
    padded = np.zeros(length + 1)
    padded[:len(pmf_values)] = pmf_values
    at_least = np.cumsum(padded[::-1])[::-1]
    return at_least[1:]


def stochastic_order(params: Params, tol: float = None) -> StochasticOrder:
    """周辺生存関数 P(X>k), P(Y>k) を比較して順序を判定"""
    tol = Config.ORDER_TOLERANCE if tol is None else tol
    length = max(params.n1, params.n2)
    diff = _survival(marginal_x(params), length) - _survival(marginal_y(params), length)
    if np.all(np.abs(diff) <= tol):
        return StochasticOrder.EQUAL
    if np.all(diff >= -tol):
        return StochasticOrder.X_DOMINATES
    if np.all(diff <= tol):
        return StochasticOrder.Y_DOMINATES
    return StochasticOrder.INCOMPARABLE


# ============================================
# 最大・最小
# ============================================

def max_pmf(params: Params, mem_cap: int = None) -> np.ndarray:
    """P(max(X,Y)=m), m = 0..max(n1,n2)"""
    probs = build_table(params, mem_cap).probs
    grid = np.maximum.outer(np.arange(params.n1 + 1), np.arange(params.n2 + 1))
    return np.bincount(grid.ravel(), weights=probs.ravel(), minlength=max(params.n1, params.n2) + 1)


def min_pmf(params: Params, mem_cap: int = None) -> np.ndarray:
    """P(min(X,Y)=u), u = 0..max(n1,n2)"""
    probs = build_table(params, mem_cap).probs
    grid = np.minimum.outer(np.arange(params.n1 + 1), np.arange(params.n2 + 1))
    return np.bincount(grid.ravel(), weights=probs.ravel(), minlength=max(params.n1, params.n2) + 1)


def min_survival(params: Params, mem_cap: int = None) -> np.ndarray:
    """P(min(X,Y) > u), u = 0..max(n1,n2)。末尾は 0"""
    values = min_pmf(params, mem_cap)
    return _survival(values, len(values))


# ============================================
# 距離
# ============================================

def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """全変動距離 0.5 Σ|p - q|（形が違えば 0 で埋める）"""
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    q = np.atleast_1d(np.asarray(q, dtype=np.float64))
    if p.ndim != q.ndim:
        raise DomainError("pmfs must have the same number of dimensions")
    shape = tuple(max(a, b) for a, b in zip(p.shape, q.shape))
    pp = np.zeros(shape)
    qq = np.zeros(shape)
    pp[tuple(slice(0, s) for s in p.shape)] = p
    qq[tuple(slice(0, s) for s in q.shape)] = q
    return 0.5 * float(np.abs(pp - qq).sum())
