"""
BBCD Inference

標本比率による推定、最尤推定（n 固定 / n の整数プロファイル）、
カイ二乗適合度検定。

n を固定すると BBCD は自然パラメータ θ = (log q1, log q2, log t) の指数型分布族で、
対数尤度は十分統計量 T = (Σx, Σy, Σxy) を使って
    ℓ(θ) = B + θ·T - m log S(θ)
と書ける（B は二項係数の項）。最尤推定は logit/log 変換後の θ 空間で
Nelder-Mead 法により探索する。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, gammaincc

from config import Config
from bbcd.models import (
    CellFrequencies,
    FitMethod,
    FitResult,
    GofReport,
    Params,
    PooledCell,
    ProfilePoint,
    SampleData,
)
from bbcd.services.core import (
    build_table,
    log_binomial_row,
    log_partition_natural,
    moments,
    sufficient_statistic_means,
)
from bbcd.services.errors import (
    BBCDError,
    ConvergenceError,
    DomainError,
    InsufficientDataError,
    ProfileError,
    SupportError,
    ZeroFrequencyError,
)

logger = logging.getLogger(__name__)

# expit(±36) はまだ 0, 1 に丸められない
_LOGIT_LIMIT = 36.0
_LOG_T_LIMIT = 700.0
_START_CLIP = 1e-3
_STATIONARITY_TOL = 1e-4


@dataclass(frozen=True)
class MLEOptions:
    """Nelder-Mead の設定"""
    max_evaluations: int = Config.MLE_MAX_EVALUATIONS
    xatol: float = Config.MLE_XATOL
    fatol: float = Config.MLE_FATOL
    restarts: int = Config.MLE_RESTARTS
    initial_step: float = 0.5
    start: Optional[Tuple[float, float, float]] = None  # (p1, p2, t)
    mem_cap: Optional[int] = None


# ============================================
# 入力チェック
# ============================================

def _check_support(data: SampleData, n1: int, n2: int):
    """[0,n1]x[0,n2] の外にある最初の観測で SupportError"""
    outside = (data.xs > n1) | (data.ys > n2)
    if np.any(outside):
        index = int(np.argmax(outside))
        x, y = int(data.xs[index]), int(data.ys[index])
        raise SupportError(
            f"observation {index} = ({x}, {y}) outside [0,{n1}]x[0,{n2}]", index=index
        )


def _require_trials(name, value) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
        raise DomainError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def _total_weight(data: SampleData) -> float:
    return float(data.weights.sum())


# ============================================
# 標本比率による推定
# ============================================

def _clamp_open_unit(name, value, warnings):
    if 0.0 < value < 1.0:
        return value
    clamped = min(max(value, np.finfo(float).tiny), 1.0 - np.finfo(float).epsneg)
    message = f"{name} estimate {value!r} clamped to {clamped!r}"
    logger.warning(message)
    warnings.append(message)
    return clamped


def estimate_from_proportions(freq: CellFrequencies, n1: int, n2: int,
                              data: Optional[SampleData] = None,
                              mem_cap: Optional[int] = None) -> FitResult:
    """セル (0,0),(0,1),(1,0),(1,1) の相対度数から (p1, p2, t) を解く

    f01/f00 = n2 q2、f10/f00 = n1 q1、f11/f01 = n1 q1 t より
        p2 = f01 / (f01 + n2 f00)
        p1 = f10 / (f10 + n1 f00)
        t  = (1 - p1) f11 / (n1 p1 f01)
    """
    n1 = _require_trials('n1', n1)
    n2 = _require_trials('n2', n2)
    for cell, value in (((0, 0), freq.f00), ((0, 1), freq.f01),
                        ((1, 0), freq.f10), ((1, 1), freq.f11)):
        if value <= 0.0:
            raise ZeroFrequencyError(cell)

    warnings = []
    p2 = _clamp_open_unit('p2', freq.f01 / (freq.f01 + n2 * freq.f00), warnings)
    p1 = _clamp_open_unit('p1', freq.f10 / (freq.f10 + n1 * freq.f00), warnings)
    t = (1.0 - p1) * freq.f11 / (n1 * p1 * freq.f01)
    if not (math.isfinite(t) and t > 0.0):
        raise DomainError(f"t estimate {t!r} is not a positive finite number")

    params = Params(n1, n2, p1, p2, t)
    log_lik = None
    sample_corr = None
    if data is not None:
        log_lik = log_likelihood(params, data)
        sample_corr = data.sample_corr()
    logger.info(f"Proportions estimate: p1={p1:.6f}, p2={p2:.6f}, t={t:.6f} (n1={n1}, n2={n2})")
    return FitResult(
        params_hat=params,
        log_lik=log_lik,
        converged=True,
        n_evaluations=0,
        model_moments=moments(params, mem_cap),
        method=FitMethod.PROPORTIONS,
        warnings=warnings,
        sample_corr=sample_corr,
    )


# ============================================
# 対数尤度
# ============================================

def _binomial_term(data: SampleData, n1: int, n2: int) -> float:
    """Σ w [log C(n1,x) + log C(n2,y)]"""
    w = data.weights
    return float(w @ log_binomial_row(n1)[data.xs] + w @ log_binomial_row(n2)[data.ys])


def _suff_vector(data: SampleData) -> np.ndarray:
    return np.array(data.suff, dtype=np.float64)


def log_likelihood(params: Params, data: SampleData) -> float:
    """ℓ = m log K_B + Σ log C(n1,x) + Σ log C(n2,y) + Σx log p1 + Σy log p2
           + Σ(n1-x) log(1-p1) + Σ(n2-y) log(1-p2) + Σxy log t

    十分統計量と二項係数の項だけで計算する。
    """
    _check_support(data, params.n1, params.n2)
    theta = np.array([math.log(params.q1), math.log(params.q2), math.log(params.t)])
    m = _total_weight(data)
    return (
        _binomial_term(data, params.n1, params.n2)
        + float(theta @ _suff_vector(data))
        - m * log_partition_natural(params.n1, params.n2, theta)
    )


# ============================================
# 最尤推定（n 固定）
# ============================================

def _start_point(data: SampleData, n1: int, n2: int, opts: MLEOptions) -> np.ndarray:
    """変換空間での初期値。既定はモーメント法 (x̄/n1, ȳ/n2, 1)"""
    if opts.start is not None:
        p1, p2, t = opts.start
        start = Params(n1, n2, p1, p2, t)
        return np.array([math.log(start.q1), math.log(start.q2), math.log(start.t)])
    mean_x, mean_y, _ = data.means()
    p1 = min(max(mean_x / n1, _START_CLIP), 1.0 - _START_CLIP)
    p2 = min(max(mean_y / n2, _START_CLIP), 1.0 - _START_CLIP)
    return np.array([math.log(p1 / (1.0 - p1)), math.log(p2 / (1.0 - p2)), 0.0])


def _boundary_diagnosis(data: SampleData, n1: int, n2: int) -> List[str]:
    """十分統計量が凸包の境界にあるとき MLE は存在しない"""
    m = _total_weight(data)
    sx, sy, sxy = data.suff
    issues = []
    if sx <= 0:
        issues.append("all x equal 0: p1 estimate runs to the boundary 0")
    elif sx >= m * n1:
        issues.append(f"all x equal n1={n1}: p1 estimate runs to the boundary 1")
    if sy <= 0:
        issues.append("all y equal 0: p2 estimate runs to the boundary 0")
    elif sy >= m * n2:
        issues.append(f"all y equal n2={n2}: p2 estimate runs to the boundary 1")
    if not issues and sxy <= 0:
        issues.append("no observation has x*y > 0: t estimate runs to the boundary 0")
    return issues


def _params_from_theta(theta: np.ndarray, n1: int, n2: int) -> Params:
    u1, u2 = np.clip(theta[:2], -_LOGIT_LIMIT, _LOGIT_LIMIT)
    u3 = float(np.clip(theta[2], -_LOG_T_LIMIT, _LOG_T_LIMIT))
    return Params(n1, n2, float(expit(u1)), float(expit(u2)), math.exp(u3))


def _stationarity_gap(params: Params, data: SampleData, mem_cap) -> float:
    """max |E[T]/T̄ - 1|（指数型分布族では最尤点で 0）"""
    model = np.array(sufficient_statistic_means(params, mem_cap))
    observed = np.array(data.means())
    scale = np.where(observed != 0.0, np.abs(observed), 1.0)
    return float(np.max(np.abs(model - observed) / scale))


def fit_mle(data: SampleData, n1: int, n2: int, opts: Optional[MLEOptions] = None) -> FitResult:
    """n1, n2 を固定した最尤推定

    θ = (logit p1, logit p2, log t) 上で -ℓ(θ)/m を Nelder-Mead で最小化する。
    収束後は最良点から単体を張り直して opts.restarts 回まで再探索する。
    """
    opts = opts or MLEOptions()
    n1 = _require_trials('n1', n1)
    n2 = _require_trials('n2', n2)
    m = _total_weight(data)
    if m < 3:
        raise InsufficientDataError(f"fit_mle needs at least 3 observations, got {m}")
    _check_support(data, n1, n2)

    mean_suff = _suff_vector(data) / m

    def objective(theta):
        return log_partition_natural(n1, n2, theta) - float(theta @ mean_suff)

    warnings = _boundary_diagnosis(data, n1, n2)
    for message in warnings:
        logger.warning(f"fit_mle(n1={n1}, n2={n2}): {message}")

    best = _start_point(data, n1, n2, opts)
    best_value = objective(best)
    n_evaluations = 1
    converged = False
    for attempt in range(opts.restarts + 1):
        simplex = np.vstack([best, best + opts.initial_step * np.eye(3)])
        budget = opts.max_evaluations - n_evaluations
        if budget <= 0:
            break
        result = minimize(
            objective,
            best,
            method='Nelder-Mead',
            options={
                'initial_simplex': simplex,
                'xatol': opts.xatol,
                'fatol': opts.fatol,
                'maxfev': budget,
            },
        )
        n_evaluations += int(result.nfev)
        converged = bool(result.success)
        improvement = best_value - float(result.fun)
        if float(result.fun) <= best_value:
            best, best_value = np.asarray(result.x, dtype=np.float64), float(result.fun)
        if not converged or improvement <= opts.fatol:
            break
        logger.debug(f"fit_mle restart {attempt + 1}: objective improved by {improvement:.3e}")

    if not math.isfinite(best_value):
        raise ConvergenceError(f"no finite log-likelihood found for n1={n1}, n2={n2}")

    params = _params_from_theta(best, n1, n2)
    if warnings:
        converged = False
    if not converged:
        message = f"optimizer stopped after {n_evaluations} evaluations without meeting tolerance"
        if n_evaluations >= opts.max_evaluations:
            message = f"evaluation limit {opts.max_evaluations} reached; returning best point found"
        logger.warning(f"fit_mle(n1={n1}, n2={n2}): {message}")
        warnings.append(message)
    else:
        gap = _stationarity_gap(params, data, opts.mem_cap)
        if gap > _STATIONARITY_TOL:
            message = f"sufficient statistics matched only to {gap:.2e} relative error"
            logger.warning(f"fit_mle(n1={n1}, n2={n2}): {message}")
            warnings.append(message)

    log_lik = log_likelihood(params, data)
    logger.info(
        f"MLE n1={n1}, n2={n2}: p1={params.p1:.6f}, p2={params.p2:.6f}, t={params.t:.6f}, "
        f"log_lik={log_lik:.6f}, evaluations={n_evaluations}, converged={converged}"
    )
    return FitResult(
        params_hat=params,
        log_lik=log_lik,
        converged=converged,
        n_evaluations=n_evaluations,
        model_moments=moments(params, opts.mem_cap),
        method=FitMethod.MLE_FIXED_N,
        warnings=warnings,
        sample_corr=data.sample_corr(),
    )


# ============================================
# n のプロファイル
# ============================================

def _profile_grid(data: SampleData, n_min: int, n_max: int, equal_n: bool):
    n_min = _require_trials('n_min', n_min)
    n_max = _require_trials('n_max', n_max)
    if n_max < n_min:
        raise DomainError(f"n_max={n_max} must be >= n_min={n_min}")
    if equal_n:
        lowest = max(data.max_x, data.max_y)
        if n_min < lowest:
            raise DomainError(f"n_min={n_min} is below the largest observed value {lowest}")
        return [(n, n) for n in range(n_min, n_max + 1)]
    if n_max < max(data.max_x, data.max_y):
        raise DomainError(f"n_max={n_max} is below the largest observed value")
    return [
        (a, b)
        for a in range(max(n_min, data.max_x), n_max + 1)
        for b in range(max(n_min, data.max_y), n_max + 1)
    ]


def _fit_point(data: SampleData, n1: int, n2: int, opts: MLEOptions):
    try:
        fit = fit_mle(data, n1, n2, opts)
    except BBCDError as exc:
        logger.debug(f"profile point ({n1}, {n2}) failed: {exc}")
        return None, ProfilePoint(n1, n2, None, False, error=f"{exc.code}: {exc}")
    logger.debug(f"profile point ({n1}, {n2}): log_lik={fit.log_lik:.6f}")
    return fit, ProfilePoint(n1, n2, fit.log_lik, fit.converged, params=fit.params_hat)


def fit_mle_profile_n(data: SampleData, n_min: int, n_max: int, equal_n: bool = True,
                      opts: Optional[MLEOptions] = None,
                      max_workers: Optional[int] = None) -> FitResult:
    """整数 n についてプロファイルした最尤推定

    格子点ごとに fit_mle を実行し、最大対数尤度の点を返す（同値なら小さい n）。
    格子点は並列に評価してよいが、結果は n の順に並べてから選ぶ。
    """
    opts = opts or MLEOptions()
    grid = _profile_grid(data, n_min, n_max, equal_n)
    workers = max_workers or Config.PROFILE_WORKERS
    with ThreadPoolExecutor(max_workers=workers) as executor:
        outcomes = list(executor.map(lambda nn: _fit_point(data, nn[0], nn[1], opts), grid))

    trace = [point for _, point in outcomes]
    best_fit = None
    for fit, _ in outcomes:
        if fit is None:
            continue
        if best_fit is None or fit.log_lik > best_fit.log_lik:
            best_fit = fit
    if best_fit is None:
        raise ProfileError(f"every grid point in n=[{n_min}, {n_max}] failed")

    failed = sum(1 for fit, _ in outcomes if fit is None)
    if failed:
        best_fit.warnings.append(f"{failed} of {len(grid)} grid points failed")
    best_fit.method = FitMethod.MLE_PROFILED_N
    best_fit.estimated_trials = 1 if equal_n else 2
    best_fit.profile_trace = trace
    best = best_fit.params_hat
    logger.info(f"Profiled MLE over {len(grid)} grid points: n1={best.n1}, n2={best.n2}")
    return best_fit


# ============================================
# カイ二乗適合度検定
# ============================================

def _observed_counts(data: SampleData, n1: int, n2: int) -> np.ndarray:
    counts = np.zeros((n1 + 1, n2 + 1))
    np.add.at(counts, (data.xs, data.ys), data.weights)
    return counts


def _pool_cells(expected: np.ndarray, observed: np.ndarray,
                min_expected: float) -> List[PooledCell]:
    """期待度数の降順（同値は x, y の昇順）に貪欲にまとめる

    各グループは期待度数が min_expected 以上になった時点で閉じる。
    最後に残った不足分は直前のグループに合流させる。
    """
    xs, ys = np.indices(expected.shape)
    xs, ys, exp_flat = xs.ravel(), ys.ravel(), expected.ravel()
    obs_flat = observed.ravel()
    order = np.lexsort((ys, xs, -exp_flat))

    groups = []
    cells, obs_sum, exp_sum = [], 0.0, 0.0
    for index in order:
        cells.append((int(xs[index]), int(ys[index])))
        obs_sum += float(obs_flat[index])
        exp_sum += float(exp_flat[index])
        if exp_sum >= min_expected:
            groups.append(PooledCell(tuple(cells), obs_sum, exp_sum))
            cells, obs_sum, exp_sum = [], 0.0, 0.0
    if cells:
        if groups:
            last = groups.pop()
            groups.append(PooledCell(last.cells + tuple(cells),
                                     last.observed + obs_sum, last.expected + exp_sum))
        else:
            groups.append(PooledCell(tuple(cells), obs_sum, exp_sum))
    return groups


def chi_square_p_value(statistic: float, dof: int) -> float:
    """カイ二乗分布の上側確率 Q(dof/2, statistic/2)"""
    return float(gammaincc(dof / 2.0, max(statistic, 0.0) / 2.0))


def _default_estimated(fitted) -> int:
    """p1, p2, t の 3 つに、プロファイルした試行回数の個数を足す"""
    if isinstance(fitted, FitResult):
        return 3 + fitted.estimated_trials
    return 3


def chi_square_gof(data: SampleData, fitted, n_estimated_params: Optional[int] = None,
                   min_expected: Optional[float] = None,
                   mem_cap: Optional[int] = None) -> GofReport:
    """カイ二乗適合度検定

    期待度数 m P(x,y) をテーブルから作り、プールしたグループで統計量をとる。
    自由度は グループ数 - 1 - 推定パラメータ数（1 未満なら 1 にして警告）。
    """
    params = fitted.params_hat if isinstance(fitted, FitResult) else fitted
    if not isinstance(params, Params):
        raise DomainError("fitted must be a FitResult or Params")
    k = _default_estimated(fitted) if n_estimated_params is None else int(n_estimated_params)
    if k < 0:
        raise DomainError(f"n_estimated_params must be >= 0, got {k}")
    min_expected = Config.GOF_MIN_EXPECTED if min_expected is None else float(min_expected)

    m = _total_weight(data)
    if m < 10:
        raise InsufficientDataError(f"chi_square_gof needs at least 10 observations, got {m}")
    _check_support(data, params.n1, params.n2)

    expected = m * build_table(params, mem_cap).probs
    observed = _observed_counts(data, params.n1, params.n2)
    groups = _pool_cells(expected, observed, min_expected)

    statistic = float(sum((g.observed - g.expected) ** 2 / g.expected for g in groups))
    dof = len(groups) - 1 - k
    dof_floored = dof < 1
    if dof_floored:
        logger.warning(
            f"chi-square dof {dof} ({len(groups)} groups, {k} estimated parameters) floored at 1"
        )
        dof = 1
    p_value = chi_square_p_value(statistic, dof)
    logger.info(f"Chi-square GOF: statistic={statistic:.6f}, dof={dof}, p={p_value:.6f}")
    return GofReport(
        statistic=statistic,
        dof=dof,
        p_value=p_value,
        pooled_cells=groups,
        dof_floored=dof_floored,
        n_estimated_params=k,
    )


# ============================================
# n ごとの当てはめ表
# ============================================

def fit_profile_table(data: SampleData, ns: Iterable[int], n_estimated_params: int = 3,
                      opts: Optional[MLEOptions] = None) -> List[Dict]:
    """n1 = n2 = n ごとに MLE・相関・χ² p 値を並べた表"""
    rows = []
    for n in ns:
        row = {'n': int(n)}
        try:
            fit = fit_mle(data, n, n, opts)
            gof = chi_square_gof(data, fit, n_estimated_params,
                                 mem_cap=opts.mem_cap if opts else None)
        except BBCDError as exc:
            logger.warning(f"profile table n={n}: {exc}")
            row['error'] = exc.to_dict()
            rows.append(row)
            continue
        row.update({
            'p1': fit.params_hat.p1,
            'p2': fit.params_hat.p2,
            't': fit.params_hat.t,
            'log_lik': fit.log_lik,
            'converged': fit.converged,
            'corr_model': fit.model_moments.corr,
            'corr_data': fit.sample_corr,
            'statistic': gof.statistic,
            'dof': gof.dof,
            'p_value': gof.p_value,
        })
        rows.append(row)
    return rows
