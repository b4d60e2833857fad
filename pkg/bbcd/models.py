import csv
import math
import numbers
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from bbcd.services.errors import DomainError, SupportError

LOG_ZERO = -math.inf


def _as_count(name, value, minimum=0):
    """非負整数として検証"""
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise DomainError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise DomainError(f"{name} must be >= {minimum}, got {value}")
    return value


def _as_open_unit(name, value):
    value = float(value)
    if not (0.0 < value < 1.0):
        raise DomainError(f"{name} must lie in (0, 1), got {value}")
    return value


def _as_positive(name, value):
    value = float(value)
    if not (math.isfinite(value) and value > 0.0):
        raise DomainError(f"{name} must be finite and > 0, got {value}")
    return value


class Direction(str, Enum):
    """recurrence_step の進行方向"""
    X = 'x'
    Y = 'y'
    DIAGONAL = 'diagonal'


class StochasticOrder(str, Enum):
    """周辺分布の確率順序の判定結果"""
    X_DOMINATES = 'X_dominates'
    Y_DOMINATES = 'Y_dominates'
    EQUAL = 'equal'
    INCOMPARABLE = 'incomparable'


class FitMethod(str, Enum):
    PROPORTIONS = 'proportions'
    MLE_FIXED_N = 'mle_fixed_n'
    MLE_PROFILED_N = 'mle_profiled_n'


@dataclass(frozen=True)
class Params:
    """BBCD(n1, n2, p1, p2, t) のパラメータ"""
    n1: int
    n2: int
    p1: float
    p2: float
    t: float

    def __post_init__(self):
        object.__setattr__(self, 'n1', _as_count('n1', self.n1, minimum=1))
        object.__setattr__(self, 'n2', _as_count('n2', self.n2, minimum=1))
        object.__setattr__(self, 'p1', _as_open_unit('p1', self.p1))
        object.__setattr__(self, 'p2', _as_open_unit('p2', self.p2))
        object.__setattr__(self, 't', _as_positive('t', self.t))

    @property
    def q1(self):
        """オッズ p1/(1-p1)"""
        return self.p1 / (1.0 - self.p1)

    @property
    def q2(self):
        return self.p2 / (1.0 - self.p2)

    @property
    def cells(self):
        return (self.n1 + 1) * (self.n2 + 1)

    def swapped(self):
        """X と Y を入れ替えたパラメータ"""
        return Params(self.n2, self.n1, self.p2, self.p1, self.t)

    def to_dict(self):
        return {'n1': self.n1, 'n2': self.n2, 'p1': self.p1, 'p2': self.p2, 't': self.t}


@dataclass(frozen=True)
class JointTable:
    """(n1+1)x(n2+1) の同時確率行列。行が x、列が y"""
    params: Params
    probs: np.ndarray
    log_probs: np.ndarray
    log_norm: float  # log K_B^{-1}

    @property
    def shape(self):
        return self.probs.shape

    def row_sums(self):
        return self.probs.sum(axis=1)

    def col_sums(self):
        return self.probs.sum(axis=0)

    def iter_cells(self):
        """(x, y, prob) を行優先で返す"""
        n1, n2 = self.params.n1, self.params.n2
        for x in range(n1 + 1):
            for y in range(n2 + 1):
                yield x, y, float(self.probs[x, y])


@dataclass(frozen=True)
class MomentSummary:
    mean_x: float
    mean_y: float
    var_x: float
    var_y: float
    cov: float
    corr: float

    def to_dict(self):
        return {
            'mean_x': self.mean_x,
            'mean_y': self.mean_y,
            'var_x': self.var_x,
            'var_y': self.var_y,
            'cov': self.cov,
            'corr': self.corr,
        }


@dataclass(frozen=True)
class ConditionalBinomial:
    """条件付き分布 binomial(n, p)"""
    n: int
    p: float

    @property
    def mean(self):
        return self.n * self.p

    @property
    def variance(self):
        return self.n * self.p * (1.0 - self.p)

    def pmf(self):
        from scipy.stats import binom
        return binom.pmf(np.arange(self.n + 1), self.n, self.p)


@dataclass(frozen=True)
class PoissonLimitParams:
    """二変量ポアソン条件付き分布 BPD(lambda1, lambda2, t)

    t=1 は独立ポアソン。t>1 は正規化できないため不可。
    """
    lambda1: float
    lambda2: float
    t: float

    def __post_init__(self):
        object.__setattr__(self, 'lambda1', _as_positive('lambda1', self.lambda1))
        object.__setattr__(self, 'lambda2', _as_positive('lambda2', self.lambda2))
        t = float(self.t)
        if not (0.0 < t <= 1.0):
            raise DomainError(f"t must lie in (0, 1] for the Poisson limit, got {t}")
        object.__setattr__(self, 't', t)

    @classmethod
    def from_params(cls, params: Params):
        return cls(params.n1 * params.p1, params.n2 * params.p2, params.t)


@dataclass(frozen=True)
class GibbsConfig:
    """ギブスサンプラーの設定"""
    n_samples: int
    seed: int
    burn_in: int = Config.GIBBS_BURN_IN
    thin: int = Config.GIBBS_THIN
    init: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        object.__setattr__(self, 'n_samples', _as_count('n_samples', self.n_samples, minimum=1))
        object.__setattr__(self, 'burn_in', _as_count('burn_in', self.burn_in))
        object.__setattr__(self, 'thin', _as_count('thin', self.thin, minimum=1))
        seed = _as_count('seed', self.seed)
        if seed >= 2 ** 64:
            raise DomainError(f"seed must fit in 64 bits, got {seed}")
        object.__setattr__(self, 'seed', seed)
        if len(self.init) != 2:
            raise DomainError(f"init must be an (x0, y0) pair, got {self.init!r}")
        x0 = _as_count('init x0', self.init[0])
        y0 = _as_count('init y0', self.init[1])
        object.__setattr__(self, 'init', (x0, y0))

    def check_support(self, params: Params):
        x0, y0 = self.init
        if x0 > params.n1 or y0 > params.n2:
            raise DomainError(
                f"init {self.init} outside support [0,{params.n1}]x[0,{params.n2}]"
            )

    def to_dict(self):
        return {
            'n_samples': self.n_samples,
            'seed': self.seed,
            'burn_in': self.burn_in,
            'thin': self.thin,
            'init': list(self.init),
        }


@dataclass(frozen=True)
class SamplePairs:
    """サンプル (x, y) の列とその生成条件"""
    pairs: np.ndarray
    params_used: Params
    config_used: GibbsConfig
    method: str = 'gibbs'
    rng_algorithm: str = Config.RNG_ALGORITHM

    def __len__(self):
        return len(self.pairs)

    @property
    def xs(self):
        return self.pairs[:, 0]

    @property
    def ys(self):
        return self.pairs[:, 1]

    def metadata(self):
        return {
            'method': self.method,
            'rng_algorithm': self.rng_algorithm,
            'params': self.params_used.to_dict(),
            'config': self.config_used.to_dict(),
        }

    def write_csv(self, stream):
        """ヘッダ x,y のCSVとして書き出す"""
        writer = csv.writer(stream, lineterminator='\n')
        writer.writerow(['x', 'y'])
        writer.writerows(self.pairs.tolist())

    def to_sample_data(self):
        return SampleData.from_pairs(self.pairs)


@dataclass(frozen=True)
class SampleData:
    """観測 (x, y) と重み。生データなら重みはすべて1

    重みは度数表の読み込みや期待度数による擬似標本に使う。
    """
    pairs: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pairs = np.asarray(self.pairs)
        if pairs.size == 0:
            pairs = pairs.reshape(0, 2)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise DomainError(f"pairs must have shape (k, 2), got {pairs.shape}")
        if not np.issubdtype(pairs.dtype, np.integer):
            if not np.all(np.mod(pairs, 1) == 0):
                raise DomainError("pairs must be integers")
        pairs = pairs.astype(np.int64)
        if np.any(pairs < 0):
            bad = int(np.argmax(np.any(pairs < 0, axis=1)))
            raise SupportError(f"negative value in row {bad}: {tuple(pairs[bad])}", index=bad)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if weights.shape[0] != pairs.shape[0]:
            raise DomainError("weights must have one entry per pair")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise DomainError("weights must be finite and nonnegative")
        object.__setattr__(self, 'pairs', pairs)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def from_pairs(cls, pairs: Sequence[Tuple[int, int]]):
        pairs = np.asarray(pairs)
        return cls(pairs, np.ones(len(pairs)))

    @classmethod
    def from_cells(cls, cells: Dict[Tuple[int, int], float]):
        """セル (x, y) -> 度数 から作成"""
        keys = sorted(cells)
        pairs = np.array(keys, dtype=np.int64).reshape(-1, 2)
        weights = np.array([cells[k] for k in keys], dtype=np.float64)
        return cls(pairs, weights)

    @property
    def is_integral(self):
        return bool(np.all(np.mod(self.weights, 1) == 0))

    @property
    def m(self):
        total = float(self.weights.sum())
        return int(round(total)) if self.is_integral else total

    @property
    def xs(self):
        return self.pairs[:, 0]

    @property
    def ys(self):
        return self.pairs[:, 1]

    @property
    def suff(self):
        """十分統計量 (Σx, Σy, Σxy)"""
        w = self.weights
        x = self.xs.astype(np.float64)
        y = self.ys.astype(np.float64)
        values = (float(w @ x), float(w @ y), float(w @ (x * y)))
        if self.is_integral:
            return tuple(int(round(v)) for v in values)
        return values

    @property
    def cells(self):
        """疎なセル度数 (x, y) -> count"""
        counts = {}
        for (x, y), w in zip(self.pairs.tolist(), self.weights.tolist()):
            counts[(x, y)] = counts.get((x, y), 0.0) + w
        if self.is_integral:
            return {k: int(round(v)) for k, v in counts.items()}
        return counts

    @property
    def max_x(self):
        return int(self.xs.max()) if len(self.pairs) else 0

    @property
    def max_y(self):
        return int(self.ys.max()) if len(self.pairs) else 0

    def means(self):
        """(x̄, ȳ, mean of xy)"""
        m = float(self.weights.sum())
        sx, sy, sxy = self.suff
        return sx / m, sy / m, sxy / m

    def sample_corr(self):
        w = self.weights / self.weights.sum()
        x = self.xs.astype(np.float64)
        y = self.ys.astype(np.float64)
        mx, my = w @ x, w @ y
        vx = w @ (x - mx) ** 2
        vy = w @ (y - my) ** 2
        if vx <= 0.0 or vy <= 0.0:
            return float('nan')
        return float((w @ ((x - mx) * (y - my))) / math.sqrt(vx * vy))

    def describe(self):
        """記述統計（最小・四分位・中央値・平均・最大・相関）"""
        if not self.is_integral:
            raise DomainError("describe() needs integer counts")
        repeats = np.round(self.weights).astype(np.int64)
        summary = {}
        for name, column in (('x', self.xs), ('y', self.ys)):
            values = np.repeat(column, repeats)
            q1, median, q3 = np.quantile(values, [0.25, 0.5, 0.75])
            summary[name] = {
                'min': int(values.min()),
                'q1': float(q1),
                'median': float(median),
                'mean': float(values.mean()),
                'q3': float(q3),
                'max': int(values.max()),
            }
        summary['m'] = self.m
        summary['corr'] = self.sample_corr()
        return summary


@dataclass(frozen=True)
class CellFrequencies:
    """セル (0,0),(0,1),(1,0),(1,1) の相対度数"""
    f00: float
    f01: float
    f10: float
    f11: float

    def __post_init__(self):
        for name in ('f00', 'f01', 'f10', 'f11'):
            value = float(getattr(self, name))
            if not (0.0 <= value <= 1.0):
                raise DomainError(f"{name} must lie in [0, 1], got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_data(cls, data: SampleData):
        total = float(data.weights.sum())
        cells = data.cells
        return cls(*(cells.get(c, 0) / total for c in ((0, 0), (0, 1), (1, 0), (1, 1))))

    @classmethod
    def from_table(cls, table: JointTable):
        p = table.probs
        return cls(p[0, 0], p[0, 1], p[1, 0], p[1, 1])


@dataclass(frozen=True)
class ProfilePoint:
    """n プロファイルの1点"""
    n1: int
    n2: int
    log_lik: Optional[float]
    converged: bool
    params: Optional[Params] = None
    error: Optional[str] = None

    def to_dict(self):
        d = {'n1': self.n1, 'n2': self.n2, 'log_lik': self.log_lik, 'converged': self.converged}
        if self.params is not None:
            d.update(p1=self.params.p1, p2=self.params.p2, t=self.params.t)
        if self.error:
            d['error'] = self.error
        return d


@dataclass
class FitResult:
    """推定結果"""
    params_hat: Params
    log_lik: Optional[float]
    converged: bool
    n_evaluations: int
    model_moments: MomentSummary
    method: FitMethod
    warnings: List[str] = field(default_factory=list)
    profile_trace: List[ProfilePoint] = field(default_factory=list)
    sample_corr: Optional[float] = None
    estimated_trials: int = 0   # プロファイルで推定した試行回数の個数（n1 = n2 なら 1、別々なら 2）

    def to_dict(self):
        d = self.params_hat.to_dict()
        d.update({
            'log_lik': self.log_lik,
            'converged': self.converged,
            'method': self.method.value,
            'estimated_trials': self.estimated_trials,
            'n_evaluations': self.n_evaluations,
            'model_moments': self.model_moments.to_dict(),
            'corr_model': self.model_moments.corr,
            'corr_data': self.sample_corr,
        })
        if self.warnings:
            d['warnings'] = list(self.warnings)
        if self.profile_trace:
            d['profile_trace'] = [p.to_dict() for p in self.profile_trace]
        return d


@dataclass(frozen=True)
class PooledCell:
    """プール後のセル群"""
    cells: Tuple[Tuple[int, int], ...]
    observed: float
    expected: float

    def to_dict(self):
        return {
            'cells': [list(c) for c in self.cells],
            'observed': self.observed,
            'expected': self.expected,
        }


@dataclass
class GofReport:
    """カイ二乗適合度検定の結果"""
    statistic: float
    dof: int
    p_value: float
    pooled_cells: List[PooledCell]
    dof_floored: bool = False
    n_estimated_params: int = 0

    def to_dict(self):
        return {
            'statistic': self.statistic,
            'dof': self.dof,
            'p_value': self.p_value,
            'dof_floored': self.dof_floored,
            'n_estimated_params': self.n_estimated_params,
            'pooled_cells': [c.to_dict() for c in self.pooled_cells],
        }
