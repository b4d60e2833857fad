"""
Command Base

サブコマンド共通の設定オブジェクトとレポート出力。
"""

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from config import Config
from bbcd.models import Params
from bbcd.services.errors import DomainError
from bbcd.services.infer import MLEOptions

SUBCOMMANDS = ('pmf', 'table', 'moments', 'sample', 'fit', 'gof', 'limit', 'describe', 'profile')
NEEDS_PARAMS = ('pmf', 'table', 'moments', 'sample', 'limit')
NEEDS_INPUT = ('fit', 'gof', 'describe', 'profile')
DEFAULT_LADDER = (10, 20, 40, 80)


@dataclass
class RunConfig:
    """1回の CLI 実行の設定"""
    subcommand: str
    input_path: Optional[str] = None
    output_format: Optional[str] = None   # None ならサブコマンドの既定
    seed: Optional[int] = None
    n1: Optional[int] = None
    n2: Optional[int] = None
    p1: Optional[float] = None
    p2: Optional[float] = None
    t: Optional[float] = None
    x: Optional[int] = None
    y: Optional[int] = None
    n_samples: Optional[int] = None
    burn_in: int = Config.GIBBS_BURN_IN
    thin: int = Config.GIBBS_THIN
    sampler: str = 'gibbs'
    n_min: Optional[int] = None
    n_max: Optional[int] = None
    equal_n: bool = True
    freq: bool = False
    mem_cap: Optional[int] = None
    ladder: Sequence[int] = DEFAULT_LADDER
    truncation: Optional[int] = None
    method: str = 'mle'
    n_estimated: Optional[int] = None
    min_expected: Optional[float] = None
    workers: Optional[int] = None
    mle: MLEOptions = field(default_factory=MLEOptions)

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise DomainError(f"unknown subcommand {self.subcommand!r}")
        if self.output_format not in (None, 'json', 'csv'):
            raise DomainError(f"output format must be json or csv, got {self.output_format!r}")
        if self.method not in ('mle', 'proportions'):
            raise DomainError(f"method must be mle or proportions, got {self.method!r}")
        if self.sampler not in ('gibbs', 'exact'):
            raise DomainError(f"sampler must be gibbs or exact, got {self.sampler!r}")
        if self.subcommand in NEEDS_PARAMS and not self.has_params:
            raise DomainError(f"{self.subcommand} needs --n1, --n2, --p1, --p2 and --t")
        if self.subcommand in NEEDS_INPUT and not self.input_path:
            raise DomainError(f"{self.subcommand} needs --input")

    @property
    def has_params(self):
        return all(v is not None for v in (self.n1, self.n2, self.p1, self.p2, self.t))

    @property
    def params(self) -> Optional[Params]:
        if not self.has_params:
            return None
        return Params(self.n1, self.n2, self.p1, self.p2, self.t)


@dataclass
class Report:
    """サブコマンドの出力

    payload は JSON 用、rows/columns は CSV 用（None なら payload のスカラー項目を1行に）。
    """
    payload: Dict[str, Any]
    rows: Optional[Iterable[Sequence]] = None
    columns: Optional[Sequence[str]] = None
    default_format: str = 'json'
    metadata: Optional[Dict[str, Any]] = None


def to_jsonable(value):
    """numpy 型と非有限値を JSON に出せる形へ"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if hasattr(value, 'value') and isinstance(getattr(value, 'value'), str):
        return value.value
    return value


def write_json(payload, stream):
    stream.write(json.dumps(to_jsonable(payload), indent=2, ensure_ascii=False))
    stream.write('\n')


def write_report(report: Report, output_format: Optional[str], stream) -> str:
    fmt = output_format or report.default_format
    if fmt == 'json':
        write_json(report.payload, stream)
        return fmt

    writer = csv.writer(stream, lineterminator='\n')
    if report.rows is None:
        scalars = {
            k: v for k, v in to_jsonable(report.payload).items()
            if not isinstance(v, (dict, list))
        }
        writer.writerow(list(scalars))
        writer.writerow(['' if v is None else v for v in scalars.values()])
        return fmt
    writer.writerow(list(report.columns))
    for row in report.rows:
        writer.writerow(['' if v is None else v for v in to_jsonable(list(row))])
    return fmt


def error_payload(exc) -> Dict[str, Dict[str, str]]:
    return {'error': exc.to_dict()}


def mle_from_settings(settings: Dict[str, Any], mem_cap: Optional[int]) -> MLEOptions:
    return MLEOptions(
        max_evaluations=settings['MLE_MAX_EVALUATIONS'],
        xatol=settings['MLE_XATOL'],
        fatol=settings['MLE_FATOL'],
        restarts=settings['MLE_RESTARTS'],
        mem_cap=mem_cap,
    )


def require(config: RunConfig, *names: str) -> List[Any]:
    """サブコマンド固有の必須オプション"""
    missing = [name for name in names if getattr(config, name) is None]
    if missing:
        flags = ', '.join('--' + name.replace('_', '-') for name in missing)
        raise DomainError(f"{config.subcommand} needs {flags}")
    return [getattr(config, name) for name in names]
