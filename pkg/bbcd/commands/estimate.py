"""
Estimate Commands

describe / fit / gof / profile: 観測データの CSV からの推定と検定。
"""

import logging

from bbcd.commands.base import Report, RunConfig, require
from bbcd.commands.ingest import parse_csv
from bbcd.models import CellFrequencies, FitResult, SampleData
from bbcd.services.errors import DomainError
from bbcd.services.infer import (
    chi_square_gof,
    estimate_from_proportions,
    fit_mle,
    fit_mle_profile_n,
    fit_profile_table,
)

logger = logging.getLogger(__name__)

DESCRIBE_COLUMNS = ['variable', 'min', 'q1', 'median', 'mean', 'q3', 'max']
PROFILE_COLUMNS = ['n', 'p1', 'p2', 't', 'log_lik', 'converged',
                   'corr_model', 'corr_data', 'statistic', 'dof', 'p_value']


def _load(config: RunConfig) -> SampleData:
    return parse_csv(config.input_path, freq=config.freq)


def _n_range(config: RunConfig, data: SampleData):
    """プロファイルする n の範囲。n_min の既定は観測の最大値"""
    (n_max,) = require(config, 'n_max')
    n_min = config.n_min
    if n_min is None:
        n_min = max(data.max_x, data.max_y, 1)
    return n_min, n_max


def _fit(config: RunConfig, data: SampleData) -> FitResult:
    if config.method == 'proportions':
        n1, n2 = require(config, 'n1', 'n2')
        return estimate_from_proportions(CellFrequencies.from_data(data), n1, n2,
                                         data=data, mem_cap=config.mem_cap)
    if config.n1 is not None and config.n2 is not None:
        return fit_mle(data, config.n1, config.n2, config.mle)
    if config.n1 is not None or config.n2 is not None:
        raise DomainError("give both --n1 and --n2, or neither to profile over n")
    n_min, n_max = _n_range(config, data)
    return fit_mle_profile_n(data, n_min, n_max, equal_n=config.equal_n,
                             opts=config.mle, max_workers=config.workers)


def handle_describe(config: RunConfig) -> Report:
    summary = _load(config).describe()
    rows = [[name] + [summary[name][c] for c in DESCRIBE_COLUMNS[1:]] for name in ('x', 'y')]
    return Report(payload=summary, rows=rows, columns=DESCRIBE_COLUMNS)


def handle_fit(config: RunConfig) -> Report:
    data = _load(config)
    result = _fit(config, data)
    return Report(payload=result.to_dict())


def handle_gof(config: RunConfig) -> Report:
    """--p1, --p2, --t まで与えればその値で検定（推定パラメータ数の既定 0）、
    それ以外は fit と同じ手順で当てはめてから検定する。"""
    data = _load(config)
    if config.has_params:
        params = fitted = config.params
        n_estimated = 0 if config.n_estimated is None else config.n_estimated
    else:
        fitted = _fit(config, data)
        n_estimated = config.n_estimated
        params = fitted.params_hat
    report = chi_square_gof(data, fitted, n_estimated,
                            min_expected=config.min_expected, mem_cap=config.mem_cap)
    payload = {'params': params.to_dict()}
    payload.update(report.to_dict())
    return Report(payload=payload)


def handle_profile(config: RunConfig) -> Report:
    data = _load(config)
    n_min, n_max = _n_range(config, data)
    n_estimated = 3 if config.n_estimated is None else config.n_estimated
    rows = fit_profile_table(data, range(n_min, n_max + 1), n_estimated, config.mle)
    return Report(
        payload={'m': data.m, 'corr_data': data.sample_corr(), 'rows': rows},
        rows=([row.get(c) for c in PROFILE_COLUMNS] for row in rows),
        columns=PROFILE_COLUMNS,
    )


def register(subparsers, parents):
    subparsers.add_parser('describe', parents=parents, help='descriptive summary of a CSV')

    for name, text in (('fit', 'estimate (p1, p2, t), profiling n when --n1/--n2 are absent'),
                       ('gof', 'chi-square goodness of fit'),
                       ('profile', 'per-n fit table with correlations and p-values')):
        p = subparsers.add_parser(name, parents=parents, help=text)
        p.add_argument('--n-min', type=int)
        p.add_argument('--n-max', type=int)
        p.add_argument('--equal-n', action='store_true', default=True,
                       help='profile with n1 = n2 = n (default)')
        p.add_argument('--no-equal-n', dest='equal_n', action='store_false',
                       help='profile over the grid product of n1 and n2')
        p.add_argument('--method', choices=['mle', 'proportions'], default='mle')
        p.add_argument('--n-estimated', type=int,
                       help='number of estimated parameters subtracted from the chi-square dof')
        p.add_argument('--workers', type=int)


HANDLERS = {
    'describe': handle_describe,
    'fit': handle_fit,
    'gof': handle_gof,
    'profile': handle_profile,
}
