"""
Evaluate Commands

pmf / table / moments / limit: パラメータを与えて分布を評価する。
"""

import logging

from bbcd.commands.base import Report, RunConfig, require
from bbcd.services import core
from bbcd.services.poisson_limit import limit_params, limit_tv_ladder

logger = logging.getLogger(__name__)


def handle_pmf(config: RunConfig) -> Report:
    params = config.params
    x, y = require(config, 'x', 'y')
    log_value = core.log_pmf(params, x, y)
    return Report(payload={
        'params': params.to_dict(),
        'x': x,
        'y': y,
        'log_pmf': log_value,
        'pmf': core.pmf(params, x, y),
    })


def handle_table(config: RunConfig) -> Report:
    params = config.params
    table = core.build_table(params, config.mem_cap)
    payload = {'params': params.to_dict(), 'log_norm': table.log_norm}
    if config.output_format == 'json':
        payload['cells'] = [list(cell) for cell in table.iter_cells()]
    return Report(
        payload=payload,
        rows=table.iter_cells(),
        columns=['x', 'y', 'prob'],
        default_format='csv',
    )


def handle_moments(config: RunConfig) -> Report:
    params = config.params
    summary = core.moments(params, config.mem_cap)
    less, equal, greater = core.comparison_probabilities(params, config.mem_cap)
    dispersion_x, dispersion_y = core.marginal_dispersion(params, config.mem_cap)
    payload = {'params': params.to_dict()}
    payload.update(summary.to_dict())
    payload.update({
        'prob_x_less_y': less,
        'prob_x_equal_y': equal,
        'prob_x_greater_y': greater,
        'dispersion_x': dispersion_x,
        'dispersion_y': dispersion_y,
        'stochastic_order': core.stochastic_order(params).value,
    })
    return Report(payload=payload)


def handle_limit(config: RunConfig) -> Report:
    limit = limit_params(config.params)
    ladder = limit_tv_ladder(
        limit.lambda1, limit.lambda2, limit.t, config.ladder,
        truncation=config.truncation, mem_cap=config.mem_cap,
    )
    return Report(
        payload={
            'lambda1': limit.lambda1,
            'lambda2': limit.lambda2,
            't': limit.t,
            'truncation': config.truncation,
            'ladder': ladder,
        },
        rows=([row['n'], row['tv']] for row in ladder),
        columns=['n', 'tv'],
    )


def register(subparsers, parents):
    p = subparsers.add_parser('pmf', parents=parents, help='log-pmf and pmf at (x, y)')
    p.add_argument('--x', type=int)
    p.add_argument('--y', type=int)

    subparsers.add_parser('table', parents=parents, help='full joint table (x, y, prob)')

    subparsers.add_parser('moments', parents=parents, help='moments and comparison probabilities')

    p = subparsers.add_parser('limit', parents=parents,
                              help='TV distance to the Poisson-conditionals limit over an n ladder')
    p.add_argument('--ladder', type=_int_list, help='comma separated n values, e.g. 10,20,40,80')
    p.add_argument('--truncation', type=int)


def _int_list(text):
    return [int(v) for v in text.split(',') if v.strip()]


HANDLERS = {
    'pmf': handle_pmf,
    'table': handle_table,
    'moments': handle_moments,
    'limit': handle_limit,
}
