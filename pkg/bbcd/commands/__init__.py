"""
BBCD Commands

サブコマンドの登録・引数解析・実行。
各モジュールが register(subparsers, parents) と HANDLERS を持つ。
"""

import argparse
import json
import logging
import sys
from typing import Any, Dict, Optional

from config import Config
from bbcd.commands import estimate, evaluate, simulate
from bbcd.commands.base import (
    DEFAULT_LADDER,
    RunConfig,
    error_payload,
    mle_from_settings,
    write_json,
    write_report,
)
from bbcd.commands.ingest import parse_csv
from bbcd.services.errors import BBCDError

logger = logging.getLogger(__name__)

HANDLERS = {}
HANDLERS.update(evaluate.HANDLERS)
HANDLERS.update(simulate.HANDLERS)
HANDLERS.update(estimate.HANDLERS)


def _settings_from(config_class) -> Dict[str, Any]:
    return {key: getattr(config_class, key) for key in dir(config_class) if key.isupper()}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--output-format', choices=['json', 'csv'])
    common.add_argument('--mem-cap', type=int, help='maximum number of joint-table cells')

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument('--n1', type=int)
    model.add_argument('--n2', type=int)
    model.add_argument('--p1', type=float)
    model.add_argument('--p2', type=float)
    model.add_argument('--t', type=float)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument('--input', dest='input_path')
    data.add_argument('--freq', action='store_true', help='input has header x,y,count')

    parser = argparse.ArgumentParser(
        prog='bbcd',
        description='Bivariate binomial conditionals distribution: evaluate, sample, fit and test',
    )
    subparsers = parser.add_subparsers(dest='subcommand', required=True)
    evaluate.register(subparsers, [common, model])
    simulate.register(subparsers, [common, model])
    estimate.register(subparsers, [common, model, data])
    return parser


def config_from_args(args: argparse.Namespace, settings: Optional[Dict[str, Any]] = None) -> RunConfig:
    """argparse の結果とアプリ設定から RunConfig を組み立てる"""
    settings = settings or _settings_from(Config)
    mem_cap = getattr(args, 'mem_cap', None) or settings['TABLE_MEM_CAP']

    def pick(name, default=None):
        value = getattr(args, name, None)
        return default if value is None else value

    return RunConfig(
        subcommand=args.subcommand,
        input_path=pick('input_path'),
        output_format=pick('output_format'),
        seed=pick('seed'),
        n1=pick('n1'),
        n2=pick('n2'),
        p1=pick('p1'),
        p2=pick('p2'),
        t=pick('t'),
        x=pick('x'),
        y=pick('y'),
        n_samples=pick('n_samples'),
        burn_in=pick('burn_in', settings['GIBBS_BURN_IN']),
        thin=pick('thin', settings['GIBBS_THIN']),
        sampler=pick('sampler', 'gibbs'),
        n_min=pick('n_min'),
        n_max=pick('n_max'),
        equal_n=pick('equal_n', True),
        freq=pick('freq', False),
        mem_cap=mem_cap,
        ladder=tuple(pick('ladder', DEFAULT_LADDER)),
        truncation=pick('truncation', settings['POISSON_TRUNCATION']),
        method=pick('method', 'mle'),
        n_estimated=pick('n_estimated'),
        min_expected=settings['GOF_MIN_EXPECTED'],
        workers=pick('workers', settings['PROFILE_WORKERS']),
        mle=mle_from_settings(settings, mem_cap),
    )


def run(config: RunConfig, stdout=None, stderr=None) -> int:
    """サブコマンドを実行してレポートを stdout に書く

    成功なら 0。BBCDError は {"error": {code, message}} を出力して 1。
    """
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        report = HANDLERS[config.subcommand](config)
        fmt = config.output_format or report.default_format
        if fmt == 'csv' and report.metadata is not None:
            stderr.write(json.dumps({'metadata': report.metadata}, ensure_ascii=False) + '\n')
        write_report(report, config.output_format, stdout)
    except BBCDError as e:
        logger.error(f"{config.subcommand} failed: [{e.code}] {e}")
        write_json(error_payload(e), stdout)
        return 1
    return 0


def main(argv=None, settings: Optional[Dict[str, Any]] = None, stdout=None, stderr=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    stdout = stdout or sys.stdout
    try:
        config = config_from_args(args, settings)
    except BBCDError as e:
        logger.error(f"invalid options: [{e.code}] {e}")
        write_json(error_payload(e), stdout)
        return 1
    return run(config, stdout=stdout, stderr=stderr)


__all__ = ['RunConfig', 'build_parser', 'config_from_args', 'main', 'parse_csv', 'run']
