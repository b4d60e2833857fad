"""
Simulate Commands

sample: ギブスサンプラー（既定）または厳密サンプラーで (x, y) を生成する。
シード未指定のときは OS のエントロピーから作り、メタデータに記録する。
"""

import logging

import numpy as np

from bbcd.commands.base import Report, RunConfig, require
from bbcd.models import GibbsConfig
from bbcd.services.sample import exact_sample, gibbs_sample

logger = logging.getLogger(__name__)


def resolve_seed(config: RunConfig):
    """(seed, derived)。derived は自動生成したかどうか"""
    if config.seed is not None:
        return config.seed, False
    seed = int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])
    logger.info(f"No seed given; derived seed {seed} from system entropy")
    return seed, True


def handle_sample(config: RunConfig) -> Report:
    params = config.params
    (n_samples,) = require(config, 'n_samples')
    seed, derived = resolve_seed(config)
    if config.sampler == 'exact':
        result = exact_sample(params, n_samples, seed, config.mem_cap)
    else:
        gibbs = GibbsConfig(n_samples=n_samples, seed=seed,
                            burn_in=config.burn_in, thin=config.thin)
        result = gibbs_sample(params, gibbs)

    metadata = result.metadata()
    metadata['seed_derived'] = derived
    return Report(
        payload={'metadata': metadata, 'pairs': result.pairs.tolist()},
        rows=result.pairs.tolist(),
        columns=['x', 'y'],
        default_format='csv',
        metadata=metadata,
    )


def register(subparsers, parents):
    p = subparsers.add_parser('sample', parents=parents, help='draw (x, y) pairs')
    p.add_argument('--n-samples', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--burn-in', type=int)
    p.add_argument('--thin', type=int)
    p.add_argument('--sampler', choices=['gibbs', 'exact'], default='gibbs')


HANDLERS = {
    'sample': handle_sample,
}
