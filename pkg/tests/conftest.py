import numpy as np
import pytest

from bbcd.models import Params


def random_grid(k, seed, n_max=30, t_range=(0.05, 2.0)):
    """(n1, n2, p1, p2, t) をランダムに k 点"""
    rng = np.random.default_rng(seed)
    grid = []
    for _ in range(k):
        grid.append(Params(
            int(rng.integers(1, n_max + 1)),
            int(rng.integers(1, n_max + 1)),
            float(rng.uniform(0.05, 0.95)),
            float(rng.uniform(0.05, 0.95)),
            float(rng.uniform(*t_range)),
        ))
    return grid


@pytest.fixture
def scenario1():
    return Params(10, 10, 0.5, 0.9, 0.8)


@pytest.fixture
def scenario2():
    return Params(25, 25, 0.1, 0.2, 0.1)


@pytest.fixture
def write_csv(tmp_path):
    """文字列をそのまま CSV ファイルに書いてパスを返す"""
    def _write(content, name='data.csv'):
        path = tmp_path / name
        path.write_bytes(content.encode('utf-8'))
        return str(path)
    return _write
