"""
BBCD シミュレーション検証スクリプト
ギブスサンプラーでデータを生成し、n をプロファイルした最尤推定で
(n, p1, p2, t) がどれだけ回復できるかを標本サイズごとに確認する

使い方:
  python scripts/replicate_simulation.py                                  # n=10, p1=0.5, p2=0.9, t=0.8
  python scripts/replicate_simulation.py --n 25 --p1 0.1 --p2 0.2 --t 0.1 --sizes 1000,10000,100000
  python scripts/replicate_simulation.py --seed 20240501 -o instance/results/scenario1.csv

注意:
  - 標本サイズごとに独立な子シードを使うので、--seed が同じなら結果は再現する
  - n の探索範囲は既定で [n-5, n+5]（下限は観測の最大値）
"""
import sys
import os
import csv
import logging
import argparse

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
os.makedirs("instance/logs", exist_ok=True)

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(message)s",
    handlers=[
        logging.FileHandler("instance/logs/replicate_simulation.log", encoding="utf-8"),
        logging.StreamHandler(sys.stderr),
    ],
)
logger = logging.getLogger(__name__)

from dotenv import load_dotenv
load_dotenv()

from config import Config
from bbcd.models import GibbsConfig, Params
from bbcd.services.core import build_table, total_variation
from bbcd.services.errors import BBCDError
from bbcd.services.infer import fit_mle_profile_n
from bbcd.services.sample import empirical_table, gibbs_sample, spawn_seeds

COLUMNS = ['N', 'seed', 'n_hat', 'p1_hat', 'p2_hat', 't_hat', 'log_lik', 'converged', 'tv_to_exact']


def parse_args():
    parser = argparse.ArgumentParser(description="BBCD シミュレーション検証")
    parser.add_argument("--n", type=int, default=10, help="n1 = n2 = n (デフォルト: 10)")
    parser.add_argument("--p1", type=float, default=0.5)
    parser.add_argument("--p2", type=float, default=0.9)
    parser.add_argument("--t", type=float, default=0.8)
    parser.add_argument("--sizes", default="50,100,500,1000,5000",
                        help="標本サイズ（カンマ区切り）")
    parser.add_argument("--seed", type=int, default=0, help="親シード (デフォルト: 0)")
    parser.add_argument("--burn-in", type=int, default=Config.GIBBS_BURN_IN)
    parser.add_argument("--n-min", type=int, help="n の探索下限 (デフォルト: n-5)")
    parser.add_argument("--n-max", type=int, help="n の探索上限 (デフォルト: n+5)")
    parser.add_argument("--workers", type=int, default=Config.PROFILE_WORKERS)
    parser.add_argument("-o", "--output", help="結果 CSV の出力先")
    return parser.parse_args()


def run_one(params, size, seed, args):
    """1つの標本サイズについてサンプリングと推定を行い、結果行を返す"""
    config = GibbsConfig(n_samples=size, seed=seed, burn_in=args.burn_in)
    sample = gibbs_sample(params, config)
    data = sample.to_sample_data()

    n_min = args.n_min if args.n_min is not None else max(1, params.n1 - 5)
    n_min = max(n_min, data.max_x, data.max_y)
    n_max = args.n_max if args.n_max is not None else params.n1 + 5
    fit = fit_mle_profile_n(data, n_min, max(n_max, n_min), equal_n=True,
                            max_workers=args.workers)

    tv = total_variation(empirical_table(sample.pairs, params.n1, params.n2),
                         build_table(params).probs)
    best = fit.params_hat
    return {
        'N': size,
        'seed': seed,
        'n_hat': best.n1,
        'p1_hat': best.p1,
        'p2_hat': best.p2,
        't_hat': best.t,
        'log_lik': fit.log_lik,
        'converged': fit.converged,
        'tv_to_exact': tv,
    }


def main():
    args = parse_args()
    params = Params(args.n, args.n, args.p1, args.p2, args.t)
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    seeds = spawn_seeds(args.seed, len(sizes))

    logger.info(f"シナリオ: {params.to_dict()}  標本サイズ: {sizes}  親シード: {args.seed}")

    results = []
    errors = []
    for i, (size, seed) in enumerate(zip(sizes, seeds), 1):
        logger.info(f"[{i}/{len(sizes)}] N={size} を実行中...")
        try:
            row = run_one(params, size, seed, args)
        except BBCDError as e:
            logger.warning(f"  ✗ エラー: [{e.code}] {e}")
            errors.append({"N": size, "error": str(e)})
            continue
        results.append(row)
        logger.info(
            f"  ✓ n̂={row['n_hat']}  p̂1={row['p1_hat']:.5f}  p̂2={row['p2_hat']:.5f}  "
            f"t̂={row['t_hat']:.5f}  TV={row['tv_to_exact']:.4f}"
        )

    logger.info("=" * 50)
    logger.info(f"完了: {len(results)}件成功 / {len(errors)}件エラー")

    if args.output:
        os.makedirs(os.path.dirname(os.path.abspath(args.output)), exist_ok=True)
        with open(args.output, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(results)
        logger.info(f"結果を保存: {args.output}")

    return 1 if errors else 0


if __name__ == "__main__":
    sys.exit(main())
