import os

basedir = os.path.abspath(os.path.dirname(__file__))


def _env_int(key, default):
    """環境変数を整数として取得"""
    value = os.environ.get(key)
    if value is None or value == '':
        return default
    return int(float(value))


def _env_float(key, default):
    """環境変数を実数として取得"""
    value = os.environ.get(key)
    if value is None or value == '':
        return default
    return float(value)


def get_log_dir():
    """ログ出力先ディレクトリを取得（未設定ならファイル出力なし）"""
    log_dir = os.environ.get('LOG_DIR')
    if not log_dir:
        return None
    if not os.path.isabs(log_dir):
        log_dir = os.path.join(basedir, log_dir)
    return log_dir


class Config:
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')
    LOG_DIR = get_log_dir()

    # 同時分布テーブル
    TABLE_MEM_CAP = _env_int('BBCD_TABLE_MEM_CAP', 100_000_000)   # (n1+1)(n2+1) の上限セル数
    TABLE_CACHE_CELLS = _env_int('BBCD_TABLE_CACHE_CELLS', 1_000_000)  # これ以下のテーブルだけキャッシュ
    TABLE_CACHE_SIZE = _env_int('BBCD_TABLE_CACHE_SIZE', 8)

    # サンプリング
    GIBBS_BURN_IN = _env_int('BBCD_GIBBS_BURN_IN', 500)
    GIBBS_THIN = _env_int('BBCD_GIBBS_THIN', 1)
    RNG_ALGORITHM = os.environ.get('BBCD_RNG_ALGORITHM', 'PCG64')

    # 最尤推定（Nelder-Mead）
    MLE_MAX_EVALUATIONS = _env_int('BBCD_MLE_MAX_EVALUATIONS', 100_000)
    MLE_XATOL = _env_float('BBCD_MLE_XATOL', 1e-8)          # 変換空間での単体直径
    MLE_FATOL = _env_float('BBCD_MLE_FATOL', 1e-12)
    MLE_RESTARTS = _env_int('BBCD_MLE_RESTARTS', 2)
    PROFILE_WORKERS = _env_int('BBCD_PROFILE_WORKERS', 1)

    # 適合度検定
    GOF_MIN_EXPECTED = _env_float('BBCD_GOF_MIN_EXPECTED', 5.0)

    # 数値許容誤差
    ORDER_TOLERANCE = _env_float('BBCD_ORDER_TOLERANCE', 1e-12)   # 確率順序の同値判定
    ORACLE_TOLERANCE = _env_float('BBCD_ORACLE_TOLERANCE', 1e-10)  # 閉形式と列挙の照合

    # ポアソン極限
    POISSON_TAIL_TOL = _env_float('BBCD_POISSON_TAIL_TOL', 1e-12)
    POISSON_TRUNCATION = _env_int('BBCD_POISSON_TRUNCATION', 60)
