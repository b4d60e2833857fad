import logging
import os
import sys
from datetime import datetime

from config import Config

LOG_FORMAT = '%(asctime)s [%(levelname)s] %(message)s'


class BBCDApp:
    """CLI アプリケーション。config は Config クラスの大文字属性のコピー"""

    def __init__(self):
        self.config = {}

    def config_from_object(self, obj):
        for key in dir(obj):
            if key.isupper():
                self.config[key] = getattr(obj, key)

    def run(self, argv=None, stdout=None, stderr=None) -> int:
        from bbcd.commands import main
        return main(argv, settings=self.config, stdout=stdout, stderr=stderr)


def _setup_logging(app):
    """stderr と（LOG_DIR があれば）月別ログファイルに出力。stdout はレポート専用"""
    logger = logging.getLogger('bbcd')
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.setLevel(app.config.get('LOG_LEVEL', 'INFO'))
    logger.propagate = False

    formatter = logging.Formatter(LOG_FORMAT)
    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setFormatter(formatter)
    logger.addHandler(stream_handler)

    log_dir = app.config.get('LOG_DIR')
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
        log_file = os.path.join(log_dir, f"bbcd_{datetime.now().strftime('%Y%m')}.log")
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)


def create_app(config_class=Config):
    app = BBCDApp()
    app.config_from_object(config_class)
    _setup_logging(app)
    return app
