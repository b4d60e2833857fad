# BBCD Services Package
from .errors import BBCDError

__all__ = ['BBCDError']
