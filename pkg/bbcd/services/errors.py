"""
BBCD Exceptions

ライブラリ全体で使う例外階層。
CLIは code をそのままエラーオブジェクトに出力する。
"""


class BBCDError(Exception):
    """BBCD base exception"""
    code = 'bbcd_error'

    def to_dict(self):
        return {'code': self.code, 'message': str(self)}


class DomainError(BBCDError, ValueError):
    """Parameter or argument outside its domain"""
    code = 'domain_error'


class SupportError(BBCDError, IndexError):
    """Index outside the support [0, n1] x [0, n2]"""
    code = 'support_error'

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class CapacityError(BBCDError):
    """Joint table larger than the configured cell cap"""
    code = 'capacity_error'


class TruncationError(BBCDError):
    """Truncated double sum leaves too much tail mass"""
    code = 'truncation_insufficient'


class ZeroFrequencyError(BBCDError):
    """A cell needed by the proportions estimator is empty"""
    code = 'zero_frequency'

    def __init__(self, cell):
        super().__init__(f"cell {cell} has zero relative frequency")
        self.cell = cell


class InsufficientDataError(BBCDError):
    """Too few observations for the requested procedure"""
    code = 'insufficient_data'


class ConvergenceError(BBCDError):
    """Optimizer stopped without meeting its tolerance"""
    code = 'not_converged'


class ProfileError(BBCDError):
    """Every grid point of the n profile failed"""
    code = 'profile_failed'


class CsvFormatError(BBCDError):
    """Malformed input CSV"""
    code = 'csv_format'

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
