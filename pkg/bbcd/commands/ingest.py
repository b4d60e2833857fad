"""
CSV Ingestion

観測 (x, y) の CSV を SampleData に読み込む。
生データはヘッダ `x,y`、度数表（--freq）はヘッダ `x,y,count`。
"""

import csv
import logging
import re

from bbcd.models import SampleData
from bbcd.services.errors import CsvFormatError

logger = logging.getLogger(__name__)

RAW_HEADER = ['x', 'y']
FREQ_HEADER = ['x', 'y', 'count']
COUNT_PATTERN = re.compile(r'-?[0-9]+')


def _parse_count(field, name, line):
    text = field.strip()
    if not COUNT_PATTERN.fullmatch(text):
        raise CsvFormatError(f"{name}={field!r} is not an integer", line=line)
    value = int(text)
    if value < 0:
        raise CsvFormatError(f"{name}={value} is negative", line=line)
    return value


def parse_csv(path, freq=False) -> SampleData:
    """CSV を読み込んで SampleData を返す

    UTF-8（BOM 可）、LF/CRLF どちらの改行でもよい。空行は読み飛ばす。
    """
    header = FREQ_HEADER if freq else RAW_HEADER
    pairs = []
    cells = {}
    try:
        with open(path, 'r', encoding='utf-8-sig', newline='') as f:
            reader = csv.reader(f)
            first = next(reader, None)
            if first is None:
                raise CsvFormatError("empty file: missing header", line=1)
            if [h.strip().lower() for h in first] != header:
                raise CsvFormatError(
                    f"header must be {','.join(header)}, got {','.join(first)}", line=1
                )
            for row in reader:
                if not row or all(not field.strip() for field in row):
                    continue
                line = reader.line_num
                if len(row) != len(header):
                    raise CsvFormatError(
                        f"expected {len(header)} fields, got {len(row)}", line=line
                    )
                x = _parse_count(row[0], 'x', line)
                y = _parse_count(row[1], 'y', line)
                if freq:
                    count = _parse_count(row[2], 'count', line)
                    cells[(x, y)] = cells.get((x, y), 0) + count
                else:
                    pairs.append((x, y))
    except OSError as e:
        raise CsvFormatError(f"cannot read {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise CsvFormatError(f"{path} is not valid UTF-8: {e}") from e

    if freq:
        if sum(cells.values()) == 0:
            raise CsvFormatError("no observations")
        data = SampleData.from_cells(cells)
    else:
        if not pairs:
            raise CsvFormatError("no observations")
        data = SampleData.from_pairs(pairs)

    logger.info(f"Loaded {path}: m={data.m}, suff={data.suff}")
    return data
