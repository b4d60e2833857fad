"""
BBCD 当てはめレポート（Excel）

観測データの CSV について、記述統計・n ごとの当てはめ表・
最良 n での観測度数と期待度数を1つのワークブックにまとめる。

使い方:
  python generate_report.py data.csv --n-max 20
  python generate_report.py data.csv --n-min 10 --n-max 20 --freq -o report.xlsx
"""
import sys
import os
import argparse
import logging
from datetime import date

from dotenv import load_dotenv
load_dotenv()

from openpyxl import Workbook
from openpyxl.styles import Font, PatternFill, Alignment, Border, Side

from bbcd import create_app
from bbcd.commands import parse_csv
from bbcd.models import Params
from bbcd.services.core import build_table
from bbcd.services.errors import BBCDError
from bbcd.services.infer import fit_profile_table

logger = logging.getLogger('bbcd.report')

HEADER_FILL = PatternFill('solid', fgColor='1F4E79')
HEADER_FONT = Font(bold=True, color='FFFFFF', size=10)
ACCENT_FILL = PatternFill('solid', fgColor='FFF2CC')
TITLE_FONT = Font(bold=True, color='1F4E79', size=16)
SECTION_FONT = Font(bold=True, color='1F4E79', size=13)
NOTE_FONT = Font(color='808080', size=9, italic=True)
NUM_FMT = '#,##0'
PROB_FMT = '0.00000'
thin_border = Border(
    left=Side(style='thin', color='D9D9D9'),
    right=Side(style='thin', color='D9D9D9'),
    top=Side(style='thin', color='D9D9D9'),
    bottom=Side(style='thin', color='D9D9D9'),
)


def style_header_row(ws, row, cols):
    for col in range(1, cols + 1):
        cell = ws.cell(row=row, column=col)
        cell.fill = HEADER_FILL
        cell.font = HEADER_FONT
        cell.alignment = Alignment(horizontal='center', vertical='center', wrap_text=True)


def style_data_cell(ws, row, col, fmt=None):
    cell = ws.cell(row=row, column=col)
    cell.border = thin_border
    cell.alignment = Alignment(vertical='center')
    if fmt:
        cell.number_format = fmt


def write_rows(ws, start_row, headers, rows, formats):
    """ヘッダ行とデータ行を書いて次の空き行を返す"""
    for i, h in enumerate(headers, 1):
        ws.cell(row=start_row, column=i, value=h)
    style_header_row(ws, start_row, len(headers))
    r = start_row
    for r, values in enumerate(rows, start_row + 1):
        for col, (value, fmt) in enumerate(zip(values, formats), 1):
            ws.cell(row=r, column=col, value=value)
            style_data_cell(ws, r, col, fmt)
    return r + 1


def best_row(rows):
    """対数尤度が最大の行（同値は小さい n）"""
    best = None
    for row in rows:
        if 'error' in row:
            continue
        if best is None or row['log_lik'] > best['log_lik']:
            best = row
    return best


def build_workbook(data, rows, source_name):
    wb = Workbook()
    summary = data.describe()

    # ===== Sheet 1: サマリー =====
    ws1 = wb.active
    ws1.title = 'サマリー'
    ws1.sheet_properties.tabColor = '1F4E79'
    ws1.merge_cells('A1:G1')
    ws1['A1'] = 'BBCD 当てはめレポート'
    ws1['A1'].font = TITLE_FONT
    ws1['A1'].alignment = Alignment(horizontal='center')
    ws1.merge_cells('A2:G2')
    ws1['A2'] = f'データ: {source_name} | 観測数: {summary["m"]} | 作成日: {date.today().isoformat()}'
    ws1['A2'].font = Font(color='808080', size=10)
    ws1['A2'].alignment = Alignment(horizontal='center')

    ws1['A4'] = '記述統計'
    ws1['A4'].font = SECTION_FONT
    stats = [(name, *(summary[name][k] for k in ('min', 'q1', 'median', 'mean', 'q3', 'max')))
             for name in ('x', 'y')]
    row = write_rows(ws1, 5, ['変数', '最小', '第1四分位', '中央値', '平均', '第3四分位', '最大'],
                     stats, [None, NUM_FMT, '0.00', '0.00', '0.000', '0.00', NUM_FMT])
    ws1.cell(row=row, column=1, value='標本相関')
    corr = summary['corr']
    ws1.cell(row=row, column=2, value=corr if corr == corr else None)
    style_data_cell(ws1, row, 1)
    style_data_cell(ws1, row, 2, '0.0000')

    best = best_row(rows)
    if best is not None:
        row += 2
        ws1.cell(row=row, column=1, value='最良の n（対数尤度最大）').font = SECTION_FONT
        headers = ['n', 'p1', 'p2', 't', '対数尤度', '相関（モデル）', 'p 値']
        values = [best['n'], best['p1'], best['p2'], best['t'],
                  best['log_lik'], best['corr_model'], best['p_value']]
        write_rows(ws1, row + 1, headers, [values],
                   [NUM_FMT, PROB_FMT, PROB_FMT, PROB_FMT, '0.000', '0.0000', '0.000'])
        for col in range(1, len(headers) + 1):
            ws1.cell(row=row + 2, column=col).fill = ACCENT_FILL
    for col, width in zip('ABCDEFG', (18, 12, 12, 12, 14, 14, 12)):
        ws1.column_dimensions[col].width = width

    # ===== Sheet 2: n ごとの当てはめ =====
    ws2 = wb.create_sheet('nプロファイル')
    headers = ['n', 'p1', 'p2', 't', '対数尤度', '収束', '相関（モデル）', '相関（データ）',
               'χ²', '自由度', 'p 値', 'エラー']
    table_rows = []
    for r in rows:
        if 'error' in r:
            table_rows.append([r['n']] + [None] * 10 + [r['error']['message']])
        else:
            table_rows.append([r['n'], r['p1'], r['p2'], r['t'], r['log_lik'],
                               'はい' if r['converged'] else 'いいえ', r['corr_model'],
                               r['corr_data'], r['statistic'], r['dof'], r['p_value'], ''])
    next_row = write_rows(ws2, 1, headers, table_rows,
                          [NUM_FMT, PROB_FMT, PROB_FMT, PROB_FMT, '0.000', None,
                           '0.0000', '0.0000', '0.000', NUM_FMT, '0.000', None])
    ws2.cell(row=next_row + 1, column=1,
             value='※ 自由度 = プール後のセル群数 - 1 - 推定パラメータ数').font = NOTE_FONT

    # ===== Sheet 3: 観測度数と期待度数 =====
    if best is not None:
        ws3 = wb.create_sheet('度数比較')
        params = Params(best['n'], best['n'], best['p1'], best['p2'], best['t'])
        probs = build_table(params).probs
        cells = data.cells
        m = float(data.weights.sum())
        compare = [
            (x, y, cells.get((x, y), 0), m * float(probs[x, y]))
            for x in range(params.n1 + 1) for y in range(params.n2 + 1)
            if cells.get((x, y), 0) > 0 or m * probs[x, y] >= 0.5
        ]
        write_rows(ws3, 1, ['x', 'y', '観測度数', '期待度数'], compare,
                   [NUM_FMT, NUM_FMT, NUM_FMT, '0.00'])

    return wb


def parse_args():
    parser = argparse.ArgumentParser(description="BBCD 当てはめレポート（Excel）")
    parser.add_argument("input", help="観測データ CSV（ヘッダ x,y、--freq なら x,y,count）")
    parser.add_argument("--freq", action="store_true", help="度数表形式の CSV")
    parser.add_argument("--n-min", type=int, help="n の下限（既定: 観測の最大値）")
    parser.add_argument("--n-max", type=int, required=True, help="n の上限")
    parser.add_argument("--n-estimated", type=int, default=3, help="χ² 自由度から引く推定パラメータ数")
    parser.add_argument("-o", "--output", default="bbcd_report.xlsx", help="出力ファイル")
    return parser.parse_args()


def main():
    args = parse_args()
    create_app()
    try:
        data = parse_csv(args.input, freq=args.freq)
    except BBCDError as e:
        logger.error(f"{args.input}: {e}")
        return 1
    n_min = args.n_min if args.n_min is not None else max(data.max_x, data.max_y, 1)
    rows = fit_profile_table(data, range(n_min, args.n_max + 1), args.n_estimated)
    wb = build_workbook(data, rows, os.path.basename(args.input))
    wb.save(args.output)
    logger.info(f"Report saved: {args.output}")
    return 0


if __name__ == '__main__':
    sys.exit(main())
