"""Export the churn workbook's data sheet to the CSV layout churnlab reads.

    python3 scripts/xlsx_to_csv.py "E Commerce Dataset.xlsx" data/ecommerce.csv

Needs ``openpyxl`` (not a churnlab dependency). Empty cells become "";
integral floats are written without a trailing ".0".
"""

import argparse
import csv

from churnlab.tabular import format_number


def cell_text(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, float)):
        return format_number(float(v))
    return str(v).strip()


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("xlsx")
    ap.add_argument("csv")
    ap.add_argument("--sheet", default="E Comm", help="sheet holding the customer table")
    args = ap.parse_args()
    try:
        import openpyxl
    except ImportError:
        raise SystemExit("openpyxl is required: pip install openpyxl") from None
    wb = openpyxl.load_workbook(args.xlsx, read_only=True, data_only=True)
    ws = wb[args.sheet]
    n = 0
    with open(args.csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in ws.iter_rows(values_only=True):
            if all(v is None for v in row):
                continue
            w.writerow([cell_text(v) for v in row])
            n += 1
    print(f"wrote {n - 1} data rows to {args.csv}")


if __name__ == "__main__":
    main()
