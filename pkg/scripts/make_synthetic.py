"""Write the synthetic stand-in table, e.g. for a dry run without the real data.

    python3 scripts/make_synthetic.py data/synthetic.csv --rows 5630 --seed 0
"""

import argparse

from churnlab.synthetic import write_synthetic_csv


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("path")
    ap.add_argument("--rows", type=int, default=5630)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    write_synthetic_csv(args.path, n_rows=args.rows, seed=args.seed)
    print(f"wrote {args.rows} rows to {args.path}")


if __name__ == "__main__":
    main()
