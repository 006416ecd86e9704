"""Run the full pipeline and print the measured figures next to their targets.

    python3 scripts/run_benchmark.py --config configs/ecommerce.json [--threads 4]

Exits non-zero if the pipeline itself fails; target misses are only reported.
"""

import argparse
import json
import sys
import time

from churnlab.config import load_config
from churnlab.errors import ChurnLabError
from churnlab.stages import STAGES, run_stages
from churnlab.tables import read_rows


def check(label: str, value, ok: bool, target: str) -> None:
    print(f"  {'ok  ' if ok else 'MISS'} {label:<38} {value!s:<28} target {target}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/ecommerce.json")
    ap.add_argument("--out")
    ap.add_argument("--threads", type=int)
    ap.add_argument("--dataset", help="overrides the configured CSV path")
    args = ap.parse_args()
    overrides = {"out_dir": args.out, "threads": args.threads, "dataset": args.dataset}
    cfg = load_config(args.config, overrides)

    times = {}
    for stage in STAGES:
        t0 = time.perf_counter()
        try:
            run_stages(cfg, [stage])
        except ChurnLabError as exc:
            print(f"{stage}: {exc}", file=sys.stderr)
            return exc.exit_code
        times[stage] = time.perf_counter() - t0
        print(f"{stage:<11} {times[stage]:7.2f}s")

    out = cfg.out_path

    def doc(name):
        return json.loads((out / f"{name}.json").read_text())

    ing, pre, ev, ex, sv = doc("ingest"), doc("preprocess"), doc("evaluate"), doc("explain"), doc("survival")
    m = ev["test_metrics"]
    rec = {k: m[k]["recall"] for k in ("boosted", "cart", "forest", "logistic")}
    top6 = [r["feature"] for r in read_rows(out / "importance.csv")][:6]
    seg = {r["segment"]: r for r in read_rows(out / "segments.csv")}
    flagged = pre["row_counts"]["outliers_removed"]

    print(f"\nresults in {out}")
    check("raw rows x columns", f"{ing['rows']} x {ing['columns']}", (ing["rows"], ing["columns"]) == (5630, 20), "5630 x 20")
    check("outliers flagged", flagged, 226 <= flagged <= 306, "266 +- 15%")
    check("boosted test recall", f"{rec['boosted']:.4f}", rec["boosted"] >= 0.90, ">= 0.90")
    check("boosted test accuracy", f"{m['boosted']['accuracy']:.4f}", m["boosted"]["accuracy"] >= 0.93, ">= 0.93")
    check("logistic test recall", f"{rec['logistic']:.4f}", rec["logistic"] < 0.65, "< 0.65")
    check("selected model", ev["selected"], ev["selected"] == "boosted", "boosted")
    order = sorted(rec, key=rec.get, reverse=True)
    check("recall order", " > ".join(order), order == ["boosted", "cart", "forest", "logistic"], "boosted > cart > forest > logistic")
    check("train + evaluate time (s)", f"{times['train'] + times['evaluate']:.1f}", times["train"] + times["evaluate"] < 180, "< 180")
    check("local accuracy error", f"{ex['max_local_accuracy_error']:.1e}", ex["max_local_accuracy_error"] <= 1e-6, "<= 1e-6")
    want = {"Tenure", "Complain", "NumberOfAddress", "CashbackAmount"}
    check("top-6 importance", ",".join(top6), want <= set(top6), "contains " + ",".join(sorted(want)))
    check("corr(Tenure, phi)", f"{ex['checks']['corr_tenure_phi']:.3f}", ex["checks"]["corr_tenure_phi"] < 0, "< 0")
    c = ex["checks"]["mean_phi_complain_complainers"]
    check("mean phi(Complain) | complainers", f"{c:.3f}", c > 0, "> 0")
    s6, s21 = sv["horizons"]["6"], sv["horizons"]["21"]
    check("S(6)", f"{s6:.4f}", 0.84 <= s6 <= 0.90, "[0.84, 0.90]")
    check("S(21)", f"{s21:.4f}", 0.74 <= s21 <= 0.80, "[0.74, 0.80]")
    check("median lifetime", sv["median_lifetime"], sv["median_lifetime"] is None, "not reached")
    if "Best" in seg and "Lost" in seg:
        rb, rl = float(seg["Best"]["mean_recency"]), float(seg["Lost"]["mean_recency"])
        check("mean recency Best < Lost", f"{rb:.2f} < {rl:.2f}", rb < rl, "Best < Lost")
        cb, cl = float(seg["Best"]["churn_rate"]), float(seg["Lost"]["churn_rate"])
        check("churn rate Lost > Best", f"{cl:.3f} > {cb:.3f}", cl > cb, "Lost > Best")
    return 0


if __name__ == "__main__":
    sys.exit(main())
