"""Pipeline stages. Each stage reads its inputs from the output directory and
writes its own files there, so ``run`` is literally the chained subcommands.
"""

from __future__ import annotations

import datetime as _dt
import html
import json
import logging
import time
from pathlib import Path
from typing import Callable

import numpy as np

from churnlab import plots
from churnlab.config import RunConfig
from churnlab.errors import ArtifactVersionError, ChurnLabError, ConfigError, NumericalError
from churnlab.eval import (
    METRIC_NAMES,
    ConfusionCounts,
    ModelReport,
    cross_validate,
    evaluate,
    metrics,
    select_model,
    write_report_csv,
    write_report_json,
)
from churnlab.explain import (
    beeswarm_export,
    global_importance,
    importance_rows,
    mean_attribution,
    shap_rows,
    sign_correlation,
    tree_shap,
)
from churnlab.models import LEARNERS, fit_learner, load_model, save_model
from churnlab.models.tree import BAGGED, TreeEnsemble
from churnlab.preprocess.pipeline import PipelineArtifacts, check_artifact, fit_pipeline
from churnlab.segment import (
    DEFAULT_RULES,
    assign_segments,
    box_plot_rows,
    load_rules,
    record_rows,
    rfm_score,
    segment_summary,
)
from churnlab.survival import kaplan_meier, survival_summary
from churnlab.tables import read_rows, sha256_file, write_rows
from churnlab.tabular import Frame, load_schema, read_csv, write_csv

log = logging.getLogger(__name__)

STAGE_FORMAT = "churnlab.stage"
STAGE_VERSION = 1
MANIFEST_FORMAT = "churnlab.manifest"
MANIFEST_VERSION = 1
STAGES = ("ingest", "preprocess", "train", "evaluate", "explain", "survival", "segment", "report")
PARTIAL_MARKER = ".partial"
RUN_LOG = "run_log.txt"  # wall-clock timestamps live here, outside the digested outputs
UNDIGESTED = {"manifest.json", RUN_LOG, PARTIAL_MARKER}


# ------------------------------------------------------------------ helpers


def _dump(doc: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=False)
        fh.write("\n")


def _stage_doc(stage: str, **body) -> dict:
    return {"format": STAGE_FORMAT, "version": STAGE_VERSION, "stage": stage, **body}


def _load_stage(out: Path, stage: str, filename: str | None = None) -> dict:
    path = out / (filename or f"{stage}.json")
    if not path.is_file():
        raise ConfigError(f"{path.name} not found in {out}; run the '{stage}' stage first")
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    check_artifact(doc, STAGE_FORMAT, STAGE_VERSION)
    if doc.get("stage") != stage:
        raise ArtifactVersionError(f"{path.name} was written by stage {doc.get('stage')!r}, expected {stage!r}")
    return doc


def _load_pipeline(out: Path) -> PipelineArtifacts:
    path = out / "pipeline.json"
    if not path.is_file():
        raise ConfigError(f"pipeline.json not found in {out}; run the 'preprocess' stage first")
    return PipelineArtifacts.load(path)


class Design:
    """The encoded, filtered rows as written by the preprocess stage."""

    def __init__(self, ids: list[str], split: np.ndarray, X: np.ndarray, y: np.ndarray, names: list[str]):
        self.ids, self.split, self.X, self.y, self.feature_names = ids, split, X, y, names

    @property
    def train(self) -> np.ndarray:
        return self.split == "train"

    @property
    def test(self) -> np.ndarray:
        return self.split == "test"


def _read_design(out: Path, arts: PipelineArtifacts) -> Design:
    path = out / "design.csv"
    if not path.is_file():
        raise ConfigError(f"design.csv not found in {out}; run the 'preprocess' stage first")
    rows = read_rows(path)
    names = arts.feature_names
    X = np.array([[float(r[n]) for n in names] for r in rows], dtype=float).reshape(len(rows), len(names))
    y = np.array([float(r["target"]) for r in rows])
    return Design([r["id"] for r in rows], np.array([r["split"] for r in rows]), X, y, names)


def _clean_frame(out: Path, cfg: RunConfig) -> Frame:
    path = out / "clean.csv"
    if not path.is_file():
        raise ConfigError(f"clean.csv not found in {out}; run the 'preprocess' stage first")
    return read_csv(path, load_schema(cfg.schema_path))


def _ids(frame: Frame) -> list[str]:
    idn = frame.identifier_names
    if idn:
        return [str(v) for v in frame.values[idn[0]]]
    return [str(i) for i in range(frame.n_rows)]


# ------------------------------------------------------------------- stages


def ingest(cfg: RunConfig) -> dict:
    schema = load_schema(cfg.schema_path)
    t0 = time.perf_counter()
    raw = read_csv(cfg.dataset_path, schema)
    log.info("ingested %d rows in %.2fs", raw.n_rows, time.perf_counter() - t0)
    doc = _stage_doc(
        "ingest",
        dataset=cfg.dataset,
        dataset_sha256=sha256_file(cfg.dataset_path),
        rows=raw.n_rows,
        columns=len(raw.names),
        column_names=raw.names,
        missing_counts={n: int(raw.missing[n].sum()) for n in raw.names if raw.missing[n].any()},
        target_prevalence=float(raw.target().mean()) if raw.n_rows else None,
    )
    _dump(doc, cfg.out_path / "ingest.json")
    return doc


def preprocess(cfg: RunConfig) -> dict:
    out = cfg.out_path
    ing = _load_stage(out, "ingest")
    if ing["dataset_sha256"] != sha256_file(cfg.dataset_path):
        raise ArtifactVersionError("dataset changed since ingest; rerun the 'ingest' stage")
    raw = read_csv(cfg.dataset_path, load_schema(cfg.schema_path))
    res = fit_pipeline(raw, cfg.preprocess_config())
    arts = res.artifacts
    arts.save(out / "pipeline.json")

    write_csv(res.clean, out / "clean.csv")
    n = res.encoded.n_rows
    split = np.full(n, "train", dtype=object)
    split[res.test_index] = "test"
    ids = _ids(res.encoded)
    X = res.encoded.matrix(arts.feature_names)
    y = res.encoded.target()
    rows = []
    for i in range(n):
        row = {"id": ids[i], "split": split[i], "target": float(y[i])}
        row.update({name: float(X[i, j]) for j, name in enumerate(arts.feature_names)})
        rows.append(row)
    write_rows(rows, out / "design.csv", ["id", "split", "target", *arts.feature_names])

    flagged_rows = [
        {"row": int(r), "squared_distance": float(res.squared_distances[r])} for r in res.flagged
    ]
    write_rows(flagged_rows, out / "outliers.csv", ["row", "squared_distance"])
    doc = _stage_doc(
        "preprocess",
        row_counts=arts.row_counts,
        outlier_threshold=arts.outliers.threshold,
        outlier_dof=arts.outliers.dof,
        outlier_ridge_added=arts.outliers.ridge_added,
        imputation_rounds=arts.imputation.rounds_run,
        imputation_converged=arts.imputation.converged,
        n_features=len(arts.feature_names),
    )
    _dump(doc, out / "preprocess.json")
    return doc


def train(cfg: RunConfig) -> dict:
    out = cfg.out_path
    arts = _load_pipeline(out)
    d = _read_design(out, arts)
    Xtr, ytr, Xte, yte = d.X[d.train], d.y[d.train], d.X[d.test], d.y[d.test]
    reports = []
    for name in LEARNERS:
        hp = cfg.hyperparams(name)
        t0 = time.perf_counter()
        model = fit_learner(name, Xtr, ytr, hp, d.feature_names, threads=cfg.threads)
        cv = cross_validate(
            lambda X, y: fit_learner(name, X, y, hp, d.feature_names, threads=1),
            Xtr,
            ytr,
            k=cfg.cv_folds,
            seed=cfg.seed,
            threads=cfg.threads,
            threshold=cfg.threshold,
        )
        log.info("trained %s in %.1fs", name, time.perf_counter() - t0)
        save_model(model, out / f"model_{name}.json", name, hp.to_json())
        reports.append(
            ModelReport(
                name,
                evaluate(model, Xtr, ytr, cfg.threshold),
                evaluate(model, Xte, yte, cfg.threshold),
                cv.mean,
                cv.std,
            )
        )
    write_report_csv(reports, out / "model_report.csv")
    write_report_json(reports, None, out / "model_report.json")
    doc = _stage_doc("train", models=list(LEARNERS), cv_folds=cfg.cv_folds, threshold=cfg.threshold)
    _dump(doc, out / "train.json")
    return doc


def _load_models(out: Path) -> dict:
    models = {}
    for name in LEARNERS:
        path = out / f"model_{name}.json"
        if not path.is_file():
            raise ConfigError(f"{path.name} not found in {out}; run the 'train' stage first")
        models[name] = load_model(path)
    return models


def evaluate_stage(cfg: RunConfig) -> dict:
    out = cfg.out_path
    arts = _load_pipeline(out)
    d = _read_design(out, arts)
    _load_stage(out, "train")
    models = _load_models(out)
    with open(out / "model_report.json", encoding="utf-8") as fh:
        reports = [ModelReport.from_json(m) for m in json.load(fh)["models"]]
    probas = {name: m.predict_proba(d.X) for name, m in models.items()}
    confusion = []
    for name in LEARNERS:
        for part, mask in (("train", d.train), ("test", d.test)):
            c = ConfusionCounts.from_predictions(d.y[mask], probas[name][mask] >= cfg.threshold)
            confusion.append({"model": name, "split": part, "tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn})
            # the reloaded model must reproduce the training-stage figures
            stored = next(r for r in reports if r.name == name)
            if metrics(c).as_dict() != getattr(stored, part).as_dict():
                raise NumericalError(f"reloaded {name} model disagrees with its training report on {part}")
    write_rows(confusion, out / "confusion.csv")
    pred_rows = []
    for i in range(len(d.y)):
        row = {"id": d.ids[i], "split": d.split[i], "target": float(d.y[i])}
        row.update({f"p_{n}": float(probas[n][i]) for n in LEARNERS})
        pred_rows.append(row)
    write_rows(pred_rows, out / "predictions.csv")
    sel = select_model(reports)
    write_report_json(reports, sel, out / "model_report.json")
    order = sorted(reports, key=lambda r: -r.test.recall)
    doc = _stage_doc(
        "evaluate",
        selected=sel.name,
        tie=sel.tie,
        recall_order=[r.name for r in order],
        test_metrics={r.name: r.test.as_dict() for r in reports},
    )
    _dump(doc, out / "evaluate.json")
    return doc


def _explainable(name: str, model) -> bool:
    return isinstance(model, TreeEnsemble) and model.mode != BAGGED


def explain(cfg: RunConfig) -> dict:
    out = cfg.out_path
    arts = _load_pipeline(out)
    d = _read_design(out, arts)
    ev = _load_stage(out, "evaluate")
    selected = ev["selected"]
    model = load_model(out / f"model_{selected}.json")
    explained, note = selected, ""
    if not _explainable(selected, model):
        explained = "boosted"
        note = f"selected model {selected!r} is not an additive tree model; explaining 'boosted' instead"
        model = load_model(out / "model_boosted.json")
    shap = tree_shap(model, d.X, threads=cfg.threads, chunk_size=cfg.explain_chunk)
    margin = model.margin(d.X)
    err = float(np.max(np.abs(shap.reconstruct() - margin))) if len(margin) else 0.0
    if err > 1e-6:
        raise NumericalError(f"SHAP local accuracy violated (max error {err:.3g})")
    imp = global_importance(shap)
    rows = shap_rows(shap)
    for r, cid in zip(rows, d.ids):
        r["id"] = cid
    write_rows(rows, out / "shap.csv", ["instance", "id", *shap.feature_names, "base_value"])
    bees = beeswarm_export(shap, d.X, imp)
    write_rows(bees, out / "beeswarm.csv", ["feature", "instance", "shap_value", "feature_value", "normalized_value"])
    imp_rows = importance_rows(imp)
    write_rows(imp_rows, out / "importance.csv", ["rank", "feature", "mean_abs_shap"])
    plots.write_svg(plots.importance_bar_svg(imp_rows), out / "importance.svg")
    plots.write_svg(plots.beeswarm_svg(bees), out / "beeswarm.svg")

    checks = {}
    if "Tenure" in shap.feature_names:
        checks["corr_tenure_phi"] = sign_correlation(shap, d.X, "Tenure")
    if "Complain" in shap.feature_names:
        j = shap.feature_names.index("Complain")
        checks["mean_phi_complain_complainers"] = mean_attribution(shap, d.X, "Complain", d.X[:, j] == 1)
    doc = _stage_doc(
        "explain",
        selected_model=selected,
        explained_model=explained,
        note=note,
        base_value=shap.base_value,
        rows=shap.n_rows,
        max_local_accuracy_error=err,
        top_features=[n for n, _ in imp.ranked()[:10]],
        checks=checks,
    )
    _dump(doc, out / "explain.json")
    return doc


def survival(cfg: RunConfig) -> dict:
    out = cfg.out_path
    frame = _clean_frame(out, cfg)
    s = cfg.survival
    for col in (s.duration, s.event):
        if col not in frame.names:
            raise ConfigError(f"survival column {col!r} not in the dataset")
    curve = kaplan_meier(durations=frame.values[s.duration], events=frame.values[s.event])
    rows = curve.rows()
    write_rows(rows, out / "km.csv", ["time", "n", "d", "S", "variance", "ci_low", "ci_high"])
    summary = survival_summary(curve, s.horizons)
    write_rows(summary, out / "km_summary.csv", ["horizon", "S"])
    t_max = float(np.max(frame.values[s.duration])) if frame.n_rows else None
    plots.write_svg(plots.km_svg(rows, t_max=t_max), out / "km.svg")
    doc = _stage_doc(
        "survival",
        duration=s.duration,
        event=s.event,
        n_samples=curve.n_samples,
        n_events=curve.n_events,
        median_lifetime=curve.median_lifetime,
        median_reached=curve.median_lifetime is not None,
        horizons={format(h["horizon"], "g"): h["S"] for h in summary},
    )
    _dump(doc, out / "survival.json")
    return doc


def segment(cfg: RunConfig) -> dict:
    out = cfg.out_path
    frame = _clean_frame(out, cfg)
    rules = load_rules(cfg.rules_path) if cfg.rules_path else DEFAULT_RULES
    res = rfm_score(frame, cfg.rfm_mapping())
    assign_segments(res.records, rules)
    write_rows(record_rows(res.records), out / "rfm.csv")
    churn = frame.target() if frame.target_name else None
    summary = segment_summary(res.records, churn, [r.label for r in rules])
    write_rows(summary, out / "segments.csv")
    box = box_plot_rows(res.records)
    write_rows(box, out / "rfm_box.csv")
    plots.write_svg(plots.rfm_box_svg(box), out / "rfm_box.svg")
    doc = _stage_doc(
        "segment",
        mapping={
            "recency": res.mapping.recency,
            "frequency": res.mapping.frequency,
            "monetary": res.mapping.monetary,
        },
        rules=[r.to_json() for r in rules],
        degenerate=res.degenerate,
        segments={row["segment"]: row["count"] for row in summary},
    )
    _dump(doc, out / "segment.json")
    return doc


# ------------------------------------------------------------------- report


def _md_table(rows: list[dict], cols: list[str]) -> str:
    def fmt(v):
        return f"{v:.4f}" if isinstance(v, float) else str(v)

    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    lines += ["| " + " | ".join(fmt(r.get(c, "")) for c in cols) + " |" for r in rows]
    return "\n".join(lines)


def _html_table(rows: list[dict], cols: list[str]) -> str:
    def fmt(v):
        return f"{v:.4f}" if isinstance(v, float) else str(v)

    head = "".join(f"<th>{html.escape(c)}</th>" for c in cols)
    body = "".join(
        "<tr>" + "".join(f"<td>{html.escape(fmt(r.get(c, '')))}</td>" for c in cols) + "</tr>" for r in rows
    )
    return f"<table><thead><tr>{head}</tr></thead><tbody>{body}</tbody></table>"


def _numeric(rows: list[dict]) -> list[dict]:
    out = []
    for r in rows:
        conv = {}
        for k, v in r.items():
            try:
                conv[k] = float(v) if "." in v or "e" in v.lower() else int(v)
            except (ValueError, AttributeError):
                conv[k] = v
        out.append(conv)
    return out


def report(cfg: RunConfig) -> dict:
    out = cfg.out_path
    docs = {s: _load_stage(out, s) for s in STAGES if s != "report"}
    pre, ev, ex, sv, sg = docs["preprocess"], docs["evaluate"], docs["explain"], docs["survival"], docs["segment"]

    counts = pre["row_counts"]
    count_rows = [{"stage": k, "rows": v} for k, v in counts.items()]
    with open(out / "model_report.json", encoding="utf-8") as fh:
        reports = [ModelReport.from_json(m) for m in json.load(fh)["models"]]
    model_rows = []
    for r in reports:
        row = {"model": r.name, **r.test.as_dict()}
        row["cv_recall"] = r.cv_mean["recall"]
        row["cv_recall_std"] = r.cv_std["recall"]
        row["recall_gap"] = r.train_test_gap["recall"]
        model_rows.append(row)
    model_cols = ["model", *METRIC_NAMES, "cv_recall", "cv_recall_std", "recall_gap"]
    imp_rows = _numeric(read_rows(out / "importance.csv"))[:10]
    km_rows = _numeric(read_rows(out / "km_summary.csv"))
    seg_rows = _numeric(read_rows(out / "segments.csv"))
    seg_cols = [c for c in ("segment", "count", "share", "mean_recency", "mean_frequency", "mean_monetary", "churn_rate")]
    median = sv["median_lifetime"]
    median_text = "not reached within the observation window" if median is None else format(median, "g")
    m = sg["mapping"]
    svgs = {name: (out / f"{name}.svg").read_text(encoding="utf-8") for name in ("importance", "beeswarm", "km", "rfm_box")}

    sections = [
        ("Row counts", count_rows, ["stage", "rows"]),
        ("Models (held-out test split)", model_rows, model_cols),
        ("Global importance (top 10)", imp_rows, ["rank", "feature", "mean_abs_shap"]),
        ("Survival at horizons", km_rows, ["horizon", "S"]),
        ("Segments", seg_rows, seg_cols),
    ]
    notes = [
        f"Selected model: {ev['selected']}" + (" (tie on every criterion)" if ev["tie"] else ""),
        f"Explained model: {ex['explained_model']}" + (f" ({ex['note']})" if ex["note"] else ""),
        f"SHAP local accuracy, max error: {ex['max_local_accuracy_error']:.3g}",
        f"Median lifetime ({sv['duration']}): {median_text}",
        f"RFM mapping: recency={m['recency']}, frequency={m['frequency']}, monetary={m['monetary']}",
    ]
    if sg["degenerate"]:
        notes.append("Degenerate RFM columns (scored 3): " + ", ".join(sg["degenerate"]))

    md = ["# Churn analytics report", ""]
    md += [f"- {n}" for n in notes] + [""]
    for title, rows, cols in sections:
        md += [f"## {title}", "", _md_table(rows, cols), ""]
    md += ["## Figures", ""]
    md += [f"![{name}]({name}.svg)" for name in svgs] + [""]
    (out / "report.md").write_text("\n".join(md), encoding="utf-8")

    page = [
        "<!DOCTYPE html>",
        '<html><head><meta charset="utf-8"><title>Churn analytics report</title>',
        "<style>body{font-family:sans-serif;max-width:960px;margin:auto}"
        "table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:2px 6px}</style>",
        "</head><body>",
        "<h1>Churn analytics report</h1>",
        "<ul>" + "".join(f"<li>{html.escape(n)}</li>" for n in notes) + "</ul>",
    ]
    for title, rows, cols in sections:
        page += [f"<h2>{html.escape(title)}</h2>", _html_table(rows, cols)]
    page.append("<h2>Figures</h2>")
    page += [f"<figure>{svg}</figure>" for svg in svgs.values()]
    page.append("</body></html>")
    (out / "report.html").write_text("\n".join(page) + "\n", encoding="utf-8")

    manifest = write_manifest(cfg, docs)
    return manifest


def write_manifest(cfg: RunConfig, docs: dict) -> dict:
    out = cfg.out_path
    counts = docs["preprocess"]["row_counts"]
    if not counts["raw"] >= counts["deduplicated"] >= counts["final"]:
        raise NumericalError(f"row counts are not monotone: {counts}")
    files = sorted(p.name for p in out.iterdir() if p.is_file() and p.name not in UNDIGESTED)
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "config": cfg.snapshot(),
        "dataset_sha256": docs["ingest"]["dataset_sha256"],
        "row_counts": {
            "raw": counts["raw"],
            "deduplicated": counts["deduplicated"],
            "outliers_removed": counts["outliers_removed"],
            "final": counts["final"],
            "train": counts["train"],
            "test": counts["test"],
        },
        "selected_model": docs["evaluate"]["selected"],
        "explained_model": docs["explain"]["explained_model"],
        "artifacts": {name: sha256_file(out / name) for name in files},
        "timestamps": f"see {RUN_LOG}",
    }
    _dump(manifest, out / "manifest.json")
    return manifest


# ------------------------------------------------------------------- runner

STAGE_FUNCS: dict[str, Callable[[RunConfig], dict]] = {
    "ingest": ingest,
    "preprocess": preprocess,
    "train": train,
    "evaluate": evaluate_stage,
    "explain": explain,
    "survival": survival,
    "segment": segment,
    "report": report,
}


class StageError(ChurnLabError):
    """Wraps a failure with the name of the stage that raised it."""

    def __init__(self, stage: str, cause: BaseException, exit_code: int):
        self.stage = stage
        self.cause = cause
        self.exit_code = exit_code
        super().__init__(f"stage '{stage}' failed: {cause}")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def run_stages(cfg: RunConfig, stages: tuple[str, ...] | list[str]) -> dict:
    """Validate, then run ``stages`` in order. On failure a ``.partial`` marker
    naming the stage is left beside whatever was already written."""
    cfg.validate()  # before anything touches the output directory
    out = cfg.out_path
    out.mkdir(parents=True, exist_ok=True)
    marker = out / PARTIAL_MARKER
    last: dict = {}
    for stage in stages:
        with open(out / RUN_LOG, "a", encoding="utf-8") as fh:
            fh.write(f"{_now()} start {stage}\n")
        try:
            with np.errstate(over="ignore", under="ignore"):
                last = STAGE_FUNCS[stage](cfg)
        except ChurnLabError as exc:
            marker.write_text(f"{stage}\n{exc}\n", encoding="utf-8")
            raise StageError(stage, exc, exc.exit_code) from exc
        except (np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
            marker.write_text(f"{stage}\n{exc}\n", encoding="utf-8")
            raise StageError(stage, exc, NumericalError.exit_code) from exc
        except Exception as exc:
            marker.write_text(f"{stage}\n{type(exc).__name__}: {exc}\n", encoding="utf-8")
            raise StageError(stage, exc, 1) from exc
        with open(out / RUN_LOG, "a", encoding="utf-8") as fh:
            fh.write(f"{_now()} done {stage}\n")
    if marker.exists():
        marker.unlink()
    return last


def run_pipeline(cfg: RunConfig) -> dict:
    """Every stage in order; returns the manifest."""
    return run_stages(cfg, STAGES)
