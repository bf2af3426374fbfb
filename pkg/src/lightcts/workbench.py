"""The synth / train / eval / profile / study pipeline behind the CLI."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import CtsDataset, Normalizer, build_mask, fit_normalizer, load_dataset, save_dataset, split, window_arrays
from .errors import ShapeError
from .model import LightCtsModel, load_checkpoint, predict, save_checkpoint
from .profiler import CostReport, profile
from .synth import generate
from .training import MetricReport, TrainResult, evaluate, train

log = logging.getLogger(__name__)

REPORTED_HORIZONS = (3, 6, 12)


@dataclass
class Prepared:
    dataset: CtsDataset
    normalizer: Normalizer
    train: tuple[np.ndarray, np.ndarray]
    val: tuple[np.ndarray, np.ndarray]
    test: tuple[np.ndarray, np.ndarray]
    raw_val_y: np.ndarray
    raw_test_y: np.ndarray
    mask: np.ndarray | None


def load_data(run: RunConfig) -> CtsDataset:
    return load_dataset(run.data) if run.data is not None else generate(run.synth_spec())


def prepare(run: RunConfig, ds: CtsDataset | None = None) -> Prepared:
    """Validate against the data, split 6:2:2-style, normalize on train, window."""
    ds = load_data(run) if ds is None else ds
    run.validate(ds.n_series, ds.n_features, ds.n_steps)
    p, q = run.history, run.horizon
    parts = split(ds, run.split_spec(), min_steps=p + q)
    norm = fit_normalizer(parts[0])
    win = [window_arrays(norm.normalize(s.values), p, q, run.mode) for s in parts]
    raw = [window_arrays(s.values, p, q, run.mode)[1] for s in parts[1:]]
    mask = build_mask(ds.adjacencies) if ds.adjacencies else None
    return Prepared(ds, norm, win[0], win[1], win[2], raw[0], raw[1], mask)


def build_model(run: RunConfig, prep: Prepared) -> LightCtsModel:
    cfg = run.model_config(prep.dataset.n_series, prep.dataset.n_features)
    return LightCtsModel(cfg, seed=run.seed, mask=prep.mask)


def fit(run: RunConfig, prep: Prepared, epochs: int | None = None, on_epoch=None) -> TrainResult:
    model = build_model(run, prep)
    return train(model, prep.train, prep.val, run.train_config(epochs), on_epoch)


def score(model: LightCtsModel, prep: Prepared, x: np.ndarray, raw_y: np.ndarray, mode: str) -> MetricReport:
    pred = prep.normalizer.denormalize_feature(predict(model, x), 0)
    return evaluate(pred, raw_y, mode=mode)


# --------------------------------------------------------------- commands


def cmd_synth(run: RunConfig) -> Path:
    run.synth_spec().validate()
    out = run.out_dir
    out.mkdir(parents=True, exist_ok=True)
    path = out / "data.cts1"
    save_dataset(generate(run.synth_spec()), path)
    return path


def cmd_train(run: RunConfig) -> TrainResult:
    prep = prepare(run)
    out = run.out_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "history.jsonl", "w") as fh:

        def write(rec):
            fh.write(json.dumps({"epoch": rec.epoch, "train_mae": rec.train_mae, "val_mae": rec.val_mae}) + "\n")

        result = fit(run, prep, on_epoch=write)
    save_checkpoint(result.model, run.checkpoint_path)
    (out / "run.cfg").write_text(run.to_text())
    return result


def metric_rows(report: MetricReport, mode: str, horizon: int) -> list[dict]:
    rows = report.rows()
    if mode != "multi" or horizon < max(REPORTED_HORIZONS):
        return rows[:1]
    return rows[:1] + [rows[h] for h in REPORTED_HORIZONS]


def cmd_eval(run: RunConfig) -> list[dict]:
    prep = prepare(run)
    model = load_checkpoint(run.checkpoint_path)
    c = model.config
    if c.n_nodes != prep.dataset.n_series:
        raise ShapeError(
            f"positional encoding mismatch: checkpoint was trained on N={c.n_nodes} series, data has N={prep.dataset.n_series}"
        )
    if (c.history, c.horizon, c.in_features) != (run.history, run.out_len, prep.dataset.n_features):
        raise ShapeError(
            f"checkpoint expects P={c.history}, output length {c.horizon}, F={c.in_features}; "
            f"config gives P={run.history}, output length {run.out_len}, F={prep.dataset.n_features}"
        )
    report = score(model, prep, prep.test[0], prep.raw_test_y, run.mode)
    rows = metric_rows(report, run.mode, run.horizon)
    run.out_dir.mkdir(parents=True, exist_ok=True)
    (run.out_dir / "metrics.csv").write_text(rows_to_csv(rows))
    return rows


def cmd_profile(run: RunConfig, fmt: str = "csv") -> CostReport:
    if run.data is not None:
        ds = load_dataset(run.data)
        n, f, t = ds.n_series, ds.n_features, ds.n_steps
    else:
        n, f, t = run.synth_n, run.synth_f, run.synth_t
    run.validate(n, f, t)
    report = profile(run.model_config(n, f))
    run.out_dir.mkdir(parents=True, exist_ok=True)
    name, text = ("cost_report.csv", report.to_csv()) if fmt == "csv" else ("cost_report.txt", report.to_table())
    (run.out_dir / name).write_text(text)
    return report


def cmd_study(run: RunConfig) -> list[dict]:
    """Train and score one model per sweep value at ``study_epochs``."""
    configs = run.sweep_configs()  # rejects bad values before any training
    ds = load_data(run)
    for c in configs:
        c.validate(ds.n_series, ds.n_features, ds.n_steps)
    rows = []
    for c in configs:
        prep = prepare(c, ds)
        result = fit(c, prep, epochs=c.study_epochs)
        report = score(result.model, prep, prep.val[0], prep.raw_val_y, c.mode)
        cost = profile(result.model)
        value = getattr(c, {"D": "d_model", "G^T": "tcn_groups", "L_S": "attn_blocks"}.get(c.study_sweep, c.study_sweep))
        rows.append(
            {
                "value": value,
                "params": cost.params,
                "flops": cost.flops,
                "val_mae": report.mae,
                "val_rmse": report.rmse,
                "val_mape": report.mape,
            }
        )
        log.info("study %s=%s val_mae=%.4f", c.study_sweep, value, report.mae)
    run.out_dir.mkdir(parents=True, exist_ok=True)
    (run.out_dir / "study.csv").write_text(rows_to_csv(rows))
    return rows


# ------------------------------------------------------------- tabulation


def rows_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: "" if v is None else v for k, v in r.items()})
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def rows_to_table(rows: list[dict]) -> str:
    if not rows:
        return ""

    def fmt(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    head = list(rows[0])
    body = [[fmt(r[k]) for k in head] for r in rows]
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths)), "  ".join("-" * w for w in widths)]
    lines += ["  ".join(x.rjust(w) for x, w in zip(r, widths)) for r in body]
    return "\n".join(lines) + "\n"
