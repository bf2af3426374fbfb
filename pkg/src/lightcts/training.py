"""Adam, the training loop and forecasting metrics."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .errors import ShapeError, TrainingError, UndefinedMetricError
from .model import LightCtsModel, forward, mae_loss, predict

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.002
    epochs: int = 250
    batch_size: int = 64
    seed: int = 0
    clip: float | None = None
    patience: int | None = None

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError(f"lr (learning rate) must be >= 0, got {self.lr}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, params: Sequence, **kw) -> "AdamState":
        shapes = [np.shape(p.data if isinstance(p, T.Tensor) else p) for p in params]
        return cls([np.zeros(s) for s in shapes], [np.zeros(s) for s in shapes], **kw)


def adam_step(params: Sequence, grads: Sequence[np.ndarray], state: AdamState, lr: float) -> AdamState:
    """One bias-corrected Adam update, applied in place to ``params``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(f"{len(params)} params, {len(grads)} grads, {len(state.m)} moment buffers")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        data = p.data if isinstance(p, T.Tensor) else p
        if np.shape(g) != data.shape:
            raise ShapeError(f"gradient shape {np.shape(g)} != parameter shape {data.shape}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        data -= lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + state.eps)
    return state


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_mae: float
    val_mae: float


@dataclass
class TrainResult:
    model: LightCtsModel
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mae: float = math.inf


def train(
    model: LightCtsModel,
    train_xy: tuple[np.ndarray, np.ndarray],
    val_xy: tuple[np.ndarray, np.ndarray],
    config: TrainConfig,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Minibatch Adam on the MAE loss, keeping the best-validation snapshot.

    ``train_xy``/``val_xy`` are ``(X [S, N, P, F], Y [S, N, L])`` in the
    normalized scale. The returned model holds the parameters of the epoch with
    the lowest validation MAE.
    """
    x_tr, y_tr = train_xy
    x_va, y_va = val_xy
    if len(x_tr) == 0 or len(x_va) == 0:
        raise ValueError("training and validation windows must be non-empty")
    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    state = AdamState.create(params)
    result = TrainResult(model)
    best_state = model.state()
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(x_tr))
        total, count = 0.0, 0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start : start + config.batch_size]
            loss = mae_loss(forward(x_tr[idx], model), y_tr[idx])
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch}, batch {b}")
            model.zero_grad()
            grads = T.backward(loss, params)
            if config.clip is not None:
                norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
                if norm > config.clip:
                    grads = [g * (config.clip / norm) for g in grads]
            adam_step(params, grads, state, config.lr)
            total += value * len(idx)
            count += len(idx)
        val = float(np.abs(predict(model, x_va) - y_va).mean())
        rec = EpochRecord(epoch, total / count, val)
        result.history.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        log.debug("epoch %d train_mae=%.6f val_mae=%.6f", epoch, rec.train_mae, val)
        if val < result.best_val_mae:
            result.best_val_mae, result.best_epoch = val, epoch
            best_state = model.state()
            stale = 0
        else:
            stale += 1
            if config.patience is not None and stale >= config.patience:
                break
    model.load_state(best_state)
    return result


# ------------------------------------------------------------------ metrics


@dataclass(frozen=True)
class MetricReport:
    mae: float
    rmse: float
    mape: float
    rrse: float | None = None
    corr: float | None = None
    horizons: tuple["MetricReport", ...] = ()

    def rows(self) -> list[dict]:
        """Flat records: an ``all`` row, then one per horizon (1-based)."""
        def row(label, r):
            return {"horizon": label, "mae": r.mae, "rmse": r.rmse, "mape": r.mape, "rrse": r.rrse, "corr": r.corr}

        return [row("all", self)] + [row(str(i + 1), h) for i, h in enumerate(self.horizons)]


def _rrse(pred: np.ndarray, truth: np.ndarray) -> float:
    denom = float(((truth - truth.mean()) ** 2).sum())
    if denom == 0.0:
        raise UndefinedMetricError("RRSE is undefined: truth is constant")
    return math.sqrt(float(((pred - truth) ** 2).sum()) / denom)


def _corr(pred: np.ndarray, truth: np.ndarray) -> float:
    # series are columns; each column is one sequence along axis 0
    p = pred.reshape(pred.shape[0], -1)
    t = truth.reshape(truth.shape[0], -1)
    pc, tc = p - p.mean(axis=0), t - t.mean(axis=0)
    sp, st = np.sqrt((pc * pc).sum(axis=0)), np.sqrt((tc * tc).sum(axis=0))
    valid = (st > 0) & (sp > 0)
    if not valid.any():
        raise UndefinedMetricError("CORR is undefined: every series is constant")
    r = (pc * tc).sum(axis=0)[valid] / (sp[valid] * st[valid])
    return float(r.mean())


def evaluate(pred, truth, mode: str = "multi", zeta: float = 1e-3) -> MetricReport:
    """Forecast metrics on the original (denormalized) scale.

    Arrays are ``[S, N, L]`` or any shape whose first axis is time; CORR is
    the mean Pearson correlation over the remaining columns. In ``multi`` mode
    the last axis is the horizon and per-horizon reports are attached; RRSE
    and CORR are then reported only when defined. In ``single`` mode an
    undefined RRSE/CORR raises :class:`UndefinedMetricError`.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if mode not in ("single", "multi"):
        raise ValueError(f"mode must be 'single' or 'multi', got {mode!r}")
    report = _report(pred, truth, zeta, strict=mode == "single")
    if mode == "multi" and pred.ndim >= 2:
        horizons = tuple(_report(pred[..., i], truth[..., i], zeta, strict=False) for i in range(pred.shape[-1]))
        report = MetricReport(report.mae, report.rmse, report.mape, report.rrse, report.corr, horizons)
    return report


def _report(pred, truth, zeta, strict) -> MetricReport:
    e = pred - truth
    mae = float(np.abs(e).mean())
    rmse = math.sqrt(float((e * e).mean()))
    keep = np.abs(truth) > zeta
    mape = float(np.abs(e[keep] / truth[keep]).mean()) if keep.any() else 0.0
    rrse = _optional(_rrse, pred, truth, strict)
    corr = _optional(_corr, pred, truth, strict)
    return MetricReport(mae, rmse, mape, rrse, corr)


def _optional(metric, pred, truth, strict):
    try:
        if metric is _corr and (pred.ndim == 0 or pred.shape[0] < 2):
            raise UndefinedMetricError("CORR needs at least two time steps")
        return metric(pred, truth)
    except UndefinedMetricError:
        if strict:
            raise
        return None


def persistence_forecast(x: np.ndarray, horizon: int, feature: int = 0) -> np.ndarray:
    """Repeat the last observed value: ``[S, N, P, F]`` -> ``[S, N, horizon]``."""
    last = x[..., -1, feature]
    return np.repeat(last[..., None], horizon, axis=-1)
