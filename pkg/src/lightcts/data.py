"""Correlated time series containers, file formats, windowing and masks.

Binary layout of a ``CTS1`` file (little-endian)::

    b"CTS1" | u32 N | u32 T | u32 F | u32 n_adjacency
    N*T*F float64 values, (series, time, feature) row-major
    n_adjacency blocks of N*N float64, row-major
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, InsufficientLengthError, ShapeError

MAGIC = b"CTS1"
_HEADER = struct.Struct("<4sIIII")


@dataclass(frozen=True)
class CtsDataset:
    values: np.ndarray  # [N, T, F]
    adjacencies: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or min(v.shape) < 1:
            raise ShapeError(f"values must be N x T x F with every axis >= 1, got {v.shape}")
        adjs = tuple(np.asarray(a, dtype=np.float64) for a in self.adjacencies)
        n = v.shape[0]
        for i, a in enumerate(adjs):
            if a.shape != (n, n):
                raise ShapeError(f"adjacency {i} has shape {a.shape}, expected ({n}, {n})")
            if (a < 0).any():
                raise ValueError(f"adjacency {i} has negative entries")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "adjacencies", adjs)

    @property
    def n_series(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    @property
    def n_features(self) -> int:
        return self.values.shape[2]

    def time_slice(self, start: int, stop: int) -> "CtsDataset":
        return CtsDataset(self.values[:, start:stop, :], self.adjacencies)


# ----------------------------------------------------------------- file io


def save_dataset(ds: CtsDataset, path, format: str = "cts1") -> None:
    path = Path(path)
    if format == "cts1":
        n, t, f = ds.values.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, n, t, f, len(ds.adjacencies)))
            fh.write(ds.values.astype("<f8").tobytes(order="C"))
            for a in ds.adjacencies:
                fh.write(a.astype("<f8").tobytes(order="C"))
    elif format == "csv":
        _save_csv(ds, path)
    else:
        raise ValueError(f"unknown dataset format {format!r}")


def load_dataset(path, format: str | None = None, adjacency_paths: Sequence = ()) -> CtsDataset:
    """Read a dataset. ``format`` defaults from the suffix (``.csv`` or CTS1)."""
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "cts1"
    if format == "cts1":
        return _load_cts1(path.read_bytes())
    if format == "csv":
        return _load_csv(path, adjacency_paths)
    raise ValueError(f"unknown dataset format {format!r}")


def _load_cts1(buf: bytes) -> CtsDataset:
    if len(buf) < _HEADER.size:
        raise FormatError(f"truncated header: {len(buf)} bytes, need {_HEADER.size} (offset 0)")
    magic, n, t, f, n_adj = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    if min(n, t, f) < 1:
        raise FormatError(f"header declares empty dimensions N={n} T={t} F={f} (offset 4)")
    off = _HEADER.size
    need = off + 8 * (n * t * f + n_adj * n * n)
    if len(buf) < need:
        raise FormatError(f"truncated payload: file has {len(buf)} bytes, header implies {need} (offset {len(buf)})")
    if len(buf) > need:
        raise FormatError(f"trailing bytes after payload at offset {need}")
    values = np.frombuffer(buf, dtype="<f8", count=n * t * f, offset=off).reshape(n, t, f)
    bad = np.flatnonzero(np.isnan(values.reshape(-1)))
    if bad.size:
        raise FormatError(f"NaN value at byte offset {off + 8 * int(bad[0])}")
    off += 8 * n * t * f
    adjs = []
    for _ in range(n_adj):
        a = np.frombuffer(buf, dtype="<f8", count=n * n, offset=off).reshape(n, n)
        bad = np.flatnonzero(np.isnan(a.reshape(-1)))
        if bad.size:
            raise FormatError(f"NaN adjacency entry at byte offset {off + 8 * int(bad[0])}")
        adjs.append(a.astype(np.float64))
        off += 8 * n * n
    return CtsDataset(values.astype(np.float64), tuple(adjs))


def _save_csv(ds: CtsDataset, path: Path) -> None:
    n, t, f = ds.values.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "time"] + [f"f{k}" for k in range(f)])
        for i in range(n):
            for j in range(t):
                w.writerow([i, j] + [repr(float(v)) for v in ds.values[i, j]])
    for k, a in enumerate(ds.adjacencies):
        adj_path = path.with_name(f"{path.stem}.adj{k}.csv")
        np.savetxt(adj_path, a, delimiter=",", fmt="%.17g")


def _load_csv(path: Path, adjacency_paths: Sequence = ()) -> CtsDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["series", "time"]:
        raise FormatError(f"{path}: row 1 must be a 'series,time,f0,...' header")
    f = len(rows[0]) - 2
    if f < 1:
        raise FormatError(f"{path}: row 1 declares no feature columns")
    cells: dict[tuple[int, int], list[float]] = {}
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != f + 2:
            raise FormatError(f"{path}: row {r} has {len(row)} fields, expected {f + 2}")
        try:
            key = (int(row[0]), int(row[1]))
            vals = [float(x) for x in row[2:]]
        except ValueError:
            raise FormatError(f"{path}: row {r} is not numeric") from None
        if any(math.isnan(v) for v in vals):
            raise FormatError(f"{path}: NaN value in row {r}")
        cells[key] = vals
    if not cells:
        raise FormatError(f"{path}: no data rows")
    n = max(k[0] for k in cells) + 1
    t = max(k[1] for k in cells) + 1
    if len(cells) != n * t:
        raise FormatError(f"{path}: expected {n * t} (series, time) rows, found {len(cells)}")
    values = np.empty((n, t, f))
    for (i, j), vals in cells.items():
        values[i, j] = vals
    if not adjacency_paths:
        adjacency_paths = sorted(path.parent.glob(f"{path.stem}.adj*.csv"))
    adjs = tuple(np.loadtxt(p, delimiter=",", ndmin=2) for p in adjacency_paths)
    return CtsDataset(values, adjs)


# -------------------------------------------------------------- windowing


@dataclass(frozen=True)
class WindowSample:
    history: np.ndarray  # [N, P, F]
    target: np.ndarray  # [N, Q, F] or [N, 1, F]
    origin: int


def make_windows(ds: CtsDataset, p: int, q: int, mode: str = "multi") -> list[WindowSample]:
    """Sliding windows with origin ``t = 0 .. T-P-Q``.

    History is steps ``t .. t+P-1`` (0-based). Multi-step targets are the next
    ``Q`` steps; a single-step target is step ``t+P+Q-1`` only.
    """
    if p < 1 or q < 1:
        raise ValueError(f"P and Q must be >= 1, got P={p}, Q={q}")
    if mode not in ("single", "multi"):
        raise ValueError(f"mode must be 'single' or 'multi', got {mode!r}")
    t_total = ds.n_steps
    if t_total < p + q:
        raise InsufficientLengthError(f"series of length {t_total} cannot hold P+Q={p + q} steps")
    v = ds.values
    out = []
    for t in range(t_total - p - q + 1):
        hist = v[:, t : t + p, :]
        if mode == "multi":
            tgt = v[:, t + p : t + p + q, :]
        else:
            tgt = v[:, t + p + q - 1 : t + p + q, :]
        out.append(WindowSample(hist, tgt, t))
    return out


def stack_windows(samples: Sequence[WindowSample], feature: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stack into model inputs ``X [S, N, P, F]`` and targets ``Y [S, N, L]``."""
    x = np.stack([s.history for s in samples])
    y = np.stack([s.target[:, :, feature] for s in samples])
    return x, y


def window_arrays(values: np.ndarray, p: int, q: int, mode: str = "multi", feature: int = 0):
    """Vectorised :func:`make_windows` + :func:`stack_windows` over an ``[N, T, F]`` array."""
    t_total = values.shape[1]
    if t_total < p + q:
        raise InsufficientLengthError(f"series of length {t_total} cannot hold P+Q={p + q} steps")
    s = t_total - p - q + 1
    idx = np.arange(s)[:, None] + np.arange(p)[None, :]
    x = values[:, idx, :].transpose(1, 0, 2, 3)
    if mode == "multi":
        tidx = np.arange(s)[:, None] + p + np.arange(q)[None, :]
    else:
        tidx = (np.arange(s) + p + q - 1)[:, None]
    y = values[:, tidx, feature].transpose(1, 0, 2)
    return np.ascontiguousarray(x), np.ascontiguousarray(y)


# ---------------------------------------------------------------- splits


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.6
    val: float = 0.2
    test: float = 0.2

    def __post_init__(self):
        fr = (self.train, self.val, self.test)
        if min(fr) <= 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be positive and sum to 1, got {fr}")

    @classmethod
    def from_ratio(cls, ratio: str) -> "SplitSpec":
        parts = [float(x) for x in ratio.split(":")]
        total = sum(parts)
        return cls(*(x / total for x in parts))


def split_lengths(t_total: int, spec: SplitSpec) -> tuple[int, int, int]:
    n_train = math.floor(t_total * spec.train + 1e-9)
    n_val = math.floor(t_total * spec.val + 1e-9)
    return n_train, n_val, t_total - n_train - n_val


def split(ds: CtsDataset, spec: SplitSpec, min_steps: int = 1):
    """Contiguous train/val/test partitions; remainder rows go to test."""
    lengths = split_lengths(ds.n_steps, spec)
    for name, n in zip(("train", "validation", "test"), lengths):
        if n < min_steps:
            raise InsufficientLengthError(f"{name} split has {n} steps, needs at least {min_steps}")
    a, b, _ = lengths
    return ds.time_slice(0, a), ds.time_slice(a, a + b), ds.time_slice(a + b, ds.n_steps)


# ---------------------------------------------------------- normalization

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray  # [F]
    std: np.ndarray  # [F]

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return x * self.std + self.mean

    def denormalize_feature(self, y: np.ndarray, feature: int = 0) -> np.ndarray:
        return y * self.std[feature] + self.mean[feature]


def fit_normalizer(train: CtsDataset) -> Normalizer:
    v = train.values.reshape(-1, train.n_features)
    if v.shape[0] == 0:
        raise ValueError("cannot fit a normalizer on empty data")
    return Normalizer(v.mean(axis=0), np.maximum(v.std(axis=0), STD_FLOOR))


# ----------------------------------------------------------------- masks


def build_mask(adjacencies: Sequence[np.ndarray], threshold: float = 0.0) -> np.ndarray:
    """Boolean relevance mask: ``sum(A_i)[i, j] > threshold`` or ``i == j``."""
    if not adjacencies:
        raise ValueError("build_mask needs at least one adjacency matrix")
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    first = np.asarray(adjacencies[0])
    n = first.shape[0] if first.ndim == 2 else -1
    total = np.zeros((max(n, 0), max(n, 0)))
    for i, a in enumerate(adjacencies):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape != (n, n):
            raise ShapeError(f"adjacency {i} has shape {a.shape}, expected square ({n}, {n})")
        total = total + a
    mask = total > threshold
    np.fill_diagonal(mask, True)
    return mask
