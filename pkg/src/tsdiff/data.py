"""CSV ingestion, min-max normalization, fixed-length windowing, and the
synthetic sine corpus used for desk-scale experiments."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

DEFAULT_WINDOW = 24


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    name: str
    windows: np.ndarray          # (N, K, D), values in [0, 1]
    feature_names: list = field(default_factory=list)
    min_: np.ndarray = None      # per-feature bounds from the fitted split
    max_: np.ndarray = None
    constant_features: np.ndarray = None  # flags where max == min

    @property
    def n_features(self):
        return self.windows.shape[2]

    @property
    def window_len(self):
        return self.windows.shape[1]


def load_csv(path, schema=None):
    """Parse a numeric CSV with a header row into an (N, D) float matrix.

    schema: optional dict with a "columns" list selecting/ordering columns.
    Returns (matrix, column_names).
    """
    if not os.path.exists(path):
        raise DataError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty file: {path}") from None
        header = [h.strip() for h in header]
        if schema and "columns" in schema:
            wanted = schema["columns"]
            missing = [c for c in wanted if c not in header]
            if missing:
                raise DataError(f"columns not in {path}: {missing}")
            idx = [header.index(c) for c in wanted]
            names = list(wanted)
        else:
            idx = list(range(len(header)))
            names = header
        rows = []
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: ragged row {rownum} "
                                f"({len(row)} fields, expected {len(header)})")
            vals = []
            for j in idx:
                try:
                    vals.append(float(row[j]))
                except ValueError:
                    raise DataError(f"{path}: non-numeric cell at row {rownum}, "
                                    f"column {header[j]!r}") from None
            rows.append(vals)
    if not rows:
        raise DataError(f"no data rows in {path}")
    return np.asarray(rows, dtype=np.float64), names


def load_schema(path):
    with open(path) as fh:
        return json.load(fh)


def normalize(matrix, bounds=None):
    """Per-feature min-max scaling to [0, 1].

    When `bounds` is given (training-split bounds), they are applied
    unchanged; otherwise they are computed from `matrix`.  Returns
    (matrix01, (min, max), constant_mask).
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if not np.all(np.isfinite(matrix)):
        raise DataError("non-finite values in input matrix")
    if bounds is None:
        lo = matrix.min(axis=0)
        hi = matrix.max(axis=0)
    else:
        lo, hi = bounds
    constant = hi <= lo
    out = (matrix - lo) / (hi - lo + 1e-7)
    out[:, constant] = 0.0
    return out, (lo, hi), constant


def denormalize(matrix01, bounds):
    lo, hi = bounds
    return np.asarray(matrix01) * (hi - lo + 1e-7) + lo


def window(matrix01, K=DEFAULT_WINDOW, rng=None):
    """Stride-1 sliding windows, uniformly shuffled: (N-K+1, K, D)."""
    N = matrix01.shape[0]
    if N < K:
        raise DataError(f"series length {N} shorter than window {K}")
    n_win = N - K + 1
    idx = np.arange(K)[None, :] + np.arange(n_win)[:, None]
    wins = matrix01[idx]
    if rng is not None:
        wins = wins[rng.permutation(n_win)]
    return wins


def chrono_split(matrix, train_frac=0.8):
    """Chronological train/test split of the raw matrix (before windowing)."""
    n_train = int(round(matrix.shape[0] * train_frac))
    return matrix[:n_train], matrix[n_train:]


def build_dataset(path, schema=None, K=DEFAULT_WINDOW, seed=0, name=None,
                  train_frac=0.8):
    """Load, split chronologically, normalize on the train split, window.

    Returns (train: Dataset, test: Dataset); test reuses the train bounds.
    """
    matrix, names = load_csv(path, schema)
    rng = np.random.default_rng(seed)
    raw_train, raw_test = chrono_split(matrix, train_frac)
    train01, bounds, constant = normalize(raw_train)
    test01, _, _ = normalize(raw_test, bounds=bounds)
    name = name or os.path.splitext(os.path.basename(path))[0]
    train = Dataset(name=name, windows=window(train01, K, rng),
                    feature_names=names, min_=bounds[0], max_=bounds[1],
                    constant_features=constant)
    test = Dataset(name=name + "_test", windows=window(test01, K, rng),
                   feature_names=names, min_=bounds[0], max_=bounds[1],
                   constant_features=constant)
    return train, test


def make_sine_dataset(n, K, D, seed):
    """Random-phase/frequency sinusoids in [0, 1]: windows (n, K, D)."""
    if min(n, K, D) < 1:
        raise DataError("make_sine_dataset arguments must be >= 1")
    rng = np.random.default_rng(seed)
    freq = rng.uniform(0.05, 0.25, size=(n, D))
    phase = rng.uniform(0.0, 2 * np.pi, size=(n, D))
    t = np.arange(K)[None, :, None]
    x = 0.5 * np.sin(2 * np.pi * freq[:, None, :] * t + phase[:, None, :]) + 0.5
    return Dataset(name=f"sine{D}", windows=x,
                   feature_names=[f"sine_{i}" for i in range(D)],
                   min_=np.zeros(D), max_=np.ones(D),
                   constant_features=np.zeros(D, dtype=bool))


def make_lagged_sine_dataset(n, K, D, seed, amp=0.35, freq_min=0.02,
                             freq_max=0.08):
    """Correlated sinusoids with a one-step-lag feature: windows (n, K, D).

    Features 1..D-1 share a per-window frequency and phase and differ only
    by fixed phase offsets spread over [0, pi/2]; feature D is feature 1
    delayed by one step.  Unlike the independent sine corpus, every feature
    carries information about every other one, so cross-feature forecasting
    (predict feature D from the others) has a near-zero error floor.
    """
    if min(n, K, seed + 1) < 1 or D < 2:
        raise DataError("make_lagged_sine_dataset needs n, K >= 1 and D >= 2")
    if not 0 < amp <= 0.5 or not 0 < freq_min <= freq_max:
        raise DataError("invalid amplitude or frequency range")
    rng = np.random.default_rng(seed)
    freq = rng.uniform(freq_min, freq_max, size=(n, 1))
    phase = rng.uniform(0.0, 2 * np.pi, size=(n, 1))
    offsets = np.linspace(0.0, np.pi / 2, D - 1)[None, :]
    # start at t = -1 so the lag feature has no edge artifact
    t = np.arange(-1, K)[None, :, None]
    base = amp * np.sin(2 * np.pi * freq[:, None, :] * t
                        + phase[:, None, :] + offsets[:, None, :]) + 0.5
    lag = base[:, :-1, :1]
    x = np.concatenate([base[:, 1:, :], lag], axis=2)
    names = [f"wave_{i}" for i in range(D - 1)] + ["wave_0_lag1"]
    return Dataset(name=f"lagged{D}", windows=x, feature_names=names,
                   min_=np.zeros(D), max_=np.ones(D),
                   constant_features=np.zeros(D, dtype=bool))
