"""Jackknife, bootstrap and curve-crossing helpers."""
from __future__ import annotations

import numpy as np


def jackknife(values: np.ndarray, fn=None):
    """Delete-one jackknife of fn(mean over axis 0).  Returns (estimate, error)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n == 0:
        raise ValueError("empty sample")
    fn = fn or (lambda m: m)
    full = fn(values.mean(0))
    if n == 1:
        return full, np.full_like(np.asarray(full, dtype=float), np.nan)
    tot = values.sum(0)
    reps = np.array([fn((tot - values[i]) / (n - 1)) for i in range(n)])
    with np.errstate(invalid="ignore"):     # infinite replicas give a nan error
        err = np.sqrt((n - 1) * np.mean((reps - reps.mean(0)) ** 2, axis=0))
    return full, err


def binned_jackknife(series: np.ndarray, n_bins: int = 20, fn=None):
    series = np.asarray(series, dtype=float)
    n = (len(series) // n_bins) * n_bins
    if n == 0:
        raise ValueError("empty trace")
    bins = series[:n].reshape(n_bins, -1, *series.shape[1:]).mean(1)
    return jackknife(bins, fn)


def linear_crossings(x, a, b):
    """Points where a - b changes sign from + to -, by linear interpolation."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    out = []
    for i in range(len(x) - 1):
        if d[i] > 0 and d[i + 1] <= 0:
            f = d[i] / (d[i] - d[i + 1])
            out.append(x[i] + f * (x[i + 1] - x[i]))
    return out


def first_crossing(x, a, b):
    c = linear_crossings(x, a, b)
    return c[0] if c else None
