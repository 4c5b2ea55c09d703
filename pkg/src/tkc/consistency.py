"""Temporal kernel consistency: code-space change between adjacent frames."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import InsufficientDataError
from .kernelcodec import KernelCodec, encode

HIGH = "high"
LOW = "low"


@dataclass(frozen=True)
class ConsistencySeries:
    changes: np.ndarray

    @property
    def summary(self) -> dict:
        return boxplot_summary(self.changes)

    @property
    def median(self) -> float:
        return float(np.median(self.changes))


def boxplot_summary(values) -> dict:
    """Tukey boxplot statistics with 1.5 IQR whiskers."""
    v = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return {
        "count": int(v.size),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "min": float(v.min()),
        "max": float(v.max()),
        "mean": float(v.mean()),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": [float(x) for x in v[(v < lo_fence) | (v > hi_fence)]],
    }


def code_change_series(codes) -> ConsistencySeries:
    c = np.asarray(codes, dtype=np.float64)
    if c.ndim != 2 or len(c) < 2:
        raise InsufficientDataError("need at least two frames to measure kernel change")
    return ConsistencySeries(np.abs(np.diff(c, axis=0)).sum(axis=1))


def kernel_change_series(kseq, codec: KernelCodec) -> ConsistencySeries:
    ks = np.asarray(kseq, dtype=np.float64)
    if ks.ndim != 3 or len(ks) < 2:
        raise InsufficientDataError("need at least two kernels to measure kernel change")
    return code_change_series(encode(codec, ks))


def shuffled_sequence(kseqs, rng: np.random.Generator, length: int | None = None):
    """Draw each timestep's kernel from a random source sequence, never the same source twice in a row.

    Returns ``(kernels, sources)``. Timestep ``t`` takes frame ``t`` of its
    source (looping if that source is shorter).
    """
    seqs = [np.asarray(s, dtype=np.float64) for s in kseqs]
    if len(seqs) < 2:
        raise InsufficientDataError("shuffled baseline needs at least two sequences")
    if length is None:
        length = min(len(s) for s in seqs)
    sources = np.empty(length, dtype=int)
    prev = -1
    for t in range(length):
        if prev < 0:
            src = int(rng.integers(len(seqs)))
        else:
            src = int(rng.integers(len(seqs) - 1))
            src += src >= prev
        sources[t] = prev = src
    kernels = np.stack([seqs[s][t % len(seqs[s])] for t, s in enumerate(sources)])
    return kernels, sources


def shuffled_baseline(kseqs, codec: KernelCodec, rng: np.random.Generator,
                      length: int | None = None) -> ConsistencySeries:
    kernels, _ = shuffled_sequence(kseqs, rng, length)
    return kernel_change_series(kernels, codec)


def classify_consistency(series: ConsistencySeries, threshold: float) -> str:
    return HIGH if series.median <= threshold else LOW
