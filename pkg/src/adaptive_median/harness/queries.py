"""Estimator queries used by the experiments, each rebuildable from its descriptor."""

from __future__ import annotations

import numpy as np

from ..core import EstimatorQuery, FiniteRange
from ..errors import DomainError


def pm_one_grid(t: int) -> FiniteRange:
    """Possible block means of t values in {-1, +1}: (2b - t)/t for b = 0..t."""
    return FiniteRange((2 * np.arange(t + 1) - t) / t, descriptor={"kind": "pm_one_means", "t": t})


def _label(x: np.ndarray, label_bit: int) -> np.ndarray:
    return ((x >> np.uint64(label_bit)) & np.uint64(1)).astype(np.int64)


def feature_correlation(j: int, t: int, label_bit: int = 49) -> EstimatorQuery:
    """Block mean of x_j * y with bits mapped to {-1, +1}."""
    if not 0 <= j < label_bit:
        raise DomainError("feature index must lie below the label bit")
    shift = np.uint64(label_bit - j)

    def fn(blocks):
        b = np.asarray(blocks, dtype=np.uint64)
        # Bit j of b ^ (b >> (label_bit - j)) is x_j xor y.
        disagree = ((b ^ (b >> shift)) >> np.uint64(j)).astype(np.uint8) & np.uint8(1)
        return 1.0 - 2.0 * disagree.sum(axis=-1, dtype=np.int32) / b.shape[-1]

    desc = {"kind": "feature_correlation", "feature": int(j), "t": t, "label_bit": label_bit}
    return EstimatorQuery(fn=fn, range=pm_one_grid(t), block_size=t, descriptor=desc)


def label_agreement(signs, t: int, label_bit: int = 49) -> EstimatorQuery:
    """Block mean of sign(sum_j s_j x_j) * y, ties predicting +1."""
    s = np.asarray(signs, dtype=int)
    if s.ndim != 1 or not np.all(np.abs(s) == 1):
        raise DomainError("signs must be a vector of +1/-1")
    pos = np.uint64(sum(1 << j for j in np.flatnonzero(s > 0)))
    neg = np.uint64(sum(1 << j for j in np.flatnonzero(s < 0)))
    offset = int((s > 0).sum() - (s < 0).sum())

    def fn(blocks):
        b = np.asarray(blocks, dtype=np.uint64)
        score = 2 * (np.bitwise_count(b & pos).astype(np.int64) - np.bitwise_count(b & neg).astype(np.int64)) - offset
        pred = np.where(score >= 0, 1, -1)
        y = 2 * _label(b, label_bit) - 1
        return (pred * y).mean(axis=-1)

    desc = {"kind": "label_agreement", "signs": s.tolist(), "t": t, "label_bit": label_bit}
    return EstimatorQuery(fn=fn, range=pm_one_grid(t), block_size=t, descriptor=desc)


def block_mean(t: int, range_: FiniteRange) -> EstimatorQuery:
    def fn(blocks):
        return np.asarray(blocks, dtype=float).mean(axis=-1)

    return EstimatorQuery(fn=fn, range=range_, block_size=t, descriptor={"kind": "block_mean", "t": t})


def constant(value: float, t: int, range_: FiniteRange) -> EstimatorQuery:
    def fn(blocks):
        return np.full(np.asarray(blocks).shape[0], float(value))

    return EstimatorQuery(fn=fn, range=range_, block_size=t,
                          descriptor={"kind": "constant", "value": float(value), "t": t})


def from_descriptor(desc: dict, range_: FiniteRange) -> EstimatorQuery:
    """Rebuild a query recorded in a transcript."""
    kind = desc.get("kind")
    if kind == "feature_correlation":
        q = feature_correlation(desc["feature"], desc["t"], desc.get("label_bit", 49))
    elif kind == "label_agreement":
        q = label_agreement(desc["signs"], desc["t"], desc.get("label_bit", 49))
    elif kind == "block_mean":
        q = block_mean(desc["t"], range_)
    elif kind == "constant":
        q = constant(desc["value"], desc["t"], range_)
    else:
        raise DomainError(f"cannot rebuild query of kind {kind!r}")
    return EstimatorQuery(fn=q.fn, range=range_, block_size=q.block_size, batched=q.batched, descriptor=dict(desc))
