"""Unprotected mechanisms with the same ``answer(query)`` interface as a session."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..core import EstimatorQuery, block_partition


def _raw_block_values(query: EstimatorQuery, blocks) -> np.ndarray:
    if query.batched:
        return np.asarray(query.fn(blocks), dtype=float).reshape(-1)
    return np.array([query.fn(b) for b in blocks], dtype=float)


class NaiveEmpirical:
    """Average of phi over all blocks of the full dataset."""

    tag = "naive-empirical"

    def __init__(self, samples, t: int):
        self.data = block_partition(samples, t)

    @property
    def blocks_used(self) -> int:
        return self.data.m

    def answer(self, query: EstimatorQuery) -> Optional[float]:
        return float(_raw_block_values(query, self.data.blocks).mean())


class DataSplitting:
    """A fresh chunk of blocks per query; None once chunks run out."""

    tag = "data-splitting"

    def __init__(self, samples, t: int, chunks: int):
        data = block_partition(samples, t)
        if chunks < 1 or chunks > data.m:
            raise ValueError(f"need 1 <= chunks <= {data.m}")
        self.parts = np.array_split(data.blocks, chunks)
        self.used = 0

    @property
    def blocks_used(self) -> int:
        return len(self.parts[0])

    def answer(self, query: EstimatorQuery) -> Optional[float]:
        if self.used >= len(self.parts):
            return None
        part = self.parts[self.used]
        self.used += 1
        return float(_raw_block_values(query, part).mean())


class GaussianNoise:
    """Naive empirical answer plus N(0, sigma^2)."""

    tag = "gaussian-noise"

    def __init__(self, samples, t: int, sigma: float, rng: np.random.Generator):
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        self.naive = NaiveEmpirical(samples, t)
        self.sigma = sigma
        self.rng = rng

    @property
    def blocks_used(self) -> int:
        return self.naive.blocks_used

    def answer(self, query: EstimatorQuery) -> Optional[float]:
        return self.naive.answer(query) + self.sigma * float(self.rng.standard_normal())


def make_baseline(tag: str, samples, t: int, rng: Optional[np.random.Generator] = None, **params):
    if tag == NaiveEmpirical.tag:
        return NaiveEmpirical(samples, t)
    if tag == DataSplitting.tag:
        return DataSplitting(samples, t, int(params["chunks"]))
    if tag == GaussianNoise.tag:
        return GaussianNoise(samples, t, float(params["sigma"]), rng or np.random.default_rng())
    raise ValueError(f"unknown baseline {tag!r}")


def baseline_answer(baseline, dataset, query: EstimatorQuery, **params) -> Optional[float]:
    """Answer ``query`` with a bound baseline, or build one from a tag and ``dataset``."""
    if isinstance(baseline, str):
        baseline = make_baseline(baseline, dataset, query.block_size, **params)
    return baseline.answer(query)
