"""Analysts that pick each query from the answers seen so far."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..core import EstimatorQuery
from . import queries


class Adversary:
    """Base policy: ``next_query`` returns None when the analyst is done."""

    name = "base"

    def reset(self, rng: Optional[np.random.Generator] = None) -> None:
        self.rng = rng
        self.history: list = []

    def next_query(self):
        raise NotImplementedError

    def observe(self, answer) -> None:
        self.history.append(answer)


class NoQueries(Adversary):
    name = "none"

    def next_query(self):
        return None


class FixedQuery(Adversary):
    """Asks the same query ``repeat`` times."""

    name = "fixed"

    def __init__(self, query: EstimatorQuery, repeat: int = 1):
        self.query = query
        self.repeat = repeat

    def next_query(self):
        return self.query if len(self.history) < self.repeat else None


class OverfitBoost(Adversary):
    """Sign-selection attack on a linear classifier.

    The first ``features`` queries ask for the correlation of each feature
    with the label. The final query asks for the label agreement of the
    classifier that weights each feature by the sign of its reported
    correlation. On the empirical sample that classifier looks better than
    chance even when the label is independent of every feature.
    """

    name = "overfit_boost"

    def __init__(self, features: int = 49, t: int = 16, label_bit: Optional[int] = None):
        self.features = features
        self.t = t
        self.label_bit = features if label_bit is None else label_bit

    @property
    def k(self) -> int:
        return self.features + 1

    def signs(self) -> np.ndarray:
        ans = np.array([0.0 if a is None else a for a in self.history[: self.features]])
        return np.where(ans >= 0, 1, -1)

    def next_query(self):
        j = len(self.history)
        if j < self.features:
            return queries.feature_correlation(j, self.t, self.label_bit)
        if j == self.features:
            return queries.label_agreement(self.signs(), self.t, self.label_bit)
        return None


class RandomSQ(Adversary):
    """Statistical queries over an enumerated universe for PMW.

    The first half are uniform random sign vectors. Each later query adds up
    the earlier ones, each weighted by the sign of its answer's offset from
    the uniform-distribution mean, and clips the sum to [-1, 1]. This steers
    queries toward directions where the answers have drifted.
    """

    name = "random_sq"

    def __init__(self, universe_size: int, k: int, boost_from: Optional[int] = None):
        self.universe_size = universe_size
        self.k = k
        self.boost_from = k // 2 if boost_from is None else boost_from

    def reset(self, rng=None) -> None:
        super().reset(rng)
        self.asked: list = []

    def next_query(self):
        j = len(self.asked)
        if j >= self.k:
            return None
        if j < self.boost_from or not self.asked:
            psi = self.rng.choice([-1.0, 1.0], size=self.universe_size)
        else:
            past = np.array(self.asked)
            offsets = np.array(self.history) - past.mean(axis=1)
            w = np.where(offsets >= 0, 1.0, -1.0)
            psi = np.clip(w @ past / np.sqrt(len(w)), -1.0, 1.0)
        self.asked.append(psi)
        return psi


class GrayZoneProber(Adversary):
    """Verification analyst that walks proposed answers outward from the median.

    On a Y it steps further into the tail; on an N it switches to the other
    side. This spends most queries near the edges of the quantile interval.
    """

    name = "gray_zone"

    def __init__(self, query: EstimatorQuery, start_index: int, k: int, step: int = 1):
        self.query = query
        self.start_index = start_index
        self.k = k
        self.step = step

    def reset(self, rng=None) -> None:
        super().reset(rng)
        self.offset = 0
        self.direction = 1

    def next_query(self):
        if len(self.history) >= self.k:
            return None
        vals = self.query.range.values
        i = int(np.clip(self.start_index + self.direction * self.offset, 0, vals.size - 1))
        return self.query, float(vals[i])

    def observe(self, answer) -> None:
        super().observe(answer)
        if getattr(answer, "value", answer) == "Y":
            self.offset += self.step
        else:
            self.direction = -self.direction


def from_descriptor(desc: dict) -> Adversary:
    kind = desc.get("kind")
    if kind == "overfit_boost":
        return OverfitBoost(features=int(desc.get("features", 49)), t=int(desc.get("t", 16)))
    if kind == "none":
        return NoQueries()
    raise ValueError(f"unknown adversary kind {kind!r}")
