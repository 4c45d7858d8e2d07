"""Ground truth for phi(P^t): exact where the law is enumerable, Monte-Carlo otherwise."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import stats

from ..core import DiscreteDistribution, EmpiricalDistribution, EstimatorQuery, QuantileInterval, quantile_interval
from .distributions import Bernoulli, BernoulliProduct, Categorical

MAX_EXACT_ATOMS = 1_000_000
DEFAULT_MC_DRAWS = 1_000_000


def _pm_one_binomial(t: int, q: float) -> DiscreteDistribution:
    """Law of the block mean of t i.i.d. values equal to +1 w.p. q and -1 otherwise."""
    b = np.arange(t + 1)
    atoms = (2 * b - t) / t
    if q == 0.5:
        weights = np.array([math.comb(t, int(i)) for i in b], dtype=np.int64)
    else:
        weights = stats.binom.pmf(b, t, q)
    return DiscreteDistribution(atoms, weights)


def _project(law: DiscreteDistribution, query: EstimatorQuery) -> DiscreteDistribution:
    return DiscreteDistribution(query.range.project(law.atoms), law.weights)


@dataclass(frozen=True)
class MonteCarloInterval:
    """Monte-Carlo quantile interval with confidence bounds.

    ``inner`` shrinks the quantile levels by ``z * se`` and ``outer`` widens
    them, so inner ⊆ truth ⊆ outer with high confidence.
    """

    estimate: QuantileInterval
    inner: QuantileInterval
    outer: QuantileInterval
    draws: int
    level_margin: float

    def contains(self, v) -> bool:
        return self.estimate.contains(v)


class GroundTruthOracle:
    def __init__(self, distribution, mc_draws: int = DEFAULT_MC_DRAWS, seed: int = 0):
        self.distribution = distribution
        self.mc_draws = int(mc_draws)
        self.seed = seed
        self._cache: dict = {}

    def _key(self, query: EstimatorQuery):
        return repr(sorted(query.descriptor.items())), query.range

    def exact_law(self, query: EstimatorQuery) -> Optional[DiscreteDistribution]:
        """Exact law of phi(P^t), or None when it is not available."""
        key = self._key(query)
        if key in self._cache:
            return self._cache[key]
        law = self._exact_law(query)
        self._cache[key] = law
        return law

    def _exact_law(self, query: EstimatorQuery) -> Optional[DiscreteDistribution]:
        d = self.distribution
        kind = query.descriptor.get("kind")
        t = query.block_size
        if kind == "constant":
            return DiscreteDistribution([query.range.project(query.descriptor["value"])], np.array([1], dtype=np.int64))
        if isinstance(d, BernoulliProduct):
            if kind == "feature_correlation":
                agree = d.p ** 2 + (1 - d.p) ** 2
                return _project(_pm_one_binomial(t, 0.5 if d.p == 0.5 else agree), query)
            if kind == "label_agreement" and d.p == 0.5:
                # The label is a fair coin independent of the prediction.
                return _project(_pm_one_binomial(t, 0.5), query)
            return None
        if isinstance(d, Bernoulli) and kind == "block_mean":
            b = np.arange(t + 1)
            weights = stats.binom.pmf(b, t, d.p)
            if d.p == 0.5:
                weights = np.array([math.comb(t, int(i)) for i in b], dtype=np.int64)
            return _project(DiscreteDistribution(b / t, weights), query)
        if isinstance(d, Categorical) and len(d.atoms) ** t <= MAX_EXACT_ATOMS:
            return self._enumerate(query)
        return None

    def _enumerate(self, query: EstimatorQuery) -> DiscreteDistribution:
        d = self.distribution
        atoms = np.asarray(d.atoms, dtype=float)
        probs = np.asarray(d.probs, dtype=float)
        idx = np.array(list(itertools.product(range(atoms.size), repeat=query.block_size)))
        values = query.evaluate(atoms[idx])
        weights = np.prod(probs[idx], axis=1)
        return DiscreteDistribution(values, weights)

    def monte_carlo_values(self, query: EstimatorQuery, draws: Optional[int] = None) -> np.ndarray:
        n = int(draws or self.mc_draws)
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(0x6D63,)))
        samples = self.distribution.sample(n * query.block_size, rng)
        blocks = samples.reshape((n, query.block_size) + samples.shape[1:])
        return query.evaluate(blocks)

    def law(self, query: EstimatorQuery) -> DiscreteDistribution:
        law = self.exact_law(query)
        if law is not None:
            return law
        return EmpiricalDistribution(self.monte_carlo_values(query))

    def mean(self, query: EstimatorQuery) -> float:
        return self.law(query).mean()

    def sd(self, query: EstimatorQuery) -> float:
        return self.law(query).sd()

    def mad(self, query: EstimatorQuery) -> float:
        return self.law(query).mad()

    def iqr(self, query: EstimatorQuery, a: float = 0.25, b: float = 0.75, confidence: float = 0.99,
            force_monte_carlo: bool = False) -> Union[QuantileInterval, MonteCarloInterval]:
        law = None if force_monte_carlo else self.exact_law(query)
        if law is not None:
            return quantile_interval(law, a, b, grid=query.range)
        values = self.monte_carlo_values(query)
        n = values.size
        z = stats.norm.ppf(0.5 + confidence / 2)
        margin = z * math.sqrt(max(a * (1 - a), b * (1 - b)) / n)
        emp = EmpiricalDistribution(values)
        estimate = quantile_interval(emp, a, b, grid=query.range)
        if a + margin < b - margin:
            inner = quantile_interval(emp, a + margin, b - margin, grid=query.range)
        else:
            inner = QuantileInterval(a, b, None, None, ())
        outer = quantile_interval(emp, max(a - margin, 0.0), min(b + margin, 1.0), grid=query.range)
        return MonteCarloInterval(estimate=estimate, inner=inner, outer=outer, draws=n, level_margin=margin)


def true_iqr(oracle: GroundTruthOracle, phi: EstimatorQuery, a: float = 0.25, b: float = 0.75):
    return oracle.iqr(phi, a, b)


def binomial_mad(t: int, p: float) -> float:
    """Exact MAD of Binomial(t, p)/t by enumeration."""
    b = np.arange(t + 1)
    w = stats.binom.pmf(b, t, p)
    return float(np.dot(w, np.abs(b / t - p)))
