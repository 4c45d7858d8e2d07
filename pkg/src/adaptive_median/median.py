"""Private approximate medians: exponential mechanism and binary search over noisy SQs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import EmpiricalDistribution, EstimatorQuery, FiniteRange
from .errors import DomainError, OracleScaleError, ParameterError, ProtocolError

ORACLE_MAX_RANGE = 100_000


@dataclass(frozen=True)
class MedianParams:
    epsilon: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.alpha <= 1:
            raise ParameterError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0 < self.beta < 1:
            raise ParameterError(f"beta must lie in (0, 1), got {self.beta}")

    def required_m(self, range_size: int) -> int:
        return required_m_em(range_size, self.beta, self.epsilon, self.alpha)


def _sorted_values(values) -> np.ndarray:
    if isinstance(values, EmpiricalDistribution):
        return values.values
    arr = np.sort(np.asarray(values, dtype=float).ravel())
    if arr.size == 0:
        raise DomainError("empty value multiset")
    return arr


def utility(values, v: float) -> int:
    """max(#{y < v}, #{y > v})."""
    x = _sorted_values(values)
    below = int(np.searchsorted(x, v, side="left"))
    above = int(x.size - np.searchsorted(x, v, side="right"))
    return max(below, above)


def _utility_on(x: np.ndarray, points: np.ndarray) -> np.ndarray:
    below = np.searchsorted(x, points, side="left")
    above = x.size - np.searchsorted(x, points, side="right")
    return np.maximum(below, above)


@dataclass(frozen=True)
class UtilityProfile:
    """Utility as maximal runs of grid indices ``[starts[i], stops[i])`` with constant value."""

    m: int
    starts: np.ndarray
    stops: np.ndarray
    utilities: np.ndarray

    @property
    def lengths(self) -> np.ndarray:
        return self.stops - self.starts

    def dense(self) -> np.ndarray:
        return np.repeat(self.utilities, self.lengths)

    def min_utility(self) -> int:
        return int(self.utilities.min())


def utility_profile(values, range_: FiniteRange) -> UtilityProfile:
    """Run decomposition of the utility over ``range_``.

    Off-grid gaps between consecutive distinct values have constant utility,
    so there are at most ``2q + 1`` runs for ``q`` distinct values.
    """
    x = _sorted_values(values)
    m = x.size
    uniq, counts = np.unique(x, return_counts=True)
    pos = np.searchsorted(range_.values, uniq)
    if np.any(pos >= range_.size()) or np.any(range_.values[np.minimum(pos, range_.size() - 1)] != uniq):
        raise DomainError("all values must lie on the grid")
    below = np.concatenate(([0], np.cumsum(counts)[:-1]))
    above = m - below - counts
    q = uniq.size
    # Interleave: gap before value j, value j, ..., trailing gap.
    starts = np.empty(2 * q + 1, dtype=np.int64)
    stops = np.empty(2 * q + 1, dtype=np.int64)
    util = np.empty(2 * q + 1, dtype=np.int64)
    prev_end = np.concatenate(([0], pos + 1))
    starts[0::2] = prev_end
    stops[0::2] = np.concatenate((pos, [range_.size()]))
    util[0::2] = np.maximum(np.concatenate((below, [m])), m - np.concatenate((below, [m])))
    starts[1::2] = pos
    stops[1::2] = pos + 1
    util[1::2] = np.maximum(below, above)
    keep = stops > starts
    starts, stops, util = starts[keep], stops[keep], util[keep]
    # Merge neighbours with equal utility.
    new_run = np.concatenate(([True], util[1:] != util[:-1]))
    idx = np.flatnonzero(new_run)
    merged_stops = np.concatenate((starts[idx[1:]], [stops[-1]]))
    return UtilityProfile(m=m, starts=starts[idx], stops=merged_stops, utilities=util[idx])


def _check_epsilon(epsilon: float) -> None:
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise ParameterError(f"epsilon must be positive and finite, got {epsilon}")


def em_median(values, range_: FiniteRange, epsilon: float, rng: np.random.Generator, size: Optional[int] = None):
    """Sample the exponential mechanism with utility :func:`utility`.

    Picks a run with probability proportional to ``len * exp(-(eps/2)(c - c_min))``
    and then a uniform grid point inside it. ``size`` draws a batch.
    """
    _check_epsilon(epsilon)
    prof = utility_profile(values, range_)
    logw = np.log(prof.lengths) - 0.5 * epsilon * (prof.utilities - prof.utilities.min())
    w = np.exp(logw - logw.max())
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    n = 1 if size is None else int(size)
    u = rng.random(n)
    run = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    offset = rng.integers(0, prof.lengths[run])
    out = range_.values[prof.starts[run] + offset]
    return float(out[0]) if size is None else out


def em_exact_distribution(values, range_: FiniteRange, epsilon: float) -> np.ndarray:
    """Exact output probabilities, computed pointwise over the whole grid."""
    _check_epsilon(epsilon)
    if range_.size() > ORACLE_MAX_RANGE:
        raise OracleScaleError(f"range of size {range_.size()} exceeds oracle limit {ORACLE_MAX_RANGE}")
    x = _sorted_values(values)
    c = _utility_on(x, range_.values).astype(float)
    logits = -0.5 * epsilon * (c - c.min())
    p = np.exp(logits)
    return p / p.sum()


def required_m_em(range_size: int, beta: float, epsilon: float, alpha: float) -> int:
    """Smallest m with m >= 4 ln(|T|/beta) / (eps alpha)."""
    if range_size < 1 or not (beta > 0 and epsilon > 0 and alpha > 0):
        raise ParameterError("range_size, beta, epsilon and alpha must be positive")
    bound = 4.0 * math.log(range_size / beta) / (epsilon * alpha)
    return max(1, math.ceil(bound - 1e-9))


def interior_point(values, range_: FiniteRange, epsilon: float, rng: np.random.Generator) -> float:
    """The exponential-mechanism median, used at alpha = 1 (an interior point)."""
    return em_median(values, range_, epsilon, rng)


# Binary search over statistical queries. An oracle takes ``psi``, a map from
# phi-values to [0, 1], and returns an estimate of E[psi(phi(Z))].

SQOracle = Callable[[Callable[[np.ndarray], np.ndarray]], float]


def _leq(v):
    return lambda y: (np.asarray(y) <= v).astype(float)


def _lt(v):
    return lambda y: (np.asarray(y) < v).astype(float)


def bs_median(sq_oracle: SQOracle, query, alpha: float) -> float:
    """Binary search for v with p_<=(v) > 1/2 - alpha/4 and p_<(v) < 1/2 + alpha/4.

    ``query`` is an :class:`EstimatorQuery` or directly its :class:`FiniteRange`.
    Uses at most ``2 floor(log2 |T|)`` oracle calls.
    """
    range_ = query.range if isinstance(query, EstimatorQuery) else query
    if not 0 < alpha <= 1:
        raise ParameterError(f"alpha must lie in (0, 1], got {alpha}")
    vals = range_.values
    lo_thr = 0.5 - alpha / 4
    hi_thr = 0.5 + alpha / 4
    # Invariant: the lower condition failed just below lo (or lo is the first
    # point) and the upper condition failed just above hi (or hi is the last).
    lo, hi = 0, vals.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        v = float(vals[mid])
        ok_lo = sq_oracle(_leq(v)) > lo_thr
        ok_hi = sq_oracle(_lt(v)) < hi_thr
        if ok_lo and ok_hi:
            return v
        if not ok_lo and not ok_hi:
            raise ProtocolError(f"both stopping conditions failed at {v}; oracle is inconsistent")
        if not ok_lo:
            lo = mid + 1
        else:
            hi = mid - 1
    if lo > hi:
        raise ProtocolError("binary search exhausted without a stopping point")
    return float(vals[lo])


class NoisySQOracle:
    """Empirical means of statistical queries plus Gaussian noise of scale sigma."""

    def __init__(self, values, sigma: float, rng: np.random.Generator):
        if not sigma > 0:
            raise ParameterError(f"sigma must be positive, got {sigma}")
        self.values = _sorted_values(values)
        self.sigma = float(sigma)
        self.rng = rng
        self.calls = 0

    def __call__(self, psi) -> float:
        self.calls += 1
        return float(np.mean(psi(self.values))) + self.sigma * float(self.rng.standard_normal())


def noisy_sq_oracle(values, sigma: float, rng: np.random.Generator) -> NoisySQOracle:
    return NoisySQOracle(values, sigma, rng)


def bs_query_budget(range_size: int) -> int:
    """2 ceil(log2 |T|): the number of SQs the binary search may ask."""
    return 2 * max(1, math.ceil(math.log2(range_size))) if range_size > 1 else 0


def gaussian_sigma(epsilon: float, delta: float, n_queries: int, m: int) -> float:
    """Noise scale so that ``n_queries`` Gaussian answers of sensitivity 1/m are (eps, delta)-DP.

    Uses zero-concentrated DP: each query is (1/m)^2 / (2 sigma^2)-zCDP, costs
    add up, and rho-zCDP implies (rho + 2 sqrt(rho ln(1/delta)), delta)-DP.
    The budget is split evenly over the queries.
    """
    if not (epsilon > 0 and 0 < delta < 1 and n_queries >= 1 and m >= 1):
        raise ParameterError("need epsilon > 0, delta in (0, 1), n_queries >= 1, m >= 1")
    L = math.log(1 / delta)
    root = math.sqrt(L + epsilon) - math.sqrt(L)
    rho = root * root
    return math.sqrt(n_queries / (2.0 * rho)) / m


def required_m_sq(range_size: int, epsilon: float, delta: float, alpha: float, beta: float) -> int:
    """m >= 12 sqrt(2 ceil(log2|T|) ln(1/delta) ln(2 ceil(log2|T|)/beta)) / (eps alpha)."""
    depth = max(1, math.ceil(math.log2(range_size)))
    bound = 12 * math.sqrt(2 * depth * math.log(1 / delta) * math.log(2 * depth / beta)) / (epsilon * alpha)
    return math.ceil(bound - 1e-9)


def sq_median(values, range_: FiniteRange, epsilon: float, delta: float, alpha: float,
              rng: np.random.Generator) -> float:
    """Approximate median from Gaussian-noised statistical queries."""
    x = _sorted_values(values)
    sigma = gaussian_sigma(epsilon, delta, bs_query_budget(range_.size()) or 1, x.size)
    return bs_median(noisy_sq_oracle(x, sigma, rng), range_, alpha)
