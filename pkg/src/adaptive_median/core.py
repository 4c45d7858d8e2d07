"""Domain types: answer grids, estimator queries, blocked datasets, quantile intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, InsufficientDataError


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


class FiniteRange:
    """A finite, strictly increasing grid of real answer values.

    Uniform grids are built with :meth:`grid`; arbitrary grids (for example a
    log-scale grid) are passed as an explicit sequence.
    """

    __slots__ = ("_values", "_descriptor")

    def __init__(self, values: Sequence[float], descriptor: Optional[dict] = None):
        arr = np.asarray(values, dtype=float).ravel()
        if arr.size == 0:
            raise DomainError("a finite range needs at least one value")
        if not np.all(np.isfinite(arr)):
            raise DomainError("range values must be finite")
        if arr.size > 1 and not np.all(np.diff(arr) > 0):
            raise DomainError("range values must be strictly increasing")
        self._values = _frozen(arr)
        self._descriptor = descriptor

    @classmethod
    def grid(cls, lo: float, hi: float, step: float) -> "FiniteRange":
        """All points ``lo + i*step`` that lie in ``[lo, hi]``."""
        if not (step > 0 and math.isfinite(step)):
            raise DomainError(f"grid step must be positive, got {step}")
        if hi < lo:
            raise DomainError(f"empty grid interval [{lo}, {hi}]")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        inv = 1.0 / step
        # Dividing integers by 1/step keeps decimal grids (0.1, 0.01, ...) correctly rounded.
        if abs(inv - round(inv)) < 1e-9 * max(1.0, inv) and abs(lo * inv - round(lo * inv)) < 1e-6:
            q = round(inv)
            start = round(lo * inv)
            values = (start + np.arange(count)) / q
        else:
            values = lo + step * np.arange(count)
        desc = {"kind": "grid", "lo": lo, "hi": hi, "step": step}
        return cls(values, descriptor=desc)

    @classmethod
    def symmetric_multiples(cls, bound: float, step: float) -> "FiniteRange":
        """``{r * step : r integer} ∩ [-bound, bound]``."""
        if not step > 0:
            raise DomainError(f"step must be positive, got {step}")
        half = int(math.floor(bound / step + 1e-9))
        inv = 1.0 / step
        if abs(inv - round(inv)) < 1e-9 * max(1.0, inv):
            values = np.arange(-half, half + 1) / round(inv)
        else:
            values = np.arange(-half, half + 1) * step
        return cls(values, descriptor={"kind": "multiples", "bound": bound, "step": step})

    @property
    def values(self) -> np.ndarray:
        return self._values

    def size(self) -> int:
        return int(self._values.size)

    def __len__(self) -> int:
        return self.size()

    def __iter__(self):
        return iter(self._values.tolist())

    def __contains__(self, v) -> bool:
        i = int(np.searchsorted(self._values, v))
        return i < self._values.size and self._values[i] == v

    def __eq__(self, other) -> bool:
        return isinstance(other, FiniteRange) and np.array_equal(self._values, other._values)

    def __hash__(self):
        return hash(self._values.tobytes())

    def __repr__(self) -> str:
        v = self._values
        if v.size <= 6:
            return f"FiniteRange({v.tolist()})"
        return f"FiniteRange([{v[0]}, {v[1]}, ..., {v[-1]}], size={v.size})"

    def index(self, v: float) -> int:
        """Position of grid value ``v``; raises if ``v`` is not on the grid."""
        i = int(np.searchsorted(self._values, v))
        if i >= self._values.size or self._values[i] != v:
            raise DomainError(f"{v} is not a grid value")
        return i

    def project(self, x):
        """Nearest grid value(s); exact ties go to the smaller grid value."""
        return project_to_range(x, self)

    def descriptor(self) -> dict:
        if self._descriptor is not None:
            return dict(self._descriptor)
        return {"kind": "explicit", "values": self._values.tolist()}

    @classmethod
    def from_descriptor(cls, desc: dict) -> "FiniteRange":
        kind = desc.get("kind")
        if kind == "grid":
            return cls.grid(desc["lo"], desc["hi"], desc["step"])
        if kind == "multiples":
            return cls.symmetric_multiples(desc["bound"], desc["step"])
        if kind == "explicit":
            return cls(desc["values"])
        if kind == "pm_one_means":
            t = int(desc["t"])
            return cls((2 * np.arange(t + 1) - t) / t, descriptor={"kind": kind, "t": t})
        raise DomainError(f"unknown range descriptor kind {kind!r}")


def grid(lo: float, hi: float, step: float) -> FiniteRange:
    return FiniteRange.grid(lo, hi, step)


def project_to_range(x, range_: FiniteRange):
    """Map ``x`` (scalar or array) to the nearest grid value, ties downward.

    Values beyond either end of the grid are clamped to that end.
    """
    values = range_.values
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)):
        raise DomainError("cannot project NaN onto a finite range")
    idx = np.searchsorted(values, arr, side="left")
    hi_idx = np.clip(idx, 0, values.size - 1)
    lo_idx = np.clip(idx - 1, 0, values.size - 1)
    lo_v = values[lo_idx]
    hi_v = values[hi_idx]
    take_lo = (arr - lo_v) <= (hi_v - arr)
    out = np.where(take_lo, lo_v, hi_v)
    if np.ndim(x) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class EstimatorQuery:
    """An estimator evaluated on blocks of ``block_size`` samples.

    ``fn`` receives the stacked blocks (shape ``(m, block_size, ...)``) when
    ``batched`` is true and must return ``m`` values; otherwise it is called
    once per block. Outputs are projected onto ``range`` so they always lie
    on the grid.
    """

    fn: Callable[[Any], Any]
    range: FiniteRange
    block_size: int
    batched: bool = True
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.block_size < 1:
            raise DomainError("block_size must be at least 1")

    def evaluate(self, blocks) -> np.ndarray:
        if self.batched:
            raw = np.asarray(self.fn(blocks), dtype=float)
        else:
            raw = np.array([self.fn(b) for b in blocks], dtype=float)
        return project_to_range(raw.reshape(-1), self.range)

    def __call__(self, block) -> float:
        """Projected value on a single block."""
        if self.batched:
            return float(self.evaluate(np.asarray(block)[None])[0])
        return project_to_range(float(self.fn(block)), self.range)


@dataclass(frozen=True)
class BlockedDataset:
    """``n`` samples cut into ``m = n // t`` contiguous blocks of ``t``."""

    samples: np.ndarray
    t: int
    m: int
    discarded: int

    @property
    def blocks(self) -> np.ndarray:
        used = self.samples[: self.m * self.t]
        return used.reshape((self.m, self.t) + used.shape[1:])

    @property
    def n(self) -> int:
        return int(self.samples.shape[0])


def block_partition(samples, t: int) -> BlockedDataset:
    arr = np.asarray(samples)
    if arr.ndim == 0:
        raise DomainError("samples must be a sequence")
    t = int(t)
    if t < 1:
        raise DomainError("block size must be at least 1")
    n = arr.shape[0]
    if n < t:
        raise InsufficientDataError(f"need at least t={t} samples, got {n}", required=t)
    m = n // t
    return BlockedDataset(samples=_frozen(arr), t=t, m=m, discarded=n - m * t)


class DiscreteDistribution:
    """A finitely supported distribution on the reals.

    Weights may be integer counts (comparisons against quantile levels are
    then exact) or floating-point probabilities.
    """

    def __init__(self, atoms, weights):
        atoms = np.asarray(atoms, dtype=float).ravel()
        w = np.asarray(weights).ravel()
        if atoms.size == 0:
            raise DomainError("empty distribution")
        if atoms.shape != w.shape:
            raise DomainError("atoms and weights differ in length")
        if not np.all(np.isfinite(atoms)):
            raise DomainError("atoms must be finite")
        if np.any(w < 0):
            raise DomainError("weights must be nonnegative")
        order = np.argsort(atoms, kind="stable")
        atoms = atoms[order]
        w = w[order]
        uniq, inv = np.unique(atoms, return_inverse=True)
        self._integral = np.issubdtype(w.dtype, np.integer)
        merged = np.zeros(uniq.size, dtype=np.int64 if self._integral else float)
        np.add.at(merged, inv, w)
        keep = merged > 0
        if not np.any(keep):
            raise DomainError("distribution has zero total weight")
        self.atoms = _frozen(uniq[keep])
        self.weights = _frozen(merged[keep])
        self._cum = _frozen(np.cumsum(self.weights))
        self.total = self._cum[-1]

    @property
    def exact(self) -> bool:
        return self._integral

    @property
    def probs(self) -> np.ndarray:
        return self.weights / self.total

    def cdf_leq(self, v) -> float:
        i = np.searchsorted(self.atoms, v, side="right")
        return float(self._cum[i - 1] / self.total) if i > 0 else 0.0

    def cdf_lt(self, v) -> float:
        i = np.searchsorted(self.atoms, v, side="left")
        return float(self._cum[i - 1] / self.total) if i > 0 else 0.0

    def mean(self) -> float:
        return float(np.dot(self.probs, self.atoms))

    def sd(self) -> float:
        mu = self.mean()
        return float(math.sqrt(np.dot(self.probs, (self.atoms - mu) ** 2)))

    def mad(self) -> float:
        """Mean absolute deviation about the mean."""
        mu = self.mean()
        return float(np.dot(self.probs, np.abs(self.atoms - mu)))

    def _first_cum_above(self, level: float) -> int:
        """Smallest index i with cum[i] > level * total (exact for integer weights)."""
        if self._integral:
            frac = Fraction(level)
            total = int(self.total)
            lo, hi = 0, self.atoms.size
            while lo < hi:
                mid = (lo + hi) // 2
                if int(self._cum[mid]) * frac.denominator > frac.numerator * total:
                    hi = mid
                else:
                    lo = mid + 1
            return lo
        return int(np.searchsorted(self._cum, level * self.total, side="right"))

    def _last_cum_below(self, level: float) -> int:
        """Largest atom index i with cum[i-1] < level * total (cum[-1] taken as 0).

        Equals the number of prefix sums strictly below ``level * total``.
        """
        if self._integral:
            frac = Fraction(level)
            total = int(self.total)
            lo, hi = 0, self.atoms.size
            while lo < hi:
                mid = (lo + hi) // 2
                if int(self._cum[mid]) * frac.denominator < frac.numerator * total:
                    lo = mid + 1
                else:
                    hi = mid
            return lo
        return int(np.searchsorted(self._cum, level * self.total, side="left"))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(atoms={self.atoms.size}, total={self.total})"


class EmpiricalDistribution(DiscreteDistribution):
    """The uniform distribution over a multiset of reals."""

    def __init__(self, values):
        vals = np.asarray(values, dtype=float).ravel()
        if vals.size == 0:
            raise DomainError("empty distribution")
        uniq, counts = np.unique(vals, return_counts=True)
        super().__init__(uniq, counts.astype(np.int64))
        self.values = _frozen(np.sort(vals))

    @property
    def m(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class QuantileInterval:
    """``{v : P[Y <= v] > a and P[Y < v] < b}``.

    For a finitely supported distribution this set is the closed interval
    ``[lower, upper]`` whose endpoints are atoms; ``members`` lists the grid
    (or support) points inside it.
    """

    lo_quantile: float
    hi_quantile: float
    lower: Optional[float]
    upper: Optional[float]
    members: tuple

    def __contains__(self, v) -> bool:
        return self.contains(v)

    def contains(self, v) -> bool:
        if self.lower is None:
            return False
        return self.lower <= v <= self.upper

    @property
    def empty(self) -> bool:
        return self.lower is None


def quantile_interval(dist, a: float, b: float, grid: Optional[FiniteRange | Sequence[float]] = None) -> QuantileInterval:
    """The (a, b)-quantile interval of ``dist``.

    ``dist`` may be a :class:`DiscreteDistribution` or a raw sequence of
    values (treated as an empirical distribution). ``members`` are taken from
    ``grid`` when given, otherwise from the support.
    """
    if not isinstance(dist, DiscreteDistribution):
        dist = EmpiricalDistribution(dist)
    if not (0 <= a < b <= 1):
        raise DomainError(f"need 0 <= a < b <= 1, got a={a}, b={b}")
    i_lo = dist._first_cum_above(a)
    i_hi = dist._last_cum_below(b)
    if i_lo >= dist.atoms.size or i_hi < i_lo:
        return QuantileInterval(a, b, None, None, ())
    lower = float(dist.atoms[i_lo])
    upper = float(dist.atoms[i_hi])
    if grid is None:
        pts = dist.atoms
    else:
        pts = grid.values if isinstance(grid, FiniteRange) else np.asarray(grid, dtype=float)
    inside = pts[(pts >= lower) & (pts <= upper)]
    return QuantileInterval(a, b, lower, upper, tuple(inside.tolist()))


def approximate_median_interval(values, alpha: float) -> QuantileInterval:
    """Empirical ((1-alpha)/2, (1+alpha)/2)-quantile interval."""
    return quantile_interval(values, (1 - alpha) / 2, (1 + alpha) / 2)
