"""Likelihood-ratio audits of small mechanisms over neighbouring datasets."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import stats

from ..core import FiniteRange
from ..median import em_exact_distribution, em_median


@dataclass
class AuditResult:
    max_ratio: float
    bound: float
    passed: bool
    worst: Optional[tuple] = None
    pairs_checked: int = 0
    mode: str = "exact"
    lower_bound_ratio: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "max_ratio": self.max_ratio if math.isfinite(self.max_ratio) else "inf",
            "bound": self.bound,
            "passed": self.passed,
            "worst": [list(map(float, w)) if isinstance(w, tuple) else w for w in self.worst] if self.worst else None,
            "pairs_checked": self.pairs_checked,
            "mode": self.mode,
            "lower_bound_ratio": self.lower_bound_ratio,
        }


def neighbour_families(m: int, range_: FiniteRange) -> Iterable[list]:
    """Groups of mutually neighbouring multisets of size m over the grid.

    Every group is ``{u + {a} : a in T}`` for one (m-1)-multiset u, so each
    neighbouring pair lies in some group.
    """
    vals = range_.values.tolist()
    for base in itertools.combinations_with_replacement(vals, m - 1):
        yield [tuple(sorted(base + (a,))) for a in vals]


def _log_ratio(P: np.ndarray) -> tuple[float, tuple]:
    with np.errstate(divide="ignore", invalid="ignore"):
        L = np.log(P)
        hi = L.max(axis=0)
        # An output no dataset can produce contributes ratio 1.
        spread = np.where(np.isneginf(hi), 0.0, hi - L.min(axis=0))
    v = int(np.argmax(spread))
    return float(spread[v]), (int(np.argmax(L[:, v])), int(np.argmin(L[:, v])), v)


def dp_ratio_audit(mechanism, family: Iterable[list], epsilon: float, tol: float = 1e-9) -> AuditResult:
    """Exact audit: ``mechanism(values) -> probability vector`` over a fixed output set.

    Reports the largest p(v | s) / p(v | s') over all neighbour pairs in the
    family, and passes when it is at most e^epsilon (within ``tol``).
    """
    worst = -math.inf
    worst_at = None
    pairs = 0
    for group in family:
        P = np.array([mechanism(list(s)) for s in group])
        lr, (i, j, v) = _log_ratio(P)
        pairs += len(group) * (len(group) - 1)
        if lr > worst:
            worst, worst_at = lr, (group[i], group[j], v)
    ratio = math.exp(worst) if math.isfinite(worst) else math.inf
    bound = math.exp(epsilon)
    return AuditResult(max_ratio=ratio, bound=bound, passed=ratio <= bound * (1 + tol),
                       worst=worst_at, pairs_checked=pairs, mode="exact")


def em_audit(m: int, range_: FiniteRange, epsilon: float) -> AuditResult:
    return dp_ratio_audit(lambda s: em_exact_distribution(s, range_, epsilon), neighbour_families(m, range_), epsilon)


def clopper_pearson(k: int, n: int, confidence: float = 0.99) -> tuple[float, float]:
    alpha = 1 - confidence
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


def frequency_audit(sampler: Callable[[list, np.random.Generator, int], np.ndarray], pairs: Iterable[tuple],
                    outputs, epsilon: float, draws: int, rng: np.random.Generator,
                    confidence: float = 0.99) -> AuditResult:
    """Sampled audit over explicit neighbour pairs.

    The point estimate of the ratio may be infinite; pass/fail uses the
    conservative ratio CP_lower(p_s) / CP_upper(p_s'), so a pass means no
    significant evidence of a violation.
    """
    outputs = np.asarray(outputs, dtype=float)
    point = 0.0
    lower = 0.0
    worst_at = None
    n_pairs = 0
    for s, s2 in pairs:
        n_pairs += 1
        a = sampler(list(s), rng, draws)
        b = sampler(list(s2), rng, draws)
        ca = np.array([(a == v).sum() for v in outputs])
        cb = np.array([(b == v).sum() for v in outputs])
        for x, y, order in ((ca, cb, (s, s2)), (cb, ca, (s2, s))):
            for idx in range(outputs.size):
                est = math.inf if y[idx] == 0 and x[idx] > 0 else (x[idx] / y[idx] if y[idx] else 1.0)
                lo = clopper_pearson(int(x[idx]), draws, confidence)[0] / clopper_pearson(int(y[idx]), draws, confidence)[1]
                point = max(point, est)
                if lo > lower:
                    lower, worst_at = lo, (order[0], order[1], idx)
    bound = math.exp(epsilon)
    return AuditResult(max_ratio=float(point), bound=bound, passed=lower <= bound, worst=worst_at,
                       pairs_checked=n_pairs, mode="frequency", lower_bound_ratio=lower)


def em_sampler(range_: FiniteRange, epsilon: float):
    return lambda s, rng, size: em_median(s, range_, epsilon, rng, size=size)


def constant_mechanism(range_: FiniteRange, value: Optional[float] = None):
    """Ignores its input: a trivially private control."""
    v = range_.values[0] if value is None else value
    p = (range_.values == v).astype(float)
    return lambda s: p


def broken_median(range_: FiniteRange):
    """Releases the exact lower median with no noise: a negative control."""
    def mech(s):
        med = sorted(s)[(len(s) - 1) // 2]
        return (range_.values == range_.project(med)).astype(float)
    return mech
