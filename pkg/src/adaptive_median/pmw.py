"""Private multiplicative weights over a small enumerated universe.

Online PMW: a sparse-vector test decides whether the synthetic distribution
already answers a query well (lazy round); otherwise a Laplace-noised
empirical answer is released and the synthetic distribution gets a
multiplicative-weights update (update round).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .accountant import PrivacyLedger, invert_uniform
from .core import EstimatorQuery
from .errors import DomainError, ParameterError, UpdateBudgetExhausted
from .median import bs_median, bs_query_budget

MAX_UNIVERSE = 1_000_000
ESTIMATOR_ALPHA = 0.5  # bs_median slack; asks for SQ accuracy 1/8


class UniverseDistribution:
    """A probability vector over ``{0, ..., size-1}``."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float).ravel()
        if w.size == 0 or w.size > MAX_UNIVERSE:
            raise DomainError(f"universe size must lie in [1, {MAX_UNIVERSE}], got {w.size}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be finite and nonnegative")
        total = w.sum()
        if total <= 0:
            raise DomainError("weights sum to zero")
        self.probs = w / total

    @classmethod
    def uniform(cls, size: int) -> "UniverseDistribution":
        return cls(np.ones(size))

    @property
    def size(self) -> int:
        return int(self.probs.size)

    def expect(self, psi) -> float:
        return float(np.dot(self.probs, psi))

    def reweight(self, factors) -> None:
        w = self.probs * factors
        self.probs = w / w.sum()


@dataclass(frozen=True)
class PMWConfig:
    """Parameters of one PMW session.

    threshold = alpha/2 and the learning rate equals gamma = alpha/4, the
    smallest discrepancy that can trigger an update once noise stays below
    alpha/4. The update cap then follows from the KL potential argument:
    each update lowers KL(empirical || synthetic) by at least gamma^2/2,
    which starts at most ln|Z|.
    """

    universe_size: int
    alpha: float
    beta: float
    k: int
    target_epsilon: float = 1.0
    target_delta: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.universe_size <= MAX_UNIVERSE:
            raise ParameterError(f"universe size must lie in [2, {MAX_UNIVERSE}]")
        if not 0 < self.alpha < 1 or not 0 < self.beta < 1:
            raise ParameterError("alpha and beta must lie in (0, 1)")
        if self.k < 1:
            raise ParameterError("k must be at least 1")

    @property
    def threshold(self) -> float:
        return self.alpha / 2

    @property
    def gamma(self) -> float:
        return self.alpha / 4

    @property
    def learning_rate(self) -> float:
        return self.gamma

    @property
    def update_cap(self) -> int:
        return math.ceil(2 * math.log(self.universe_size) / self.gamma ** 2)

    @property
    def round_epsilon(self) -> float:
        # Two charges per update: one sparse-vector epoch and one released answer.
        return invert_uniform(2 * self.update_cap, self.target_epsilon, self.target_delta)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PMWCalibration:
    m_noise: int
    m_uniform: int
    m: int
    round_epsilon: float
    update_cap: int


def pmw_required_m(config: PMWConfig) -> PMWCalibration:
    """Dataset size for alpha-accuracy on all k queries w.p. 1 - beta.

    m_noise keeps every Laplace draw of the sparse-vector test below alpha/4
    (union bound over k comparisons and 2 * cap other draws). m_uniform makes
    the empirical histogram alpha/4-close to the population in L1, which
    covers every [-1, 1] query at once.
    """
    eps0 = config.round_epsilon
    draws = config.k + 2 * config.update_cap
    m_noise = math.ceil(48 * math.log(2 * draws / config.beta) / (config.alpha * eps0))
    root = math.sqrt(config.universe_size) + math.sqrt(2 * math.log(2 / config.beta))
    m_uniform = math.ceil((root / config.gamma) ** 2)
    return PMWCalibration(m_noise=m_noise, m_uniform=m_uniform, m=max(m_noise, m_uniform),
                          round_epsilon=eps0, update_cap=config.update_cap)


class PMWState:
    """Session state: empirical histogram, synthetic distribution, counters."""

    def __init__(self, histogram, config: PMWConfig, rng: Optional[np.random.Generator] = None):
        h = np.asarray(histogram, dtype=float).ravel()
        if h.size != config.universe_size:
            raise DomainError(f"histogram has {h.size} cells, universe has {config.universe_size}")
        self.config = config
        self.m = int(round(h.sum()))
        if self.m < 1:
            raise DomainError("empty dataset")
        self.empirical = h / h.sum()
        self.synthetic = UniverseDistribution.uniform(config.universe_size)
        self.rng = rng if rng is not None else np.random.default_rng(np.random.SeedSequence(config.seed))
        eps0 = config.round_epsilon
        self.eps0 = eps0
        self.threshold_scale = 4.0 / (eps0 * self.m)
        self.query_scale = 8.0 / (eps0 * self.m)
        self.answer_scale = 2.0 / (eps0 * self.m)
        self.ledger = PrivacyLedger(delta_slack=config.target_delta, profile="pmw")
        self.updates = 0
        self.queries = 0
        self.sq_calls = 0
        self._threshold_noise: Optional[float] = None

    @classmethod
    def from_samples(cls, z_indices, config: PMWConfig, rng: Optional[np.random.Generator] = None) -> "PMWState":
        z = np.asarray(z_indices, dtype=np.int64).ravel()
        if z.size and (z.min() < 0 or z.max() >= config.universe_size):
            raise DomainError("sample index outside the universe")
        return cls(np.bincount(z, minlength=config.universe_size), config, rng)

    def answer(self, psi) -> float:
        psi = np.asarray(psi, dtype=float).ravel()
        if psi.size != self.config.universe_size:
            raise DomainError("query length differs from universe size")
        if np.any(np.abs(psi) > 1 + 1e-12):
            raise DomainError("statistical queries must map into [-1, 1]")
        self.queries += 1
        self.sq_calls += 1
        if self._threshold_noise is None:
            if self.updates >= self.config.update_cap:
                raise UpdateBudgetExhausted(f"update cap {self.config.update_cap} reached")
            self.ledger.charge(self.eps0, 0.0)
            self._threshold_noise = float(self.rng.laplace(0.0, self.threshold_scale))
        synth = self.synthetic.expect(psi)
        emp = float(np.dot(self.empirical, psi))
        gap = abs(emp - synth) + float(self.rng.laplace(0.0, self.query_scale))
        if gap <= self.config.threshold + self._threshold_noise:
            return synth
        # Update round.
        self.ledger.charge(self.eps0, 0.0)
        noisy = emp + float(self.rng.laplace(0.0, self.answer_scale))
        direction = 1.0 if noisy > synth else -1.0
        self.synthetic.reweight(np.exp(self.config.learning_rate * direction * psi))
        self.updates += 1
        self._threshold_noise = None
        return float(np.clip(noisy, -1.0, 1.0))


def pmw_answer_sq(state: PMWState, psi) -> float:
    return state.answer(psi)


def pmw_answer_estimator(state: PMWState, phi: EstimatorQuery, universe_blocks) -> float:
    """Approximate median of phi over the universe via binary search on PMW answers.

    ``universe_blocks`` lists the elements of Z in index order, so that
    ``phi.evaluate(universe_blocks)[z]`` is phi at universe element z.
    """
    if state.config.alpha > ESTIMATOR_ALPHA / 4:
        raise ParameterError(f"estimator answers need PMW alpha <= {ESTIMATOR_ALPHA / 4}")
    phi_z = phi.evaluate(universe_blocks)
    if phi_z.size != state.config.universe_size:
        raise DomainError("universe_blocks does not enumerate the universe")
    return bs_median(lambda psi: state.answer(psi(phi_z)), phi, ESTIMATOR_ALPHA)


def estimator_call_budget(range_size: int) -> int:
    return bs_query_budget(range_size)


def encode_blocks(blocks, x_size: int) -> np.ndarray:
    """Base-|X| index of each block of symbols in ``{0, ..., x_size-1}``."""
    b = np.asarray(blocks, dtype=np.int64)
    weights = x_size ** np.arange(b.shape[-1] - 1, -1, -1, dtype=np.int64)
    return b @ weights


def enumerate_universe(x_size: int, t: int) -> np.ndarray:
    """All blocks of length t over ``{0, ..., x_size-1}``, in :func:`encode_blocks` order."""
    size = x_size ** t
    if size > MAX_UNIVERSE:
        raise DomainError(f"universe of size {size} exceeds {MAX_UNIVERSE}")
    idx = np.arange(size)
    digits = [(idx // x_size ** p) % x_size for p in range(t - 1, -1, -1)]
    return np.stack(digits, axis=1)
