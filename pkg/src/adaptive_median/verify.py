"""Verification queries on a holdout via the sparse vector technique."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Union

import numpy as np

from .accountant import PrivacyLedger
from .core import EstimatorQuery, block_partition
from .errors import InsufficientDataError, ParameterError


class Verdict(str, enum.Enum):
    YES = "Y"
    NO = "N"
    BOT = "bot"


@dataclass(frozen=True)
class VerifyConfig:
    rho: float
    alpha: float
    ell: int
    k: int
    beta: float
    t: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha < self.rho < 0.25:
            raise ParameterError(f"need 0 < alpha < rho < 1/4, got alpha={self.alpha}, rho={self.rho}")
        if self.ell < 1 or self.k < 1 or self.t < 1:
            raise ParameterError("ell, k and t must be at least 1")
        if not 0 < self.beta < 1:
            raise ParameterError(f"beta must lie in (0, 1), got {self.beta}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SVCalibration:
    """Constants behind the holdout size.

    epsilon = ln(1 + alpha/(8 rho)) / 2 and delta = alpha beta / 384 are the
    whole-interaction privacy levels the generalization step needs.
    epoch_epsilon is the per-epoch budget whose ell-fold advanced composition
    (slack delta) equals epsilon. m1 is the generalization requirement and m0
    keeps every Laplace draw (ell thresholds, 2k comparisons) below alpha/6 in
    total with probability 1 - beta/2.
    """

    epsilon: float
    delta: float
    epoch_epsilon: float
    m0: float
    m1: float
    m: int

    @property
    def threshold_scale(self) -> float:
        return 2.0 / (self.epoch_epsilon * self.m)

    @property
    def query_scale(self) -> float:
        return 4.0 / (self.epoch_epsilon * self.m)


def epoch_epsilon(total_epsilon: float, ell: int, delta: float) -> float:
    """x with ell x^2 / 2 + x sqrt(2 ell ln(1/delta)) = total_epsilon."""
    a = ell / 2.0
    b = math.sqrt(2.0 * ell * math.log(1.0 / delta))
    return (-b + math.sqrt(b * b + 4 * a * total_epsilon)) / (2 * a)


def sv_calibration(ell: int, alpha: float, beta: float, k: int, rho: float) -> SVCalibration:
    VerifyConfig(rho=rho, alpha=alpha, ell=ell, k=k, beta=beta)
    eps = 0.5 * math.log1p(alpha / (8 * rho))
    delta = alpha * beta / 384
    eps_s = epoch_epsilon(eps, ell, delta)
    m1 = 96.0 / (eps * alpha) * math.log(16 * k / beta)
    m0 = 36.0 * math.log(2 * (ell + 2 * k) / beta) / (alpha * eps_s)
    return SVCalibration(epsilon=eps, delta=delta, epoch_epsilon=eps_s, m0=m0, m1=m1, m=math.ceil(max(m0, m1)))


def required_m_sv(ell: int, alpha: float, beta: float, k: int, rho: float) -> int:
    return sv_calibration(ell, alpha, beta, k, rho).m


@dataclass
class SparseVectorState:
    """AboveThreshold where N (below threshold) is the costly outcome.

    Each epoch runs until its first N; the threshold noise is redrawn at the
    start of every epoch. Scales of zero give a noiseless state machine.
    """

    ell: int
    threshold_scale: float
    query_scale: float
    rng: Optional[np.random.Generator] = None
    no_count: int = 0
    halted: bool = False
    threshold_noise: Optional[float] = None
    epochs: int = 0

    def _laplace(self, scale: float) -> float:
        if scale == 0:
            return 0.0
        return float(self.rng.laplace(0.0, scale))

    def start_epoch_if_needed(self) -> bool:
        if self.threshold_noise is None:
            self.threshold_noise = self._laplace(self.threshold_scale)
            self.epochs += 1
            return True
        return False


def above_threshold_answer(state: SparseVectorState, value: float, u: float, slack: float = 0.0,
                           on_epoch: Optional[Callable[[], None]] = None) -> Verdict:
    """Compare the empirical mean ``value`` with threshold ``u``.

    The noisy comparison point sits at ``u - slack/2`` so that values above u
    get Y and values at most ``u - slack`` get N, up to noise.
    """
    if state.halted:
        return Verdict.BOT
    if state.start_epoch_if_needed() and on_epoch is not None:
        on_epoch()
    noisy = value + state._laplace(state.query_scale)
    if noisy > u - slack / 2 + state.threshold_noise:
        return Verdict.YES
    state.no_count += 1
    state.threshold_noise = None
    if state.no_count >= state.ell:
        state.halted = True
    return Verdict.NO


def combine(first: Verdict, second: Verdict) -> Verdict:
    if first is Verdict.BOT or second is Verdict.BOT:
        return Verdict.BOT
    if first is Verdict.YES and second is Verdict.YES:
        return Verdict.YES
    return Verdict.NO


Phi = Union[EstimatorQuery, Callable[[np.ndarray], np.ndarray]]


class VerifySession:
    """Holdout answering (phi, v) queries with Y, N or bot."""

    def __init__(self, samples, config: VerifyConfig, calibration: Optional[SVCalibration] = None):
        self.config = config
        self.calibration = calibration or sv_calibration(config.ell, config.alpha, config.beta, config.k, config.rho)
        need = self.calibration.m * config.t
        n = int(np.asarray(samples).shape[0])
        if n < need:
            raise InsufficientDataError(f"holdout needs n >= {need} samples, got {n}", required=need)
        self.data = block_partition(samples, config.t)
        self.rng = np.random.default_rng(np.random.SeedSequence(config.seed))
        self.state = SparseVectorState(
            ell=config.ell,
            threshold_scale=2.0 / (self.calibration.epoch_epsilon * self.data.m),
            query_scale=4.0 / (self.calibration.epoch_epsilon * self.data.m),
            rng=self.rng,
        )
        self.ledger = PrivacyLedger(delta_slack=self.calibration.delta, profile="sparse-vector")
        self.threshold = config.rho - config.alpha / 3
        self.slack = config.alpha / 3
        self.answers: list = []

    def _charge(self) -> None:
        self.ledger.charge(self.calibration.epoch_epsilon, 0.0)

    def block_values(self, phi: Phi) -> np.ndarray:
        blocks = self.data.blocks
        if isinstance(phi, EstimatorQuery):
            return phi.evaluate(blocks)
        return np.asarray(phi(blocks), dtype=float).reshape(-1)

    def verify(self, phi: Phi, v: float) -> Verdict:
        if len(self.answers) >= self.config.k or self.state.halted:
            out = Verdict.BOT
        else:
            vals = self.block_values(phi)
            lower = above_threshold_answer(self.state, float(np.mean(vals <= v)), self.threshold, self.slack, self._charge)
            if lower is Verdict.NO:
                # Already N; skipping the second tail keeps one budget unit per N.
                out = lower
            else:
                upper = above_threshold_answer(self.state, float(np.mean(vals >= v)), self.threshold, self.slack, self._charge)
                out = combine(lower, upper)
        self.answers.append({"index": len(self.answers), "v": float(v), "answer": out.value})
        return out


def verify(session: VerifySession, phi: Phi, v: float) -> Verdict:
    return session.verify(phi, v)
