"""Privacy budget arithmetic: advanced composition, session calibration, and a ledger."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Iterable, Optional, Sequence

from .errors import BudgetExceeded, ParameterError

TARGET_EPSILON = 1 / 20


def _check_slack(delta_slack: float) -> None:
    if not 0 < delta_slack < 1:
        raise ParameterError(f"delta_slack must lie in (0, 1), got {delta_slack}")


def compose_advanced(charges: Iterable[Sequence[float]], delta_slack: float) -> tuple[float, float]:
    """(eps_hat, delta_hat) for adaptively composing (eps_j, delta_j) mechanisms.

    eps_hat = sum(eps_j^2)/2 + sqrt(2 ln(1/delta') sum(eps_j^2)); delta_hat = delta' + sum(delta_j).
    """
    _check_slack(delta_slack)
    sq = 0.0
    dsum = 0.0
    for eps, delta in charges:
        if not (eps >= 0 and delta >= 0 and math.isfinite(eps) and math.isfinite(delta)):
            raise ParameterError(f"charges must be finite and nonnegative, got ({eps}, {delta})")
        sq += eps * eps
        dsum += delta
    eps_hat = 0.5 * sq + math.sqrt(2.0 * math.log(1.0 / delta_slack) * sq)
    return eps_hat, delta_slack + dsum


def compose_uniform(k: int, epsilon: float, delta_slack: float) -> float:
    """eps_hat for k identical pure charges, without building the list."""
    _check_slack(delta_slack)
    sq = k * epsilon * epsilon
    return 0.5 * sq + math.sqrt(2.0 * math.log(1.0 / delta_slack) * sq)


def invert_uniform(k: int, target_epsilon: float, delta_slack: float, tol: float = 1e-15) -> float:
    """Largest per-charge epsilon whose k-fold composition stays within ``target_epsilon``.

    Bisection on the monotone map eps -> compose_uniform(k, eps, delta').
    """
    if k < 1 or not target_epsilon > 0:
        raise ParameterError("need k >= 1 and target_epsilon > 0")
    lo, hi = 0.0, max(1.0, target_epsilon)
    while compose_uniform(k, hi, delta_slack) <= target_epsilon:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if compose_uniform(k, mid, delta_slack) <= target_epsilon:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    return lo


@dataclass(frozen=True)
class ConstantProfile:
    """Constants used by session calibration.

    ``paper`` uses the closed-form constants. ``aggressive`` picks the
    per-query epsilon by inverting the composition bound for the target
    (epsilon*, delta*) and sizes m from the median's accuracy requirement.
    """

    name: str = "paper"
    m_scale: float = 640.0
    m_floor_scale: float = 2560.0
    eps_scale: float = 16.0
    delta_divisor: float = 256.0
    target_epsilon: float = TARGET_EPSILON
    target_delta: Optional[float] = None

    @classmethod
    def paper(cls) -> "ConstantProfile":
        return cls()

    @classmethod
    def aggressive(cls, target_epsilon: float = TARGET_EPSILON, target_delta: Optional[float] = None,
                   **overrides) -> "ConstantProfile":
        return cls(name="aggressive", target_epsilon=target_epsilon, target_delta=target_delta, **overrides)

    @classmethod
    def by_name(cls, name: str, **kwargs) -> "ConstantProfile":
        if name == "paper":
            if kwargs:
                raise ParameterError("the paper profile takes no overrides")
            return cls.paper()
        if name == "aggressive":
            return cls.aggressive(**kwargs)
        raise ParameterError(f"unknown profile {name!r}")

    def slack(self, beta: float) -> float:
        return self.target_delta if self.target_delta is not None else beta / self.delta_divisor

    def guarantee_void(self, beta: float) -> bool:
        """True when the constants fall short of what the generalization argument needs."""
        return (
            self.target_epsilon > TARGET_EPSILON
            or self.slack(beta) > beta / 256
            or self.m_floor_scale < 2560
            or self.eps_scale < 16
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SessionCalibration:
    m: int
    epsilon_tilde: float
    delta_slack: float
    epsilon_hat: float
    profile: str
    guarantee_void: bool = False

    def __iter__(self):
        return iter((self.m, self.epsilon_tilde))


def calibrate_session(k: int, r: int, beta: float, profile: Optional[ConstantProfile] = None) -> SessionCalibration:
    """Block count m and per-query epsilon for a k-query session over ranges of size <= r.

    Unpacks as ``(m, epsilon_tilde)``. The composed epsilon is checked against
    the profile's target on every call.
    """
    if k < 1 or r < 1:
        raise ParameterError("need k >= 1 and r >= 1")
    if not 0 < beta < 1:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}")
    profile = profile or ConstantProfile.paper()
    log_kr = math.log(k * r / beta)
    floor = profile.m_floor_scale * math.log(2 * k / beta)
    slack = profile.slack(beta)
    if profile.name == "paper":
        main = profile.m_scale * math.sqrt(max(k, 16) * math.log(256 / beta)) * log_kr
        m = math.ceil(max(main, floor))
        eps = profile.eps_scale * log_kr / m
    else:
        eps_cap = invert_uniform(k, profile.target_epsilon, slack)
        m = math.ceil(max(profile.eps_scale * log_kr / eps_cap, floor))
        eps = profile.eps_scale * log_kr / m
    eps_hat = compose_uniform(k, eps, slack)
    if eps_hat > profile.target_epsilon * (1 + 1e-12):
        raise ParameterError(f"calibration self-check failed: composed epsilon {eps_hat} > {profile.target_epsilon}")
    return SessionCalibration(
        m=m, epsilon_tilde=eps, delta_slack=slack, epsilon_hat=eps_hat,
        profile=profile.name, guarantee_void=profile.guarantee_void(beta),
    )


@dataclass(frozen=True)
class InteriorPointCalibration:
    m: int
    epsilon_tilde: float
    delta: float
    epsilon_hat: float

    def __iter__(self):
        return iter((self.m, self.epsilon_tilde))


def calibrate_interior_point(k: int, r: int, beta: float) -> InteriorPointCalibration:
    """m = 8 ln(2kr/beta) sqrt(2k ln(1/delta)) with delta = beta/(10km), eps = 4 ln(2kr/beta)/m.

    The circular dependence on m is resolved by fixed-point iteration; the
    composed epsilon is checked to be at most ln 2.
    """
    if k < 1 or r < 1 or not 0 < beta < 1:
        raise ParameterError("need k, r >= 1 and beta in (0, 1)")
    L = math.log(2 * k * r / beta)
    m = math.ceil(8 * L * math.sqrt(2 * k * math.log(10 * k / beta)))
    for _ in range(100):
        delta = beta / (10 * k * m)
        nxt = math.ceil(8 * L * math.sqrt(2 * k * math.log(1 / delta)))
        if nxt <= m:
            break
        m = nxt
    delta = beta / (10 * k * m)
    eps = 4 * L / m
    eps_hat = compose_uniform(k, eps, delta)
    if eps_hat > math.log(2):
        raise ParameterError(f"interior-point self-check failed: {eps_hat} > ln 2")
    return InteriorPointCalibration(m=m, epsilon_tilde=eps, delta=delta, epsilon_hat=eps_hat)


@dataclass
class PrivacyLedger:
    """Ordered record of privacy charges with an optional session budget."""

    delta_slack: float
    target: Optional[tuple[float, float]] = None
    profile: str = "paper"
    charges: list = field(default_factory=list)

    def __post_init__(self):
        _check_slack(self.delta_slack)

    def composed(self, extra: Sequence[tuple[float, float]] = ()) -> tuple[float, float]:
        return compose_advanced(list(self.charges) + list(extra), self.delta_slack)

    @property
    def epsilon_hat(self) -> float:
        return self.composed()[0]

    @property
    def delta_hat(self) -> float:
        return self.composed()[1]

    def would_exceed(self, epsilon: float, delta: float = 0.0) -> bool:
        if self.target is None:
            return False
        eps_hat, delta_hat = self.composed([(epsilon, delta)])
        eps_t, delta_t = self.target
        return eps_hat > eps_t * (1 + 1e-12) or delta_hat > delta_t * (1 + 1e-12)

    def charge(self, epsilon: float, delta: float = 0.0) -> "PrivacyLedger":
        if not (epsilon >= 0 and delta >= 0):
            raise ParameterError("charges must be nonnegative")
        if self.would_exceed(epsilon, delta):
            raise BudgetExceeded(f"charge ({epsilon}, {delta}) would exceed target {self.target}")
        self.charges.append((float(epsilon), float(delta)))
        return self

    def __len__(self) -> int:
        return len(self.charges)

    def to_json(self) -> dict:
        eps_hat, delta_hat = self.composed()
        return {
            "charges": [list(c) for c in self.charges],
            "epsilon_hat": eps_hat,
            "delta_hat": delta_hat,
            "delta_slack": self.delta_slack,
            "target": list(self.target) if self.target is not None else None,
            "profile": self.profile,
        }


def charge(ledger: PrivacyLedger, epsilon: float, delta: float = 0.0) -> PrivacyLedger:
    return ledger.charge(epsilon, delta)
