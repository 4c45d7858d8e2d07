"""Interactive sessions answering estimator queries with private medians over data blocks."""

from __future__ import annotations

import hashlib
import json
import math
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .accountant import (
    ConstantProfile,
    PrivacyLedger,
    calibrate_interior_point,
    calibrate_session,
)
from .core import EstimatorQuery, FiniteRange, block_partition
from .errors import (
    BudgetExceeded,
    DomainError,
    InsufficientDataError,
    ParameterError,
    RangeTooLargeError,
    SchemaError,
)
from .median import em_median, interior_point

TRANSCRIPT_SCHEMA_VERSION = 1
VARIANTS = ("iqr-median", "interior-point")
MAD_BOUND = 5.0


@dataclass(frozen=True)
class SessionConfig:
    t: int
    k: int
    r: int
    beta: float
    profile: str = "paper"
    variant: str = "iqr-median"
    seed: int = 0
    profile_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.t < 1 or self.k < 1 or self.r < 1:
            raise ParameterError("t, k and r must be at least 1")
        if not 0 < self.beta < 1:
            raise ParameterError(f"beta must lie in (0, 1), got {self.beta}")
        if self.variant not in VARIANTS:
            raise ParameterError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.seed < 0:
            raise ParameterError("seed must be nonnegative")

    def constants(self) -> ConstantProfile:
        return ConstantProfile.by_name(self.profile, **self.profile_options)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SessionConfig":
        return cls(**d)


def calibration_for(config: SessionConfig):
    if config.variant == "interior-point":
        return calibrate_interior_point(config.k, config.r, config.beta)
    return calibrate_session(config.k, config.r, config.beta, config.constants())


def required_n(config: SessionConfig) -> int:
    """Smallest dataset size a session with this config accepts."""
    return calibration_for(config).m * config.t


def seed_stamp(seed: int, index: int) -> str:
    state = np.random.SeedSequence(entropy=seed, spawn_key=(index,)).generate_state(2, np.uint64)
    return "".join(f"{int(w):016x}" for w in state)


def query_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


@dataclass(frozen=True)
class TranscriptEntry:
    index: int
    query: dict
    range: dict
    answer: Optional[float]
    epsilon: float
    delta: float
    seed_stamp: str

    def to_dict(self) -> dict:
        return asdict(self)


def _digest(entries: list[dict]) -> str:
    h = hashlib.sha256()
    for e in entries:
        h.update(json.dumps(e, sort_keys=True).encode())
    return h.hexdigest()


@dataclass
class Transcript:
    config: dict
    entries: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def answers(self) -> list:
        return [e.answer for e in self.entries]

    def to_lines(self) -> list[str]:
        rows = [e.to_dict() for e in self.entries]
        header = {"type": "header", "schema_version": TRANSCRIPT_SCHEMA_VERSION, "config": self.config, "meta": self.meta}
        footer = {"type": "footer", "entries": len(rows), "digest": _digest(rows)}
        return [json.dumps(header, sort_keys=True)] + [
            json.dumps({"type": "entry", **r}, sort_keys=True) for r in rows
        ] + [json.dumps(footer, sort_keys=True)]

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text("\n".join(self.to_lines()) + "\n")

    @classmethod
    def from_lines(cls, lines: list[str]) -> "Transcript":
        try:
            rows = [json.loads(line) for line in lines if line.strip()]
        except json.JSONDecodeError as exc:
            raise SchemaError(f"transcript is not valid JSON lines: {exc}") from exc
        if len(rows) < 2 or rows[0].get("type") != "header" or rows[-1].get("type") != "footer":
            raise SchemaError("transcript must start with a header and end with a footer")
        header, footer, body = rows[0], rows[-1], rows[1:-1]
        if header.get("schema_version") != TRANSCRIPT_SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema_version {header.get('schema_version')!r}")
        entries = []
        for row in body:
            if row.pop("type", None) != "entry":
                raise SchemaError("unexpected record between header and footer")
            try:
                entries.append(TranscriptEntry(**row))
            except TypeError as exc:
                raise SchemaError(f"malformed entry: {exc}") from exc
        plain = [e.to_dict() for e in entries]
        if footer.get("entries") != len(entries) or footer.get("digest") != _digest(plain):
            raise SchemaError("footer does not match entries (truncated or edited transcript)")
        return cls(config=header["config"], entries=entries, meta=header.get("meta", {}))

    @classmethod
    def read(cls, path: Union[str, Path]) -> "Transcript":
        return cls.from_lines(Path(path).read_text().splitlines())


class Session:
    """One interactive session over a fixed dataset.

    Answers are ``None`` once the query budget is spent.
    """

    def __init__(self, samples, config: SessionConfig):
        self.config = config
        cal = calibration_for(config)
        n = int(np.asarray(samples).shape[0]) if np.ndim(samples) else 0
        need = cal.m * config.t
        if n < need:
            raise InsufficientDataError(
                f"session needs n >= {need} samples (m={cal.m} blocks of t={config.t}), got {n}",
                required=need,
            )
        self.data = block_partition(samples, config.t)
        self.m = self.data.m
        if config.variant == "interior-point":
            self.epsilon_tilde = 4 * math.log(2 * config.k * config.r / config.beta) / self.m
            slack = cal.delta
            target = (math.log(2), slack)
            self.guarantee_void = False
        else:
            profile = config.constants()
            self.epsilon_tilde = profile.eps_scale * math.log(config.k * config.r / config.beta) / self.m
            slack = cal.delta_slack
            target = (profile.target_epsilon, slack)
            self.guarantee_void = cal.guarantee_void
        self.calibration = cal
        self.ledger = PrivacyLedger(delta_slack=slack, target=target, profile=config.profile)
        meta = {"m": self.m, "n": self.data.n, "discarded": self.data.discarded, "epsilon_tilde": self.epsilon_tilde}
        if self.guarantee_void:
            meta["status"] = "guarantee_void"
        self.transcript = Transcript(config=config.to_dict(), meta=meta)
        self._lock = threading.Lock()

    @property
    def queries_answered(self) -> int:
        return len(self.transcript)

    @property
    def exhausted(self) -> bool:
        return self.queries_answered >= self.config.k

    def block_values(self, query: EstimatorQuery) -> np.ndarray:
        if query.block_size != self.config.t:
            raise DomainError(f"query block size {query.block_size} differs from session t={self.config.t}")
        return query.evaluate(self.data.blocks)

    def answer(self, query: EstimatorQuery) -> Optional[float]:
        with self._lock:
            if query.range.size() > self.config.r:
                raise RangeTooLargeError(f"range of size {query.range.size()} exceeds r={self.config.r}")
            if self.exhausted:
                return None
            try:
                self.ledger.charge(self.epsilon_tilde, 0.0)
            except BudgetExceeded:
                return None
            j = self.queries_answered
            values = self.block_values(query)
            rng = query_rng(self.config.seed, j)
            if self.config.variant == "interior-point":
                v = interior_point(values, query.range, self.epsilon_tilde, rng)
            else:
                v = em_median(values, query.range, self.epsilon_tilde, rng)
            self.transcript.entries.append(TranscriptEntry(
                index=j, query=dict(query.descriptor), range=query.range.descriptor(), answer=v,
                epsilon=self.epsilon_tilde, delta=0.0, seed_stamp=seed_stamp(self.config.seed, j),
            ))
            return v

    def answer_mad(self, query: EstimatorQuery, zeta: float) -> Optional[float]:
        return self.answer(mad_query(query, zeta))

    @property
    def rho(self) -> float:
        return interior_point_rho(self.config, self.data.n)


def open_session(samples, config: SessionConfig) -> Session:
    return Session(samples, config)


def answer(session: Session, query: EstimatorQuery) -> Optional[float]:
    return session.answer(query)


def mad_grid(zeta: float) -> FiniteRange:
    """Multiples of zeta in [-5, 5]."""
    if not zeta > 0:
        raise ParameterError(f"zeta must be positive, got {zeta}")
    return FiniteRange.symmetric_multiples(MAD_BOUND, zeta)


def mad_query(query: EstimatorQuery, zeta: float) -> EstimatorQuery:
    """Re-target ``query`` onto the [-5, 5] grid of step zeta."""
    desc = dict(query.descriptor)
    desc["mad_zeta"] = zeta
    return EstimatorQuery(fn=query.fn, range=mad_grid(zeta), block_size=query.block_size,
                          batched=query.batched, descriptor=desc)


def answer_mad(session: Session, query: EstimatorQuery, zeta: float) -> Optional[float]:
    return session.answer_mad(query, zeta)


def interior_point_rho(config: SessionConfig, n: int) -> float:
    """Quantile level beta t / (4 k n) guaranteed by the interior-point variant."""
    if n < config.t:
        raise ParameterError("n must be at least t")
    return config.beta * config.t / (4 * config.k * n)


QueryFactory = Callable[[dict, FiniteRange], EstimatorQuery]


def replay(transcript: Transcript, samples, query_factory: QueryFactory, seed: Optional[int] = None) -> Transcript:
    """Re-run the recorded query sequence against ``samples``.

    ``query_factory`` rebuilds each query from its descriptor and range.
    """
    cfg = dict(transcript.config)
    if seed is not None:
        cfg["seed"] = seed
    session = open_session(samples, SessionConfig.from_dict(cfg))
    for e in transcript.entries:
        query = query_factory(e.query, FiniteRange.from_descriptor(e.range))
        session.answer(query)
    return session.transcript


def diff_transcripts(a: Transcript, b: Transcript) -> list[str]:
    out = []
    if len(a) != len(b):
        out.append(f"length {len(a)} != {len(b)}")
    for x, y in zip(a.entries, b.entries):
        for key in ("answer", "epsilon", "delta", "seed_stamp", "query", "range"):
            if getattr(x, key) != getattr(y, key):
                out.append(f"entry {x.index}: {key} {getattr(x, key)!r} != {getattr(y, key)!r}")
    return out
