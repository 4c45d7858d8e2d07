"""Synthetic data generators with descriptors the ground-truth oracle understands."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError

MAX_PACKED_BITS = 63


@dataclass(frozen=True)
class BernoulliProduct:
    """``features`` i.i.d. Bernoulli(p) bits plus an independent Bernoulli(p) label.

    Each sample is one uint64 with feature j at bit j and the label at bit
    ``features``.
    """

    features: int = 49
    p: float = 0.5

    def __post_init__(self):
        if not 1 <= self.features < MAX_PACKED_BITS:
            raise DomainError(f"features must lie in [1, {MAX_PACKED_BITS - 1}]")
        if not 0 <= self.p <= 1:
            raise DomainError("p must lie in [0, 1]")

    @property
    def label_bit(self) -> int:
        return self.features

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        bits = self.features + 1
        if self.p == 0.5:
            return rng.integers(0, 1 << bits, size=n, dtype=np.uint64)
        out = np.zeros(n, dtype=np.uint64)
        for j in range(bits):
            out |= (rng.random(n) < self.p).astype(np.uint64) << np.uint64(j)
        return out

    def descriptor(self) -> dict:
        return {"kind": "bernoulli_product", "features": self.features, "p": self.p}


@dataclass(frozen=True)
class Bernoulli:
    """Scalar 0/1 samples."""

    p: float

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise DomainError("p must lie in [0, 1]")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return (rng.random(n) < self.p).astype(np.int8)

    def descriptor(self) -> dict:
        return {"kind": "bernoulli", "p": self.p}


@dataclass(frozen=True)
class Categorical:
    """Samples from a finite set of real atoms."""

    atoms: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.atoms) != len(self.probs) or not self.atoms:
            raise DomainError("atoms and probs must be non-empty and of equal length")
        if abs(sum(self.probs) - 1) > 1e-9 or min(self.probs) < 0:
            raise DomainError("probs must be a probability vector")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(len(self.atoms), size=n, p=np.asarray(self.probs))
        return np.asarray(self.atoms, dtype=float)[idx]

    def descriptor(self) -> dict:
        return {"kind": "categorical", "atoms": list(self.atoms), "probs": list(self.probs)}


@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    sd: float = 1.0

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(self.mean, self.sd, size=n)

    def descriptor(self) -> dict:
        return {"kind": "gaussian", "mean": self.mean, "sd": self.sd}


def from_descriptor(desc: dict):
    kind = desc.get("kind")
    if kind == "bernoulli_product":
        return BernoulliProduct(features=int(desc.get("features", 49)), p=float(desc.get("p", 0.5)))
    if kind == "bernoulli":
        return Bernoulli(p=float(desc["p"]))
    if kind == "categorical":
        return Categorical(atoms=tuple(desc["atoms"]), probs=tuple(desc["probs"]))
    if kind == "gaussian":
        return Gaussian(mean=float(desc.get("mean", 0.0)), sd=float(desc.get("sd", 1.0)))
    raise DomainError(f"unknown distribution kind {kind!r}")
