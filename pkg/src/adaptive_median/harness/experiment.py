"""Seeded experiment orchestration and reports."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from itertools import repeat
from pathlib import Path
from typing import Optional, Union

import jsonschema
import numpy as np

from ..core import FiniteRange
from ..engine import SessionConfig, open_session, required_n
from ..errors import ParameterError, SchemaError
from . import adversaries as adv_mod
from . import distributions, queries
from .audit import clopper_pearson
from .baselines import make_baseline
from .oracle import GroundTruthOracle

REPORT_SCHEMA_VERSION = 1
WORKERS_ENV = "ADAPTIVE_MEDIAN_WORKERS"
BASELINES = ("naive-empirical", "data-splitting", "gaussian-noise")


def load_schema() -> dict:
    text = resources.files("adaptive_median").joinpath("specs/experiment.schema.json").read_text()
    return json.loads(text)


def load_spec(path: Union[str, Path]) -> dict:
    try:
        spec = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise SchemaError(f"spec file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"spec is not valid JSON: {exc}") from exc
    validate_spec(spec)
    return spec


def bundled_spec(name: str) -> dict:
    text = resources.files("adaptive_median").joinpath(f"specs/{name}").read_text()
    spec = json.loads(text)
    validate_spec(spec)
    return spec


def validate_spec(spec: dict) -> None:
    """Schema check plus the cross-field checks a schema cannot express."""
    try:
        jsonschema.validate(spec, load_schema())
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"spec violates schema at {list(exc.absolute_path)}: {exc.message}") from exc
    mech = spec["mechanism"]
    adv = spec["adversary"]
    distributions.from_descriptor(spec["distribution"])
    if adv["kind"] == "overfit_boost":
        if spec["distribution"]["kind"] != "bernoulli_product":
            raise ParameterError("overfit_boost needs bernoulli_product data")
        if adv.get("t", 16) != mech["t"]:
            raise ParameterError("adversary t differs from mechanism t")
        if mech["kind"] == "engine" and mech["k"] < adv.get("features", 49) + 1:
            raise ParameterError("engine k is smaller than the number of adversary queries")
    if mech["kind"] in BASELINES and "n" not in mech:
        raise ParameterError(f"baseline {mech['kind']} needs n")


def _session_config(mech: dict, seed: int) -> SessionConfig:
    return SessionConfig(
        t=mech["t"], k=mech["k"], r=mech["r"], beta=mech["beta"],
        profile=mech.get("profile", "paper"), variant=mech.get("variant", "iqr-median"),
        seed=seed, profile_options=mech.get("profile_options", {}),
    )


def _adversary(spec: dict):
    adv = spec["adversary"]
    if adv["kind"] == "fixed":
        q = adv["query"]
        range_ = FiniteRange.from_descriptor(q["range"])
        return adv_mod.FixedQuery(queries.from_descriptor(q, range_), repeat=adv.get("repeat", 1))
    return adv_mod.from_descriptor(adv)


_ORACLES: dict = {}


def _oracle(spec: dict) -> GroundTruthOracle:
    key = json.dumps(spec["distribution"], sort_keys=True)
    if key not in _ORACLES:
        _ORACLES[key] = GroundTruthOracle(distributions.from_descriptor(spec["distribution"]), seed=spec["seed"])
    return _ORACLES[key]


def dataset_descriptor(spec: dict, index: int, n: int) -> dict:
    """Enough to regenerate a trial's dataset: the data stream is child 0 of (seed, index)."""
    return {"distribution": spec["distribution"], "n": n, "entropy": spec["seed"], "spawn_key": [index, 0]}


def regenerate_dataset(desc: dict) -> np.ndarray:
    ss = np.random.SeedSequence(desc["entropy"], spawn_key=tuple(desc["spawn_key"]))
    return distributions.from_descriptor(desc["distribution"]).sample(desc["n"], np.random.default_rng(ss))


def run_trial(spec: dict, index: int, transcript_dir: Optional[str] = None) -> dict:
    """One independent trial; all randomness derives from (spec seed, index)."""
    ss = np.random.SeedSequence(spec["seed"], spawn_key=(index,))
    data_ss, mech_ss, adv_ss = ss.spawn(3)
    dist = distributions.from_descriptor(spec["distribution"])
    mech = spec["mechanism"]
    a_lo, a_hi = spec.get("quantiles", [0.25, 0.75])
    oracle = _oracle(spec)
    zeta = mech.get("zeta")

    if mech["kind"] == "engine":
        config = _session_config(mech, int(mech_ss.generate_state(1, np.uint64)[0] >> np.uint64(1)))
        n = mech.get("n", required_n(config))
        session = open_session(dist.sample(n, np.random.default_rng(data_ss)), config)
        session.transcript.meta["dataset"] = dataset_descriptor(spec, index, n)
        answer = (lambda q: session.answer_mad(q, zeta)) if zeta else session.answer
        blocks = session.m
    else:
        base = make_baseline(mech["kind"], dist.sample(mech["n"], np.random.default_rng(data_ss)), mech["t"],
                             rng=np.random.default_rng(mech_ss), chunks=mech.get("chunks", 1),
                             sigma=mech.get("sigma", 0.0))
        session = None
        answer = base.answer
        blocks = base.blocks_used

    adversary = _adversary(spec)
    adversary.reset(np.random.default_rng(adv_ss))
    asked = answered = bots = 0
    violation = False
    mad_violation = False
    max_dev = 0.0
    final = {}
    while True:
        q = adversary.next_query()
        if q is None:
            break
        a = answer(q)
        adversary.observe(a)
        asked += 1
        law = oracle.law(q)
        mean, sd = law.mean(), law.sd()
        if a is None:
            bots += 1
            final = {"final_answer": None, "final_deviation": None, "final_z": None}
            continue
        answered += 1
        iqr = oracle.iqr(q, a_lo, a_hi)
        inside = iqr.contains(a)
        violation |= not inside
        dev = a - mean
        max_dev = max(max_dev, abs(dev))
        if zeta:
            mad_violation |= abs(dev) > 4 * law.mad() + zeta
        se = sd / math.sqrt(blocks) if sd > 0 else 0.0
        z = dev / se if se > 0 else (0.0 if dev == 0 else math.copysign(math.inf, dev))
        final = {"final_answer": a, "final_deviation": dev, "final_z": z}

    row = {
        "trial": index,
        "queries": asked,
        "answered": answered,
        "bots": bots,
        "any_violation": bool(violation),
        "final_exceeds_3se": bool(final.get("final_z") is not None and final["final_z"] >= 3),
        "max_abs_deviation": max_dev,
        **{k: final.get(k) for k in ("final_answer", "final_deviation", "final_z")},
    }
    if zeta:
        row["mad_violation"] = bool(mad_violation)
    if session is not None:
        row["epsilon_hat"] = session.ledger.epsilon_hat
        row["guarantee_void"] = session.guarantee_void
        if transcript_dir is not None:
            Path(transcript_dir).mkdir(parents=True, exist_ok=True)
            session.transcript.write(Path(transcript_dir) / f"trial-{index:05d}.jsonl")
    return row


def resolve_workers(workers: Optional[int]) -> int:
    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        workers = int(env) if env else 1
    if workers < 1:
        raise ParameterError("workers must be at least 1")
    return workers


RATE_METRICS = {
    "joint_violation_rate": "any_violation",
    "final_exceeds_3se_rate": "final_exceeds_3se",
    "mad_violation_rate": "mad_violation",
}


@dataclass
class ExperimentReport:
    spec: dict
    rows: list
    metrics: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    @property
    def failed(self) -> list:
        return [a for a in self.assertions if not a["passed"]]

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "name": self.spec.get("name"),
            "profile": self.spec["mechanism"].get("profile", "paper") if self.spec["mechanism"]["kind"] == "engine" else None,
            "spec": self.spec,
            "metrics": self.metrics,
            "assertions": self.assertions,
            "passed": self.passed,
            "trials": self.rows,
        }

    def write(self, out: Union[str, Path]) -> tuple[Path, Path]:
        out = Path(out)
        json_path = out if out.suffix == ".json" else out.with_suffix(".json")
        csv_path = json_path.with_suffix(".csv")
        json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        fields = sorted({k for r in self.rows for k in r}, key=lambda k: (k != "trial", k))
        with csv_path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            w.writerows(self.rows)
        return json_path, csv_path


def _metrics(rows: list) -> dict:
    n = len(rows)
    out = {"trials": n}
    for name, key in RATE_METRICS.items():
        vals = [r[key] for r in rows if key in r]
        if not vals:
            continue
        c = int(sum(vals))
        lo, hi = clopper_pearson(c, len(vals), 0.99)
        out[name] = {"count": c, "trials": len(vals), "rate": c / len(vals), "ci99": [lo, hi]}
    devs = [r["final_deviation"] for r in rows if r.get("final_deviation") is not None]
    if devs:
        out["mean_final_deviation"] = float(np.mean(devs))
    out["bots"] = int(sum(r["bots"] for r in rows))
    return out


def _check(assertion: dict, metrics: dict) -> dict:
    m = metrics.get(assertion["metric"])
    res = dict(assertion)
    if m is None:
        res.update(observed=None, threshold=None, passed=False, reason="metric not produced")
        return res
    p = assertion["value"]
    n = m["trials"]
    se = math.sqrt(p * (1 - p) / n) if n else 0.0
    slack = assertion.get("slack_se", 0) * se
    if assertion["op"] == "<=":
        threshold = p + slack
        ok = m["rate"] <= threshold
    else:
        threshold = p - slack
        ok = m["rate"] >= threshold
    res.update(observed=m["rate"], threshold=threshold, passed=bool(ok))
    return res


def run_experiment(spec: dict, workers: Optional[int] = None, trials: Optional[int] = None,
                   seed: Optional[int] = None, profile: Optional[str] = None,
                   transcript_dir: Optional[Union[str, Path]] = None) -> ExperimentReport:
    """Validate ``spec``, run its trials and evaluate its assertions."""
    spec = json.loads(json.dumps(spec))
    if trials is not None:
        spec["trials"] = int(trials)
    if seed is not None:
        spec["seed"] = int(seed)
    if profile is not None and spec["mechanism"]["kind"] == "engine":
        spec["mechanism"]["profile"] = profile
    validate_spec(spec)
    if spec["mechanism"]["kind"] == "engine":
        _session_config(spec["mechanism"], 0)
    workers = resolve_workers(workers)
    n = spec["trials"]
    tdir = None if transcript_dir is None else str(transcript_dir)
    if workers == 1 or n <= 1:
        rows = [run_trial(spec, i, tdir) for i in range(n)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_trial, repeat(spec), range(n), repeat(tdir),
                                 chunksize=max(1, n // (4 * workers))))
    metrics = _metrics(rows)
    checks = [_check(a, metrics) for a in spec.get("assertions", [])]
    return ExperimentReport(spec=spec, rows=rows, metrics=metrics, assertions=checks)
