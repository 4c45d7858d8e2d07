"""Command-line front end.

Exit codes: 0 success, 1 assertion failure or nonempty replay diff,
2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

import numpy as np

from .accountant import ConstantProfile, calibrate_interior_point, calibrate_session
from .core import FiniteRange
from .engine import Transcript, diff_transcripts, replay
from .errors import DomainError, ParameterError, SchemaError
from .harness import queries
from .harness.audit import broken_median, constant_mechanism, dp_ratio_audit, em_audit, neighbour_families
from .harness.experiment import load_spec, regenerate_dataset, run_experiment
from .pmw import PMWConfig, pmw_required_m
from .verify import sv_calibration

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _probability(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="adaptive-median", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("calibrate", help="print required sample sizes")
    c.add_argument("--k", type=_positive_int, required=True)
    c.add_argument("--r", type=_positive_int, required=True)
    c.add_argument("--beta", type=_probability, required=True)
    c.add_argument("--t", type=_positive_int, required=True)
    c.add_argument("--rho", type=float)
    c.add_argument("--alpha", type=float)
    c.add_argument("--ell", type=_positive_int)
    c.add_argument("--universe-size", type=_positive_int, help="|Z| for the PMW row")
    c.add_argument("--pmw-alpha", type=_probability, default=0.125)
    c.add_argument("--profile", choices=("paper", "aggressive"), default="paper")

    r = sub.add_parser("run", help="run an experiment spec")
    r.add_argument("--spec", required=True)
    r.add_argument("--seed", type=_seed)
    r.add_argument("--out")
    r.add_argument("--profile", choices=("paper", "aggressive"))
    r.add_argument("--trials", type=int)
    r.add_argument("--workers", type=_positive_int)
    r.add_argument("--transcripts", help="directory for per-trial engine transcripts")

    a = sub.add_parser("audit", help="exact likelihood-ratio audit on small instances")
    a.add_argument("--m", type=_positive_int, required=True)
    a.add_argument("--range-size", type=_positive_int, required=True)
    a.add_argument("--epsilon", type=float, required=True)
    a.add_argument("--mechanism", choices=("em", "constant", "broken"), default="em")

    rp = sub.add_parser("replay", help="replay a transcript and diff the answers")
    rp.add_argument("--transcript", required=True)
    rp.add_argument("--dataset", help=".npy samples; defaults to the dataset recorded in the transcript")
    rp.add_argument("--seed", type=_seed)
    return p


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def cmd_calibrate(args) -> int:
    rows = []
    profile = ConstantProfile.by_name(args.profile)
    cal = calibrate_session(args.k, args.r, args.beta, profile)
    rows.append(("engine", cal.m, cal.m * args.t, cal.epsilon_tilde, cal.epsilon_hat))
    ip = calibrate_interior_point(args.k, args.r, args.beta)
    rows.append(("interior-point", ip.m, ip.m * args.t, ip.epsilon_tilde, ip.epsilon_hat))
    sv_args = (args.rho, args.alpha, args.ell)
    if any(x is not None for x in sv_args):
        if any(x is None for x in sv_args):
            raise ParameterError("verify row needs --rho, --alpha and --ell together")
        sv = sv_calibration(args.ell, args.alpha, args.beta, args.k, args.rho)
        rows.append(("verify", sv.m, sv.m * args.t, sv.epoch_epsilon, sv.epsilon))
    if args.universe_size is not None:
        cfg = PMWConfig(universe_size=args.universe_size, alpha=args.pmw_alpha, beta=args.beta, k=args.k)
        pm = pmw_required_m(cfg)
        rows.append(("pmw", pm.m, pm.m * args.t, pm.round_epsilon, cfg.target_epsilon))
    header = ("mechanism", "m", "n0", "epsilon_tilde", "epsilon_total")
    table = [header] + [tuple(_fmt(x) for x in row) for row in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    print(f"# k={args.k} r={args.r} beta={args.beta} t={args.t} profile={args.profile}")
    for row in table:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return EXIT_OK


def cmd_run(args) -> int:
    spec = load_spec(args.spec)
    report = run_experiment(spec, workers=args.workers, trials=args.trials, seed=args.seed,
                            profile=args.profile, transcript_dir=args.transcripts)
    if args.out:
        json_path, csv_path = report.write(args.out)
        print(f"wrote {json_path} and {csv_path}")
    for name, m in report.metrics.items():
        if isinstance(m, dict):
            lo, hi = m["ci99"]
            print(f"{name}: {m['count']}/{m['trials']} = {m['rate']:.4f} (99% CI {lo:.4f}..{hi:.4f})")
    for a in report.assertions:
        status = "PASS" if a["passed"] else "FAIL"
        observed = "n/a" if a["observed"] is None else f"{a['observed']:.4f}"
        threshold = "n/a" if a["threshold"] is None else f"{a['threshold']:.4f}"
        print(f"{status} {a.get('name', a['metric'])}: {a['metric']} {observed} {a['op']} {threshold}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_audit(args) -> int:
    range_ = FiniteRange(np.arange(args.range_size, dtype=float))
    if args.mechanism == "em":
        result = em_audit(args.m, range_, args.epsilon)
    else:
        mech = constant_mechanism(range_) if args.mechanism == "constant" else broken_median(range_)
        result = dp_ratio_audit(mech, neighbour_families(args.m, range_), args.epsilon)
    print(json.dumps(result.to_dict(), sort_keys=True))
    return EXIT_OK if result.passed else EXIT_FAIL


def cmd_replay(args) -> int:
    original = Transcript.read(args.transcript)
    if args.dataset:
        samples = np.load(args.dataset)
    else:
        desc = original.meta.get("dataset")
        if desc is None:
            raise SchemaError("transcript records no dataset; pass --dataset")
        samples = regenerate_dataset(desc)
    fresh = replay(original, samples, queries.from_descriptor, seed=args.seed)
    diff = diff_transcripts(original, fresh)
    for line in diff:
        print(line)
    if not diff:
        print("replay matches")
    return EXIT_FAIL if diff else EXIT_OK


COMMANDS = {"calibrate": cmd_calibrate, "run": cmd_run, "audit": cmd_audit, "replay": cmd_replay}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (SchemaError, ParameterError, DomainError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
