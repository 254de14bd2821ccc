"""Command-line entry point: ``sigmak <command> [flags]``.

Every run writes one JSON report with the fields ``schema_version``,
``command``, ``params``, ``seed``, ``mode``, ``started_utc``, ``runtime_ms``
and ``results``.  Only ``started_utc`` and ``runtime_ms`` vary between runs
with the same configuration.

Exit status: 0 clean, 1 violations or failures recorded, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from .cone import ConeSpec, SampleParams, sample_batch
from .errors import SigmaKError
from .exactcheck import IDENTITY_IDS, TrialPlan, identity_suite
from .scalar import ScalarMode
from .lemmas import theta_default
from .search import (DEFAULT_TOL, SCAN_LEMMAS, Objective, default_jobs, empirical_theta, refine_local, replay,
                     scan, threshold_sweep, witnesses_csv)

SCHEMA_VERSION = 1
REPORT_DIR_ENV = "SIGMAK_REPORT_DIR"
COMMANDS = ("identities", "lemmas", "scan", "threshold", "sample", "replay")
NOTES = [
    "theorem bound uses the proof-consistent normalization [kappa_i^2 A + sigma_k B + C - c D] / "
    "(kappa_i K (sigma^ii)^2 - sigma^ii); the printed prefactor 1/c_{k,K} alone overstates it by that divisor",
    "scan statistics are relative to the package's Gamma_k sampler; absence of violations is evidence, not proof",
]


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument types


def int_range(text: str) -> tuple[int, int]:
    """``5`` or ``3..8``."""
    lo, sep, hi = str(text).partition("..")
    try:
        return (int(lo), int(hi)) if sep else (int(lo), int(lo))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or a range a..b, got {text!r}") from None


def real_range(text: str) -> tuple[float, float]:
    """``1e3..1e6``."""
    lo, sep, hi = str(text).partition("..")
    try:
        return (float(lo), float(hi)) if sep else (float(lo), float(lo))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a range a..b, got {text!r}") from None


def real_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}") from None


def mode_type(text: str) -> ScalarMode:
    try:
        return ScalarMode.parse(text)
    except SigmaKError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def case_type(text: str):
    t = str(text).strip().upper()
    if t in ("ANY", ""):
        return None
    if t in ("I", "II"):
        return t
    raise argparse.ArgumentTypeError("case must be I, II or any")


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mode", type=mode_type, default=ScalarMode.parse("float64"),
                        help="float64, rational or extended[:bits]")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--jobs", type=int, default=default_jobs())
    common.add_argument("--config", help="key=value file; flags given on the command line win")
    common.add_argument("--output", "-o", help="report path ('-' for stdout)")

    p = argparse.ArgumentParser(prog="sigmak", description="Verify and stress-test sigma_k inequalities.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("identities", parents=[common], help="exact randomized identity suite")
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--n", type=int_range, default=(3, 8))
    s.add_argument("--denominator-bound", type=int, default=10_000)
    s.add_argument("--tuple-cap", type=int, default=50)
    s.add_argument("--ids", default=",".join(IDENTITY_IDS))

    s = sub.add_parser("lemmas", parents=[common], help="sampled lemma inequalities")
    s.add_argument("--n", type=int_range, default=(3, 6))
    s.add_argument("--k", type=int_range, default=None, help="default: every k in 1..n")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--kappa1", type=real_range, default=(1.0, 1e3))
    s.add_argument("--lemmas", default=",".join(SCAN_LEMMAS))
    s.add_argument("--tol", type=float, default=DEFAULT_TOL)

    s = sub.add_parser("scan", parents=[common], help="randomized counterexample scan")
    s.add_argument("--objective", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--kappa1", type=real_range, default=(1.0, 1e3))
    s.add_argument("--kratio", type=real_list, default=(1e3,))
    s.add_argument("--case", type=case_type, default=None)
    s.add_argument("--budget", type=int, default=10_000)
    s.add_argument("--tol", type=float, default=DEFAULT_TOL)
    s.add_argument("--negativity-bias", type=float, default=0.3)
    s.add_argument("--known-threshold", type=float, default=None)
    s.add_argument("--refine", type=int, default=0, help="refine the argmin with this many evaluations")
    s.add_argument("--csv", help="write the lowest witnesses as CSV")

    s = sub.add_parser("threshold", parents=[common], help="measure the kappa_1 threshold")
    s.add_argument("--objective", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--kratio", type=real_list, default=(1e3,))
    s.add_argument("--case", type=case_type, default=None)
    s.add_argument("--samples-per-rung", type=int, default=1000)
    s.add_argument("--verify-samples", type=int, default=0)
    s.add_argument("--octaves", type=float, default=1.0)
    s.add_argument("--lo", type=float, default=1.0)
    s.add_argument("--hi", type=float, default=1e8)
    s.add_argument("--tol", type=float, default=DEFAULT_TOL)

    s = sub.add_parser("sample", parents=[common], help="draw points of Gamma_k")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--count", type=int, default=10)
    s.add_argument("--kappa1", type=real_range, default=(1.0, 1e3))
    s.add_argument("--case", type=case_type, default=None)
    s.add_argument("--negativity-bias", type=float, default=0.3)

    s = sub.add_parser("replay", parents=[common], help="re-evaluate a witness in extended precision")
    s.add_argument("--witness", required=True, help="report.json#violations[0]")
    s.add_argument("--bits", type=int, default=None, help="default: the --mode bits, else 128")
    return p


def read_config(path: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        cfg = read_config(known.config)
        command = next((a for a in argv if a in COMMANDS), None)
        if command is None:
            parser.parse_args(argv)  # reports the missing command and exits 2
        subparser = parser._subparsers._group_actions[0].choices[command]
        dests = {a.dest for a in subparser._actions}
        unknown = sorted(set(cfg) - dests)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        for action in subparser._actions:
            if action.dest in cfg:
                action.required = False
        subparser.set_defaults(**cfg)
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# JSON helpers


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, ScalarMode):
        return str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if x is None or isinstance(x, (bool, int, str)):
        return x
    return str(x)


def _params(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("output", "config", "jobs")}


def _default_output(command: str) -> Path:
    return Path(os.environ.get(REPORT_DIR_ENV, ".")) / f"{command}.json"


# ---------------------------------------------------------------------------
# commands; each returns (results, failed)


def cmd_identities(args):
    ids = tuple(v.strip() for v in args.ids.split(",") if v.strip())
    plan = TrialPlan(args.trials, args.denominator_bound, args.n, args.seed, args.tuple_cap, ids)
    rep = identity_suite(plan, jobs=args.jobs)
    rep.pop("elapsed_s")
    idents = rep["identities"]
    rep["violations"] = [{"id": i, **r["first_failure"]} for i, r in idents.items() if not r["passed"]]
    return rep, not rep["all_passed"]


def cmd_lemmas(args):
    ids = [v.strip() for v in args.lemmas.split(",") if v.strip()]
    out = {}
    worst = math.inf
    violations = []
    for n in range(args.n[0], args.n[1] + 1):
        ks = range(1, n + 1) if args.k is None else range(args.k[0], min(args.k[1], n) + 1)
        for k in ks:
            spec = ConeSpec(n, k)
            for lemma in ids:
                key = f"{lemma}|n={n}|k={k}"
                try:
                    rep = scan(Objective("lemma", lemma=lemma, bits=_bits(args.mode)), spec, args.samples,
                               seed=args.seed, kappa1_range=args.kappa1, tol=args.tol, jobs=args.jobs, keep=3)
                except SigmaKError as exc:
                    out[key] = {"skipped": f"{type(exc).__name__}: {exc}"}
                    continue
                d = rep.to_dict()
                out[key] = {"min": d["min"], "violations_count": d["violations_count"],
                            "samples": d["samples"], "argmin": d["argmin"]}
                if lemma == "theta-2.7":
                    out[key]["theta_default"] = theta_default(n, k)
                    out[key]["theta_empirical"] = empirical_theta(spec, args.samples, args.seed, args.kappa1)
                worst = min(worst, rep.min_value)
                violations.extend(d["violations"])
    violations.sort(key=lambda w: w["value"])
    return {"lemmas": out, "min": worst, "violations": violations[:50],
            "violations_count": sum(v.get("violations_count", 0) for v in out.values())}, bool(violations)


def _bits(mode: ScalarMode) -> int:
    return mode.bits if mode.kind == "extended" else 128


def _objective(args) -> Objective:
    return Objective.parse(args.objective, ratios=tuple(args.kratio), case=args.case, bits=_bits(args.mode))


def cmd_scan(args):
    obj = _objective(args)
    spec = ConeSpec(args.n, args.k)
    rep = scan(obj, spec, args.budget, seed=args.seed, kappa1_range=args.kappa1, tol=args.tol, jobs=args.jobs,
               negativity_bias=args.negativity_bias, known_threshold=args.known_threshold)
    res = rep.to_dict()
    if args.refine and rep.argmin is not None:
        res["refined"] = refine_local(obj, spec, rep.argmin, iterations=args.refine)
    if args.csv:
        Path(args.csv).write_text(witnesses_csv(rep.witnesses, spec.n))
    return res, not rep.clean


def cmd_threshold(args):
    obj = _objective(args)
    res = threshold_sweep(obj, ConeSpec(args.n, args.k), samples_per_rung=args.samples_per_rung, seed=args.seed,
                          lo=args.lo, hi=args.hi, octaves=args.octaves, tol=args.tol,
                          verify_samples=args.verify_samples, jobs=args.jobs)
    failed = any(t["threshold"] is None for t in res["thresholds"])
    return res, failed


def cmd_sample(args):
    spec = ConeSpec(args.n, args.k)
    sp = SampleParams(args.kappa1, args.negativity_bias, args.seed)
    X, stats = sample_batch(spec, sp, args.count, np.random.default_rng(args.seed), case=args.case)
    mode = args.mode
    points = [[mode.fmt(mode.convert(float(v))) for v in row] for row in X]
    return {"points": points, "count": len(points), "accept_rate": stats["accepted"] / max(stats["drawn"], 1),
            "drawn": stats["drawn"]}, False


_SEG = re.compile(r"([^\[\]]*)((?:\[\d+\])*)$")


def resolve_pointer(doc, pointer: str):
    """Follow ``a/b[0]`` or ``a.b[0]`` into ``doc['results']`` (falling back to ``doc``)."""
    roots = [doc["results"], doc] if isinstance(doc, dict) and "results" in doc else [doc]
    segments = pointer.split("/") if "/" in pointer else pointer.split(".")
    for root in roots:
        node = root
        try:
            for seg in segments:
                m = _SEG.match(seg)
                if m is None:
                    raise KeyError(seg)
                name, idx = m.groups()
                if name:
                    node = node[name]
                for i in re.findall(r"\[(\d+)\]", idx):
                    node = node[int(i)]
            return node
        except (KeyError, IndexError, TypeError):
            continue
    raise UsageError(f"pointer {pointer!r} does not resolve")


def cmd_replay(args):
    path, _, pointer = args.witness.partition("#")
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read witness file: {exc}") from None
    witness = resolve_pointer(doc, pointer or "argmin")
    if not isinstance(witness, dict) or "kappa" not in witness:
        raise UsageError("the pointer does not reference a witness")
    bits = args.bits or _bits(args.mode)
    res = replay(witness, bits)
    return {"witness": witness, **res}, res["violates"]


HANDLERS = {"identities": cmd_identities, "lemmas": cmd_lemmas, "scan": cmd_scan, "threshold": cmd_threshold,
            "sample": cmd_sample, "replay": cmd_replay}


def run(args: argparse.Namespace) -> tuple[dict, int]:
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    results, failed = HANDLERS[args.command](args)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "params": _jsonable(_params(args)),
        "seed": args.seed,
        "mode": str(args.mode),
        "started_utc": started,
        "runtime_ms": round((time.perf_counter() - t0) * 1000),
        "results": _jsonable({**results, "notes": NOTES}),
    }
    return report, 1 if failed else 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        if args.jobs < 1:
            raise UsageError("--jobs must be positive")
        report, status = run(args)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0) and 2
    except (UsageError, SigmaKError) as exc:
        print(f"sigmak: error: {exc}", file=sys.stderr)
        return 2
    text = json.dumps(report, indent=2) + "\n"
    if args.output == "-":
        sys.stdout.write(text)
    else:
        out = Path(args.output) if args.output else _default_output(args.command)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        print(f"{args.command}: {'violations recorded' if status else 'clean'}; report written to {out}")
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
