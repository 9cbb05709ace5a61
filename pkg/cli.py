# cli.py
"""Command-line surface.

    python cli.py check  model.json
    python cli.py sample model.json --window "0;1;2" --replicas 1000 --seed 7
    python cli.py couple model.json --L 2 --replicas 1000 --seed 7
    python cli.py bounds model.json --L 1,2,4,8
    python cli.py mixing model.json --R 2,4,6 --replicas 1000 --seed 7
    python cli.py verify model.json --seed 7

Per-replica records are JSON lines, aggregates are CSV. With --out-dir they go to
<command>.jsonl and <command>.csv, otherwise to stdout. Logs go to stderr.
"""
from __future__ import annotations

import argparse
import io
import itertools
import logging
import sys
from enum import IntEnum
from pathlib import Path
from typing import Sequence

import numpy as np

import config
from analysis import (
    BoundRow,
    dbar_bounds,
    discrepancy_bound,
    mixing_check,
    rw_exponent,
    stopping_rows,
    summarize_discrepancy,
    write_bound_csv,
)
from assign import sample_coupled_many, sample_many
from errors import ConditionFailedError, ModelFileError, PerfectSamplingError
from interaction import InteractionModel, Status, beta_critical, check_conditions, delta, dobrushin_r, gamma
from lattice import Site
from model_spec import fingerprint, load_model
from replicas import fan_out
from sketch import dump_record_lines, run_backward, stop_statistics
from utils_serialization import dumps
from verify import run_suite

logger = logging.getLogger(__name__)


class ExitCode(IntEnum):
    OK = 0
    RUNTIME_ERROR = 1
    USAGE = 2
    CONDITIONS_FAILED = 3
    VERIFY_FAILED = 4


# ---------- Argument types ----------

def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def seed_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"seed must be non-negative, got {text!r}")
    return value


def int_list(text: str) -> list[int]:
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def site_list(text: str) -> list[Site]:
    """Sites separated by ';', coordinates by ','; e.g. "0,0;1,0"."""
    try:
        sites = [tuple(int(c) for c in part.split(",")) for part in text.split(";") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad site list {text!r}; use e.g. \"0,0;1,0\"") from None
    if not sites:
        raise argparse.ArgumentTypeError("empty site list")
    return sites


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perfsim", description="Perfect sampling of infinite-range Gibbs measures")
    parser.add_argument("--log-level", default=None, help="overrides PERFSIM_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sampling: bool):
        p.add_argument("model", help="model file (JSON)")
        if sampling:
            p.add_argument("--seed", type=seed_int, required=True)
            p.add_argument("--replicas", type=positive_int, default=1000)
            p.add_argument("--threads", type=positive_int, default=config.THREADS)
            p.add_argument("--max-events", type=positive_int, default=config.MAX_EVENTS)
        p.add_argument("--out-dir", type=Path, default=None)

    common(sub.add_parser("check", help="summability and termination conditions, γ, β_c"), sampling=False)

    p = sub.add_parser("sample", help="perfect samples on a window")
    common(p, sampling=True)
    p.add_argument("--window", type=site_list, required=True)
    p.add_argument("--records", action="store_true", help="also dump the sketch records")

    p = sub.add_parser("couple", help="coupled samples of μ and μ^[L]")
    common(p, sampling=True)
    p.add_argument("--L", type=positive_int, required=True)
    p.add_argument("--site", type=site_list, default=None)

    p = sub.add_parser("bounds", help="γ, δ(L), d̄ bounds and Dobrushin r")
    common(p, sampling=False)
    p.add_argument("--L", type=int_list, default=[1, 2, 4, 8])

    p = sub.add_parser("mixing", help="covariance decay against the random-walk envelope")
    common(p, sampling=True)
    p.add_argument("--R", type=int_list, default=[2, 4, 6])
    p.add_argument("--walk-replicas", type=positive_int, default=1_000_000)
    p.add_argument("--eps", type=float, default=1e-6)

    p = sub.add_parser("verify", help="full property suite")
    common(p, sampling=True)
    p.set_defaults(replicas=20_000)
    return parser


# ---------- Output ----------

def _emit(text: str, out_dir: Path | None, name: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text, encoding="utf-8")


def _jsonl(items) -> str:
    return "".join(dumps(x) + "\n" for x in items)


def _csv(rows: Sequence[BoundRow]) -> str:
    buf = io.StringIO()
    write_bound_csv(rows, buf)
    return buf.getvalue()


def _check_window(m: InteractionModel, sites: Sequence[Site]) -> None:
    for s in sites:
        if len(s) != m.dimension:
            raise ModelFileError("--window", f"site {s} is not in Z^{m.dimension}")


def _require_termination(m: InteractionModel) -> None:
    report = check_conditions(m)
    if report.termination.status is not Status.PASS:
        raise ConditionFailedError(
            f"termination condition {report.termination.status.value}: {report.termination.detail or 'γ <= 0'}"
        )


def _mean_ci(values: np.ndarray) -> tuple[float, float, float]:
    mean = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
    return mean, mean - 2 * se, mean + 2 * se


# ---------- Commands ----------

def cmd_check(args, spec, m: InteractionModel) -> ExitCode:
    report = check_conditions(m)
    out = {
        "model_hash": fingerprint(spec),
        "conditions": {
            "summability": report.summability,
            "weighted_moment": report.weighted_moment,
            "termination": report.termination,
            "dobrushin": report.dobrushin,
        },
        "gamma": report.gamma,
        "r": report.r,
    }
    if m.translation_invariant:
        out["beta_critical"] = beta_critical(m)
    _emit(dumps(out) + "\n", args.out_dir, "check.json")
    return ExitCode.OK if report.all_passed else ExitCode.CONDITIONS_FAILED


def cmd_sample(args, spec, m: InteractionModel) -> ExitCode:
    _check_window(m, args.window)
    _require_termination(m)
    results = sample_many(m, args.window, args.seed, args.replicas, args.threads, max_events=args.max_events)
    window = results[0].window

    rows = []
    spins = np.array([[r.spins[s] for s in window] for r in results], dtype=float)
    sites = list(window)
    for c, s in enumerate(sites):
        mean, lo, hi = _mean_ci(spins[:, c])
        rows.append(BoundRow("magnetization", dumps(s), mean, lo, hi))
    for (a, sa), (b, sb) in itertools.combinations(enumerate(sites), 2):
        mean, lo, hi = _mean_ci(spins[:, a] * spins[:, b])
        rows.append(BoundRow("pair_correlation", f"{dumps(sa)}-{dumps(sb)}", mean, lo, hi))

    # stopping bounds are stated for single-site starts
    records = fan_out(lambda r: run_backward(m, [sites[0]], args.seed, r, args.max_events), args.replicas, args.threads)
    rows.extend(stopping_rows(stop_statistics(records, (1.0, 2.0, 4.0)), gamma(m)))

    _emit(_jsonl(results), args.out_dir, "sample.jsonl")
    _emit(_csv(rows), args.out_dir, "sample.csv")
    if args.records:
        h = fingerprint(spec)
        full = fan_out(lambda r: run_backward(m, window, args.seed, r, args.max_events), args.replicas, args.threads)
        lines = [line for r, rec in enumerate(full) for line in dump_record_lines(rec, args.seed, r, h)]
        _emit("".join(line + "\n" for line in lines), args.out_dir, "records.jsonl")
    return ExitCode.OK


def cmd_couple(args, spec, m: InteractionModel) -> ExitCode:
    site = tuple(args.site[0]) if args.site else m.origin
    _check_window(m, [site])
    _require_termination(m)
    bound = discrepancy_bound(m, args.L)
    results = sample_coupled_many(m, args.L, [site], args.seed, args.replicas, args.threads, args.max_events)
    est = summarize_discrepancy(results, site, args.L, bound)
    _emit(_jsonl(results), args.out_dir, "couple.jsonl")
    _emit(_csv([est.row()]), args.out_dir, "couple.csv")
    return ExitCode.OK


def cmd_bounds(args, spec, m: InteractionModel) -> ExitCode:
    g = gamma(m)
    rows = [BoundRow("gamma", "", g.mid, g.low, g.high, None, g.low > 0.0)]
    for L in args.L:
        rows.append(BoundRow("delta", f"L={L}", delta(m, L)))
        b = dbar_bounds(m, L)
        rows.append(BoundRow("dbar_bound1", f"L={L}", b.bound1, bound=None, passed=b.bound1_available))
        rows.append(BoundRow("dbar_bound2", f"L={L}", b.bound2, bound=None, passed=b.bound2_available))
    r = dobrushin_r(m)
    rows.append(BoundRow("dobrushin_r", "", r, bound=1.0, passed=r < 1.0))
    _emit(_csv(rows), args.out_dir, "bounds.csv")
    return ExitCode.OK


def cmd_mixing(args, spec, m: InteractionModel) -> ExitCode:
    _require_termination(m)
    rw = rw_exponent(m)
    report = mixing_check(
        m, args.R, args.replicas, args.seed, args.walk_replicas, args.eps, args.threads, max_events=args.max_events
    )
    rows = [row.row() for row in report.rows]
    tail = report.tail
    for t, p, lo, hi in zip(tail.thresholds, tail.probabilities, tail.ci_low, tail.ci_high):
        rows.append(BoundRow("max_tail", f"m={t}", p, lo, hi, None, None))
    rows.append(BoundRow("rho", "", rw.rho, rw.rho_interval.low, rw.rho_interval.high))
    rows.append(BoundRow("mean_exp_rho_m", "", report.mean_exp_rho_m))
    _emit(_csv(rows), args.out_dir, "mixing.csv")
    return ExitCode.OK


def cmd_verify(args, spec, m: InteractionModel) -> ExitCode:
    results = run_suite(m, args.seed, args.replicas, args.threads, args.max_events)
    _emit(_jsonl(results), args.out_dir, "verify.jsonl")
    return ExitCode.OK if all(r.passed for r in results) else ExitCode.VERIFY_FAILED


COMMANDS = {
    "check": cmd_check,
    "sample": cmd_sample,
    "couple": cmd_couple,
    "bounds": cmd_bounds,
    "mixing": cmd_mixing,
    "verify": cmd_verify,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return ExitCode.OK if e.code == 0 else ExitCode.USAGE
    config.setup_logging(args.log_level)

    try:
        spec, m = load_model(args.model)
        return int(COMMANDS[args.command](args, spec, m))
    except ModelFileError as e:
        print(f"error: {e}", file=sys.stderr)
        return ExitCode.USAGE
    except ConditionFailedError as e:
        print(f"conditions failed: {e}", file=sys.stderr)
        return ExitCode.CONDITIONS_FAILED
    except PerfectSamplingError as e:
        logger.exception("[main] %s failed", args.command)
        print(f"error: {e}", file=sys.stderr)
        return ExitCode.RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
