"""Command-line front end: ``twostage <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

from .experiments import ExperimentSpec, run_experiment, to_csv, to_json
from .oracles import run_oracle_suite
from .protocol import SOLVERS, CalibrationError, LookupTable, SolverParams, TableRangeError, calibrate_table
from .system_model import LinkBudget, SystemConfig, normalized_noise_power, trial_rng

log = logging.getLogger("twostage")


def parse_grid(text: str) -> tuple:
    """``"10,20,30"``, ``"10:60"`` (inclusive) or ``"10:60:10"``."""
    values = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            bits = [int(b) for b in part.split(":")]
            if len(bits) not in (2, 3):
                raise argparse.ArgumentTypeError(f"bad range {part!r}")
            start, stop = bits[0], bits[1]
            step = bits[2] if len(bits) == 3 else 1
            if step <= 0:
                raise argparse.ArgumentTypeError(f"bad step in {part!r}")
            values.extend(range(start, stop + 1, step))
        elif part:
            values.append(int(part))
    if not values:
        raise argparse.ArgumentTypeError("empty grid")
    return tuple(values)


def parse_solvers(text: str) -> tuple:
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in names if s not in SOLVERS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"solvers must be drawn from {', '.join(SOLVERS)}")
    return names


def _common(p, active, antennas, l1, l2, trials, solver):
    p.add_argument("--devices", type=int, default=1000, help="number of devices N")
    p.add_argument("--antennas", type=parse_grid, default=antennas, help="BS antennas M (grid)")
    p.add_argument("--active", type=parse_grid, default=active, help="active devices K (grid)")
    p.add_argument("--l1", type=parse_grid, default=l1, help="Phase I symbols (grid)")
    p.add_argument("--l2", type=parse_grid, default=l2, help="Phase II symbols (grid)")
    p.add_argument("--trials", type=int, default=trials)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma2", type=float, default=None,
                   help="normalised noise power; default from the link budget")
    p.add_argument("--distance", type=float, default=1.0, help="device distance in km for the link budget")
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--stall-limit", type=int, default=2, help="K-CD freeze limit D")
    p.add_argument("--omega", type=float, default=None,
                   help="Active Set CD threshold; default max(omega-rel x initial largest violation, epsilon)")
    p.add_argument("--omega-rel", type=float, default=0.0,
                   help="Active Set CD threshold relative to the initial largest violation")
    p.add_argument("--omega-shrink", type=float, default=0.1,
                   help="shrink factor for omega on an empty active set; 0 stops instead")
    p.add_argument("--solver", type=parse_solvers, default=solver, help="comma list of cd, active-set, kcd")
    p.add_argument("--table", default=None, help="lookup table file")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twostage", description="Two-stage grant-free random access simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="build a K -> L2 lookup table")
    _common(p, active=parse_grid("10:60:10"), antennas=(16,), l1=(4,), l2=parse_grid("2:256"),
            trials=300, solver=("cd",))
    p.add_argument("--threshold", type=float, default=1e-2, help="target equal-error rate")

    p = sub.add_parser("estimate", help="Phase I count-estimation error sweep")
    _common(p, active=(50, 100, 200, 300), antennas=(15,), l1=(4,), l2=(1,), trials=1000, solver=("cd",))

    p = sub.add_parser("detect", help="compare CD, Active Set CD and K-CD")
    _common(p, active=(100,), antennas=(15,), l1=(4,), l2=(100,), trials=20, solver=SOLVERS)

    p = sub.add_parser("two-stage", help="two-stage protocol against the grant-free baseline")
    _common(p, active=(100, 150, 200), antennas=(32,), l1=(4,), l2=None, trials=100, solver=("kcd",))

    p = sub.add_parser("oracle", help="run the brute-force / finite-difference checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _sigma2(args) -> float:
    if args.sigma2 is not None:
        return args.sigma2
    return normalized_noise_power(LinkBudget(distance_km=args.distance))


def _params(args) -> SolverParams:
    shrink = args.omega_shrink if args.omega_shrink and args.omega_shrink > 0 else None
    return SolverParams(args.solver[0], args.epsilon, args.alpha, args.stall_limit, args.omega,
                        omega_rel=args.omega_rel, omega_shrink=shrink)


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    with open(out, "w", newline="") as f:
        f.write(text)


def _calibrate(args) -> str:
    config = SystemConfig(args.devices, args.antennas[0], 0, args.l1[0], args.l2[0], _sigma2(args), args.seed)
    table = calibrate_table(args.active, args.l2, args.threshold, args.trials, config,
                            trial_rng(args.seed), params=_params(args), log=log.info)
    return table.to_text()


def _experiment(args) -> str:
    if args.command == "two-stage" and args.table is None:
        raise ValueError("two-stage needs --table")
    if args.command == "two-stage" and args.l2 is None:
        raise ValueError("two-stage needs --l2 for the grant-free baseline")
    spec = ExperimentSpec(
        mode=args.command, n_devices=args.devices, antennas=args.antennas, active=args.active, l1=args.l1,
        l2=args.l2, sigma2=_sigma2(args), solvers=args.solver, params=_params(args), trials=args.trials,
        seed=args.seed, table=LookupTable.read(args.table) if args.table else None,
    )
    rows = run_experiment(spec)
    return to_csv(rows) if args.format == "csv" else to_json(rows)


def _oracle(args) -> tuple:
    results = run_oracle_suite(args.seed)
    if args.format == "json":
        text = json.dumps([r.__dict__ for r in results], indent=1) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "passed", "worst", "tolerance"])
        for r in results:
            w.writerow([r.name, r.passed, f"{r.worst:.9g}", f"{r.tolerance:g}"])
        text = buf.getvalue()
    return text, all(r.passed for r in results)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "oracle":
            text, ok = _oracle(args)
            _emit(text, args.out)
            return 0 if ok else 1
        text = _calibrate(args) if args.command == "calibrate" else _experiment(args)
        _emit(text, args.out)
    except (ValueError, TableRangeError, CalibrationError, OSError) as exc:
        print(f"twostage {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
