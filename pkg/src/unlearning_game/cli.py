"""Command line: ``gen-data``, ``enumerate``, ``run``, ``report``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from .data import SyntheticSpec, generate_synthetic
from .errors import GameError
from .game import num_splits, save_csv, split_sizes
from .harness import load_config, output_dir, render_summary, run


def _gen_data(args) -> int:
    spec = SyntheticSpec(args.num_points, args.dim, args.num_classes, args.separation, args.noise, args.seed)
    save_csv(generate_synthetic(spec), args.output)
    print(f"wrote {args.num_points} points to {args.output}")
    return 0


def _enumerate(args) -> int:
    alpha = Fraction(args.alpha)
    try:
        r, t = split_sizes(args.n, alpha)
    except GameError as exc:
        print(json.dumps({"n": args.n, "alpha": str(alpha), "feasible": False, "reason": str(exc)}))
        return 0
    print(json.dumps({"n": args.n, "alpha": str(alpha), "feasible": True, "retain": r, "forget": t,
                      "test": t, "num_splits": num_splits(args.n, alpha)}))
    return 0


def _run(args) -> int:
    config = load_config(args.config)
    out = run(config)
    sys.stdout.write((out / "summary.txt").read_text())
    return 0


def _report(args) -> int:
    path = Path(args.report)
    if path.is_dir():
        path = path / "report.json"
    sys.stdout.write(render_summary(json.loads(path.read_text())))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="unlearning-game", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic Gaussian-blob dataset as CSV")
    g.add_argument("output")
    g.add_argument("--num-points", type=int, default=120)
    g.add_argument("--dim", type=int, default=5)
    g.add_argument("--num-classes", type=int, default=2)
    g.add_argument("--separation", type=float, default=4.0)
    g.add_argument("--noise", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=_gen_data)

    e = sub.add_parser("enumerate", help="split sizes and |S_alpha| for n points")
    e.add_argument("n", type=int)
    e.add_argument("alpha", help="rational, e.g. 1/5")
    e.set_defaults(func=_enumerate)

    r = sub.add_parser("run", help="run the full game from a JSON config")
    r.add_argument("config")
    r.set_defaults(func=_run)

    s = sub.add_parser("report", help="re-render the summary of a stored report")
    s.add_argument("report", help="report.json or its directory")
    s.set_defaults(func=_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except GameError as exc:
        record = exc.as_record()
    except (OSError, ValueError) as exc:
        record = {"code": type(exc).__name__, "message": str(exc), "field": None}
    print(json.dumps({"error": record}), file=sys.stderr)
    if args.command == "run":
        try:
            out = output_dir(load_config(args.config))
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(record, sort_keys=True) + "\n")
        except (GameError, OSError):
            pass
    return 2


if __name__ == "__main__":
    sys.exit(main())
