"""Command-line interface: ``wldreg {run,sweep,gradcheck,dump-sim}``."""

import argparse
import sys

from . import harness
from ._backend import BACKEND
from .errors import WldRegError
from .gradcheck import COMPONENTS, gradcheck


def _cmd_run(args):
    cfg = harness.load_config(args.config)
    path = args.out or cfg.output_path()
    results = harness.run_to_csv(cfg, path)
    for line in harness.summarize(results):
        print(line)
    print(f"wrote {len(results)} rows to {path}")
    return 0


def _cmd_sweep(args):
    cfg = harness.load_config(args.config)
    path = args.out or cfg.output_path()
    results = harness.sweep(cfg, path)
    total = len(cfg.points()) * len(cfg.variants) * len(cfg.seeds)
    print(f"ran {len(results)} of {total} runs ({total - len(results)} already in {path})")
    return 0


def _cmd_gradcheck(args):
    report = gradcheck(tolerance=args.tol, components=args.component or None)
    print(report.format())
    return 0 if report.passed else 1


def _cmd_dump_sim(args):
    cfg = harness.load_config(args.config)
    model, dataset, gamma = harness.train_for_dump(cfg)
    s = harness.dump_similarity(model, dataset, gamma, args.out, batch_size=args.batch)
    print(f"wrote {s.shape[0]}x{s.shape[1]} similarity matrix to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="wldreg", description=(
        "Train small MLPs with within-layer activation-diversity regularization."))
    parser.add_argument("--version", action="version", version=f"%(prog)s (kernels: {BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train every variant x seed of a config")
    p.add_argument("config", help="experiment config (JSON)")
    p.add_argument("--out", help="results CSV path (default: the config's output)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run the lambda1/lambda2/gamma grid, resuming a partial CSV")
    p.add_argument("config", help="experiment config (JSON)")
    p.add_argument("--out", help="results CSV path (default: the config's output)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of every analytic gradient")
    p.add_argument("--tol", type=float, default=1e-5, help="max relative error (default 1e-5)")
    p.add_argument("--component", action="append", metavar="NAME",
                   help=f"restrict to a suite; repeatable. One of: {', '.join(COMPONENTS)}")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("dump-sim", help="train, then write the feature similarity matrix")
    p.add_argument("config", help="experiment config (JSON)")
    p.add_argument("--out", required=True, help="CSV path for the matrix")
    p.add_argument("--batch", type=int, default=harness.DUMP_BATCH,
                   help="number of test samples in the evaluation batch")
    p.set_defaults(func=_cmd_dump_sim)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (WldRegError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
