"""Command-line entry point.

    sfhf run CONFIG [--out PATH] [--seed N]
    sfhf compare CONFIG... --out PATH

Exit status: 0 success, 1 optimizer failure, 2 configuration or I/O error.
"""

import argparse
import dataclasses
import sys

from .errors import ConfigError
from .harness import write_text_atomic, compare, comparison_to_csv, load_config, execute, summary_line


def build_parser():
    parser = argparse.ArgumentParser(prog="sfhf", description="Saddle-free Hessian-free optimization benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configuration and write its trace CSV")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="trace CSV path (overrides output_path)")
    p_run.add_argument("--seed", type=int, help="override the configured seed")

    p_cmp = sub.add_parser("compare", help="run several methods on one problem")
    p_cmp.add_argument("configs", nargs="+")
    p_cmp.add_argument("--out", required=True, help="comparison CSV path")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            overrides = {}
            if args.out is not None:
                overrides["output_path"] = args.out
            if args.seed is not None:
                overrides["seed"] = args.seed
            return execute(dataclasses.replace(cfg, **overrides))

        cfgs = [load_config(path) for path in args.configs]
        rows, outcomes = compare(cfgs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    for outcome in outcomes:
        print(summary_line(outcome))
    try:
        write_text_atomic(args.out, comparison_to_csv(rows))
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
        return 2
    return 1 if any(o.result.stop_reason == "failed" for o in outcomes) else 0


if __name__ == "__main__":
    sys.exit(main())
