"""Command-line entry point: ``fuselage-qbo {run,summarize,plot,queries}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import estimators as est
from . import harness, plotting
from .config import parse_config
from .errors import ConfigError, DomainError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _cmd_run(args):
    config = parse_config(args.config)
    out = harness.run_experiment(config, args.out, jobs=args.jobs)
    rows = harness.summarize(harness.load_traces(out))
    print(harness.format_summary(rows))
    print(f"results in {out}")


def _cmd_summarize(args):
    rows = harness.summarize(harness.load_traces(args.input))
    harness.write_summary(rows, Path(args.input) / "summary.csv")
    print(harness.format_summary(rows))


def _cmd_plot(args):
    traces = [t for t in harness.load_traces(args.input) if len(t.query_index)]
    kind = plotting.ALIASES[args.kind]
    plotting.plot(traces, kind, args.out)
    print(f"wrote {args.out}")


def _cmd_queries(args):
    cheb = est.chebyshev_queries(args.sigma, args.epsilon, args.delta)
    print(f"chebyshev = {cheb}")
    if args.epsilon < 4 * args.sigma:
        value = est.qmc2_value(args.sigma, args.epsilon, args.delta, args.c2)
        print(f"qmc = {est.qmc2_queries(args.sigma, args.epsilon, args.delta, args.c2)} "
              f"(bound {value:.4f}, C2 = {args.c2:g})")
    else:
        n = est.quantum_queries(args.sigma, args.epsilon, args.delta, args.c1, args.c2)
        print(f"qmc = {n} (epsilon >= 4 sigma: bounded-range bound, C1 = {args.c1:g})")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fuselage-qbo", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out", default=None, help="output directory (default: output_dir)")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("summarize", help="recompute summary.csv from traces")
    s.add_argument("--in", dest="input", required=True)
    s.set_defaults(func=_cmd_summarize)

    pl = sub.add_parser("plot", help="plot regret or incumbent-MAE curves")
    pl.add_argument("--in", dest="input", required=True)
    pl.add_argument("--kind", choices=sorted(plotting.ALIASES), required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=_cmd_plot)

    q = sub.add_parser("queries", help="classical vs QMC query counts")
    q.add_argument("--sigma", type=float, required=True)
    q.add_argument("--epsilon", type=float, required=True)
    q.add_argument("--delta", type=float, required=True)
    q.add_argument("--c2", type=float, default=1.0)
    q.add_argument("--c1", type=float, default=1.0)
    q.set_defaults(func=_cmd_queries)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
