"""``slamctl`` command line: run, verify and plot.

Exit codes: 0 ok, 1 monitor or suite failure, 2 config error,
3 simulation failure. Every flag can also be set through an environment
variable ``SLAMCTL_<FLAG>`` (e.g. ``SLAMCTL_SEED=7``); flags win.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import scenario, sim
from .plots import emit_plots
from .verify import run_suite

ENV_PREFIX = "SLAMCTL_"
EXIT_OK, EXIT_MONITOR, EXIT_CONFIG, EXIT_SIM = 0, 1, 2, 3


def _env(name, default=None):
    return os.environ.get(ENV_PREFIX + name.upper(), default)


def _env_flag(name):
    v = _env(name)
    return v is not None and v.strip().lower() in ("1", "true", "yes", "on")


def _err(msg):
    print(f"slamctl: {msg}", file=sys.stderr)


def build_parser():
    p = argparse.ArgumentParser(prog="slamctl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write trace + report")
    r.add_argument("--config", default=_env("config"), help="scenario file (default: built-in defaults)")
    r.add_argument("--out", default=_env("out", "."), help="output directory")
    r.add_argument("--seed", type=int, default=_env("seed"), help="override sim.seed")
    r.add_argument("--duration", type=float, default=_env("duration"), help="override sim.duration (s)")
    r.add_argument("--plots", action="store_true", default=_env_flag("plots"), help="also write the figures")

    v = sub.add_parser("verify", help="run the randomised identity/gradient suites")
    v.add_argument("--suite", default=_env("suite", "all"), help="identities, gradients or all")
    v.add_argument("--seed", type=int, default=_env("seed"), help="RNG seed for the suites")

    g = sub.add_parser("plot", help="rebuild the figures from a trace CSV")
    g.add_argument("trace", nargs="?", help="trace file (default: OUT/trace.csv)")
    g.add_argument("--out", default=_env("out", "."), help="directory for the figures")
    return p


def cmd_run(args):
    try:
        cfg = scenario.load_config(args.config) if args.config else scenario.defaults()
        config = scenario.build_simulation(cfg, seed=args.seed, duration=args.duration)
    except scenario.ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    try:
        trace, report = sim.run(config, side=scenario.square_side(cfg))
    except sim.SimulationError as exc:
        _err(f"simulation failed: {exc}")
        return EXIT_SIM
    os.makedirs(args.out, exist_ok=True)
    trace_path = os.path.join(args.out, cfg["output.trace"])
    report_path = os.path.join(args.out, cfg["output.report"])
    trace.write(trace_path)
    with open(report_path, "w") as f:
        f.write(report.to_text())
    print(trace_path)
    print(report_path)
    if args.plots:
        for path in emit_plots(trace_path, args.out):
            print(path)
    monitors = list(cfg["monitors"])
    unknown = [m for m in monitors if m not in report.checks]
    if unknown:
        _err(f"config error: unknown monitors {unknown}")
        return EXIT_CONFIG
    failed = [m for m in monitors if not report.checks[m]]
    if failed:
        _err(f"monitor failure: {', '.join(failed)}")
        return EXIT_MONITOR
    return EXIT_OK


def cmd_verify(args):
    rng = None if args.seed is None else np.random.default_rng(args.seed)
    try:
        results = run_suite(args.suite, rng)
    except KeyError as exc:
        _err(str(exc.args[0]))
        return EXIT_CONFIG
    for r in results:
        print(r.line())
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} checks passed")
    return EXIT_OK if passed == len(results) else EXIT_MONITOR


def cmd_plot(args):
    path = args.trace or os.path.join(args.out, "trace.csv")
    try:
        paths = emit_plots(path, args.out)
    except (OSError, ValueError) as exc:
        _err(f"cannot plot {path}: {exc}")
        return EXIT_CONFIG
    for p in paths:
        print(p)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return {"run": cmd_run, "verify": cmd_verify, "plot": cmd_plot}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
