"""Command-line front door: run, check, and example subcommands.

Exit codes are documented per error category in errors.py / README; the
environment variable PPFSYNC_LOG (debug|info|warning) controls verbosity.
"""
import argparse
import dataclasses
import json
import logging
import os
import sys

from . import config as cfgmod
from .controller import FilterContext, gain_check, lambda_bar_from_root
from .errors import PpfsyncError, UnknownExample
from .graph import laplacian_quantities
from .sim import gain_report_dict, run_scenario

log = logging.getLogger("ppfsync")


def _setup_logging():
    level = os.environ.get("PPFSYNC_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s")


def _load(config_path, overrides, out_dir=None):
    doc = cfgmod.load_config_file(config_path)
    for item in overrides or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise cfgmod.UnknownKey(
                f"--set needs section.key=value, got {item!r}")
        cfgmod.apply_override(doc, key.strip(), value)
    cfg = cfgmod.parse_config(doc)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        replacements = {}
        if cfg.trace_path is None:
            replacements["trace_path"] = os.path.join(out_dir, "trace.csv")
        if cfg.summary_path is None:
            replacements["summary_path"] = os.path.join(
                out_dir, "summary.json")
        if replacements:
            cfg = dataclasses.replace(cfg, **replacements)
    return cfg


def _verdict(summary):
    settled = [s for s in summary.settling_time if s is not None]
    settle = f"{max(settled):.3f}s" if len(settled) == len(
        summary.settling_time) else "never"
    return (f"ok: scenario={summary.scenario} violations="
            f"{summary.violation_count} settled_at={settle} "
            f"terminal_error={summary.max_abs_terminal_error:.4g} "
            f"max_u={summary.max_abs_u:.4g} "
            f"runtime={summary.runtime_seconds:.2f}s")


def cmd_run(args):
    cfg = _load(args.config, args.set, args.out)
    trace, summary = run_scenario(cfg)
    if args.out:
        from .figures import render_report
        render_report(trace, args.out)
    print(_verdict(summary))
    ok = summary.violation_count == 0
    return 0 if ok else 5


def gain_report_text(report):
    """Canonical byte-stable rendering of a gain report."""
    return json.dumps(gain_report_dict(report), indent=2, sort_keys=True)


def cmd_check(args):
    cfg = _load(args.config, args.set)
    gq = laplacian_quantities(cfg.graph, cfg.q_rule)
    lambda_bar = lambda_bar_from_root(cfg.controller.lam, cfg.order)
    filter_ctx = FilterContext.build(lambda_bar, cfg.controller.beta)
    report = gain_check(gq, cfg.bounds, cfg.controller, filter_ctx)
    print(f"graph: {cfg.graph.n} agents, strongly connected, "
          f"sigma_min(L+B)={gq.sigma_min_pinned:.6g}")
    if lambda_bar.size:
        print(f"filter: lambda_bar={lambda_bar.tolist()} Hurwitz, "
              f"Lyapunov certificate ok")
    else:
        print("filter: first-order system, no filter")
    print(gain_report_text(report))
    verdict = "feasible" if report.feasible else \
        "advisory: conservative gain condition not met"
    print(f"gain check: {verdict}")
    return 0


def cmd_example(args):
    if args.name not in ("example1", "example2"):
        raise UnknownExample(
            f"unknown example {args.name!r}; choose example1 or example2")
    out_dir = args.out or f"{args.name}_out"
    os.makedirs(out_dir, exist_ok=True)
    doc = {"models": args.name}
    cfg = cfgmod.parse_config(doc)
    cfg = dataclasses.replace(
        cfg,
        trace_path=os.path.join(out_dir, "trace.csv"),
        summary_path=os.path.join(out_dir, "summary.json"))
    cfgmod.write_config_file(cfgmod.serialize_config(cfg),
                             os.path.join(out_dir, f"{args.name}.yaml"))
    trace, summary = run_scenario(cfg)
    from .figures import render_report
    render_report(trace, out_dir)
    print(_verdict(summary))
    print(f"outputs in {out_dir}/")
    return 0 if summary.violation_count == 0 else 5


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ppfsync",
        description="Distributed adaptive consensus control with "
                    "prescribed-performance funnels")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="integrate a scenario config")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config value; last writer wins")
    run_p.add_argument("--out", help="directory for trace/summary/figures")
    run_p.set_defaults(fn=cmd_run)

    check_p = sub.add_parser(
        "check", help="validate graph/filter and print the gain report")
    check_p.add_argument("--config", required=True)
    check_p.add_argument("--set", action="append",
                         metavar="SECTION.KEY=VALUE")
    check_p.set_defaults(fn=cmd_check)

    ex_p = sub.add_parser(
        "example", help="materialize and run a built-in benchmark")
    ex_p.add_argument("name")
    ex_p.add_argument("--out")
    ex_p.set_defaults(fn=cmd_example)
    return parser


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PpfsyncError as exc:
        print(f"error={type(exc).__name__} exit={exc.exit_code}: {exc}",
              file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error=IOError exit=7: {exc}", file=sys.stderr)
        return 7


if __name__ == "__main__":
    sys.exit(main())
