"""``fuzz-divide`` command line: distribute, distill, simulate, inspect.

Exit codes: 0 success, 1 usage error, 2 input or format error, 3 integrity
error (traces contradict each other).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .cfg import build_cfg
from .corpus import atomic_write, dedup_by_content, ingest_instance, read_meta
from .coverage import aggregate_instances, parse_trace
from .distill import ALGORITHMS, distill
from .errors import FuzzDivideError
from .scheduler import (
    DEFAULT_POLL,
    DEFAULT_THRESHOLD,
    DEFAULT_WARMUP,
    SCHEMA_VERSION,
    ingest_sync_dir,
    orchestrate_once,
    watch,
)
from .simulator import POLICIES, ProgramParams, SimConfig, compare_policies

log = logging.getLogger("fuzzdivide")

LOG_ENV = "FUZZ_DIVIDE_LOG"
EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTEGRITY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _nonneg_float(text):
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = _Parser(add_help=False)
    common.add_argument("--rng-seed", type=int, default=0, help="seed for every random choice")
    common.add_argument("--log-level", default=None,
                        help=f"logging level; falls back to ${LOG_ENV}, then WARNING")
    common.add_argument("--report", type=Path, default=None, help="write a JSON report here")
    common.add_argument("--config", type=Path, default=None,
                        help="file of 'key = value' lines; command-line flags win")

    parser = _Parser(prog="fuzz-divide", description=__doc__.splitlines()[0], formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("distribute", parents=[common], formatter_class=fmt,
                       help="split seeds of a sync dir across instances via allow-lists")
    p.add_argument("--sync-dir", type=Path, required=True, help="AFL sync directory holding one dir per instance")
    p.add_argument("--threshold", type=_nonneg_float, default=DEFAULT_THRESHOLD,
                   help="relative edge growth that triggers a new round (--watch)")
    p.add_argument("--warmup", type=_nonneg_float, default=DEFAULT_WARMUP,
                   help="seconds before the first round (--watch)")
    p.add_argument("--poll", type=_nonneg_float, default=DEFAULT_POLL,
                   help="seconds between edge-count checks (--watch)")
    p.add_argument("--watch", action="store_true", default=False,
                   help="keep polling and redistribute on growth")
    p.add_argument("--max-polls", type=int, default=None, help="stop --watch after this many polls")
    p.set_defaults(func=cmd_distribute)

    p = sub.add_parser("distill", parents=[common], formatter_class=fmt,
                       help="distill one instance queue and print the outcome as JSON")
    p.add_argument("--instance-dir", type=Path, required=True, help="instance working dir with queue/")
    p.add_argument("--algo", choices=ALGORITHMS, default="ours", help="distillation algorithm")
    p.set_defaults(func=cmd_distill)

    defaults = SimConfig()
    prog = ProgramParams()
    p = sub.add_parser("simulate", parents=[common], formatter_class=fmt,
                       help="simulate a campaign and compare a policy against shared")
    p.add_argument("--instances", type=int, default=defaults.instances, help="parallel instances")
    p.add_argument("--epochs", type=int, default=defaults.epochs, help="simulated epochs")
    p.add_argument("--policy", choices=POLICIES, default=defaults.policy, help="seed sharing policy")
    p.add_argument("--repeats", type=int, default=defaults.repeats, help="paired runs per policy")
    p.add_argument("--energy", type=int, default=defaults.energy, help="havoc candidates per visit")
    p.add_argument("--det-energy", type=int, default=defaults.det_energy,
                   help="deterministic candidates on first visit")
    p.add_argument("--slots", type=int, default=defaults.slots, help="seeds mutated per instance per epoch")
    p.add_argument("--initial-seeds", type=int, default=defaults.initial_seeds, help="seeds every instance starts with")
    p.add_argument("--blocks", type=int, default=prog.blocks, help="basic blocks in the synthetic program")
    p.add_argument("--branch-factor", type=int, default=prog.branch_factor, help="max successors per block")
    p.add_argument("--layer-width", type=int, default=prog.layer_width, help="blocks per DAG layer")
    p.add_argument("--self-loop-prob", type=float, default=prog.self_loop_prob, help="chance a block loops on itself")
    p.add_argument("--loop-continue", type=float, default=prog.loop_continue, help="geometric parameter of loop counts")
    p.add_argument("--threshold", type=_nonneg_float, default=defaults.threshold, help="edge growth that triggers redistribution")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("inspect", parents=[common], formatter_class=fmt,
                       help="summarise a trace file or the shared-edge CFG of a sync dir")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace", type=Path, help="trace file to print")
    src.add_argument("--sync-dir", type=Path, help="sync dir whose shared edges to show")
    p.add_argument("--dump-cfg", type=Path, default=None, help="write the shared-edge CFG as DOT")
    p.set_defaults(func=cmd_inspect)
    return parser


def _subparsers(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def apply_config(parser, command, path) -> None:
    """Install ``key = value`` pairs from ``path`` as defaults of ``command``."""
    sp = _subparsers(parser).get(command)
    if sp is None:
        return
    try:
        values = read_meta(path)
    except OSError as exc:
        raise FuzzDivideError(f"{path}: cannot read config: {exc.strerror}") from exc
    actions = {a.dest: a for a in sp._actions}
    overrides = {}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None or dest in ("config", "help"):
            raise UsageError(f"{path}: unknown key {key!r} for {command}")
        if isinstance(action, argparse._StoreTrueAction):
            try:
                overrides[dest] = _bool(raw)
            except argparse.ArgumentTypeError as exc:
                raise UsageError(f"{path}: {key}: {exc}") from None
        elif action.type is not None:
            try:
                overrides[dest] = action.type(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"{path}: {key}: {exc}") from None
        else:
            overrides[dest] = raw
        if action.choices is not None and overrides[dest] not in action.choices:
            raise UsageError(f"{path}: {key}: {raw!r} not in {sorted(action.choices)}")
        # a required flag satisfied by the config file is no longer required
        action.required = False
    sp.set_defaults(**overrides)


def _setup_logging(level, env):
    name = (level or env.get(LOG_ENV) or "WARNING").upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        raise UsageError(f"unknown log level {name!r}")
    root = logging.getLogger("fuzzdivide")
    root.setLevel(numeric)
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root.addHandler(handler)


def _write_report(path, payload) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    atomic_write(path, (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode())


def cmd_distribute(args, out) -> int:
    if args.watch:
        def show(summary):
            print(_summary_line(summary), file=out, flush=True)

        state = watch(args.sync_dir, args.rng_seed, args.threshold, args.warmup, args.poll,
                      args.report, max_polls=args.max_polls, on_round=show)
        print(f"stopped after {state.rounds} round(s)", file=out)
        return EXIT_OK
    summary = orchestrate_once(args.sync_dir, args.rng_seed, args.report)
    print(_summary_line(summary), file=out)
    return EXIT_OK


def _summary_line(s) -> str:
    return (
        f"{len(s.instances)} instances, {s.seeds_in} seeds in, "
        f"{s.seeds_assigned} assigned + {s.seeds_preserved} preserved, "
        f"{s.overlap_edges}/{s.total_edges} edges shared"
    )


def cmd_distill(args, out) -> int:
    corpus = ingest_instance(args.instance_dir, 0)
    outcome = distill(corpus, args.algo, args.rng_seed)
    payload = outcome.to_json()
    if args.report:
        _write_report(args.report, payload)
    print(json.dumps({"schema_version": SCHEMA_VERSION, **payload}, sort_keys=True), file=out)
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    program = ProgramParams(
        blocks=args.blocks, branch_factor=args.branch_factor, layer_width=args.layer_width,
        self_loop_prob=args.self_loop_prob, loop_continue=args.loop_continue,
    )
    config = SimConfig(
        instances=args.instances, epochs=args.epochs, energy=args.energy,
        det_energy=args.det_energy, slots=args.slots, initial_seeds=args.initial_seeds,
        policy=args.policy, program=program, rng_seed=args.rng_seed,
        repeats=args.repeats, threshold=args.threshold,
    )
    cmp = compare_policies(config)
    final = cmp.to_json()
    print(
        f"{config.policy} vs shared, n={config.instances}, {config.repeats} repeats: "
        f"overlap reduction {final['overlap_reduction_pct']:.1f}%, "
        f"coverage gain {final['coverage_gain_pct']:.2f}%, p={final['p_value']:.4g}",
        file=out,
    )
    if args.report:
        _write_report(args.report, {
            "config": config.to_json(),
            "runs": [m.to_json() for m in cmp.runs],
            "baseline_runs": [m.to_json() for m in cmp.baseline_runs],
            "comparison": final,
        })
    return EXIT_OK


def cmd_inspect(args, out) -> int:
    if args.trace is not None:
        try:
            data = args.trace.read_bytes()
        except OSError as exc:
            raise FuzzDivideError(f"{args.trace}: {exc.strerror}") from exc
        trace = parse_trace(data, path=args.trace)
        print(f"{args.trace}: {len(trace.edges)} edges", file=out)
        for e in sorted(trace.edges):
            print(f"  {e}", file=out)
        cfg = build_cfg(trace.edges)
    else:
        dirs, corpora = ingest_sync_dir(args.sync_dir)
        deduped, _ = dedup_by_content(corpora)
        agg = aggregate_instances(deduped)
        for d, c, edges in zip(dirs, deduped, agg.per_instance):
            print(f"{d.name}: {len(c)} seeds, {len(edges)} edges", file=out)
        print(f"shared edges: {len(agg.overlap)}", file=out)
        cfg = build_cfg(agg.overlap)
    if args.dump_cfg is not None:
        atomic_write(args.dump_cfg, cfg.to_dot().encode())
        print(f"wrote {args.dump_cfg} ({len(cfg.nodes)} nodes, {len(cfg.edges)} edges)", file=out)
    return EXIT_OK


def run_cli(argv=None, env=None, out=None, err=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    env = os.environ if env is None else env
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        if not argv:
            parser.print_usage(err)
            return EXIT_USAGE
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config", type=Path)
        known, _ = pre.parse_known_args(argv)
        if known.config is not None:
            command = next((a for a in argv if a in _subparsers(parser)), None)
            apply_config(parser, command, known.config)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help / --version
            return exc.code if isinstance(exc.code, int) else EXIT_OK
        if args.command is None:
            parser.print_usage(err)
            return EXIT_USAGE
        _setup_logging(args.log_level, env)
        return args.func(args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=err)
        parser.print_usage(err)
        return EXIT_USAGE
    except FuzzDivideError as exc:
        print(f"fuzz-divide: error: {exc}", file=err)
        return exc.exit_code
    except OSError as exc:
        name = exc.filename or ""
        print(f"fuzz-divide: error: {name}: {exc.strerror or exc}", file=err)
        return EXIT_INPUT


def main():
    sys.exit(run_cli())
