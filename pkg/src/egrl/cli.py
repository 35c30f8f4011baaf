"""Command-line front end.

Exit status is 0 on success, 1 for configuration or input errors and 2 for
failures while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from . import gnn
from .baselines import exhaustive_oracle
from .config import ALGORITHMS, ConfigError, RunConfig
from .gnn import CheckpointError
from .hwsim import HardwareConfigError, HardwareModel, baseline_latency, compiler_map
from .orchestrator import load_problem, run
from .report import (
    ReportError,
    _dump_json,
    _dump_jsonl,
    export_mappings,
    load_mapping,
    mapshift,
    save_mapping,
    transfer,
    write_aggregate,
    write_seed_dir,
)
from .workload import GENERATOR_KINDS, WORKLOAD_PRESETS, WorkloadError, generate_synthetic, load_workload, save_workload

log = logging.getLogger("egrl")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _hardware(source: str) -> HardwareModel:
    if os.path.exists(source):
        with open(source) as fh:
            return HardwareModel.from_dict(json.load(fh))
    return HardwareModel.preset(source)


def _workload(args):
    if getattr(args, "workload", None):
        return load_workload(args.workload)
    if getattr(args, "kind", None):
        return generate_synthetic(args.kind, args.nodes, args.seed or 0)
    raise UsageError("give --workload FILE or --kind KIND --nodes N")


def _emit(obj, out):
    text = json.dumps(obj, indent=1, sort_keys=True)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    print(text)


# --------------------------------------------------------------------------
# subcommands


def cmd_gen(args):
    if args.preset:
        kind, n = WORKLOAD_PRESETS[args.preset]
    else:
        if not args.kind or not args.nodes:
            raise UsageError("gen needs --preset or both --kind and --nodes")
        kind, n = args.kind, args.nodes
    g = generate_synthetic(kind, n, args.seed or 0)
    out = args.out or f"{g.name}.json"
    save_workload(g, out)
    print(json.dumps({"workload": g.name, "n_nodes": g.n_nodes, "edges": len(g.edges), "path": out,
                      "weight_bytes": int(g.weight_bytes.sum()), "activation_bytes": int(g.activation_bytes.sum()),
                      "action_space_log10": g.action_space_log10}))
    return EXIT_OK


def _run_seeds(cfg: RunConfig, out: str | None) -> list:
    reports = []
    for i in range(cfg.n_seeds):
        c = RunConfig.from_dict({**cfg.to_dict(), "seed": cfg.seed + i, "n_seeds": 1})
        g, hw = load_problem(c)
        t0 = time.perf_counter()
        rep = run(c)
        dt = time.perf_counter() - t0
        log.info("seed %d: best speedup %.4f over %d iterations (%.1fs)", c.seed, rep.best_speedup, rep.iterations, dt)
        if out:
            write_seed_dir(rep, os.path.join(out, f"seed_{c.seed}"), g, hw, compiler_map(g, hw), wall_time=dt)
        reports.append(rep)
    return reports


def cmd_run(args):
    cfg = _load_config(args)
    if args.algorithm:
        cfg.algorithm = args.algorithm
    if args.n_seeds:
        cfg.n_seeds = args.n_seeds
    cfg.validate()
    out = args.out or "runs/latest"
    os.makedirs(out, exist_ok=True)
    _dump_json(cfg.to_dict(), os.path.join(out, "config.json"))
    reports = _run_seeds(cfg, out)
    agg = write_aggregate(reports, out, cfg.n_seeds)
    print(json.dumps({k: agg[k] for k in ("algorithm", "n_seeds", "best_speedup_mean", "best_speedup_std", "best_speedup_median")}))
    return EXIT_OK


def cmd_baseline(args):
    cfg = _load_config(args)
    if args.method == "compiler":
        g, hw = load_problem(cfg)
        m = compiler_map(g, hw)
        res = {"method": "compiler", "workload": g.name, "latency": baseline_latency(g, hw), "speedup": 1.0, "mapping": m.flat().tolist()}
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            save_mapping(m, g, os.path.join(args.out, "compiler_mapping.json"), 1.0)
        print(json.dumps(res))
        return EXIT_OK
    cfg.algorithm = args.method
    cfg.validate()
    out = args.out or f"runs/{args.method}"
    os.makedirs(out, exist_ok=True)
    _dump_json(cfg.to_dict(), os.path.join(out, "config.json"))
    reports = _run_seeds(cfg, out)
    agg = write_aggregate(reports, out, cfg.n_seeds)
    print(json.dumps({k: agg[k] for k in ("algorithm", "n_seeds", "best_speedup_mean", "best_speedup_std")}))
    return EXIT_OK


def cmd_transfer(args):
    params = gnn.load_params(args.policy)
    src = load_workload(args.trained_on)
    dst = load_workload(args.target)
    hw = _hardware(args.hardware)
    res = transfer(params, src, dst, hw)
    _emit(res, args.out)
    return EXIT_OK


def cmd_mapshift(args):
    g = load_workload(args.workload)
    if args.base == "compiler":
        base = compiler_map(g, _hardware(args.hardware))
    else:
        base = load_mapping(args.base)
    other = load_mapping(args.other)
    table = mapshift(base, other, g, normalize=args.normalize)
    _emit({"schema": 1, "levels": ["DRAM", "LLC", "SRAM"], "normalized": args.normalize, "matrix": table.tolist()}, args.out)
    return EXIT_OK


def cmd_export(args):
    rows = export_mappings(args.run_dir)
    if args.out:
        _dump_jsonl(rows, args.out)
    counts = {}
    for r in rows:
        counts[r["tag"]] = counts.get(r["tag"], 0) + 1
    print(json.dumps({"n_mappings": len(rows), "tags": counts, "path": args.out}))
    return EXIT_OK


def cmd_oracle(args):
    g = _workload(args)
    hw = _hardware(args.hardware)
    m, lat = exhaustive_oracle(g, hw)
    base = baseline_latency(g, hw)
    _emit({"workload": g.name, "n_nodes": g.n_nodes, "latency": lat, "compiler_latency": base, "speedup": base / lat, "mapping": m.flat().tolist()}, args.out)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML or JSON run configuration")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = _Parser(prog="egrl", description="Memory-mapping search for DNN accelerators", parents=[common])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("gen", parents=[common], help="generate a synthetic workload")
    s.add_argument("--kind", choices=GENERATOR_KINDS)
    s.add_argument("--nodes", type=int)
    s.add_argument("--preset", choices=sorted(WORKLOAD_PRESETS))
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("run", parents=[common], help="run the configured search over n_seeds seeds")
    s.add_argument("--algorithm", choices=ALGORITHMS)
    s.add_argument("--n-seeds", type=int)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("baseline", parents=[common], help="compiler map, greedy-DP, EA or PG baseline")
    s.add_argument("--method", choices=("compiler", "greedy_dp", "ea", "pg"), default="greedy_dp")
    s.set_defaults(func=cmd_baseline)

    s = sub.add_parser("transfer", parents=[common], help="evaluate a trained policy on another workload")
    s.add_argument("--policy", required=True)
    s.add_argument("--trained-on", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--hardware", default="desk")
    s.set_defaults(func=cmd_transfer)

    s = sub.add_parser("mapshift", parents=[common], help="byte-weighted level transition matrix")
    s.add_argument("--workload", required=True)
    s.add_argument("--base", required=True, help="mapping file, or 'compiler'")
    s.add_argument("--other", required=True)
    s.add_argument("--hardware", default="desk")
    s.add_argument("--normalize", action="store_true")
    s.set_defaults(func=cmd_mapshift)

    s = sub.add_parser("export", parents=[common], help="export recorded mappings as flat vectors")
    s.add_argument("run_dir")
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("oracle", parents=[common], help="exhaustive optimum for graphs of at most 6 nodes")
    s.add_argument("--workload")
    s.add_argument("--kind", choices=GENERATOR_KINDS)
    s.add_argument("--nodes", type=int)
    s.add_argument("--hardware", default="desk")
    s.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name in ("seed", "config", "out", "verbose"):
        if not hasattr(args, name):
            setattr(args, name, None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (UsageError, ConfigError, WorkloadError, HardwareConfigError, CheckpointError, ReportError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
