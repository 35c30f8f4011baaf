"""Run artifacts, speedup metrics, transfer evaluation and mapping analysis.

A run directory holds one ``seed_<s>/`` folder per seed plus an aggregate::

    config.json            resolved configuration
    aggregate.csv          iteration, mean, std, n of best-so-far speedup
    aggregate.json         final best speedup per seed with mean and std
    seed_<s>/
        summary.json       headline numbers, schema-versioned
        evaluations.jsonl  one record per simulator evaluation
        generations.jsonl  one record per generation
        series.csv         iteration, speedup, best_speedup
        best_mapping.json  best valid mapping found
        workload.json      the workload, for transfer and mapping analysis
        hardware.json      the hardware model
        policy.bin         top-ranked GNN policy (if any)
        pg_actor.bin       the learner's actor (egrl and pg runs)
        timing.json        wall-clock time; kept apart so the rest is byte-stable
"""

from __future__ import annotations

import csv
import io
import json
import os

import numpy as np

from . import gnn
from .env import MappingEnv
from .gnn import GnnParams
from .hwsim import HardwareModel, MappingDecision
from .workload import WorkloadGraph, feature_matrix, load_workload, save_workload

SCHEMA_VERSION = 1
MAPPING_KIND = "egrl.mapping"


class ReportError(ValueError):
    pass


def _dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _dump_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def save_mapping(m: MappingDecision, g: WorkloadGraph, path, speedup: float | None = None) -> None:
    _dump_json(
        {"schema": SCHEMA_VERSION, "kind": MAPPING_KIND, "workload": g.name, "n_nodes": g.n_nodes, "speedup": speedup, "mapping": m.flat().tolist()},
        path,
    )


def load_mapping(path) -> MappingDecision:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") != MAPPING_KIND or doc.get("schema") != SCHEMA_VERSION:
        raise ReportError(f"{path} is not a schema-{SCHEMA_VERSION} mapping file")
    m = MappingDecision(doc["mapping"])
    if m.n_nodes != doc["n_nodes"]:
        raise ReportError(f"{path}: mapping length does not match n_nodes")
    return m


def write_seed_dir(report, out_dir, g: WorkloadGraph, hw: HardwareModel, compiler: MappingDecision, wall_time=None) -> str:
    os.makedirs(out_dir, exist_ok=True)
    summary = report.summary()
    summary["compiler_mapping"] = compiler.flat().tolist()
    _dump_json(summary, os.path.join(out_dir, "summary.json"))
    _dump_jsonl(report.evaluations, os.path.join(out_dir, "evaluations.jsonl"))
    _dump_jsonl(report.generation_log, os.path.join(out_dir, "generations.jsonl"))
    with open(os.path.join(out_dir, "series.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "speedup", "best_speedup"])
        for r in report.evaluations:
            w.writerow([r["step"], repr(r["speedup"]), repr(r["best_speedup"])])
    if report.best_mapping is not None:
        save_mapping(report.best_mapping, g, os.path.join(out_dir, "best_mapping.json"), report.best_speedup)
    save_workload(g, os.path.join(out_dir, "workload.json"))
    _dump_json(hw.to_dict(), os.path.join(out_dir, "hardware.json"))
    if report.gnn_policy is not None:
        gnn.save_params(report.gnn_policy, os.path.join(out_dir, "policy.bin"))
    if report.pg_actor is not None:
        gnn.save_params(report.pg_actor, os.path.join(out_dir, "pg_actor.bin"))
    if wall_time is not None:
        _dump_json({"wall_time_s": wall_time}, os.path.join(out_dir, "timing.json"))
    return out_dir


def aggregate_series(series: list[np.ndarray]) -> np.ndarray:
    """``(T, 4)`` rows of iteration, mean, std and count over equally long runs."""
    if not series:
        raise ReportError("no runs to aggregate")
    lengths = {len(s) for s in series}
    if len(lengths) != 1:
        raise ReportError(f"runs have different lengths {sorted(lengths)}; refusing to average")
    stack = np.vstack(series)
    it = np.arange(1, stack.shape[1] + 1)
    return np.column_stack([it, stack.mean(axis=0), stack.std(axis=0), np.full(len(it), len(series))])


def write_aggregate(reports: list, out_dir, n_expected: int) -> dict:
    if len(reports) != n_expected:
        raise ReportError(f"expected {n_expected} runs, got {len(reports)}")
    table = aggregate_series([r.best_so_far() for r in reports])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "mean", "std", "n"])
    for row in table:
        w.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2])), int(row[3])])
    with open(os.path.join(out_dir, "aggregate.csv"), "w") as fh:
        fh.write(buf.getvalue())
    finals = np.array([r.best_speedup for r in reports])
    agg = {
        "schema": SCHEMA_VERSION,
        "algorithm": reports[0].algorithm,
        "n_seeds": len(reports),
        "seeds": [r.seed for r in reports],
        "best_speedup": finals.tolist(),
        "best_speedup_mean": float(finals.mean()),
        "best_speedup_std": float(finals.std()),
        "best_speedup_median": float(np.median(finals)),
    }
    _dump_json(agg, os.path.join(out_dir, "aggregate.json"))
    return agg


# --------------------------------------------------------------------------
# transfer


def transfer(params: GnnParams, trained_on: WorkloadGraph, target: WorkloadGraph, hw: HardwareModel) -> dict:
    """Greedy action of a trained policy on another workload, scored once.

    Node features of the target are scaled with the statistics of the
    training workload, as the policy saw them during training.
    """
    _, normalizer = feature_matrix(trained_on)
    env = MappingEnv(target, hw, normalizer=normalizer)
    out = gnn.forward(params, env.graph_input)
    m = gnn.sample_action(out, "greedy")
    res = env.evaluate(m, "transfer", "gnn")
    rec = env.log[-1]
    return {
        "schema": SCHEMA_VERSION,
        "trained_on": trained_on.name,
        "target": target.name,
        "valid": res.valid,
        "epsilon": res.epsilon,
        "latency": res.latency,
        "baseline_latency": env.baseline,
        "speedup": rec["speedup"],
        "mapping": rec["mapping"],
    }


# --------------------------------------------------------------------------
# mapping analysis


def mapshift(base: MappingDecision, other: MappingDecision, g: WorkloadGraph, normalize: bool = False) -> np.ndarray:
    """3x3 byte-weighted table: entry (i, j) = bytes on level ``i`` in ``base`` and ``j`` in ``other``."""
    if base.n_nodes != g.n_nodes or other.n_nodes != g.n_nodes:
        raise ValueError(f"mapping lengths ({base.n_nodes}, {other.n_nodes}) do not match the workload ({g.n_nodes})")
    nbytes = np.column_stack([g.weight_bytes, g.activation_bytes]).ravel().astype(np.float64)
    table = np.zeros((3, 3))
    np.add.at(table, (base.flat(), other.flat()), nbytes)
    if normalize:
        rows = table.sum(axis=1, keepdims=True)
        table = np.divide(table, rows, out=np.zeros_like(table), where=rows > 0)
    return table


def seed_dirs(run_dir) -> list[str]:
    if not os.path.isdir(run_dir):
        raise ReportError(f"{run_dir} is not a directory")
    found = sorted(
        os.path.join(run_dir, d)
        for d in os.listdir(run_dir)
        if d.startswith("seed_") and os.path.exists(os.path.join(run_dir, d, "evaluations.jsonl"))
    )
    if not found and os.path.exists(os.path.join(run_dir, "evaluations.jsonl")):
        found = [run_dir]
    if not found:
        raise ReportError(f"no run reports under {run_dir}")
    return found


def export_mappings(run_dir, competitive_tol: float = 0.05, best_tol: float = 0.01) -> list[dict]:
    """Every valid recorded mapping as a flat vector with a tag.

    Tags: ``compiler`` for the compiler's own map (always included once per
    seed), ``best`` within ``best_tol`` of the seed's best speedup,
    ``compiler_competitive`` within ``competitive_tol`` of the compiler,
    ``other`` for the rest.
    """
    rows = []
    for d in seed_dirs(run_dir):
        with open(os.path.join(d, "summary.json")) as fh:
            summary = json.load(fh)
        best = summary["best_speedup"]
        rows.append({"seed_dir": os.path.basename(d), "step": 0, "speedup": 1.0, "tag": "compiler", "mapping": summary["compiler_mapping"]})
        for r in read_jsonl(os.path.join(d, "evaluations.jsonl")):
            if not r["valid"]:
                continue
            s = r["speedup"]
            if s >= best * (1 - best_tol):
                tag = "best"
            elif s >= 1 - competitive_tol:
                tag = "compiler_competitive"
            else:
                tag = "other"
            rows.append({"seed_dir": os.path.basename(d), "step": r["step"], "speedup": s, "tag": tag, "mapping": r["mapping"]})
    return rows


def load_seed_workload(seed_dir) -> WorkloadGraph:
    return load_workload(os.path.join(seed_dir, "workload.json"))
