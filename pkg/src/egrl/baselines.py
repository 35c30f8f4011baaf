"""Non-learning baselines: greedy per-node search and exhaustive enumeration.

The EA and PG baselines live with the training loop in ``orchestrator`` and
are re-exported here.
"""

from __future__ import annotations

import numpy as np

from .config import RunConfig
from .env import MappingEnv
from .hwsim import HardwareModel, MappingDecision, latency_batch, layout
from .orchestrator import RunReport, load_problem, run_ea, run_pg
from .workload import WorkloadGraph

__all__ = ["greedy_dp", "exhaustive_oracle", "run_greedy_dp", "run_ea", "run_pg", "ORACLE_MAX_NODES"]

ORACLE_MAX_NODES = 6

# the nine (weight, activation) level pairs in lexicographic order
_PAIRS = [(w, a) for w in range(3) for a in range(3)]


def greedy_dp(g: WorkloadGraph, hw: HardwareModel, passes: int = 3, env: MappingEnv | None = None):
    """Serial per-node search from the all-DRAM map.

    For each node in execution order all nine level pairs are tried with the
    rest of the map fixed, and the best is committed immediately (reward
    ties go to the lexicographically lower pair). Passes repeat until one
    changes nothing or ``passes`` is reached. Returns the final mapping and
    the reward of every trial, in order.
    """
    if passes < 1:
        raise ValueError("passes must be >= 1")
    env = env or MappingEnv(g, hw)
    levels = np.zeros((g.n_nodes, 2), dtype=np.int64)
    trajectory = []
    for p in range(passes):
        changed = False
        for node in g.order:
            rewards = []
            for pair in _PAIRS:
                trial = levels.copy()
                trial[node] = pair
                res = env.evaluate(MappingDecision(trial), f"greedy_dp/pass{p}", "greedy_dp")
                rewards.append(res.reward)
            trajectory.extend(rewards)
            best = _PAIRS[int(np.argmax(rewards))]
            if tuple(levels[node]) != best:
                levels[node] = best
                changed = True
        if not changed:
            break
    return MappingDecision(levels), trajectory


def _all_levels(n_tensors: int, lo: int, hi: int) -> np.ndarray:
    """Rows ``lo..hi-1`` of the lexicographic enumeration of ``{0,1,2}^n_tensors``."""
    idx = np.arange(lo, hi, dtype=np.int64)
    powers = 3 ** np.arange(n_tensors - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers) % 3


def exhaustive_oracle(g: WorkloadGraph, hw: HardwareModel, chunk: int = 1 << 16) -> tuple[MappingDecision, float]:
    """Lowest-latency valid mapping over all ``9^N`` candidates.

    Every rectified map is itself a valid candidate, so the minimum over valid
    candidates equals the minimum over rectified proposals. Ties go to the
    lexicographically smallest flat vector.
    """
    n = g.n_nodes
    if n > ORACLE_MAX_NODES:
        raise ValueError(f"exhaustive search over 9^{n} maps is too large (limit N <= {ORACLE_MAX_NODES})")
    lay = layout(g)
    steps = np.arange(n)
    live = ((lay.start[:, None] <= steps) & (lay.end[:, None] >= steps)).astype(np.float64)  # (2N, N)
    caps = hw.capacities
    total = 9**n
    best_lat, best_row = np.inf, None
    for lo in range(0, total, chunk):
        lv = _all_levels(2 * n, lo, min(total, lo + chunk))
        ok = np.ones(len(lv), dtype=bool)
        for level in range(3):
            usage = ((lv == level) * lay.nbytes) @ live
            ok &= np.all(usage <= caps[level], axis=1)
        if not ok.any():
            continue
        cand = lv[ok]
        lat = latency_batch(g, hw, cand)
        i = int(np.argmin(lat))
        if lat[i] < best_lat:
            best_lat, best_row = float(lat[i]), cand[i]
    if best_row is None:
        raise ValueError("no valid mapping exists")
    return MappingDecision(best_row), best_lat


def run_greedy_dp(cfg: RunConfig, env: MappingEnv | None = None) -> RunReport:
    if env is None:
        g, hw = load_problem(cfg)
        env = MappingEnv(g, hw, cfg.environment.invalid_penalty)
    m, traj = greedy_dp(env.g, env.hw, cfg.greedy_dp.passes, env=env)
    # the committed map was evaluated as one of the trials of the last pass
    flat = m.flat().tolist()
    final = next(r for r in reversed(env.log) if r["mapping"] == flat)
    n_pass = len(traj) // (9 * env.g.n_nodes)
    return RunReport(
        algorithm="greedy_dp",
        seed=cfg.seed,
        workload=env.g.name,
        n_nodes=env.g.n_nodes,
        baseline_latency=env.baseline,
        iterations=env.steps,
        generations=n_pass,
        evaluations=env.log,
        generation_log=[{"generation": p, "steps": 9 * env.g.n_nodes * (p + 1)} for p in range(n_pass)],
        best_speedup=env.best_speedup,
        best_mapping=env.best_mapping,
        deployed={"policy": "greedy_dp", "encoding": "greedy_dp", "fitness": final["reward"], "speedup": final["speedup"]},
    )
