"""Reuse a trained policy on an unseen workload and compare placements.

A GNN policy trained briefly on a ResNet-like graph is applied to a BERT-like
graph without retraining. The table shows where the best map moved bytes
relative to the compiler.
"""

import numpy as np

from egrl.config import WorkloadSection, desk_config
from egrl.hwsim import LEVEL_NAMES, compiler_map
from egrl.orchestrator import load_problem, run_egrl
from egrl.report import mapshift, transfer
from egrl.workload import generate_synthetic

cfg = desk_config(workload=WorkloadSection("resnet_like", 20, 0))
cfg.environment.total_steps = 1050
rep = run_egrl(cfg)
src, hw = load_problem(cfg)
print(f"trained on {src.name}: best x{rep.best_speedup:.4f}, GNN policy x{rep.gnn_policy_speedup:.4f}")

dst = generate_synthetic("bert_like", 30, 0)
out = transfer(rep.gnn_policy, src, dst, hw)
print(f"zero-shot on {dst.name}: x{out['speedup']:.4f} (valid={out['valid']})")

table = mapshift(compiler_map(src, hw), rep.best_mapping, src, normalize=True)
np.set_printoptions(precision=3, suppress=True)
print("byte share moved, rows = compiler level, columns = best-map level", LEVEL_NAMES)
print(table)
