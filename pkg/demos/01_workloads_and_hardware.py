"""Workloads, the desk accelerator and the compiler heuristic.

Builds a 57-node ResNet-like graph, places it with the compiler heuristic and
shows what happens when a hand-made map overfills on-chip memory.
"""

import numpy as np

from egrl.hwsim import LEVEL_NAMES, HardwareModel, MappingDecision, baseline_latency, compiler_map, compute_reward, rectify
from egrl.workload import generate_synthetic

g = generate_synthetic("resnet_like", 57, seed=0)
hw = HardwareModel.desk()
print(f"{g.name}: {g.n_nodes} nodes, {len(g.edges)} edges, action space 10^{g.action_space_log10:.0f}")
print(f"weights {g.weight_bytes.sum():,} B, activations {g.activation_bytes.sum():,} B")
print("capacities", dict(zip(LEVEL_NAMES, hw.capacities.tolist())))

m = compiler_map(g, hw)
counts = np.bincount(m.flat(), minlength=3)
print("compiler map tensors per level", dict(zip(LEVEL_NAMES, counts.tolist())))
print(f"compiler latency {baseline_latency(g, hw) * 1e3:.3f} ms")

# everything in SRAM cannot fit; the reward is the negative spilled fraction
greedy = MappingDecision.uniform(g.n_nodes, 2)
res = compute_reward(g, hw, greedy, 1 / baseline_latency(g, hw))
fixed, eps = rectify(g, hw, greedy)
print(f"all-SRAM map: valid={res.valid} epsilon={res.epsilon:.3f} reward={res.reward:.3f}")
print("after rectification", dict(zip(LEVEL_NAMES, np.bincount(fixed.flat(), minlength=3).tolist())))
