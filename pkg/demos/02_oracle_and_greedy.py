"""Exhaustive optimum versus the greedy baseline on a four-node graph.

With at most six nodes every one of the 9^N maps can be scored, which gives
a ground truth for the heuristics. On the desk preset small graphs are
compute-bound and the compiler is already optimal; with a faster compute
unit memory placement matters and the heuristics fall behind.
"""

from egrl.baselines import exhaustive_oracle, greedy_dp
from egrl.hwsim import DEFAULT_COMPUTE_RATE, HardwareModel, baseline_latency, simulate_latency
from egrl.workload import generate_synthetic

desk = HardwareModel.desk()
fast = HardwareModel.build(desk.capacities, desk.bandwidths, DEFAULT_COMPUTE_RATE)
for label, hw in (("desk", desk), ("fast compute", fast)):
    print(label)
    for kind in ("chain", "resnet_like", "bert_like"):
        g = generate_synthetic(kind, 4, seed=1)
        base = baseline_latency(g, hw)
        om, olat = exhaustive_oracle(g, hw)
        gm, trials = greedy_dp(g, hw)
        glat = simulate_latency(g, hw, gm)
        print(f"  {kind:12s} oracle x{base / olat:.4f}  greedy x{base / glat:.4f} ({len(trials)} evaluations)")
