"""A short EGRL run next to the pure evolutionary baseline.

Uses the laptop configuration on a 20-node graph with a 1000-evaluation
budget, so it finishes in well under a minute.
"""

from egrl.config import WorkloadSection, desk_config
from egrl.orchestrator import run_ea, run_egrl

cfg = desk_config(workload=WorkloadSection("resnet_like", 20, 0), seed=1)
cfg.environment.total_steps = 1000


def progress(gen, pop, rec):
    if gen % 10 == 0:
        print(f"  gen {gen:3d}  best fitness {rec['best_fitness']:+.4f}  gnn/boltzmann {rec['n_gnn']}/{rec['n_boltzmann']}")


print("EGRL")
egrl = run_egrl(cfg, on_generation=progress)
print("EA")
ea = run_ea(cfg, on_generation=progress)
for rep in (egrl, ea):
    print(f"{rep.algorithm:5s} best speedup {rep.best_speedup:.4f} after {rep.iterations} evaluations")
