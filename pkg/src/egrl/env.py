"""The mapping environment: one workload on one hardware model.

Every simulator evaluation made by any search method goes through
``MappingEnv.evaluate``, which counts it as one iteration and appends one
record to the evaluation log. Nothing else calls the reward function during
a run, so the iteration counter and the log length always agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .gnn import GraphInput, prepare
from .hwsim import EvalResult, HardwareModel, MappingDecision, baseline_latency, compiler_map, compute_reward
from .workload import Normalizer, WorkloadGraph, feature_matrix


@dataclass
class MappingEnv:
    g: WorkloadGraph
    hw: HardwareModel
    invalid_penalty: float = 1.0
    normalizer: Normalizer | None = None
    keep_log: bool = True
    steps: int = 0
    log: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.compiler = compiler_map(self.g, self.hw)
        self.baseline = baseline_latency(self.g, self.hw)
        self.omega_baseline = 1.0 / self.baseline
        if self.normalizer is None:
            _, self.normalizer = feature_matrix(self.g)
        self.graph_input: GraphInput = prepare(self.g, self.normalizer)
        self.best_speedup = 0.0
        self.best_mapping: MappingDecision | None = None

    @property
    def workload_id(self) -> str:
        return self.g.name

    def evaluate(self, m: MappingDecision, policy_id: str, encoding: str) -> EvalResult:
        res = compute_reward(self.g, self.hw, m, self.omega_baseline, self.invalid_penalty)
        self.steps += 1
        speedup = res.speedup(self.baseline)
        if speedup > self.best_speedup:
            self.best_speedup = speedup
            self.best_mapping = m
        if self.keep_log:
            self.log.append(
                {
                    "step": self.steps,
                    "policy": policy_id,
                    "encoding": encoding,
                    "valid": res.valid,
                    "epsilon": res.epsilon,
                    "latency": res.latency,
                    "reward": res.reward,
                    "speedup": speedup,
                    "best_speedup": self.best_speedup,
                    "mapping": m.flat().tolist(),
                }
            )
        return res
