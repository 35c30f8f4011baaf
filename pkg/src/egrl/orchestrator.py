"""The EGRL training loop and its ablations.

One generation evaluates the population, runs the policy-gradient rollouts,
breeds the next population, performs one SAC update per environment step
taken this generation, migrates the learner into the population and, every
few generations, reseeds the weakest Boltzmann member from the learner.

The pure-EA baseline is this loop with the learner switched off; the pure-PG
baseline is the learner alone. All three share the environment, so budget
accounting and the report schema are the same.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from . import gnn
from .boltzmann import seed_from_gnn
from .config import RunConfig
from .env import MappingEnv
from .evolution import (
    BOLTZMANN,
    GNN,
    EvolutionParams,
    PolicyGenome,
    evaluate_population,
    generation_record,
    init_population,
    next_generation,
    ranking,
)
from .gnn import GnnConfig, GnnParams
from .hwsim import HardwareModel, MappingDecision
from .replay import ReplayBuffer, Transition
from .sac import SacConfig, SacLearner
from .workload import WorkloadGraph, generate_synthetic, load_workload

logger = logging.getLogger(__name__)

REPORT_SCHEMA = 1


@dataclass
class RunReport:
    algorithm: str
    seed: int
    workload: str
    n_nodes: int
    baseline_latency: float
    iterations: int
    generations: int
    evaluations: list[dict]
    generation_log: list[dict]
    best_speedup: float
    best_mapping: MappingDecision | None
    deployed: dict
    gnn_policy: GnnParams | None = None
    gnn_policy_speedup: float | None = None
    pg_actor: GnnParams | None = None
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "algorithm": self.algorithm,
            "seed": self.seed,
            "workload": self.workload,
            "n_nodes": self.n_nodes,
            "baseline_latency": self.baseline_latency,
            "iterations": self.iterations,
            "generations": self.generations,
            "best_speedup": self.best_speedup,
            "best_mapping": None if self.best_mapping is None else self.best_mapping.flat().tolist(),
            "deployed": self.deployed,
            "gnn_policy_speedup": self.gnn_policy_speedup,
            "iteration_unit": "one simulator evaluation of a proposed mapping; learner updates are not counted",
            **self.extra,
        }

    def best_so_far(self) -> np.ndarray:
        return np.array([r["best_speedup"] for r in self.evaluations])


def gnn_config(cfg: RunConfig) -> GnnConfig:
    return GnnConfig(hidden=cfg.gnn.hidden_layer_size, depth=cfg.gnn.depth, heads=cfg.gnn.attention_heads)


def sac_config(cfg: RunConfig) -> SacConfig:
    p = cfg.pg
    return SacConfig(
        critic_lr=p.critic_lr,
        actor_lr=p.actor_lr,
        alpha=p.alpha,
        gamma=p.discount,
        tau=p.tau,
        batch_size=p.batch_size,
        reward_scale=p.reward_scaling,
        noise_sigma=p.noise_sigma,
        noise_clip=p.noise_clip,
    )


def load_problem(cfg: RunConfig) -> tuple[WorkloadGraph, HardwareModel]:
    w = cfg.workload
    g = load_workload(w.path) if w.path else generate_synthetic(w.kind, w.n_nodes, w.seed)
    hw = cfg.hardware
    if isinstance(hw, str):
        hw = HardwareModel.preset(hw)
    elif isinstance(hw, dict) and set(hw) == {"path"}:
        with open(hw["path"]) as fh:
            hw = HardwareModel.from_dict(json.load(fh))
    elif not isinstance(hw, HardwareModel):
        hw = HardwareModel.from_dict(hw)
    return g, hw


def migrate(pop: list[PolicyGenome], actor: GnnParams, rng: np.random.Generator, protect: int = 0) -> int:
    """Overwrite the weakest member (by last fitness) with a GNN copy of the actor.

    The first ``protect`` positions (the elites) are never chosen. Ties go to
    the highest index. Returns the replaced index.
    """
    cand = [i for i in range(protect, len(pop))] or list(range(len(pop)))
    fits = np.array([-np.inf if pop[i].fitness is None else pop[i].fitness for i in cand])
    low = np.flatnonzero(fits == fits.min())
    victim = cand[int(low[-1])]
    pop[victim] = PolicyGenome(GNN, actor.vector.copy(), fitness=None, seed=int(rng.integers(0, 2**63 - 1)))
    return victim


def reseed_boltzmann(
    pop: list[PolicyGenome], actor: GnnParams, env: MappingEnv, rng: np.random.Generator, protect: int = 0, one_hot=False
) -> int | None:
    """Reseed the weakest Boltzmann member from the actor's posterior; ``None`` if there is none."""
    cand = [i for i in range(len(pop)) if pop[i].encoding == BOLTZMANN]
    unprotected = [i for i in cand if i >= protect]
    cand = unprotected or cand
    if not cand:
        return None
    fits = np.array([-np.inf if pop[i].fitness is None else pop[i].fitness for i in cand])
    victim = cand[int(np.flatnonzero(fits == fits.min())[-1])]
    probs = gnn.forward(actor, env.graph_input).probs
    payload = seed_from_gnn(pop[victim].payload, probs, one_hot=one_hot)
    pop[victim] = PolicyGenome(BOLTZMANN, payload, fitness=None, seed=int(rng.integers(0, 2**63 - 1)))
    return victim


def _streams(seed: int):
    """Independent generators for population init, evolution, learner and rollouts."""
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def run_egrl(
    cfg: RunConfig,
    *,
    use_pg: bool = True,
    use_migration: bool = True,
    use_reseed: bool = True,
    max_generations: int | None = None,
    env: MappingEnv | None = None,
    on_generation: Callable[[int, list[PolicyGenome], dict], None] | None = None,
) -> RunReport:
    """Run the full loop until no further full generation fits in the step budget.

    ``on_generation(gen, population, record)`` is called with each freshly
    evaluated population before it is bred.
    """
    if env is None:
        g, hw = load_problem(cfg)
        env = MappingEnv(g, hw, cfg.environment.invalid_penalty)
    g = env.g
    config = gnn_config(cfg)
    k = cfg.ea.population_size
    e = cfg.n_elites
    rollouts = cfg.pg.rollout_size if use_pg else 0
    per_gen = k + rollouts
    budget = cfg.environment.total_steps
    n_gen = budget // per_gen
    if max_generations is not None:
        n_gen = min(n_gen, max_generations)
    if n_gen < 1:
        raise ValueError(f"step budget {budget} is smaller than one generation ({per_gen} evaluations)")

    r_init, r_evo, r_learn, r_roll = _streams(cfg.seed)
    pop = init_population(
        k, cfg.ea.boltzmann_fraction, g.n_nodes, config, r_init, cfg.ea.boltzmann_prior_scale, cfg.ea.boltzmann_dram_bias
    )
    params = EvolutionParams(
        elites=e,
        tournament_size=cfg.ea.tournament_size,
        mutation_prob=cfg.ea.mutation_prob,
        gnn_sigma=cfg.ea.gnn_mutation_sigma,
        boltzmann_sigma=cfg.ea.boltzmann_mutation_sigma,
        seed_one_hot=cfg.ea.seed_one_hot,
    )
    buffer = ReplayBuffer(cfg.pg.replay_buffer_size)
    learner = None
    if use_pg:
        learner = SacLearner.create(config, sac_config(cfg), {env.workload_id: env.graph_input}, r_learn)

    gen_log = []
    last = None
    for gen in range(n_gen):
        start = len(env.log)
        evaluate_population(pop, env, config, buffer)
        last = (pop, ranking(pop), [r["speedup"] for r in env.log[start:]])
        pg_rewards = []
        for _ in range(rollouts):
            out = gnn.forward(learner.policy, env.graph_input)
            m = gnn.sample_action(out, "stochastic", r_roll)
            res = env.evaluate(m, "pg", "pg")
            buffer.push(Transition(env.workload_id, m, res.reward))
            pg_rewards.append(res.reward)
        rec = generation_record(gen, pop)
        rec["steps"] = env.steps
        rec["buffer"] = len(buffer)
        if pg_rewards:
            rec["pg_reward"] = float(np.mean(pg_rewards))
        if on_generation is not None:
            on_generation(gen, pop, rec)

        pop, info = next_generation(pop, params, env, config, r_evo)
        rec.update(info)

        if learner is not None and len(buffer) >= cfg.pg.batch_size:
            n_up = per_gen * cfg.pg.gradient_steps_per_env_step
            losses = np.zeros(2)
            for _ in range(n_up):
                losses += learner.step(buffer.sample(cfg.pg.batch_size, r_learn))
            if n_up:
                rec["critic_loss"], rec["actor_loss"] = (losses / n_up).tolist()
        if learner is not None and use_migration and (gen + 1) % cfg.egrl.migration_every == 0:
            rec["migrated_into"] = migrate(pop, learner.policy, r_evo, protect=e)
        if learner is not None and use_reseed and (gen + 1) % cfg.egrl.reseed_every == 0:
            rec["reseeded"] = reseed_boltzmann(pop, learner.policy, env, r_evo, protect=e, one_hot=cfg.ea.seed_one_hot)
        gen_log.append(rec)

    # the deployment pick is the top-ranked member of the last evaluated
    # population (it also survives as the first elite of the bred one)
    evaluated, order, speedups = last
    top = order[0]
    deployed = {
        "policy": evaluated[top].uid,
        "encoding": evaluated[top].encoding,
        "fitness": evaluated[top].fitness,
        "speedup": speedups[top],
    }
    gnn_rank = [i for i in order if evaluated[i].encoding == GNN]
    gnn_policy = gnn_speedup = None
    if gnn_rank:
        gnn_policy = GnnParams(config, evaluated[gnn_rank[0]].payload.copy())
        gnn_speedup = speedups[gnn_rank[0]]
    return RunReport(
        algorithm="egrl" if use_pg else "ea",
        seed=cfg.seed,
        workload=g.name,
        n_nodes=g.n_nodes,
        baseline_latency=env.baseline,
        iterations=env.steps,
        generations=n_gen,
        evaluations=env.log,
        generation_log=gen_log,
        best_speedup=env.best_speedup,
        best_mapping=env.best_mapping,
        deployed=deployed,
        gnn_policy=gnn_policy,
        gnn_policy_speedup=gnn_speedup,
        pg_actor=None if learner is None else learner.policy,
    )


def run_ea(cfg: RunConfig, **kw) -> RunReport:
    """The evolutionary baseline: EGRL without learner, migration or reseeding."""
    return run_egrl(cfg, use_pg=False, use_migration=False, use_reseed=False, **kw)


def run_pg(cfg: RunConfig, env: MappingEnv | None = None) -> RunReport:
    """The learner alone, filling the buffer with its own stochastic rollouts.

    The last evaluation of the budget is a greedy rollout of the final actor,
    which is the policy this baseline deploys.
    """
    if env is None:
        g, hw = load_problem(cfg)
        env = MappingEnv(g, hw, cfg.environment.invalid_penalty)
    config = gnn_config(cfg)
    _, _, r_learn, r_roll = _streams(cfg.seed)
    buffer = ReplayBuffer(cfg.pg.replay_buffer_size)
    learner = SacLearner.create(config, sac_config(cfg), {env.workload_id: env.graph_input}, r_learn)
    budget = cfg.environment.total_steps
    log = []
    block = max(1, cfg.pg.rollout_size)
    while env.steps < budget - 1:
        n = min(block, budget - 1 - env.steps)
        for _ in range(n):
            out = gnn.forward(learner.policy, env.graph_input)
            m = gnn.sample_action(out, "stochastic", r_roll)
            res = env.evaluate(m, "pg", "pg")
            buffer.push(Transition(env.workload_id, m, res.reward))
        rec = {"generation": len(log), "steps": env.steps, "buffer": len(buffer), "pg_reward": res.reward}
        if len(buffer) >= cfg.pg.batch_size:
            n_up = n * cfg.pg.gradient_steps_per_env_step
            losses = np.zeros(2)
            for _ in range(n_up):
                losses += learner.step(buffer.sample(cfg.pg.batch_size, r_learn))
            if n_up:
                rec["critic_loss"], rec["actor_loss"] = (losses / n_up).tolist()
        log.append(rec)
    m = gnn.sample_action(gnn.forward(learner.policy, env.graph_input), "greedy")
    res = env.evaluate(m, "pg", "pg")
    buffer.push(Transition(env.workload_id, m, res.reward))
    speedup = env.log[-1]["speedup"]
    return RunReport(
        algorithm="pg",
        seed=cfg.seed,
        workload=env.g.name,
        n_nodes=env.g.n_nodes,
        baseline_latency=env.baseline,
        iterations=env.steps,
        generations=len(log),
        evaluations=env.log,
        generation_log=log,
        best_speedup=env.best_speedup,
        best_mapping=env.best_mapping,
        deployed={"policy": "pg", "encoding": GNN, "fitness": res.reward, "speedup": speedup},
        gnn_policy=learner.policy,
        gnn_policy_speedup=speedup,
        pg_actor=learner.policy,
    )


def run(cfg: RunConfig) -> RunReport:
    """Dispatch on ``cfg.algorithm``."""
    from .baselines import run_greedy_dp

    if cfg.algorithm == "egrl":
        return run_egrl(cfg)
    if cfg.algorithm == "ea":
        return run_ea(cfg)
    if cfg.algorithm == "pg":
        return run_pg(cfg)
    return run_greedy_dp(cfg)
