"""Mixed-encoding evolutionary search over mapping policies.

The population holds GNN policies (flat parameter vectors, acting greedily)
and Boltzmann chromosomes (sampled through a temperature-scaled softmax).
Both are scored on the same reward scale, so ranking never needs to know
which encoding a member uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gnn
from .boltzmann import T_MAX, T_MIN, BoltzmannGenome, act, seed_from_gnn
from .env import MappingEnv
from .gnn import GnnConfig, GnnParams
from .hwsim import MappingDecision
from .replay import ReplayBuffer, Transition

GNN = "gnn"
BOLTZMANN = "boltzmann"


def _new_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


@dataclass
class PolicyGenome:
    encoding: str
    payload: object  # np.ndarray for gnn, BoltzmannGenome for boltzmann
    fitness: float | None = None
    age: int = 0
    # seeds the member's own action sampling, so re-evaluating an unchanged
    # genome reproduces its action exactly
    seed: int = 0

    def __post_init__(self):
        if self.encoding == GNN:
            self.payload = np.asarray(self.payload, dtype=np.float64)
            if self.payload.ndim != 1:
                raise ValueError("GNN payload must be a flat vector")
        elif self.encoding == BOLTZMANN:
            if not isinstance(self.payload, BoltzmannGenome):
                raise ValueError("Boltzmann payload must be a BoltzmannGenome")
        else:
            raise ValueError(f"unknown encoding {self.encoding!r}")

    @property
    def uid(self) -> str:
        return f"{self.encoding[0]}{self.seed:016x}"

    def vector(self) -> np.ndarray:
        return self.payload if self.encoding == GNN else self.payload.to_vector()

    def copy(self) -> "PolicyGenome":
        payload = self.payload.copy()
        return PolicyGenome(self.encoding, payload, self.fitness, self.age, self.seed)

    def act(self, env: MappingEnv, config: GnnConfig) -> MappingDecision:
        if self.encoding == GNN:
            out = gnn.forward(GnnParams(config, self.payload), env.graph_input)
            return gnn.sample_action(out, "greedy")
        return act(self.payload, np.random.default_rng(self.seed))

    def probs(self, env: MappingEnv, config: GnnConfig) -> np.ndarray:
        if self.encoding == GNN:
            return gnn.forward(GnnParams(config, self.payload), env.graph_input).probs
        return self.payload.probs()


def n_elites(k: int) -> int:
    return max(1, math.ceil(0.1 * k))


def init_population(
    k: int,
    boltzmann_fraction: float,
    n_nodes: int,
    config: GnnConfig,
    rng: np.random.Generator,
    prior_scale: float = 1.0,
    dram_bias: float = 0.0,
) -> list[PolicyGenome]:
    """``round(k * fraction)`` Boltzmann members first, then GNN members."""
    nb = int(round(k * boltzmann_fraction))
    pop = []
    for i in range(k):
        if i < nb:
            payload = BoltzmannGenome.random(n_nodes, rng, prior_scale, dram_bias)
            pop.append(PolicyGenome(BOLTZMANN, payload, seed=_new_seed(rng)))
        else:
            pop.append(PolicyGenome(GNN, gnn.init_params(config, rng).vector, seed=_new_seed(rng)))
    return pop


def ranking(pop: list[PolicyGenome]) -> list[int]:
    """Indices sorted by fitness (descending), then age (ascending), then index."""
    for i, p in enumerate(pop):
        if p.fitness is None:
            raise ValueError(f"member {i} ({p.uid}) has not been evaluated")
    return sorted(range(len(pop)), key=lambda i: (-pop[i].fitness, pop[i].age, i))


def tournament(order_rank: np.ndarray, size: int, rng: np.random.Generator) -> int:
    """Draw ``size`` entrants with replacement; the best-ranked one wins."""
    entrants = rng.integers(0, len(order_rank), size=size)
    return int(entrants[np.argmin(order_rank[entrants])])


def rank_and_select(pop: list[PolicyGenome], e: int, tournament_size: int, rng: np.random.Generator):
    """Return ``(elite indices, selected indices)`` with ``k - e`` tournament picks."""
    if not 1 <= e <= len(pop):
        raise ValueError(f"elite count {e} outside [1, {len(pop)}]")
    order = ranking(pop)
    rank_of = np.empty(len(pop), dtype=np.int64)
    rank_of[order] = np.arange(len(pop))
    picks = [tournament(rank_of, tournament_size, rng) for _ in range(len(pop) - e)]
    return order[:e], picks


def crossover(a: PolicyGenome, b: PolicyGenome, rng: np.random.Generator) -> PolicyGenome:
    """Single-point crossover: ``a[:cut] + b[cut:]`` with ``cut`` uniform in ``[1, L-1]``."""
    if a.encoding != b.encoding:
        raise ValueError("crossover needs parents of the same encoding; use seed_from_gnn for mixed pairs")
    va, vb = a.vector(), b.vector()
    if va.shape != vb.shape:
        raise ValueError(f"parent lengths differ: {va.size} vs {vb.size}")
    L = va.size
    cut = int(rng.integers(1, L)) if L > 1 else 0
    child = np.concatenate([va[:cut], vb[cut:]])
    if a.encoding == GNN:
        payload = child
    else:
        payload = BoltzmannGenome.from_vector(child, a.payload.n_nodes)
    return PolicyGenome(a.encoding, payload, fitness=b.fitness, seed=_new_seed(rng))


def mutate(g: PolicyGenome, mut_prob: float, sigma: float, rng: np.random.Generator) -> PolicyGenome:
    """Add ``N(0, sigma^2)`` noise with probability ``mut_prob``.

    Boltzmann members are perturbed on priors and log-temperatures, then the
    temperatures are clamped to ``[T_MIN, T_MAX]``. A mutated genome gets a
    fresh action seed.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0 or rng.random() >= mut_prob:
        return g
    if g.encoding == GNN:
        payload = g.payload + rng.normal(0.0, sigma, size=g.payload.shape)
    else:
        b = g.payload
        priors = b.priors + rng.normal(0.0, sigma, size=b.priors.shape)
        log_t = np.log(b.temperatures) + rng.normal(0.0, sigma, size=b.temperatures.shape)
        payload = BoltzmannGenome(priors, np.clip(np.exp(log_t), T_MIN, T_MAX))
    return PolicyGenome(g.encoding, payload, g.fitness, g.age, _new_seed(rng))


def mixed_child(a: PolicyGenome, b: PolicyGenome, env: MappingEnv, config: GnnConfig, rng, one_hot=False) -> PolicyGenome:
    """Cross-encoding offspring: a Boltzmann member seeded from the GNN parent's posterior."""
    gnn_parent, blz_parent = (a, b) if a.encoding == GNN else (b, a)
    if gnn_parent.encoding != GNN or blz_parent.encoding != BOLTZMANN:
        raise ValueError("mixed_child needs one GNN and one Boltzmann parent")
    payload = seed_from_gnn(blz_parent.payload, gnn_parent.probs(env, config), one_hot=one_hot)
    return PolicyGenome(BOLTZMANN, payload, fitness=b.fitness, seed=_new_seed(rng))


@dataclass
class EvolutionParams:
    elites: int = 2
    tournament_size: int = 3
    mutation_prob: float = 0.9
    gnn_sigma: float = 0.1
    boltzmann_sigma: float = 0.3
    seed_one_hot: bool = False


def next_generation(
    pop: list[PolicyGenome],
    params: EvolutionParams,
    env: MappingEnv,
    config: GnnConfig,
    rng: np.random.Generator,
) -> tuple[list[PolicyGenome], dict]:
    """Elites first (unchanged), then mutated survivors and offspring.

    Tournament winners are deduplicated into ``S``; the gap back to ``k - e``
    is filled by pairing a random elite with a random member of ``S``. Same
    encodings cross over, mixed pairs produce a GNN-seeded Boltzmann child.
    Every non-elite keeps the fitness it inherited until it is re-evaluated.
    """
    k = len(pop)
    elite_idx, picks = rank_and_select(pop, params.elites, params.tournament_size, rng)
    elites = [pop[i].copy() for i in elite_idx]
    for p in elites:
        p.age += 1

    chosen = list(dict.fromkeys(picks))
    survivors = []
    for i in chosen:
        p = pop[i].copy()
        p.age += 1
        survivors.append(p)
    n_crossed = n_seeded = 0
    while len(survivors) < k - len(elites) and survivors:
        a = elites[int(rng.integers(len(elites)))]
        b = survivors[int(rng.integers(len(survivors)))]
        if a.encoding == b.encoding:
            survivors.append(crossover(a, b, rng))
            n_crossed += 1
        else:
            survivors.append(mixed_child(a, b, env, config, rng, params.seed_one_hot))
            n_seeded += 1

    children = []
    for p in survivors:
        sigma = params.gnn_sigma if p.encoding == GNN else params.boltzmann_sigma
        children.append(mutate(p, params.mutation_prob, sigma, rng))
    new = elites + children
    assert len(new) == k
    info = {
        "elite_ids": [p.uid for p in elites],
        "n_selected_unique": len(chosen),
        "n_crossover": n_crossed,
        "n_cross_encoding": n_seeded,
    }
    return new, info


def evaluate_population(
    pop: list[PolicyGenome],
    env: MappingEnv,
    config: GnnConfig,
    buffer: ReplayBuffer | None,
) -> np.ndarray:
    """One 1-step episode per member; reward becomes fitness and the transition is stored."""
    fits = np.empty(len(pop))
    for i, p in enumerate(pop):
        m = p.act(env, config)
        res = env.evaluate(m, p.uid, p.encoding)
        p.fitness = res.reward
        fits[i] = res.reward
        if buffer is not None:
            buffer.push(Transition(env.workload_id, m, res.reward))
    return fits


def generation_record(gen: int, pop: list[PolicyGenome], info: dict | None = None) -> dict:
    fits = np.array([p.fitness for p in pop], dtype=np.float64)
    rec = {
        "generation": gen,
        "best_fitness": float(fits.max()),
        "mean_fitness": float(fits.mean()),
        "worst_fitness": float(fits.min()),
        "n_gnn": sum(p.encoding == GNN for p in pop),
        "n_boltzmann": sum(p.encoding == BOLTZMANN for p in pop),
    }
    if info:
        rec.update(info)
    return rec
