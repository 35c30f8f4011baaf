import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import tiny_hw, two_weight_graph
from egrl import gnn
from egrl.boltzmann import T_MAX, T_MIN, BoltzmannGenome
from egrl.env import MappingEnv
from egrl.evolution import (
    BOLTZMANN,
    GNN,
    EvolutionParams,
    PolicyGenome,
    crossover,
    evaluate_population,
    init_population,
    mixed_child,
    mutate,
    n_elites,
    next_generation,
    rank_and_select,
    ranking,
    tournament,
)
from egrl.gnn import GnnConfig
from egrl.hwsim import HardwareModel
from egrl.replay import ReplayBuffer
from egrl.workload import generate_synthetic

CFG = GnnConfig(hidden=8, depth=1, heads=2)


def _gnn(fitness=None, age=0, seed=0, value=0.0):
    n = gnn.param_count(CFG)
    return PolicyGenome(GNN, np.full(n, value), fitness=fitness, age=age, seed=seed)


def _blz(n_nodes=3, fitness=None, seed=0):
    return PolicyGenome(BOLTZMANN, BoltzmannGenome.random(n_nodes, np.random.default_rng(seed)), fitness=fitness, seed=seed)


def _pinned(levels):
    """A Boltzmann member that emits ``levels`` with certainty."""
    levels = np.asarray(levels)
    priors = np.zeros(levels.shape + (3,))
    np.put_along_axis(priors, levels[..., None], 1.0, axis=-1)
    return PolicyGenome(BOLTZMANN, BoltzmannGenome(priors, np.full(levels.shape, T_MIN)))


def test_elite_count():
    assert [n_elites(k) for k in (1, 3, 10, 20, 21)] == [1, 1, 1, 2, 3]


def test_argmax_is_the_elite():
    pop = [_gnn(5.0), _gnn(1.0), _gnn(3.0)]
    elites, picks = rank_and_select(pop, 1, 3, np.random.default_rng(0))
    assert elites == [0]
    assert len(picks) == 2


def test_ranking_ties_prefer_younger_then_lower_index():
    pop = [_gnn(1.0, age=3), _gnn(1.0, age=1), _gnn(1.0, age=1), _gnn(2.0, age=9)]
    assert ranking(pop) == [3, 1, 2, 0]
    with pytest.raises(ValueError):
        ranking(pop + [_gnn()])


def test_single_candidate_tournament():
    assert tournament(np.array([0]), 3, np.random.default_rng(0)) == 0


def test_selection_pressure():
    rank_of = np.arange(5)
    rng = np.random.default_rng(0)
    wins = np.bincount([tournament(rank_of, 3, rng) for _ in range(10000)], minlength=5)
    assert np.all(np.diff(wins) < 0)
    # P(best wins a 3-way tournament with replacement) = 1 - (4/5)^3
    assert wins[0] / 10000 == pytest.approx(1 - 0.8**3, abs=0.02)


def test_selection_is_seeded():
    pop = [_gnn(float(i)) for i in range(8)]
    a = rank_and_select(pop, 1, 3, np.random.default_rng(4))
    b = rank_and_select(pop, 1, 3, np.random.default_rng(4))
    assert a == b


# --------------------------------------------------------------------------
# variation


def test_crossover_identical_parents():
    a = _gnn(value=0.7)
    child = crossover(a, a.copy(), np.random.default_rng(0))
    assert np.array_equal(child.payload, a.payload)


@given(st.integers(0, 2**32 - 1))
def test_crossover_is_a_single_cut(seed):
    rng = np.random.default_rng(seed)
    a, b = _gnn(value=1.0), _gnn(value=2.0)
    child = crossover(a, b, rng)
    v = child.payload
    assert v.size == a.payload.size
    cut = int(np.argmax(v == 2.0))
    assert 1 <= cut <= v.size - 1
    assert np.all(v[:cut] == 1.0) and np.all(v[cut:] == 2.0)


def test_boltzmann_crossover_and_mixed_routing():
    a, b = _blz(seed=1), _blz(seed=2)
    child = crossover(a, b, np.random.default_rng(0))
    assert child.encoding == BOLTZMANN
    assert child.vector().size == a.vector().size
    with pytest.raises(ValueError):
        crossover(a, _gnn(), np.random.default_rng(0))


def test_mixed_child_copies_gnn_posterior():
    g = generate_synthetic("chain", 3, 0)
    env = MappingEnv(g, HardwareModel.desk())
    parent = PolicyGenome(GNN, gnn.init_params(CFG, np.random.default_rng(0)).vector)
    child = mixed_child(parent, _blz(seed=3, fitness=0.5), env, CFG, np.random.default_rng(0))
    assert child.encoding == BOLTZMANN
    assert np.abs(child.payload.probs() - parent.probs(env, CFG)).max() < 1e-9


def test_mutation_noops():
    g = _gnn(value=0.5)
    assert mutate(g, 0.9, 0.0, np.random.default_rng(0)) is g
    assert mutate(g, 0.0, 1.0, np.random.default_rng(0)) is g
    with pytest.raises(ValueError):
        mutate(g, 0.9, -1.0, np.random.default_rng(0))


def test_mutation_noise_scale():
    g = _gnn(value=0.0)
    child = mutate(g, 1.0, 0.1, np.random.default_rng(0))
    assert child.payload.std() == pytest.approx(0.1, rel=0.1)
    assert child.seed != g.seed


def test_boltzmann_mutation_keeps_temperatures_clamped():
    rng = np.random.default_rng(0)
    g = _blz(n_nodes=5)
    for _ in range(1000):
        g = mutate(g, 1.0, 3.0, rng)
        t = g.payload.temperatures
        assert t.min() >= T_MIN and t.max() <= T_MAX


# --------------------------------------------------------------------------
# evaluation and generations


def test_compiler_map_member_scores_one():
    g = generate_synthetic("chain", 4, 0)
    env = MappingEnv(g, HardwareModel.desk())
    buf = ReplayBuffer(10)
    pop = [_pinned(env.compiler.levels)]
    fits = evaluate_population(pop, env, CFG, buf)
    assert fits.tolist() == [1.0]
    assert pop[0].fitness == 1.0
    assert len(buf) == 1


def test_invalid_member_scores_minus_epsilon():
    g = two_weight_graph()
    env = MappingEnv(g, tiny_hw())
    buf = ReplayBuffer(10)
    pop = [_pinned([[2, 0], [2, 0]])]
    evaluate_population(pop, env, CFG, buf)
    assert pop[0].fitness == pytest.approx(-0.4)
    assert len(buf) == 1 and buf.contents()[0].reward == pytest.approx(-0.4)


def test_one_transition_per_member():
    g = generate_synthetic("resnet_like", 10, 0)
    env = MappingEnv(g, HardwareModel.desk())
    pop = init_population(20, 0.2, g.n_nodes, CFG, np.random.default_rng(0))
    buf = ReplayBuffer(100)
    evaluate_population(pop, env, CFG, buf)
    assert len(buf) == 20 and env.steps == 20


def test_init_population_mix():
    pop = init_population(20, 0.2, 5, CFG, np.random.default_rng(0))
    kinds = [p.encoding for p in pop]
    assert kinds == [BOLTZMANN] * 4 + [GNN] * 16
    assert len({p.seed for p in pop}) == 20


def test_re_evaluating_a_copy_is_reproducible():
    g = generate_synthetic("bert_like", 8, 0)
    env = MappingEnv(g, HardwareModel.desk())
    pop = init_population(6, 0.5, g.n_nodes, CFG, np.random.default_rng(1))
    a = evaluate_population(pop, env, CFG, None)
    b = evaluate_population([p.copy() for p in pop], env, CFG, None)
    assert np.array_equal(a, b)


@given(st.integers(0, 2**32 - 1))
def test_next_generation_invariants(seed):
    g = generate_synthetic("resnet_like", 6, 0)
    env = MappingEnv(g, HardwareModel.desk(), keep_log=False)
    rng = np.random.default_rng(seed)
    pop = init_population(10, 0.3, g.n_nodes, CFG, rng)
    evaluate_population(pop, env, CFG, None)
    params = EvolutionParams(elites=2, boltzmann_sigma=2.0)
    order = ranking(pop)
    new, info = next_generation(pop, params, env, CFG, rng)
    assert len(new) == 10
    for i, elite in zip(order[:2], new[:2]):
        assert np.array_equal(elite.vector(), pop[i].vector())
        assert elite.fitness == pop[i].fitness and elite.age == pop[i].age + 1
    assert info["n_selected_unique"] + info["n_crossover"] + info["n_cross_encoding"] == 8
    for p in new:
        if p.encoding == BOLTZMANN:
            assert T_MIN <= p.payload.temperatures.min() and p.payload.temperatures.max() <= T_MAX
