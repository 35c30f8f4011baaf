import inspect
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from egrl.boltzmann import (
    T_MAX,
    T_MIN,
    BoltzmannGenome,
    act,
    boltzmann_probs,
    entropy,
    load_genome,
    save_genome,
    seed_from_gnn,
)
from egrl.gnn import CheckpointError
from egrl.hwsim import SRAM

priors3 = arrays(np.float64, 3, elements=st.floats(-5, 5))


def test_closed_form_at_unit_temperature():
    p = boltzmann_probs([1.0, 0.0, 0.0], 1.0)
    e = math.e
    assert np.allclose(p, [e / (e + 2), 1 / (e + 2), 1 / (e + 2)], atol=1e-15)
    assert np.allclose(p, [0.5761, 0.2119, 0.2119], atol=1e-4)


def test_cold_limit_picks_argmax():
    p = boltzmann_probs([0.7, 0.2, 0.1], T_MIN)
    assert p[0] == pytest.approx(1.0)
    assert np.argmax(p) == 0


# sup over |priors| <= 1 of the distance to uniform at T = 10, reached at (1, -1, -1)
HOT_SUP = math.exp(0.1) / (math.exp(0.1) + 2 * math.exp(-0.1)) - 1 / 3


def test_hot_limit_worst_case():
    assert HOT_SUP == pytest.approx(0.04582, abs=1e-5)
    p = boltzmann_probs([1.0, -1.0, -1.0], 10.0)
    assert p[0] - 1 / 3 == pytest.approx(HOT_SUP, rel=1e-12)
    grid = np.linspace(-1, 1, 21)
    corners = np.array(np.meshgrid(grid, grid, grid)).reshape(3, -1).T
    assert np.abs(boltzmann_probs(corners, 10.0) - 1 / 3).max() <= HOT_SUP + 1e-15


@given(arrays(np.float64, 3, elements=st.floats(-1, 1)))
def test_hot_limit_is_near_uniform(priors):
    assert np.all(np.abs(boltzmann_probs(priors, T_MAX) - 1 / 3) <= HOT_SUP + 1e-15)


@given(arrays(np.float64, 3, elements=st.floats(-0.8, 0.8)))
def test_hot_limit_within_004_for_moderate_priors(priors):
    assert np.all(np.abs(boltzmann_probs(priors, T_MAX) - 1 / 3) < 0.04)


@given(priors3, st.floats(-50, 50), st.floats(1e-2, 10))
def test_shift_invariance(priors, c, t):
    assert np.allclose(boltzmann_probs(priors, t), boltzmann_probs(priors + c, t), atol=1e-12)


@given(priors3.filter(lambda p: np.ptp(p) > 1e-3))
def test_entropy_non_decreasing_in_temperature(priors):
    grid = np.geomspace(T_MIN, T_MAX, 10)
    h = [entropy(boltzmann_probs(priors, t)) for t in grid]
    assert np.all(np.diff(h) >= -1e-12)


def test_non_positive_temperature_rejected():
    with pytest.raises(ValueError):
        boltzmann_probs([0, 0, 0], 0.0)
    with pytest.raises(ValueError):
        BoltzmannGenome(np.zeros((2, 2, 3)), np.array([[1.0, -1.0], [1.0, 1.0]]))


def test_act_takes_no_graph():
    assert list(inspect.signature(act).parameters) == ["genome", "rng"]


def test_one_hot_sram_priors_at_low_temperature():
    priors = np.zeros((6, 2, 3))
    priors[..., SRAM] = 1.0
    g = BoltzmannGenome(priors, np.full((6, 2), T_MIN))
    assert np.all(act(g, np.random.default_rng(0)).levels == SRAM)


def test_act_is_seeded():
    g = BoltzmannGenome.random(10, np.random.default_rng(0))
    assert act(g, np.random.default_rng(9)) == act(g, np.random.default_rng(9))


def test_uniform_priors_frequencies():
    g = BoltzmannGenome(np.zeros((1, 2, 3)), np.ones((1, 2)))
    rng = np.random.default_rng(2)
    draws = np.array([act(g, rng).levels[0] for _ in range(30000)])
    for col in range(2):
        counts = np.bincount(draws[:, col], minlength=3)
        assert np.all(np.abs(counts / 30000 - 1 / 3) < 0.01)
        assert stats.chisquare(counts).pvalue > 0.001


# --------------------------------------------------------------------------
# seeding from a GNN posterior


def test_seed_uniform_and_fixed_posterior():
    base = BoltzmannGenome.random(2, np.random.default_rng(0))
    s = seed_from_gnn(base, np.full((2, 2, 3), 1 / 3))
    assert np.allclose(s.probs(), 1 / 3, atol=1e-12)
    target = np.broadcast_to([0.7, 0.2, 0.1], (2, 2, 3))
    s = seed_from_gnn(base, target)
    assert np.all(s.temperatures == 1.0)
    assert np.abs(s.probs() - target).max() < 1e-9


@given(st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_seed_round_trip_random_posterior(n, seed):
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(3), size=(n, 2))
    s = seed_from_gnn(BoltzmannGenome.random(n, rng), probs)
    assert np.abs(s.probs() - probs).max() < 1e-9


def test_seed_one_hot_and_shape_check():
    base = BoltzmannGenome.random(1, np.random.default_rng(0))
    s = seed_from_gnn(base, np.array([[[0.2, 0.5, 0.3], [0.6, 0.3, 0.1]]]), one_hot=True)
    assert np.argmax(s.probs(), axis=-1).tolist() == [[1, 0]]
    with pytest.raises(ValueError):
        seed_from_gnn(base, np.full((2, 2, 3), 1 / 3))


# --------------------------------------------------------------------------
# vector layout and checkpoints


def test_vector_round_trip_clamps_temperatures():
    g = BoltzmannGenome.random(4, np.random.default_rng(0))
    v = g.to_vector()
    assert v.size == 4 * 8
    h = BoltzmannGenome.from_vector(v, 4)
    assert np.array_equal(h.priors, g.priors) and np.array_equal(h.temperatures, g.temperatures)
    v[-1] = 1e9
    assert BoltzmannGenome.from_vector(v, 4).temperatures.max() == T_MAX


def test_genome_checkpoint(tmp_path):
    g = BoltzmannGenome.random(5, np.random.default_rng(0), dram_bias=0.5)
    save_genome(g, tmp_path / "g.bin")
    h = load_genome(tmp_path / "g.bin")
    assert h.to_vector().tobytes() == g.to_vector().tobytes()
    (tmp_path / "bad.bin").write_bytes((tmp_path / "g.bin").read_bytes()[:-8])
    with pytest.raises(CheckpointError):
        load_genome(tmp_path / "bad.bin")
