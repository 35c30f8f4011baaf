import os

import pytest

from egrl.config import ConfigError, RunConfig, desk_config

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def test_defaults_follow_hyperparameter_table():
    c = RunConfig()
    assert (c.gnn.hidden_layer_size, c.gnn.depth, c.gnn.attention_heads) == (128, 4, 4)
    assert c.environment.total_steps == 4000
    assert c.ea.population_size == 20 and c.ea.boltzmann_fraction == 0.2
    assert c.pg.batch_size == 24 and c.pg.reward_scaling == 5
    assert c.pg.alpha == 0.05 and c.pg.tau == 1e-3
    assert c.pg.critic_lr == 1e-3 and c.pg.actor_lr == 1e-3
    assert c.pg.replay_buffer_size == 100_000 and c.pg.rollout_size == 1
    assert c.n_elites == 2


def test_round_trip_through_dict():
    c = desk_config(seed=7)
    assert RunConfig.from_dict(c.to_dict()) == c


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="ea.populaton_size"):
        RunConfig.from_dict({"ea": {"populaton_size": 10}})
    with pytest.raises(ConfigError, match="colour"):
        RunConfig.from_dict({"colour": "red"})


@pytest.mark.parametrize(
    "doc",
    [
        {"algorithm": "dqn"},
        {"environment": {"steps_per_episode": 3}},
        {"environment": {"initial_mapping_action": "SRAM"}},
        {"gnn": {"output_layer_size": 64}},
        {"ea": {"boltzmann_fraction": 1.5}},
        {"ea": {"population_size": "many"}},
        {"n_seeds": 0},
    ],
)
def test_invalid_values_rejected(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc)


def test_yaml_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("algorithm: ea\nworkload:\n  path: w.json\nea:\n  population_size: 12\n")
    c = RunConfig.load(path)
    assert c.algorithm == "ea" and c.ea.population_size == 12
    assert c.workload.path == str(tmp_path / "w.json")
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "bad.yaml")


def test_shipped_desk_config():
    c = RunConfig.load(os.path.join(CONFIG_DIR, "desk.yaml"))
    assert c == desk_config(n_seeds=5)
