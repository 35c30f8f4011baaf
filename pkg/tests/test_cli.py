import json

import pytest

from egrl.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main

SMALL = """\
algorithm: egrl
seed: 3
n_seeds: 2
workload: {kind: chain, n_nodes: 4, seed: 0}
gnn: {hidden_layer_size: 8, output_layer_size: 8, depth: 1, attention_heads: 2}
environment: {total_steps: 45}
ea: {population_size: 8}
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(SMALL)
    return path


def test_gen_writes_a_loadable_workload(tmp_path, capsys):
    out = tmp_path / "g.json"
    assert main(["gen", "--kind", "bert_like", "--nodes", "12", "--out", str(out)]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["n_nodes"] == 12 and out.exists()
    assert main(["gen", "--preset", "bert", "--out", str(tmp_path / "b.json")]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["n_nodes"] == 376


def test_gen_needs_a_shape(capsys):
    assert main(["gen", "--kind", "chain"]) == EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_run_writes_seed_dirs_and_aggregate(tmp_path, small_config, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", str(small_config), "--out", str(out)]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["n_seeds"] == 2
    assert {p.name for p in out.iterdir()} >= {"seed_3", "seed_4", "aggregate.json", "aggregate.csv", "config.json"}


def test_two_runs_differ_only_in_timing(tmp_path, small_config):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert main(["run", "--config", str(small_config), "--out", str(d)]) == EXIT_OK
    files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(dirs[1]) for p in dirs[1].rglob("*") if p.is_file())
    differing = {rel.name for rel in files if (dirs[0] / rel).read_bytes() != (dirs[1] / rel).read_bytes()}
    assert differing <= {"timing.json"}


def test_unknown_config_key_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("ea:\n  populaton_size: 4\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "r")]) == EXIT_CONFIG
    assert "ea.populaton_size" in capsys.readouterr().err


def test_unknown_subcommand_and_flags_exit_1(capsys):
    assert main(["fly"]) == EXIT_CONFIG
    assert main(["run", "--bogus"]) == EXIT_CONFIG
    assert main([]) == EXIT_CONFIG


def test_baseline_methods(tmp_path, small_config, capsys):
    assert main(["baseline", "--config", str(small_config), "--method", "compiler", "--out", str(tmp_path / "c")]) == EXIT_OK
    res = json.loads(capsys.readouterr().out)
    assert res["speedup"] == 1.0 and len(res["mapping"]) == 8
    assert (tmp_path / "c" / "compiler_mapping.json").exists()
    assert main(["baseline", "--config", str(small_config), "--method", "greedy_dp", "--out", str(tmp_path / "g")]) == EXIT_OK
    res = json.loads(capsys.readouterr().out)
    assert res["algorithm"] == "greedy_dp" and res["best_speedup_mean"] >= 1.0


def test_oracle(capsys):
    assert main(["oracle", "--kind", "chain", "--nodes", "3"]) == EXIT_OK
    res = json.loads(capsys.readouterr().out)
    assert res["latency"] <= res["compiler_latency"]
    assert main(["oracle", "--kind", "chain", "--nodes", "7"]) == EXIT_RUNTIME
    assert main(["oracle"]) == EXIT_CONFIG


def test_transfer_mapshift_export(tmp_path, small_config, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", str(small_config), "--out", str(out)]) == EXIT_OK
    seed = out / "seed_3"
    dst = tmp_path / "dst.json"
    assert main(["gen", "--kind", "resnet_like", "--nodes", "6", "--out", str(dst)]) == EXIT_OK
    capsys.readouterr()

    argv = ["transfer", "--policy", str(seed / "policy.bin"), "--trained-on", str(seed / "workload.json"), "--target", str(dst)]
    assert main(argv) == EXIT_OK
    res = json.loads(capsys.readouterr().out)
    assert len(res["mapping"]) == 12

    argv = ["mapshift", "--workload", str(seed / "workload.json"), "--base", "compiler", "--other", str(seed / "best_mapping.json"), "--normalize"]
    assert main(argv) == EXIT_OK
    res = json.loads(capsys.readouterr().out)
    assert len(res["matrix"]) == 3 and res["normalized"]

    assert main(["export", str(out), "--out", str(tmp_path / "maps.jsonl")]) == EXIT_OK
    res = json.loads(capsys.readouterr().out)
    assert res["tags"]["compiler"] == 2
    assert len((tmp_path / "maps.jsonl").read_text().splitlines()) == res["n_mappings"]


def test_missing_policy_exits_1(tmp_path, capsys):
    w = tmp_path / "w.json"
    assert main(["gen", "--kind", "chain", "--nodes", "3", "--out", str(w)]) == EXIT_OK
    argv = ["transfer", "--policy", str(tmp_path / "none.bin"), "--trained-on", str(w), "--target", str(w)]
    assert main(argv) == EXIT_CONFIG
    assert "error" in capsys.readouterr().err
