import json

import pytest

from osa.cli import main

FAST_SOLVE = ["--tol", "1e-6", "--lmax", "20"]


def run(args):
    return main([str(a) for a in args])


def test_usage_error_exit_code(capsys):
    assert run(["solve"]) == 1  # neither scenario nor alpha/beta
    assert "usage error" in capsys.readouterr().err


def test_unknown_command_exit_code():
    assert run(["frobnicate"]) == 1


def test_solve_writes_outputs(tmp_path, capsys):
    out = tmp_path / "solve"
    code = run(["solve", "--alpha", 0.85, "--beta", 0.7, "--out", out] + FAST_SOLVE)
    assert code == 0
    for name in (
        "policy.csv",
        "value_function.csv",
        "value_function_meta.json",
        "structure_report.txt",
        "manifest_solve.json",
    ):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest_solve.json").read_text())
    assert manifest["command"] == "solve"
    assert manifest["params"]["alpha"] == 0.85
    meta = json.loads((out / "value_function_meta.json").read_text())
    assert "gain" in meta and meta["l_max"] == 20


def test_solve_degenerate_exit_code(tmp_path, capsys):
    code = run(["solve", "--alpha", 1.0, "--beta", 0.0, "--out", tmp_path])
    assert code == 2
    assert "solver failure" in capsys.readouterr().err


def test_simulate_mp1_defaults(tmp_path, capsys):
    out = tmp_path / "sim"
    code = run(["simulate", "--alpha", 0.15, "--beta", 0.1, "--mp", 1, "--out", out])
    assert code == 0
    text = capsys.readouterr().out
    assert "avg_delay=1.0000" in text
    assert "3000 packets" in text  # --packets default honored
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == (
        "gamma,avg_delay,energy_per_packet,energy_per_slot,"
        "throughput,avg_reward,senses,primary_tx,dedicated_tx"
    )


def test_simulate_repeat_byte_identical(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    run(["simulate", "--alpha", 0.15, "--beta", 0.1, "--mp", 3, "--seed", 7,
         "--packets", 500, "--out", out1])
    run(["simulate", "--alpha", 0.15, "--beta", 0.1, "--mp", 3, "--seed", 7,
         "--packets", 500, "--out", out2])
    assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()


def test_simulate_from_policy_csv(tmp_path):
    solve_out = tmp_path / "solve"
    assert run(["solve", "--alpha", 0.85, "--beta", 0.7, "--out", solve_out] + FAST_SOLVE) == 0
    sim_out = tmp_path / "sim"
    code = run([
        "simulate", "--alpha", 0.85, "--beta", 0.7, "--packets", 500,
        "--policy", solve_out / "policy.csv", "--lmax", 20, "--out", sim_out,
    ])
    assert code == 0
    assert (sim_out / "metrics.csv").exists()


def test_simulate_trace_flag(tmp_path):
    out = tmp_path / "sim"
    code = run(["simulate", "--alpha", 0.15, "--beta", 0.1, "--mp", 2,
                "--packets", 50, "--trace", "--out", out])
    assert code == 0
    lines = (out / "trace.csv").read_text().splitlines()
    assert lines[0] == "t,belief_sensed_channel,delay,action,observation,reward"
    assert len(lines) > 50


def test_rerun_reproduces_byte_identical(tmp_path):
    out = tmp_path / "first"
    run(["simulate", "--alpha", 0.15, "--beta", 0.1, "--mp", 2, "--seed", 3,
         "--packets", 400, "--out", out])
    before = (out / "metrics.csv").read_bytes()
    manifest_before = (out / "manifest_simulate.json").read_bytes()
    assert run(["rerun", "--manifest", out / "manifest_simulate.json"]) == 0
    assert (out / "metrics.csv").read_bytes() == before
    assert (out / "manifest_simulate.json").read_bytes() == manifest_before


def test_sweep_csv_and_manifest(tmp_path, capsys):
    out = tmp_path / "sweep"
    code = run(["sweep", "--alpha", 0.15, "--beta", 0.1, "--gammas", "20,200",
                "--packets", 400, "--tol", "1e-6", "--out", out])
    assert code == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3
    delays = [float(line.split(",")[1]) for line in lines[1:]]
    assert delays[1] <= delays[0]
    assert (out / "manifest_sweep.json").exists()


def test_scenario_preset_roundtrip(tmp_path):
    # Dump the preset via the manifest, re-run from it, identical outputs.
    out = tmp_path / "s2"
    code = run(["solve", "--scenario", 2, "--ktrunc", 6, "--lmax", 8,
                "--tol", "1e-6", "--out", out])
    assert code == 0
    policy_before = (out / "policy.csv").read_bytes()
    assert run(["rerun", "--manifest", out / "manifest_solve.json"]) == 0
    assert (out / "policy.csv").read_bytes() == policy_before


def test_learn_trace_rows(tmp_path, capsys):
    out = tmp_path / "learn"
    code = run(["learn", "--alpha", 0.15, "--beta", 0.1, "--n", 2,
                "--iterations", 30, "--nbslot", 20, "--seed", 7,
                "--lmax", 15, "--out", out])
    assert code == 0
    lines = (out / "learn_trace.csv").read_text().splitlines()
    assert lines[0] == "iteration,alpha_hat,beta_hat,policy_id,window_reward,q_value"
    assert len(lines) == 31
    assert (out / "learned_policy.csv").exists()


def test_compare_exit_and_csv(tmp_path):
    out = tmp_path / "cmp"
    code = run(["compare", "--alpha", 0.15, "--beta", 0.1, "--ks", "3",
                "--packets", 400, "--tol", "1e-6", "--match-tol", "0.5", "--out", out])
    assert code == 0
    lines = (out / "compare.csv").read_text().splitlines()
    assert lines[0] == "k,gamma,matched_delay_mp,matched_delay_opt,cost_mp,cost_opt,reduction_pct"
    assert len(lines) == 2
