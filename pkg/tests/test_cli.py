import json

import numpy as np
import pytest

from riplab.cli import main
from riplab.ensembles import matrix_from_binary, matrix_from_csv


def run(args):
    return main([str(a) for a in args])


def test_gen_bernoulli_binary(tmp_path):
    out = tmp_path / "m.ripl"
    code = run(["gen", "--kind", "bernoulli", "--n", 8, "--k", 4,
                "--seed", 1, "--out", out])
    assert code == 0
    entries = matrix_from_binary(out.read_bytes())
    assert entries.shape == (4, 8)
    assert set(np.unique(entries)) <= {-1.0, 1.0}


def test_gen_byte_identical_reruns(tmp_path):
    a, b = tmp_path / "a.ripl", tmp_path / "b.ripl"
    for out in (a, b):
        assert run(["gen", "--kind", "gaussian", "--n", 6, "--k", 3,
                    "--seed", 9, "--out", out]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_invalid_dims_exit_1_no_file(tmp_path):
    out = tmp_path / "bad.ripl"
    assert run(["gen", "--kind", "bernoulli", "--n", 4, "--k", 9,
                "--seed", 1, "--out", out]) == 1
    assert not out.exists()


def test_gen_unwritable_path_exit_2(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    assert run(["gen", "--kind", "bernoulli", "--n", 4, "--k", 2, "--seed", 1,
                "--out", blocker / "m.ripl"]) == 2


def test_gen_csv_round_trip(tmp_path):
    out = tmp_path / "m.csv"
    assert run(["gen", "--kind", "gaussian", "--n", 5, "--k", 2, "--seed", 3,
                "--out", out, "--format", "csv"]) == 0
    parsed = matrix_from_csv(out.read_text())
    assert parsed.shape == (2, 5)


def test_unknown_flag_exit_1(tmp_path, capsys):
    out = tmp_path / "x.ripl"
    assert run(["gen", "--kind", "bernoulli", "--n", 4, "--k", 2,
                "--seed", 1, "--out", out, "--frobnicate", 3]) == 1
    assert not out.exists()


def test_rip_bernoulli_singletons_exact_zero(tmp_path):
    out = tmp_path / "rip.csv"
    assert run(["rip", "--kind", "bernoulli", "--n", 8, "--k", 4, "--seed", 2,
                "--sparsity", "1", "--out", out]) == 0
    header, row = out.read_text().strip().splitlines()
    assert header == "m,theta,theta_lower,theta_upper,method"
    fields = row.split(",")
    assert fields[0] == "1" and float(fields[1]) == 0.0
    assert fields[4] == "exact-enumeration"


def test_rip_exact_vs_exhaustive_mc(tmp_path):
    exact_out = tmp_path / "exact.csv"
    mc_out = tmp_path / "mc.csv"
    base = ["--kind", "bernoulli", "--n", 10, "--k", 5, "--seed", 7,
            "--sparsity", "2"]
    assert run(["rip"] + base + ["--out", exact_out]) == 0
    assert run(["rip"] + base + ["--method", "mc", "--trials", 2500,
                "--mc-seed", 13, "--out", mc_out]) == 0
    te = float(exact_out.read_text().strip().splitlines()[1].split(",")[1])
    tm = float(mc_out.read_text().strip().splitlines()[1].split(",")[1])
    assert tm == pytest.approx(te, abs=1e-12)


def test_rip_budget_exit_3(tmp_path):
    out = tmp_path / "rip.csv"
    assert run(["rip", "--kind", "bernoulli", "--n", 40, "--k", 12, "--seed", 1,
                "--sparsity", "10", "--budget", 100, "--out", out]) == 3
    assert not out.exists()


def test_uup_sweep_pass_fraction(tmp_path, capsys):
    out = tmp_path / "uup.csv"
    assert run(["uup", "--kind", "bernoulli", "--n", 6, "--k", 3, "--theta",
                0.99, "--lam", 2.0, "--seeds", "0:10", "--out", out]) == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 11
    assert "pass fraction 1.000" in capsys.readouterr().out


def test_uup_small_theta_fails_often(tmp_path, capsys):
    out = tmp_path / "uup.csv"
    assert run(["uup", "--kind", "gaussian", "--n", 6, "--k", 3, "--theta",
                0.01, "--lam", 2.0, "--seeds", "0:10", "--out", out]) == 0
    frac = np.mean([int(l.split(",")[1])
                    for l in out.read_text().strip().splitlines()[1:]])
    assert frac < 0.5


def test_uup_empty_seed_range_exit_1(tmp_path):
    out = tmp_path / "uup.csv"
    assert run(["uup", "--kind", "bernoulli", "--n", 6, "--k", 3, "--theta",
                0.5, "--lam", 2.0, "--seeds", "5:5", "--out", out]) == 1
    assert not out.exists()


def test_recon_sweep_rows_and_zero_handling(tmp_path):
    out = tmp_path / "recon.csv"
    assert run(["recon", "--kind", "bernoulli", "--n", 12, "--ball", "l1",
                "--t0-model", "sparse", "--sparsity", 1, "--seeds", "0:3",
                "--k-list", "4,6", "--out", out]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "seed,n,k,p,error,rho,certified,solver_tol"
    assert len(lines) == 1 + 3 * 2
    for line in lines[1:]:
        fields = line.split(",")
        assert float(fields[4]) >= 0.0
        assert float(fields[7]) <= 1e-8


def test_recon_threads_byte_identical(tmp_path):
    outs = []
    for threads in (1, 4):
        out = tmp_path / f"recon{threads}.csv"
        assert run(["recon", "--kind", "gaussian", "--n", 12, "--ball", "l1",
                    "--t0-model", "sparse", "--seeds", "0:4", "--k-list", "4,6",
                    "--threads", threads, "--out", out]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_nets_build_table_and_reverify(tmp_path, capsys):
    net_file = tmp_path / "net.json"
    table = tmp_path / "table.csv"
    assert run(["nets", "--construct", "greedy", "--dim", 2, "--epsilon", 0.5,
                "--ambient", "ball", "--seed", 4, "--probes", 2000,
                "--out", net_file, "--table", table]) == 0
    rows = table.read_text().strip().splitlines()
    assert rows[0] == "construction,dim,epsilon,size,bound,within_bound,cover_pass"
    fields = rows[1].split(",")
    assert int(fields[3]) <= float(fields[4])
    assert run(["nets", "--verify", net_file, "--probes", 2000, "--seed", 1]) == 0
    info = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert info["separated"]


def test_nets_corrupt_json_exit_2(tmp_path):
    bad = tmp_path / "net.json"
    bad.write_text("{not json")
    assert run(["nets", "--verify", bad]) == 2
    assert run(["nets", "--verify", tmp_path / "missing.json"]) == 2


def test_nets_sparse_construction(tmp_path):
    net_file = tmp_path / "net.json"
    assert run(["nets", "--construct", "sparse", "--n", 6, "--m", 1,
                "--epsilon", 0.5, "--ambient", "sphere", "--seed", 0,
                "--probes", 2000, "--out", net_file]) == 0
    obj = json.loads(net_file.read_text())
    assert obj["certified_cover"] is True
    assert obj["ambient"]["family"] == "sparse-sphere"


def test_recon_exponent_recomputable_from_csv(tmp_path):
    # the emitted CSV alone carries everything the regression needs
    out = tmp_path / "sweep.csv"
    assert run(["recon", "--kind", "bernoulli", "--n", 32, "--ball", "l1",
                "--t0-model", "weak-lp-extremal", "--seeds", "0:6",
                "--k-list", "4,8,16", "--out", out]) == 0
    rows = [line.split(",") for line in out.read_text().strip().splitlines()[1:]]
    by_k = {}
    for fields in rows:
        by_k.setdefault(int(fields[2]), []).append(float(fields[4]))
    ks = sorted(by_k)
    medians = [float(np.median(by_k[k])) for k in ks]
    slope = float(np.polyfit(np.log(ks), np.log(medians), 1)[0])
    assert slope < 0.0   # errors decay with k; the fit is reproducible offline


def test_recon_structured_sweep_config(tmp_path):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({
        "ensemble": {"kind": "bernoulli", "n": 12},
        "ball": {"family": "l1", "dim": 12, "radius": 1.0},
        "t0_model": "sparse",
        "seeds": [0, 3],
        "k_list": [4, 6],
        "output": str(tmp_path / "sweep.csv"),
    }))
    assert run(["recon", "--config", cfg]) == 0
    lines = (tmp_path / "sweep.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + 3 * 2


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "bernoulli", "n": 8, "k": 4, "seed": 1}))
    out = tmp_path / "m.ripl"
    assert run(["gen", "--config", cfg, "--out", out, "--k", 2]) == 0
    assert matrix_from_binary(out.read_bytes()).shape == (2, 8)


def test_missing_config_exit_2(tmp_path):
    assert run(["gen", "--config", tmp_path / "nope.json",
                "--out", tmp_path / "m.ripl"]) == 2


def test_help_exits_zero():
    with pytest.raises(SystemExit) as exc:
        run(["rip", "--help"])
    assert exc.value.code == 0
