import json

from click.testing import CliRunner

from branchlab.cli import main


def write_config(tmp_path, doc):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return str(path)


def run(args):
    return CliRunner().invoke(main, args, catch_exceptions=False)


def test_exact_subcommand(tmp_path):
    cfg = write_config(tmp_path, {
        "experiment": "exact", "seed": 7,
        "params": {"law": {"family": "explicit", "pmf": [0.5, 0, 0.5]},
                   "functional": "height", "N": 8, "k_list": [2]},
    })
    out = tmp_path / "out"
    result = run(["exact", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 0
    table = (out / "tail_table.csv").read_text().splitlines()
    assert table[0] == "n,v_n,v_point_n,v_n_k2,v_point_n_k2"
    assert len(table) == 10
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7
    assert manifest["outputs"] == ["tail_table.csv"]


def test_reruns_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path, {
        "experiment": "sample", "seed": 11,
        "params": {"law": {"family": "geometric", "a": 0.5, "cap": 40},
                   "sampler": "gw", "n": 50, "node_cap": 10000},
    })
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run(["sample", "--config", cfg, "--out", str(out1)]).exit_code == 0
    assert run(["sample", "--config", cfg, "--out", str(out2)]).exit_code == 0
    assert (out1 / "samples.txt").read_bytes() == (out2 / "samples.txt").read_bytes()


def test_seed_override_changes_output(tmp_path):
    cfg = write_config(tmp_path, {
        "experiment": "sample", "seed": 11,
        "params": {"law": {"family": "explicit", "pmf": [0.5, 0, 0.5]},
                   "sampler": "gw", "n": 50, "node_cap": 10000},
    })
    out1, out2 = tmp_path / "a", tmp_path / "b"
    run(["sample", "--config", cfg, "--out", str(out1)])
    run(["sample", "--config", cfg, "--seed", "12", "--out", str(out2)])
    assert (out1 / "samples.txt").read_text() != (out2 / "samples.txt").read_text()


def test_malformed_config_exits_2(tmp_path):
    cfg = write_config(tmp_path, {
        "experiment": "exact", "seed": 7, "bogus": 1,
        "params": {"law": {"family": "explicit", "pmf": [1.0]}, "functional": "height", "N": 4},
    })
    out = tmp_path / "out"
    result = run(["exact", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 2
    assert not (out / "tail_table.csv").exists()


def test_unknown_param_rejected(tmp_path):
    cfg = write_config(tmp_path, {
        "experiment": "exact", "seed": 7,
        "params": {"law": {"family": "explicit", "pmf": [0.5, 0, 0.5]},
                   "functional": "height", "N": 4, "mystery": True},
    })
    result = run(["exact", "--config", cfg, "--out", str(tmp_path / "o")])
    assert result.exit_code == 2


def test_missing_seed_rejected(tmp_path):
    cfg = write_config(tmp_path, {
        "experiment": "exact",
        "params": {"law": {"family": "explicit", "pmf": [0.5, 0, 0.5]},
                   "functional": "height", "N": 4},
    })
    result = run(["exact", "--config", cfg, "--out", str(tmp_path / "o")])
    assert result.exit_code == 2


def test_budget_exhaustion_exits_3(tmp_path):
    # conditioning far beyond reach with a tiny attempt budget
    cfg = write_config(tmp_path, {
        "experiment": "sample", "seed": 3,
        "params": {"law": {"family": "explicit", "pmf": [0.5, 0, 0.5]},
                   "sampler": "conditioned", "n": 5, "functional": "height",
                   "conditioning": "tail", "threshold": 100000,
                   "max_attempts": 20, "node_cap": 100000},
    })
    out = tmp_path / "out"
    result = run(["sample", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "budget-exhausted"
    assert not (out / "samples.txt").exists()


def test_converge_tail_subcommand(tmp_path):
    cfg = write_config(tmp_path, {
        "experiment": "converge-tail", "seed": 5,
        "params": {"law": {"family": "explicit", "pmf": [0.5, 0, 0.5]},
                   "functional": "height", "b": 2, "n_grid": [4, 16]},
    })
    out = tmp_path / "out"
    result = run(["converge-tail", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 0
    lines = (out / "convergence.csv").read_text().splitlines()
    assert len(lines) == 3


def test_ratio_subcommand(tmp_path):
    cfg = write_config(tmp_path, {
        "experiment": "ratio", "seed": 5,
        "params": {"law": {"family": "explicit", "pmf": [0.5, 0, 0.5]},
                   "functional": "height", "k_list": [2], "n_grid": [16]},
    })
    out = tmp_path / "out"
    assert run(["ratio", "--config", cfg, "--out", str(out)]).exit_code == 0
    assert (out / "ratios.csv").exists()


def test_cb_scale_subcommand(tmp_path):
    cfg = write_config(tmp_path, {
        "experiment": "cb-verify", "seed": 5,
        "params": {"mechanism": {"alpha": 0.0, "beta": 1.0, "pi": {"kind": "zero"}},
                   "check": "scale", "x_grid": [1.0, 2.0], "r_grid": [10.0]},
    })
    out = tmp_path / "out"
    assert run(["cb-verify", "--config", cfg, "--out", str(out)]).exit_code == 0
    assert (out / "scale_ratios.csv").exists()


def test_continuum_delta_band_subcommand(tmp_path):
    cfg = write_config(tmp_path, {
        "experiment": "continuum", "seed": 5,
        "params": {"check": "delta-band", "alpha": 0.0, "beta": 1.0,
                   "dt": 1e-3, "reps": 500, "eps": 0.1, "horizon": 50.0},
    })
    out = tmp_path / "out"
    assert run(["continuum", "--config", cfg, "--out", str(out)]).exit_code == 0
    assert (out / "delta_band.csv").exists()


def test_probe_subcommand(tmp_path):
    cfg = write_config(tmp_path, {
        "experiment": "probe-conjecture", "seed": 5,
        "params": {"law": {"family": "heavy_tail", "gamma": 2.5, "mean": 0.8, "cap": 1000},
                   "functional": "maxdeg", "b": 1, "n_grid": [10], "reps": 500},
    })
    out = tmp_path / "out"
    assert run(["probe-conjecture", "--config", cfg, "--out", str(out)]).exit_code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exploratory"] is True


def test_wrong_experiment_name_rejected(tmp_path):
    cfg = write_config(tmp_path, {
        "experiment": "ratio", "seed": 5,
        "params": {"law": {"family": "explicit", "pmf": [0.5, 0, 0.5]},
                   "functional": "height", "k_list": [2], "n_grid": [16]},
    })
    result = run(["exact", "--config", cfg, "--out", str(tmp_path / "o")])
    assert result.exit_code == 2
