"""CLI behavior: exit codes, outputs, overrides, config validation."""

import json

import pytest

from rectconv import find_right_edge, make_spectrum, ModelParams
from rectconv.cli import main


def _write_config(tmp_path, name="cfg.json", **overrides):
    cfg = {
        "spectrum": {"zeros": 10},
        "p": 10,
        "n": 20,
        "t": 0.5,
    }
    cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _locallaw_config(tmp_path):
    # macroscopic-eta grid: comfortably inside the asserted domain
    p, n, t = 60, 120, 0.45
    spec = make_spectrum([0.0] * p)
    edge = find_right_edge(spec, ModelParams(p=p, n=n, t=t))
    lam = edge.lambda_plus
    return _write_config(
        tmp_path,
        name="locallaw.json",
        spectrum={"zeros": p},
        p=p,
        n=n,
        t=t,
        trials=5,
        seed=3,
        experiment={"z_grid": [[lam, 0.5], [lam + 0.02, 0.8]]},
    )


# ---------------------------------------------------------------------------
# happy paths


def test_density_writes_csv(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    out = tmp_path / "out"
    rc = main(["density", "--config", cfg, "--out", str(out), "--samples", "20"])
    assert rc == 0
    path = out / "density.csv"
    assert path.exists()
    lines = path.read_text().splitlines()
    assert lines[0].startswith("E,")
    assert len(lines) == 21
    assert str(path) in capsys.readouterr().out


def test_edge_reports_json(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    out = tmp_path / "out"
    rc = main(["edge", "--config", cfg, "--out", str(out)])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["lambda_plus"] > 0
    disk = json.loads((out / "edge.json").read_text())
    assert disk == doc


def test_quantiles_writes_csv(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    out = tmp_path / "out"
    rc = main(["quantiles", "--config", cfg, "--out", str(out), "--jmax", "5"])
    assert rc == 0
    lines = (out / "quantiles.csv").read_text().splitlines()
    assert lines[0] == "j,gamma_j,kappa_j,eta_l_j"
    assert len(lines) == 6


def test_spectrum_from_file(tmp_path):
    spec_path = tmp_path / "spec.txt"
    spec_path.write_text("2.0\n1.0\n0.5\n")
    cfg = _write_config(tmp_path, spectrum={"file": str(spec_path)}, p=3, n=6)
    assert main(["edge", "--config", cfg, "--out", str(tmp_path / "o")]) == 0


def test_spectrum_canonical(tmp_path):
    cfg = _write_config(
        tmp_path, spectrum={"canonical": {"p": 12, "edge": 1.0}}, p=12, n=24
    )
    assert main(["edge", "--config", cfg, "--out", str(tmp_path / "o")]) == 0


def test_experiment_locallaw_passes(tmp_path, capsys):
    cfg = _locallaw_config(tmp_path)
    out = tmp_path / "out"
    rc = main(["experiment", "locallaw", "--config", cfg, "--out", str(out)])
    doc = json.loads(capsys.readouterr().out)
    assert rc == 0 and doc["pass"] is True
    assert (out / "locallaw.json").exists()
    assert (out / "locallaw_trials.csv").exists()


def test_experiment_exit_matches_pass(tmp_path, capsys):
    cfg = _write_config(tmp_path, trials=6, experiment={"k_max": 4})
    rc = main(["experiment", "rigidity", "--config", cfg, "--out", str(tmp_path / "o")])
    doc = json.loads(capsys.readouterr().out)
    assert rc == (0 if doc["pass"] else 1)


def test_experiment_outputs_deterministic(tmp_path, capsys):
    cfg = _write_config(tmp_path, trials=6, experiment={"k_max": 4})
    for d in ("o1", "o2"):
        main(["experiment", "rigidity", "--config", cfg, "--out", str(tmp_path / d)])
    capsys.readouterr()
    for name in ("rigidity.json", "rigidity_trials.csv"):
        a = (tmp_path / "o1" / name).read_bytes()
        b = (tmp_path / "o2" / name).read_bytes()
        assert a == b


def test_threads_do_not_change_output(tmp_path, capsys):
    cfg = _write_config(tmp_path, trials=6, experiment={"k_max": 4})
    main(["experiment", "rigidity", "--config", cfg, "--out", str(tmp_path / "t1")])
    main(
        [
            "experiment",
            "rigidity",
            "--config",
            cfg,
            "--out",
            str(tmp_path / "t4"),
            "--threads",
            "4",
        ]
    )
    capsys.readouterr()
    a = (tmp_path / "t1" / "rigidity_trials.csv").read_bytes()
    b = (tmp_path / "t4" / "rigidity_trials.csv").read_bytes()
    assert a == b


def test_threads_env_honored(tmp_path, capsys, monkeypatch):
    cfg = _write_config(tmp_path, trials=6, experiment={"k_max": 4})
    monkeypatch.setenv("RECTCONV_THREADS", "3")
    rc = main(["experiment", "rigidity", "--config", cfg, "--out", str(tmp_path / "e")])
    assert rc in (0, 1)
    monkeypatch.delenv("RECTCONV_THREADS")
    main(["experiment", "rigidity", "--config", cfg, "--out", str(tmp_path / "n")])
    capsys.readouterr()
    a = (tmp_path / "e" / "rigidity_trials.csv").read_bytes()
    b = (tmp_path / "n" / "rigidity_trials.csv").read_bytes()
    assert a == b


# ---------------------------------------------------------------------------
# overrides


def test_trials_override(tmp_path, capsys):
    cfg = _write_config(tmp_path, trials=6, experiment={"k_max": 4})
    out = tmp_path / "o"
    main(
        [
            "experiment",
            "rigidity",
            "--config",
            cfg,
            "--out",
            str(out),
            "--trials",
            "3",
        ]
    )
    capsys.readouterr()
    lines = (out / "rigidity_trials.csv").read_text().splitlines()
    assert len(lines) == 4


def test_seed_override_changes_draws(tmp_path, capsys):
    cfg = _write_config(tmp_path, trials=4, experiment={"k_max": 4})
    for seed, d in ((5, "s5"), (6, "s6")):
        main(
            [
                "experiment",
                "rigidity",
                "--config",
                cfg,
                "--out",
                str(tmp_path / d),
                "--seed",
                str(seed),
            ]
        )
    capsys.readouterr()
    a = (tmp_path / "s5" / "rigidity_trials.csv").read_bytes()
    b = (tmp_path / "s6" / "rigidity_trials.csv").read_bytes()
    assert a != b


def test_density_range_flags(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    out = tmp_path / "o"
    rc = main(
        [
            "density",
            "--config",
            cfg,
            "--out",
            str(out),
            "--lo",
            "0.1",
            "--hi",
            "0.5",
            "--samples",
            "5",
        ]
    )
    assert rc == 0
    rows = (out / "density.csv").read_text().splitlines()[1:]
    Es = [float(r.split(",")[0]) for r in rows]
    assert Es[0] == pytest.approx(0.1) and Es[-1] == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# error paths


def test_missing_required_key(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"spectrum": {"zeros": 4}, "p": 4, "n": 8}))
    rc = main(["edge", "--config", str(path), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_unknown_top_level_key(tmp_path, capsys):
    cfg = _write_config(tmp_path, extra=1)
    assert main(["edge", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_spectrum_length_mismatch(tmp_path, capsys):
    cfg = _write_config(tmp_path, spectrum={"values": [1.0, 0.5]}, p=3)
    assert main(["edge", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    capsys.readouterr()


def test_bad_noise_kind(tmp_path, capsys):
    cfg = _write_config(tmp_path, noise="uniform")
    assert main(["edge", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "noise kind" in capsys.readouterr().err


def test_unknown_solver_key(tmp_path, capsys):
    cfg = _write_config(tmp_path, solver={"newton": True})
    assert main(["edge", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "solver" in capsys.readouterr().err


def test_unknown_threshold_key(tmp_path, capsys):
    cfg = _write_config(
        tmp_path, trials=2, experiment={"thresholds": {"C_bogus": 1.0}}
    )
    rc = main(["experiment", "rigidity", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "threshold" in capsys.readouterr().err


def test_malformed_json(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["edge", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    capsys.readouterr()


def test_missing_config_file(tmp_path, capsys):
    missing = str(tmp_path / "nope.json")
    assert main(["edge", "--config", missing, "--out", str(tmp_path / "o")]) == 2
    capsys.readouterr()


def test_bbp_requires_spike(tmp_path, capsys):
    cfg = _write_config(tmp_path, trials=2)
    rc = main(["experiment", "bbp", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "spike" in capsys.readouterr().err


def test_bad_threads_env(tmp_path, capsys, monkeypatch):
    cfg = _write_config(tmp_path, trials=2, experiment={"k_max": 3})
    monkeypatch.setenv("RECTCONV_THREADS", "many")
    rc = main(["experiment", "rigidity", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "RECTCONV_THREADS" in capsys.readouterr().err


def test_solver_failure_exits_three(tmp_path, capsys):
    cfg = _write_config(tmp_path, solver={"tolerance": 1e-300, "max_iterations": 10})
    rc = main(
        ["density", "--config", cfg, "--out", str(tmp_path / "o"), "--samples", "3"]
    )
    assert rc == 3
    assert "numerical failure" in capsys.readouterr().err


def test_bad_density_range(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    rc = main(
        [
            "density",
            "--config",
            cfg,
            "--out",
            str(tmp_path / "o"),
            "--lo",
            "2.0",
            "--hi",
            "1.0",
        ]
    )
    assert rc == 2
    capsys.readouterr()


def test_usage_errors(tmp_path, capsys):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["edge"]) == 2  # --config required
    capsys.readouterr()


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "density" in capsys.readouterr().out
