import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvtensor.evolve import Trajectory
from nvtensor.harness import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    NonFiniteError,
    error_metrics,
    read_series,
    run_experiment,
    validate,
    write_series,
)
from nvtensor.harness import cli
from nvtensor.harness import experiments as experiments_module

SMALL = """
experiment: engine-comparison
seed: 4
output: unused
model:
  n: 2
  spacing_nm: 2.0
  gamma: [0.0, 1.0]
engine:
  engine: tdvp
  dt_ns: 1.0
  n_steps: 10
  chi_max: 16
"""


def write(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


# --- configuration


def test_config_parsing_and_scan_axes():
    cfg = ExperimentConfig.from_yaml(SMALL)
    assert cfg.model.spacing_nm == (2.0,)
    assert cfg.model.gamma == (0.0, 1.0)
    assert cfg.engine.chi_max == (16,)
    assert cfg.engine.dt_us == pytest.approx(0.001)
    assert cfg.engine.total_time_us == pytest.approx(0.01)
    assert cfg.qfi is None
    model = cfg.model.build(2.0, 1.0)
    assert model.n_sites == 2 and len(model.dissipators) == 2


def test_yaml_scientific_notation_is_numeric():
    cfg = ExperimentConfig.from_yaml(
        "experiment: qfi-dynamics\nqfi: {delta_mhz: 1e-3, tol: 1e-8}\nengine: {krylov_tol: 1e-12}\n"
    )
    assert cfg.qfi.delta_mhz == 1e-3 and cfg.qfi.tol == 1e-8
    assert cfg.engine.krylov_tol == 1e-12


@pytest.mark.parametrize(
    "text",
    [
        "experiment: opee\nmodel: {n: 2, colour: red}\n",
        "experiment: opee\nbogus: 1\n",
        "model: {n: 2}\n",
        "experiment: opee\nmodel: {n: 2.5}\n",
        "experiment: opee\nmodel: {interactions: 'yes'}\n",
        "experiment: opee\nmodel: {spacing_nm: [2.0, abc]}\n",
        "experiment: opee\nengine: {engine: dmrg}\n",
        "experiment: opee\nengine: {chi_max: [4, 0]}\n",
        "experiment: opee\nmodel: {gamma: -1}\n",
        "experiment: opee\nqfi: {normalization: heisenberg}\n",
        "experiment: opee\nmodel: [1, 2]\n",
        "experiment: [opee\n",
        "- just a list\n",
    ],
)
def test_malformed_configs_are_rejected(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_yaml(text)


def test_config_hash_is_stable_and_ignores_output():
    a = ExperimentConfig.from_yaml(SMALL)
    b = ExperimentConfig.from_yaml(SMALL.replace("output: unused", "output: elsewhere"))
    assert a.config_hash() == b.config_hash()
    assert len(a.config_hash()) == 16
    assert a.replace(seed=5).config_hash() != a.config_hash()
    assert ExperimentConfig.from_yaml(a.to_yaml()).config_hash() == a.config_hash()


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(1, 12),
    spacing=st.lists(st.floats(0.5, 10.0), min_size=1, max_size=3),
    chi=st.lists(st.integers(1, 128), min_size=1, max_size=4),
    seed=st.integers(0, 10**6),
)
def test_config_round_trip(n, spacing, chi, seed):
    cfg = ExperimentConfig.from_dict(
        {"experiment": "opee", "seed": seed, "model": {"n": n, "spacing_nm": spacing}, "engine": {"chi_max": chi}}
    )
    again = ExperimentConfig.from_yaml(cfg.to_yaml())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


@pytest.mark.parametrize(
    "changes, match",
    [
        ({"experiment": "fig9"}, "unknown experiment"),
        ({"model": {"n": 13}}, "exceeds the limit"),
        ({"engine": {"dt_ns": 1.0, "n_steps": 10001}}, "exceeds the limit"),
        ({"experiment": "bond-scan", "model": {"n": 7}}, "exact reference"),
        ({"engine": {"engine": "ed"}, "model": {"n": 7}}, "exact reference"),
        ({"experiment": "qfi-dynamics"}, "qfi"),
    ],
)
def test_validation_guards(changes, match):
    data = {"experiment": "opee", **changes}
    with pytest.raises(ConfigError, match=match):
        validate(ExperimentConfig.from_dict(data))


def test_tdvp_on_long_chains_is_allowed():
    validate(ExperimentConfig.from_dict({"experiment": "opee", "model": {"n": 12}, "engine": {"n_steps": 10000}}))


def test_registry_contents():
    assert set(EXPERIMENTS) == {"engine-comparison", "bond-scan", "dissipation-scan", "opee", "qfi-dynamics"}


# --- CSV


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    cols = {"t": np.linspace(0, 1, 7), "x": rng.normal(size=7) * 1e-13, "y": rng.normal(size=7) * 1e9}
    path = write_series(tmp_path / "a.csv", cols, "abcdef0123456789", 3)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x,y"
    assert lines[1] == "# config=abcdef0123456789 seed=3"
    back, meta = read_series(path)
    assert meta == {"config": "abcdef0123456789", "seed": "3"}
    for k in cols:
        np.testing.assert_array_equal(back[k], cols[k])


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_csv_refuses_non_finite_values(tmp_path, bad):
    with pytest.raises(NonFiniteError) as info:
        write_series(tmp_path / "b.csv", {"t": [0.0, 1.0], "f": [1.0, bad]}, "h", 0)
    assert info.value.column == "f"
    assert not (tmp_path / "b.csv").exists()


def test_csv_rejects_ragged_columns(tmp_path):
    with pytest.raises(ValueError):
        write_series(tmp_path / "c.csv", {"t": [0.0, 1.0], "f": [1.0]}, "h", 0)


# --- metrics


def make_traj(times, sz):
    traj = Trajectory(dt=times[1] - times[0])
    for t, s in zip(times, sz):
        traj.append(t, s)
    return traj


def test_error_metrics():
    t = [0.0, 0.1, 0.2]
    a = make_traj(t, [0.0, -0.5 + 1e-3j, -0.25])
    b = make_traj(t, [0.0, -0.4, -0.35])
    m = error_metrics(a, b)
    np.testing.assert_allclose(m.abs_re, [0.0, 0.1, 0.1])
    assert m.max_re == pytest.approx(0.1) and m.final_re == pytest.approx(0.1)
    assert m.max_im == pytest.approx(1e-3) and m.final_im == 0.0


def test_error_metrics_rejects_mismatched_grids():
    with pytest.raises(ValueError, match="time grids"):
        error_metrics(make_traj([0.0, 0.1], [0, 0]), make_traj([0.0, 0.2], [0, 0]))
    with pytest.raises(ValueError, match="time grids"):
        error_metrics(make_traj([0.0, 0.1, 0.2], [0, 0, 0]), make_traj([0.0, 0.1], [0, 0]))


# --- runner


def test_engine_comparison_outputs(tmp_path):
    record = run_experiment(ExperimentConfig.from_yaml(SMALL), tmp_path)
    assert record.ok
    assert sorted(record.files) == [
        "engine-comparison_r2_g0.csv",
        "engine-comparison_r2_g1.csv",
        "engine-comparison_summary.csv",
    ]
    cols, meta = read_series(tmp_path / "engine-comparison_r2_g1.csv")
    assert list(cols) == ["t", "Sz_re_tdvp", "Sz_im_tdvp", "Sz_re_wii", "Sz_im_wii", "Sz_re_ed"]
    assert meta == {"config": record.config_hash, "seed": "4"}
    assert len(cols["t"]) == 11
    np.testing.assert_allclose(cols["Sz_re_tdvp"], cols["Sz_re_ed"], atol=1e-8)
    summary, _ = read_series(tmp_path / "engine-comparison_summary.csv")
    assert summary["max_err_tdvp"].max() < 1e-8
    run = json.loads((tmp_path / "run.json").read_text())
    assert run["config_hash"] == record.config_hash and run["failures"] == []
    assert (tmp_path / "config.yaml").exists()


def test_output_does_not_depend_on_thread_count(tmp_path):
    cfg = ExperimentConfig.from_yaml(SMALL)
    run_experiment(cfg, tmp_path / "one", threads=1)
    run_experiment(cfg, tmp_path / "two", threads=2)
    for name in ("engine-comparison_r2_g0.csv", "engine-comparison_r2_g1.csv", "engine-comparison_summary.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_bond_scan_and_dissipation_scan(tmp_path):
    bond = ExperimentConfig.from_dict(
        {"experiment": "bond-scan", "model": {"n": 3}, "engine": {"n_steps": 10, "chi_max": [2, 81]}}
    )
    run_experiment(bond, tmp_path / "b")
    summary, _ = read_series(tmp_path / "b" / "bond-scan_summary.csv")
    np.testing.assert_array_equal(summary["chi_max"], [2, 81])
    assert summary["max_err"][1] < 1e-8 and summary["max_bond"][0] == 2
    diss = ExperimentConfig.from_dict(
        {"experiment": "dissipation-scan", "model": {"n": 2, "gamma": [0, 5]}, "engine": {"n_steps": 10, "chi_max": 81}}
    )
    run_experiment(diss, tmp_path / "d")
    cols, _ = read_series(tmp_path / "d" / "dissipation-scan_r2_g5.csv")
    assert set(cols) == {"t", "Sz_re_ed", "Sz_re_tdvp", "err", "trace_drift"}


def test_opee_cadence(tmp_path):
    cfg = ExperimentConfig.from_dict(
        {"experiment": "opee", "model": {"n": 2, "rabi_mhz": [2, 4]}, "engine": {"engine": "ed", "n_steps": 10, "opee_every": 5}}
    )
    record = run_experiment(cfg, tmp_path)
    assert "opee_r2_g0_om4.csv" in record.files
    cols, _ = read_series(tmp_path / "opee_r2_g0_om2.csv")
    np.testing.assert_allclose(cols["t"], [0.0, 0.005, 0.01])
    assert cols["opee"][0] == 0.0


def test_qfi_dynamics_experiment(tmp_path):
    cfg = ExperimentConfig.from_dict(
        {
            "experiment": "qfi-dynamics",
            "model": {"n": 2, "interactions": False},
            "engine": {"engine": "ed", "n_steps": 20},
            "qfi": {"restarts": 2, "every": 10},
        }
    )
    run_experiment(cfg, tmp_path)
    cols, _ = read_series(tmp_path / "qfi-dynamics_r2_g0_om2.csv")
    assert list(cols) == ["t", "qfi", "qfi_raw", "qfi_avg"]
    assert cols["qfi"].max() == pytest.approx(2.0, rel=1e-5)


def test_engine_failure_keeps_partial_output(tmp_path, monkeypatch):
    real = experiments_module.run_trajectory

    def failing(model, engine, config, n_steps, record=(), **kw):
        traj = real(model, engine, config, 5 if engine == "wii" else n_steps, record, **kw)
        if engine == "wii":
            traj.failure = "step 6: non-finite entries in SVD input"
        return traj

    monkeypatch.setattr(experiments_module, "run_trajectory", failing)
    record = run_experiment(ExperimentConfig.from_yaml(SMALL), tmp_path)
    assert not record.ok and len(record.failures) == 2
    cols, _ = read_series(tmp_path / "engine-comparison_r2_g0.csv")
    assert len(cols["t"]) == 6


def test_non_finite_output_fails_after_flushing(tmp_path, monkeypatch):
    real = experiments_module.run_trajectory

    def poisoned(model, engine, config, n_steps, record=(), **kw):
        traj = real(model, engine, config, n_steps, record, **kw)
        if engine == "wii":
            traj.sz[-1] = complex(np.nan, 0)
        return traj

    monkeypatch.setattr(experiments_module, "run_trajectory", poisoned)
    with pytest.raises(NonFiniteError):
        run_experiment(ExperimentConfig.from_yaml(SMALL), tmp_path)
    run = json.loads((tmp_path / "run.json").read_text())
    assert run["nonfinite"]


# --- command line


def test_cli_list_and_validate(tmp_path, capsys):
    assert cli.main(["list-experiments"]) == 0
    assert "bond-scan" in capsys.readouterr().out
    assert cli.main(["validate", str(write(tmp_path, SMALL))]) == 0
    assert cli.main(["validate", str(write(tmp_path, "experiment: opee\nmodel: {n: 20}\n", "big.yaml"))]) == 2
    assert cli.main(["validate", str(tmp_path / "missing.yaml")]) == 2


def test_cli_run_uses_environment_output_and_seed(tmp_path, monkeypatch):
    monkeypatch.setenv("NVTENSOR_OUT", str(tmp_path / "env"))
    cfg = write(tmp_path, SMALL)
    assert cli.main(["run", str(cfg), "--seed", "9"]) == 0
    _, meta = read_series(tmp_path / "env" / "engine-comparison_summary.csv")
    assert meta["seed"] == "9"
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "run.json").exists()
    assert cli.main(["run", str(cfg), "--threads", "0"]) == 2


def test_cli_exit_codes_for_failures(tmp_path, monkeypatch):
    cfg = write(tmp_path, SMALL)
    real = experiments_module.run_trajectory

    def failing(model, engine, config, n_steps, record=(), **kw):
        traj = real(model, engine, config, n_steps, record, **kw)
        if engine == "tdvp":
            traj.failure = "step 3: Krylov error estimate 1e-3"
        return traj

    monkeypatch.setattr(experiments_module, "run_trajectory", failing)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "f")]) == 3

    def poisoned(model, engine, config, n_steps, record=(), **kw):
        traj = real(model, engine, config, n_steps, record, **kw)
        traj.sz[0] = complex(np.inf, 0)
        return traj

    monkeypatch.setattr(experiments_module, "run_trajectory", poisoned)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "n")]) == 4


def test_shipped_configs_validate():
    from pathlib import Path

    paths = sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.yaml"))
    assert {p.stem for p in paths} == set(EXPERIMENTS)
    for path in paths:
        cfg = ExperimentConfig.load(path)
        assert cfg.experiment == path.stem
        validate(cfg)
