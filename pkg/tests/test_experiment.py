import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mshepard.cli import main
from mshepard.experiment import (ERROR_HEADER, ExperimentConfig, ExperimentError,
                                 build_nodes, evaluation_grid, measure_errors,
                                 run_experiment)
from mshepard.model import MarketParams
from mshepard.timestepper import Trajectory, full_state

SMALL = """
[nodes]
configuration = uniform
uniform_degree = 16

[market]
sigma1 = 0.2

[shepard]
q = 10

[time]
M = 4

[errors]
grid_resolution = 16
reference_N = 32
reference_M = 8
"""


def test_evaluation_grid_small():
    np.testing.assert_array_equal(evaluation_grid(2), [[0, 0], [0, 4], [4, 0]])


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 80))
def test_evaluation_grid_properties(res):
    g = evaluation_grid(res)
    assert len(g) == res * (res + 1) // 2
    assert np.all(g.sum(axis=1) <= 8 - 8 / res + 1e-12)
    assert np.all(g >= 0)


def test_config_parse_and_roundtrip():
    cfg = ExperimentConfig.from_ini(SMALL)
    assert cfg.configuration == "uniform" and cfg.uniform_degree == 16
    assert cfg.market == MarketParams(sigma1=0.2)
    assert cfg.q == 10 and cfg.M == 4 and cfg.rbf is True and cfg.rbf_shape is None
    assert ExperimentConfig.from_ini(cfg.to_ini()) == cfg


@pytest.mark.parametrize("text", [
    "[nodes]\nconfiguration = hexagons\n",
    "[time]\nM = 20\n[errors]\nreference_M = 50\n",
    "[bogus]\nx = 1\n",
    "[shepard]\nmu = 3\n",
    "[market]\nvol = 0.2\n",
])
def test_config_rejects(text):
    with pytest.raises(ValueError):
        ExperimentConfig.from_ini(text)


def _toy_trajectory(system_like):
    times = np.array([0.0, 0.5, 1.0])
    states = np.array([[1.0, 2.0], [1.5, 2.5], [2.0, 3.0]])
    return Trajectory(times, states, np.full(2, 0.5), "bdf2")


class _Sys:
    farfield = np.array([[8.0, 0.0]])
    market = MarketParams()


def test_measure_errors_zero_and_offset():
    tr = _toy_trajectory(_Sys)
    E = np.array([[1.0, 0, 0, 0], [0.5, 0.5, 0, 0]])
    exact = lambda grid, t: E @ full_state(_Sys, tr.states[int(round(t / 0.5))], t)
    rep = measure_errors(tr, _Sys, E, exact, np.zeros((2, 2)))
    np.testing.assert_array_equal(rep.E_mean, 0)
    np.testing.assert_array_equal(rep.E_max, 0)
    rep = measure_errors(tr, _Sys, E, lambda g, t: exact(g, t) + 1e-3, np.zeros((2, 2)))
    np.testing.assert_allclose(rep.E_mean, 1e-3)
    np.testing.assert_allclose(rep.E_max, 1e-3)
    assert np.all(rep.E_mean <= rep.E_max)


def test_measure_errors_time_mismatch():
    from mshepard.fdref import fd_solve
    ref = fd_solve(MarketParams(), N=16, M_fd=3)
    tr = _toy_trajectory(_Sys)
    with pytest.raises(ValueError, match="no level"):
        measure_errors(tr, _Sys, np.zeros((1, 4)), ref, np.zeros((1, 2)))


@pytest.fixture(scope="module")
def small_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "small.ini"
    path.write_text(SMALL)
    return path


def test_run_is_deterministic(tmp_path, small_cfg):
    cfg = ExperimentConfig.load(small_cfg)
    a = run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    for name in ("errors.csv", "nodes.txt", "summary.txt", "surface.csv", "config.ini"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    lines = (tmp_path / "a" / "errors.csv").read_text().splitlines()
    assert lines[0] == ERROR_HEADER and len(lines) == 1 + cfg.M
    assert np.all(a.ms.E_mean <= a.ms.E_max) and np.all(a.rbf.E_mean <= a.rbf.E_max)
    assert (tmp_path / "a" / "timings.txt").exists()


def test_bdf3_config_runs(tmp_path, small_cfg):
    import dataclasses
    cfg = dataclasses.replace(ExperimentConfig.load(small_cfg), scheme="bdf3", rbf=False)
    res = run_experiment(cfg)
    assert res.rbf is None and len(res.ms.E_mean) == cfg.M and 3 in res.ms.conditions


def test_reference_cache(tmp_path, small_cfg):
    from mshepard.experiment import reference_solution
    cfg = ExperimentConfig.load(small_cfg)
    a = reference_solution(cfg, tmp_path)
    assert len(list(tmp_path.glob("reference-*.npz"))) == 1
    b = reference_solution(cfg, tmp_path)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.times, np.linspace(0, 1, 5))


@pytest.mark.parametrize("name", ["halton", "uniform", "waldron", "waldron+lines", "rbf-fig1"])
def test_all_configurations_build(name):
    nodes = build_nodes(ExperimentConfig(configuration=name))
    assert nodes.n_interior > 300


def test_stage_errors_are_tagged():
    cfg = ExperimentConfig.from_ini("[nodes]\nconfiguration = uniform\nuniform_degree = 2\n")
    with pytest.raises(ExperimentError, match=r"^\[covering\] insufficient nodes"):
        run_experiment(cfg)


def test_cli_run_and_nodes(tmp_path, small_cfg, capsys):
    assert main(["run", str(small_cfg), "--out", str(tmp_path / "r"), "--scheme", "bdf2"]) == 0
    assert capsys.readouterr().out.startswith(ERROR_HEADER)
    assert main(["nodes", str(small_cfg), "--out", str(tmp_path / "n")]) == 0
    assert len((tmp_path / "n" / "nodes.txt").read_text().splitlines()) == 17 * 18 // 2
    assert main(["reference", str(small_cfg), "--out", str(tmp_path / "f")]) == 0
    assert len(list((tmp_path / "f").glob("reference_*.txt"))) == 5


def test_cli_failures(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[nodes]\nconfiguration = uniform\nuniform_degree = 2\n")
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) != 0
    assert "[covering]" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.ini")]) != 0
    assert "[experiment-cli]" in capsys.readouterr().err
