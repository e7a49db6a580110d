"""Command-line entry point: subcommands, output files and exit codes."""

import csv
import json
import os

import pytest

from conftest import spring_with_isolated_node
from sso_config import DENSE_LIMIT, THREAD_VARIABLES
from sso_schemas import save_model
from structural_optimizer import (
    BENCH_SWEEP,
    EXIT_INPUT,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_VALIDATION,
    _crossover,
    _parse_options,
    main,
)


def _read_csv(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def _write(path, data):
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture(autouse=True)
def restore_thread_variables(monkeypatch):
    for var in THREAD_VARIABLES:
        monkeypatch.delenv(var, raising=False)


@pytest.fixture
def spring_file(tmp_path):
    path = str(tmp_path / "spring.json")
    assert main(["fixtures", "spring", "--output", path]) == EXIT_OK
    return path


@pytest.fixture
def cantilever_file(tmp_path):
    path = str(tmp_path / "cantilever.json")
    assert main(["fixtures", "cantilever", "--output", path]) == EXIT_OK
    return path


@pytest.fixture
def tip_params(tmp_path):
    return _write(tmp_path / "tip.json", {"parameters": [{"kind": "node_coord", "node": 5, "axis": "X"}]})


class TestSolve:
    def test_spring_displacement(self, tmp_path, spring_file):
        out = tmp_path / "out"
        assert main(["solve", spring_file, "--output-dir", str(out)]) == EXIT_OK
        rows = _read_csv(out / "u.csv")
        assert rows[0] == ["node", "UX", "UY", "UZ", "RX", "RY", "RZ"]
        assert rows[2][0] == "2"
        assert float(rows[2][1]) == pytest.approx(2.0)
        report = json.loads((out / "report.json").read_text())
        assert report["results"]["strain_energy"] == pytest.approx(4.0)
        reactions = _read_csv(out / "reactions.csv")
        assert float(reactions[1][1]) == pytest.approx(-4.0)

    def test_dump(self, tmp_path, spring_file):
        out = tmp_path / "out"
        assert main(["solve", spring_file, "--solver", "dense", "--output-dir", str(out), "--dump"]) == EXIT_OK
        assert (out / "K_aug.mtx").exists()
        assert (out / "f_aug.txt").exists()

    def test_missing_model_is_input_error(self, tmp_path):
        assert main(["solve", str(tmp_path / "absent.json"), "--output-dir", str(tmp_path)]) == EXIT_INPUT

    def test_schema_error_is_input_error(self, tmp_path):
        path = _write(tmp_path / "bad.json", {"sso_model": 1, "nodes": [{"id": 1, "x": 0.0}]})
        assert main(["solve", path, "--output-dir", str(tmp_path)]) == EXIT_INPUT

    def test_singular_model_is_numerical_error(self, tmp_path):
        path = save_model(spring_with_isolated_node(), str(tmp_path / "isolated.json"))
        assert main(["solve", path, "--output-dir", str(tmp_path / "out")]) == EXIT_NUMERICAL

    def test_threads_are_pinned(self, tmp_path, spring_file):
        assert main(["--threads", "2", "solve", spring_file, "--output-dir", str(tmp_path / "out")]) == EXIT_OK
        assert os.environ["OMP_NUM_THREADS"] == "2"

    def test_invalid_thread_count(self, tmp_path, spring_file):
        assert main(["--threads", "0", "solve", spring_file, "--output-dir", str(tmp_path)]) == EXIT_INPUT


class TestSensitivityCommands:
    def test_sensitivity_csv(self, tmp_path, cantilever_file, tip_params):
        out = tmp_path / "out"
        assert main(["sensitivity", cantilever_file, tip_params, "--output-dir", str(out)]) == EXIT_OK
        rows = _read_csv(out / "sensitivity.csv")
        assert rows[0] == ["parameter", "value", "gradient"]
        assert rows[1][0] == "node_coord:5:X"
        assert float(rows[1][1]) == pytest.approx(2.0)
        # g = P^2 L^3 / (6 E Iz), so dg/dL = P^2 L^2 / (2 E Iz)
        assert float(rows[1][2]) == pytest.approx(100.0 * 4.0 / (2.0 * 2.0e8 * 1.0e-5), rel=1e-6)

    def test_validate_fd_passes(self, tmp_path, cantilever_file, tip_params):
        out = tmp_path / "out"
        code = main(["validate-fd", cantilever_file, tip_params, "--step", "1e-5", "--output-dir", str(out)])
        assert code == EXIT_OK
        rows = _read_csv(out / "fd_validation.csv")
        assert rows[0] == ["param", "step", "adjoint", "fd", "rel_err"]
        assert len(rows) == 2

    def test_validate_fd_step_sweep(self, tmp_path, cantilever_file, tip_params):
        out = tmp_path / "out"
        code = main(["validate-fd", cantilever_file, tip_params, "--steps", "1e-5", "1e-3",
                     "--output-dir", str(out)])
        assert code == EXIT_OK
        assert [float(r[1]) for r in _read_csv(out / "fd_validation.csv")[1:]] == [1e-5, 1e-3]

    def test_validate_fd_fails_on_coarse_step(self, tmp_path, cantilever_file, tip_params):
        # the central difference of L^3 carries a relative error of h^2 / (3 L^2)
        code = main(["validate-fd", cantilever_file, tip_params, "--step", "0.1",
                     "--output-dir", str(tmp_path / "out")])
        assert code == EXIT_VALIDATION

    def test_missing_parameter_file(self, tmp_path, cantilever_file):
        code = main(["sensitivity", cantilever_file, str(tmp_path / "absent.json"), "--output-dir", str(tmp_path)])
        assert code == EXIT_INPUT


@pytest.fixture
def dome_file(tmp_path):
    path = str(tmp_path / "dome.json")
    assert main(["fixtures", "dome", "--output", path, "--set", "n=4"]) == EXIT_OK
    return path


class TestOptimize:
    def _scenario(self, tmp_path, **overrides):
        doc = {
            "model": "dome.json",
            "simp_penalty": 3.0,
            "groups": [{"name": "rho", "select": {"kind": "density_ratio", "elements": "quads"},
                        "lower": 0.01, "upper": 1.0, "filter_radius": 2.0}],
            "constraints": [{"kind": "volume", "group": "rho", "budget": 8.0}],
            "optimizer": {"kind": "mma", "move": 0.2},
            "max_iter": 3,
            "snapshot_every": 2,
            "log_every": 0,
        }
        doc.update(overrides)
        return _write(tmp_path / "scenario.json", doc)

    def test_outputs(self, tmp_path, dome_file):
        out = tmp_path / "out"
        assert main(["optimize", self._scenario(tmp_path), "--output-dir", str(out)]) == EXIT_OK
        rows = _read_csv(out / "history.csv")
        assert rows[0][:4] == ["iteration", "objective", "max_abs_uz", "grad_norm"]
        assert "volume_0" in rows[0]
        assert len(rows) == 1 + 4
        assert sorted(os.listdir(out / "snapshots")) == [
            "snapshot_0000.json", "snapshot_0002.json", "snapshot_0003.json"]
        assert (out / "final_model.json").exists()

    def test_max_iter_override(self, tmp_path, dome_file):
        out = tmp_path / "out"
        assert main(["optimize", self._scenario(tmp_path), "--max-iter", "1", "--output-dir", str(out)]) == EXIT_OK
        assert len(_read_csv(out / "history.csv")) == 1 + 2

    def test_scenario_without_model_file(self, tmp_path):
        assert main(["optimize", self._scenario(tmp_path), "--output-dir", str(tmp_path / "out")]) == EXIT_INPUT

    def test_invalid_scenario(self, tmp_path, dome_file):
        path = self._scenario(tmp_path, constraints=[{"group": "t", "budget": 1.0}])
        assert main(["optimize", path, "--output-dir", str(tmp_path / "out")]) == EXIT_INPUT


class TestTrainNn:
    def test_short_training(self, tmp_path, dome_file):
        path = _write(tmp_path / "nn.json", {
            "model": "dome.json",
            "nn": {"widths": [1, 6, 6, 2], "V_star": 8.0, "epochs": 50},
            "log_every": 0,
        })
        out = tmp_path / "out"
        assert main(["train-nn", path, "--epochs", "2", "--output-dir", str(out)]) == EXIT_OK
        rows = _read_csv(out / "train_history.csv")
        assert rows[0] == ["epoch", "loss", "strain_energy", "sum_p_T", "alpha2", "penalty", "grad_norm", "seconds"]
        assert len(rows) == 1 + 2
        params = json.loads((out / "nn_params.json").read_text())
        assert params["widths"] == [1, 6, 6, 2]
        assert (out / "final_snapshot.json").exists()
        assert (out / "final_model.json").exists()
        results = json.loads((out / "report.json").read_text())["results"]
        assert results["design_sum_p_T"] <= 8.0 * (1 + 1e-9)

    def test_needs_nn_section(self, tmp_path, dome_file):
        path = _write(tmp_path / "groups.json", {
            "model": "dome.json",
            "groups": [{"name": "rho", "select": {"kind": "density_ratio", "element": 1},
                        "lower": 0.01, "upper": 1.0}],
        })
        assert main(["train-nn", path, "--output-dir", str(tmp_path / "out")]) == EXIT_INPUT


class TestBench:
    def test_small_sweep(self, tmp_path):
        out = tmp_path / "out"
        code = main(["bench", "--spans", "2", "--elements-per-span", "2", "4", "--output-dir", str(out)])
        assert code == EXIT_OK
        rows = _read_csv(out / "bench.csv")
        assert rows[0] == ["dof", "solver", "assembly_s", "solve_s", "sensitivity_s"]
        assert [(int(r[0]), r[1]) for r in rows[1:]] == [(30, "sparse"), (30, "dense"), (54, "sparse"), (54, "dense")]

    def test_dense_limit_skips(self, tmp_path):
        out = tmp_path / "out"
        code = main(["bench", "--spans", "2", "--elements-per-span", "2", "--solver", "dense",
                     "--dense-limit", "10", "--output-dir", str(out)])
        assert code == EXIT_OK
        assert len(_read_csv(out / "bench.csv")) == 1

    def test_default_sweep_times_dense_above_20k_dof(self):
        dofs = [6 * (100 * eps + 1) for eps in BENCH_SWEEP]
        assert max(dofs) > 20000
        assert max(dofs) <= DENSE_LIMIT

    def test_crossover(self):
        rows = [[100, "sparse", 0, 0.2, 0], [100, "dense", 0, 0.1, 0],
                [400, "sparse", 0, 0.3, 0], [400, "dense", 0, 0.5, 0]]
        assert _crossover(rows) == 400
        assert _crossover(rows[:2]) is None


class TestFixtures:
    def test_parse_options(self):
        assert _parse_options(["n=4", "supports=mid_edges", "with-beams=true"]) == {
            "n": 4, "supports": "mid_edges", "with_beams": True}
        with pytest.raises(ValueError):
            _parse_options(["n"])

    def test_unknown_fixture(self, tmp_path):
        assert main(["fixtures", "bridge", "--output", str(tmp_path / "b.json")]) == EXIT_INPUT

    def test_options_reach_the_generator(self, tmp_path):
        path = tmp_path / "dome.json"
        assert main(["fixtures", "dome", "--output", str(path), "--set", "n=2"]) == EXIT_OK
        assert len(json.loads(path.read_text())["quads"]) == 4
