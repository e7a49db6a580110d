"""Neural reparameterization: network, field mapping, loss and training."""

import numpy as np
import pytest

from fixtures.generators import corner_ids, dome, grid_node_id
from sso_neural import (
    MlpArchitecture,
    NeuralDesignProblem,
    NnLossConfig,
    TrainConfig,
    centrality_features,
    element_to_nodal_transpose,
    flatten_params,
    init_params,
    mlp_backward,
    mlp_forward,
    nn_loss,
    nodal_to_element_density,
    params_from_document,
    params_to_document,
    quad_connectivity,
    repair_budget,
    train,
    unflatten_params,
    zero_params,
)

SMALL = MlpArchitecture(widths=(1, 6, 6, 2))


class TestNetwork:
    def test_default_parameter_count(self):
        arch = MlpArchitecture()
        assert arch.param_count == 3442
        assert init_params(arch).size == 3442

    def test_zero_network_outputs_half(self):
        out, _ = mlp_forward(zero_params(SMALL), np.linspace(0, 1, 7), SMALL)
        assert out.shape == (7, 2)
        assert out == pytest.approx(np.full((7, 2), 0.5))

    def test_softmax_rows_sum_to_one(self):
        arch = MlpArchitecture(widths=(1, 6, 2), output="softmax")
        out, _ = mlp_forward(init_params(arch, seed=2), np.linspace(0, 1, 5)[:, None], arch)
        assert out.sum(axis=1) == pytest.approx(np.ones(5))

    @pytest.mark.parametrize("output", ["sigmoid", "softmax"])
    def test_backward_matches_finite_differences(self, output):
        arch = MlpArchitecture(widths=(1, 5, 5, 2), output=output)
        rng = np.random.default_rng(11)
        theta = flatten_params(init_params(arch, seed=3)) + 0.1 * rng.normal(size=arch.param_count)
        features = rng.uniform(0.0, 1.0, size=(9, 1))
        weights = rng.normal(size=(9, 2))

        def loss(flat):
            out, _ = mlp_forward(unflatten_params(flat, arch), features, arch)
            return float(np.sum(weights * out))

        params = unflatten_params(theta, arch)
        _, cache = mlp_forward(params, features, arch)
        grad = mlp_backward(params, cache, weights, arch)
        h = 1e-6
        for i in range(arch.param_count):
            step = np.zeros(arch.param_count)
            step[i] = h
            fd = (loss(theta + step) - loss(theta - step)) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-8)

    def test_invalid_architectures(self):
        with pytest.raises(ValueError):
            MlpArchitecture(widths=(1, 40, 3))
        with pytest.raises(ValueError):
            MlpArchitecture(output="tanh")
        with pytest.raises(ValueError):
            MlpArchitecture(widths=(2,))
        with pytest.raises(ValueError):
            unflatten_params(np.zeros(5), SMALL)
        with pytest.raises(ValueError):
            mlp_forward(zero_params(SMALL), np.zeros((3, 2)), SMALL)

    def test_document(self):
        params = init_params(SMALL, seed=1)
        doc = params_to_document(params, SMALL)
        restored, arch = params_from_document(doc)
        assert arch == SMALL
        assert flatten_params(restored) == pytest.approx(flatten_params(params))
        with pytest.raises(ValueError):
            params_from_document({"widths": [1, 6, 6, 2]})
        with pytest.raises(ValueError):
            params_from_document({**doc, "shapes": [[1, 6], [6, 2]]})


class TestFields:
    def test_centrality_is_scaled_and_symmetric(self):
        n = 6
        model = dome(n=n)
        features = centrality_features(model, corner_ids(n, n))
        values = dict(zip(features.node_ids, features.values))
        assert max(values.values()) == pytest.approx(1.0)
        assert min(values.values()) > 0.0
        for i in range(n + 1):
            for j in range(n + 1):
                v = values[grid_node_id(i, j, n)]
                assert v == pytest.approx(values[grid_node_id(j, i, n)])
                assert v == pytest.approx(values[grid_node_id(n - i, j, n)])

    def test_centrality_needs_supports(self):
        with pytest.raises(ValueError):
            centrality_features(dome(n=2), [])

    def test_element_density_is_nodal_average(self):
        model = dome(n=2)
        conn = quad_connectivity(model)
        assert conn.shape == (4, 4)
        nodal = np.arange(9, dtype=float)
        # element 1 joins grid nodes 1, 2, 5, 4
        assert nodal_to_element_density(nodal, conn)[0] == pytest.approx((0 + 1 + 4 + 3) / 4.0)

    def test_transpose_mapping(self):
        model = dome(n=4)
        conn = quad_connectivity(model)
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=len(model.nodes)), rng.normal(size=len(conn))
        assert y @ nodal_to_element_density(x, conn) == pytest.approx(
            element_to_nodal_transpose(y, conn, len(model.nodes)) @ x)


class TestLoss:
    def test_normalized_loss_is_one_on_budget(self):
        f, u = np.array([1.0, 2.0]), np.array([3.0, 0.5])
        config = NnLossConfig(alpha1=4.0, alpha2=10.0, V_star=1.5)
        assert nn_loss(u, f, np.array([0.5, 1.0]), config) == pytest.approx(1.0)
        assert nn_loss(u, f, np.array([1.0, 2.0]), config) == pytest.approx(1.0 + 10.0)

    def test_loss_config(self):
        with pytest.raises(ValueError):
            NnLossConfig(alpha1=0.0, alpha2=1.0, V_star=1.0)
        with pytest.raises(ValueError):
            NnLossConfig(alpha1=1.0, alpha2=1.0, V_star=0.0)

    def test_schedules(self):
        config = TrainConfig(V_star=5.0)
        assert config.alpha2(0) == pytest.approx(0.1)
        assert config.alpha2(10) == pytest.approx(0.6)
        assert config.penalty(0) == pytest.approx(2.0)
        assert config.penalty(10) == pytest.approx(2.6)
        assert config.penalty(500) == pytest.approx(8.0)

    def test_train_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(V_star=0.0)
        with pytest.raises(ValueError):
            TrainConfig(V_star=1.0, P_start=3.0, P_cap=2.0)
        with pytest.raises(ValueError):
            TrainConfig(V_star=1.0, p_min=1.0)
        with pytest.raises(ValueError):
            TrainConfig(V_star=1.0, lr=-0.1)


def _problem(n=4, arch=SMALL, **overrides):
    model = dome(n=n, supports="corners", loads="corners_center")
    options = dict(V_star=0.5 * len(model.quads), shape_radius=1.6, density_radius=1.6)
    options.update(overrides)
    return NeuralDesignProblem(model, arch, TrainConfig(**options))


def _check_end_to_end_gradient(problem, n_checks, seed):
    theta = flatten_params(init_params(problem.arch, seed=seed))
    loss, grad, info = problem.evaluate(theta)
    assert problem.alpha1 > 0
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(theta), size=n_checks, replace=False)
    h = 1e-5
    fd = []
    for i in picks:
        step = np.zeros(len(theta))
        step[i] = h
        fd.append((problem.evaluate(theta + step)[0] - problem.evaluate(theta - step)[0]) / (2 * h))
    fd = np.array(fd)
    assert np.linalg.norm(grad[picks] - fd) <= 1e-4 * np.linalg.norm(fd)


class TestNeuralDesignProblem:
    def test_parameters_cover_free_nodes_and_shells(self):
        problem = _problem()
        assert len(problem.shape_index) == 25 - 4
        assert len(problem.params) == 21 + 16

    def test_design_supports_flag(self):
        assert len(_problem(design_supports=True).shape_index) == 25

    def test_fields_respect_bounds(self):
        problem = _problem()
        fields, _ = problem.fields(flatten_params(init_params(SMALL, seed=5)))
        assert np.all((fields.z >= 0.0) & (fields.z <= 3.0))
        assert np.all((fields.p_T >= 0.01) & (fields.p_T <= 1.0))

    def test_initial_loss_uses_compliance_normalizer(self):
        problem = _problem()
        theta = flatten_params(zero_params(SMALL))
        loss, _, info = problem.evaluate(theta)
        usage = info["sum_p_T"] / problem.config.V_star - 1.0
        assert loss == pytest.approx(1.0 + 0.1 * usage ** 2)
        assert info["strain_energy"] == pytest.approx(0.5 * problem.alpha1)

    def test_end_to_end_gradient(self):
        _check_end_to_end_gradient(_problem(), n_checks=12, seed=7)

    @pytest.mark.slow
    def test_end_to_end_gradient_larger_mesh(self):
        _check_end_to_end_gradient(_problem(n=8, arch=MlpArchitecture()), n_checks=20, seed=8)

    def test_requires_shells(self, spring_model):
        with pytest.raises(ValueError):
            NeuralDesignProblem(spring_model, SMALL, TrainConfig(V_star=1.0))


class TestTrain:
    def test_short_run(self):
        model = dome(n=4, loads="corners_center")
        config = TrainConfig(V_star=8.0, epochs=3, log_every=0)
        seen = []
        params, history = train(model, SMALL, config, callbacks=[lambda e, row: seen.append(e)])
        assert seen == [0, 1, 2]
        assert len(history.rows) == 3
        assert set(history.rows[0]) == {"epoch", "loss", "strain_energy", "sum_p_T", "alpha2",
                                        "penalty", "grad_norm", "seconds"}
        assert [r["penalty"] for r in history.rows] == pytest.approx([2.0, 2.06, 2.12])
        assert history.snapshot["iteration"] == 2
        assert history.aborted is None
        assert params.size == SMALL.param_count

    def test_zero_learning_rate_keeps_parameters(self):
        model = dome(n=4)
        start = init_params(SMALL, seed=4)
        params, history = train(model, SMALL, TrainConfig(V_star=8.0, epochs=2, lr=0.0, log_every=0),
                                params=start)
        assert flatten_params(params) == pytest.approx(flatten_params(start))

    def test_zero_epochs(self):
        params, history = train(dome(n=2), SMALL, TrainConfig(V_star=2.0, epochs=0))
        assert history.rows == []
        assert history.snapshot is None


class TestBudgetRepair:
    def test_shrinks_onto_budget(self):
        p_T, scale = repair_budget(np.array([0.5, 0.9, 0.3]), V_star=1.2, p_min=0.1)
        assert scale == pytest.approx(0.9 / 1.4)
        assert p_T.sum() == pytest.approx(1.2, rel=1e-12)
        assert np.all(p_T >= 0.1)
        assert p_T[1] > p_T[0] > p_T[2]

    def test_feasible_design_is_untouched(self):
        p_T = np.array([0.2, 0.4])
        repaired, scale = repair_budget(p_T, V_star=1.0, p_min=0.01)
        assert scale == 1.0
        assert repaired == pytest.approx(p_T)

    def test_budget_below_floor(self):
        with pytest.raises(ValueError):
            repair_budget(np.array([0.5, 0.5]), V_star=0.02, p_min=0.01)

    def test_trained_design_meets_budget(self):
        model = dome(n=4, loads="corners_center")
        _, history = train(model, SMALL, TrainConfig(V_star=2.0, epochs=2, log_every=0))
        assert history.rows[-1]["sum_p_T"] > 2.0
        assert history.budget_scale < 1.0
        assert history.design_sum_p_T <= 2.0 * (1 + 1e-9)
        assert history.snapshot["iteration"] == 1

    def test_repair_can_be_disabled(self):
        model = dome(n=4, loads="corners_center")
        _, history = train(model, SMALL, TrainConfig(V_star=2.0, epochs=2, enforce_budget=False, log_every=0))
        assert history.budget_scale == 1.0
        assert history.design_sum_p_T == pytest.approx(history.rows[-1]["sum_p_T"])
