"""Method of Moving Asymptotes on small analytic problems."""

import numpy as np
import pytest

from sso_mma import InfeasibleBoundsError, MmaSettings, MmaState, mma_step


def _run(objective, x0, constraint=None, iterations=60, lower=0.0, upper=1.0):
    x = np.asarray(x0, dtype=float)
    state = MmaState(np.full(len(x), lower), np.full(len(x), upper))
    trace = [x]
    for _ in range(iterations):
        f0, df0 = objective(x)
        if constraint is None:
            state, x = mma_step(state, x, f0, df0)
        else:
            g, dg = constraint(x)
            state, x = mma_step(state, x, f0, df0, np.array([g]), dg[None, :])
        trace.append(x)
    return x, state, trace


def quadratic(target):
    target = np.asarray(target, dtype=float)

    def fn(x):
        return float(np.sum((x - target) ** 2)), 2.0 * (x - target)
    return fn


def budget(x):
    return float(x.sum() - 1.0), np.ones_like(x)


class TestConvergence:
    def test_unconstrained_quadratic(self):
        x, _, _ = _run(quadratic([0.3, 0.7]), [0.9, 0.1])
        assert x == pytest.approx([0.3, 0.7], abs=1e-3)

    def test_linear_constraint_active(self):
        x, state, _ = _run(quadratic([1.0, 1.0]), [0.2, 0.3], constraint=budget)
        assert x == pytest.approx([0.5, 0.5], abs=1e-2)
        assert x.sum() <= 1.0 + 1e-3
        assert state.multipliers[0] > 0

    def test_optimum_on_bound(self):
        x, _, _ = _run(quadratic([-0.5, 0.4]), [0.5, 0.5])
        assert x[0] == pytest.approx(0.0, abs=1e-4)
        assert x[1] == pytest.approx(0.4, abs=1e-3)

    def test_iterates_stay_in_box(self):
        _, _, trace = _run(quadratic([2.0, -1.0, 0.5]), [0.1, 0.9, 0.5], iterations=20)
        for x in trace:
            assert np.all(x >= 0.0) and np.all(x <= 1.0)


class TestState:
    def test_iteration_and_history_advance(self):
        state = MmaState(np.zeros(2), np.ones(2))
        state, x1 = mma_step(state, np.array([0.5, 0.5]), 0.0, np.array([1.0, -1.0]))
        assert state.iteration == 1
        assert state.xold1 == pytest.approx([0.5, 0.5])
        assert np.isfinite(state.kkt_residual)
        # a descent direction: x0 falls, x1 rises
        assert x1[0] < 0.5 < x1[1]

    def test_move_limit(self):
        state = MmaState(np.zeros(1), np.ones(1), MmaSettings(move=0.1))
        _, x = mma_step(state, np.array([0.5]), 0.0, np.array([100.0]))
        assert x[0] >= 0.4 - 1e-12

    def test_infeasible_bounds(self):
        with pytest.raises(InfeasibleBoundsError):
            MmaState(np.array([0.0, 1.0]), np.array([1.0, 0.5]))

    def test_start_outside_box(self):
        state = MmaState(np.zeros(2), np.ones(2))
        with pytest.raises(InfeasibleBoundsError):
            mma_step(state, np.array([1.5, 0.5]), 0.0, np.zeros(2))

    def test_bounds_error_is_a_value_error(self):
        assert issubclass(InfeasibleBoundsError, ValueError)
