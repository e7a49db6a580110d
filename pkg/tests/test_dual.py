"""Forward-mode dual arithmetic."""

import numpy as np
import pytest

from sso_dual import DualArray, cross, matmul, norm, seed, sqrt, stack, tensordot, value


def _fd(fn, x, h=1e-7):
    return (fn(x + h) - fn(x - h)) / (2 * h)


class TestScalarRules:
    def test_product_rule(self):
        (x,) = seed([3.0])
        y = x * x
        assert float(y.val) == pytest.approx(9.0)
        assert y.dot[0] == pytest.approx(6.0)

    def test_quotient_and_reflected_division(self):
        (x,) = seed([2.0])
        y = (x + 1.0) / x
        z = 1.0 / x
        assert y.dot[0] == pytest.approx(-1.0 / 4.0)
        assert z.dot[0] == pytest.approx(-1.0 / 4.0)

    def test_power_and_sqrt(self):
        (x,) = seed([4.0])
        assert (x ** 3).dot[0] == pytest.approx(48.0)
        assert sqrt(x).dot[0] == pytest.approx(0.25)

    def test_subtraction_both_sides(self):
        (x,) = seed([1.5])
        assert (5.0 - x).dot[0] == pytest.approx(-1.0)
        assert (x - 5.0).dot[0] == pytest.approx(1.0)

    def test_seed_gives_independent_directions(self):
        a, b = seed([1.0, 2.0])
        y = a * b
        assert y.dot == pytest.approx([2.0, 1.0])

    def test_dual_exponent_rejected(self):
        a, b = seed([1.0, 2.0])
        with pytest.raises(TypeError):
            a ** b


class TestArrayRules:
    def test_plain_inputs_stay_plain(self):
        out = matmul(np.eye(2), np.ones(2))
        assert not isinstance(out, DualArray)
        assert isinstance(stack([1.0, 2.0]), np.ndarray)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            DualArray(np.zeros(3), np.zeros((1, 2)))

    def test_matmul_matches_finite_difference(self):
        rng = np.random.default_rng(0)
        A0 = rng.normal(size=(3, 3))
        B = rng.normal(size=(3, 3))
        direction = rng.normal(size=(3, 3))
        A = DualArray(A0, direction[None])
        out = A.T @ B @ A
        fd = _fd(lambda s: (A0 + s * direction).T @ B @ (A0 + s * direction), 0.0)
        assert np.allclose(out.dot[0], fd, rtol=1e-6, atol=1e-8)

    def test_cross_and_norm(self):
        x, y, z = seed([1.0, 2.0, 3.0])
        v = stack([x, y, z])
        n = norm(v)
        assert float(value(n)) == pytest.approx(np.sqrt(14.0))
        assert n.dot == pytest.approx(np.array([1.0, 2.0, 3.0]) / np.sqrt(14.0))

        c = cross(v, np.array([0.0, 0.0, 1.0]))
        assert value(c) == pytest.approx([2.0, -1.0, 0.0])
        # d(c)/dx = e_x cross e_z = -e_y
        assert c.dot[0] == pytest.approx([0.0, -1.0, 0.0])

    def test_tensordot_with_constant(self):
        (s,) = seed([2.0])
        coeffs = stack([s, s * s])
        patterns = np.stack([np.eye(2), np.ones((2, 2))])
        out = tensordot(coeffs, patterns, 1)
        assert out.val == pytest.approx(2.0 * np.eye(2) + 4.0 * np.ones((2, 2)))
        assert out.dot[0] == pytest.approx(np.eye(2) + 4.0 * np.ones((2, 2)))

    def test_indexing_and_sum(self):
        a = DualArray(np.arange(6.0).reshape(2, 3), np.ones((1, 2, 3)))
        assert a[1].val == pytest.approx([3.0, 4.0, 5.0])
        assert a.sum().dot[0] == pytest.approx(6.0)
        assert a.sum(axis=0).dot[0] == pytest.approx([2.0, 2.0, 2.0])
