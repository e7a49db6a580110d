"""Procedural model generators."""

import numpy as np
import pytest

from fixtures.generators import (
    arch_center_node,
    barrel_arch,
    build_fixture,
    center_id,
    corner_ids,
    dome,
    gridshell,
    mid_edge_ids,
    multi_span_arch,
    navier_center_deflection,
    parabola,
    plate_flexural_rigidity,
    random_model,
    rectangular_section,
    simply_supported_plate,
)
from sso_model import ModelError


class TestGeometryHelpers:
    def test_parabola(self):
        assert parabola(0.0, 10.0, 5.0) == 0.0
        assert parabola(5.0, 10.0, 5.0) == pytest.approx(5.0)
        assert parabola(10.0, 10.0, 5.0) == pytest.approx(0.0)

    def test_rectangular_section(self):
        sec = rectangular_section(0.2, 0.1)
        assert sec["A"] == pytest.approx(0.02)
        assert sec["Iy"] == pytest.approx(0.1 * 0.2 ** 3 / 12)
        assert sec["Iz"] == pytest.approx(0.2 * 0.1 ** 3 / 12)
        assert 0 < sec["J"] < sec["Iy"] + sec["Iz"]

    def test_grid_ids(self):
        assert corner_ids(4, 4) == [1, 5, 25, 21]
        assert mid_edge_ids(4, 4) == [3, 15, 23, 11]
        assert center_id(4, 4) == 13
        assert arch_center_node() == 50

    def test_odd_grids_rejected(self):
        with pytest.raises(ValueError):
            mid_edge_ids(5, 4)
        with pytest.raises(ValueError):
            center_id(3, 3)


class TestGenerators:
    def test_multi_span_dof(self):
        model = multi_span_arch()
        assert model.dof == 1206
        assert len(model.supports) == 101

    def test_barrel_arch_sizes(self):
        model = barrel_arch()
        assert (len(model.nodes), len(model.quads), model.dof) == (441, 400, 2646)
        assert len(model.supports) == 42
        assert len(model.loads) == 441 - 42

    def test_gridshell(self):
        model = gridshell()
        assert len(model.nodes) == 196
        assert len(model.beamcols) == 2 * 13 * 14
        assert model.supported_node_ids() == sorted(corner_ids(13, 13))

    def test_plate_supports(self):
        model = simply_supported_plate(n=4)
        assert len(model.supports) == 25
        assert len(model.loads) == 1
        assert model.loads[0].node == center_id(4, 4)

    @pytest.mark.parametrize("supports,loads", [("corners", "center"), ("mid_edges", "corners_center")])
    def test_dome_layouts(self, supports, loads):
        model = dome(n=4, supports=supports, loads=loads)
        assert len(model.supports) == 4
        assert model.node(center_id(4, 4)).z == pytest.approx(1.8)

    def test_dome_rejects_unknown_layout(self):
        with pytest.raises(ValueError):
            dome(n=4, supports="edges")
        with pytest.raises(ValueError):
            dome(n=4, loads="everywhere")

    def test_random_model_is_deterministic(self):
        a, b = random_model(seed=5), random_model(seed=5)
        assert np.array_equal(a.coordinates(), b.coordinates())
        assert a.elements == b.elements
        assert not np.array_equal(a.coordinates(), random_model(seed=6).coordinates())

    def test_invalid_options_surface_as_model_errors(self):
        with pytest.raises(ModelError):
            barrel_arch(nu=0.5)


class TestPlateReference:
    def test_navier_series(self):
        D = plate_flexural_rigidity(1.0e6, 0.01, 0.3)
        # classical coefficient 0.01160 P a^2 / D for a centrally loaded square
        assert navier_center_deflection(1.0, 1.0, D) == pytest.approx(0.0116 / D, rel=2e-3)

    def test_flexural_rigidity(self):
        assert plate_flexural_rigidity(12.0, 1.0, 0.0) == pytest.approx(1.0)


class TestBuildFixture:
    def test_by_name_with_options(self):
        model = build_fixture("cantilever", n_elements=2)
        assert len(model.beamcols) == 2

    def test_unknown_name(self):
        with pytest.raises(ValueError) as exc:
            build_fixture("bridge")
        assert "cantilever" in str(exc.value)
