"""JSON model, parameter and scenario documents."""

import json

import numpy as np
import pytest

from fixtures.generators import cantilever, dome
from sso_assembly import assemble_system
from sso_linsolve import solve
from sso_schemas import (
    ModelDocument,
    ParameterSelection,
    ScenarioDocument,
    SchemaError,
    build_model,
    load_model,
    load_parameters,
    load_scenario,
    model_to_document,
    parse_document,
    save_model,
)


def _write(path, data):
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture
def quad_doc():
    return {
        "sso_model": 1,
        "nodes": [{"id": i + 1, "x": x, "y": y, "z": 0.0}
                  for i, (x, y) in enumerate([(0, 0), (1, 0), (1, 1), (0, 1)])],
        "supports": [{"node": 1, "mask": [1, 1, 1, 1, 1, 1]}, {"node": 2, "mask": [1, 1, 1, 0, 0, 0]},
                     {"node": 4, "mask": [1, 1, 1, 0, 0, 0]}],
        "loads": [{"node": 3, "components": [0, 0, -1, 0, 0, 0]}],
        "quads": [{"id": 1, "nodes": [1, 2, 3, 4], "t": 0.1, "E": 1.0e4, "nu": 0.3}],
    }


class TestModelDocuments:
    def test_saved_model_solves_identically(self, tmp_path):
        model = cantilever()
        path = save_model(model, str(tmp_path / "models" / "cantilever.json"))
        loaded = load_model(path)
        assert loaded.dof == model.dof
        u0 = solve(assemble_system(model)).u
        u1 = solve(assemble_system(loaded)).u
        assert np.array_equal(u0, u1)

    def test_document_keeps_shell_fields(self):
        doc = model_to_document(dome(n=2, density=0.5))
        assert doc["sso_model"] == 1
        assert doc["quads"][0]["density"] == 0.5
        assert "prescribed" not in doc["supports"][0]
        assert build_model(parse_document(doc, ModelDocument)).quads[0].density == 0.5

    def test_unknown_field_pointer(self, quad_doc):
        quad_doc["nodes"][2]["w"] = 1.0
        with pytest.raises(SchemaError) as exc:
            parse_document(quad_doc, ModelDocument)
        assert exc.value.pointer == "/nodes/2/w"
        assert "(at /nodes/2/w)" in str(exc.value)

    def test_missing_version(self, quad_doc):
        del quad_doc["sso_model"]
        with pytest.raises(SchemaError) as exc:
            parse_document(quad_doc, ModelDocument)
        assert exc.value.pointer == "/sso_model"

    def test_mask_length(self, quad_doc):
        quad_doc["supports"][0]["mask"] = [1, 1, 1]
        with pytest.raises(SchemaError) as exc:
            parse_document(quad_doc, ModelDocument)
        assert exc.value.pointer.startswith("/supports/0/mask")

    def test_builder_error_pointer(self, quad_doc):
        quad_doc["quads"][0]["nu"] = 0.5
        with pytest.raises(SchemaError) as exc:
            build_model(parse_document(quad_doc, ModelDocument))
        assert exc.value.pointer == "/quads/0/nu"

    def test_builder_node_reference(self, quad_doc):
        quad_doc["loads"][0]["node"] = 99
        with pytest.raises(SchemaError) as exc:
            build_model(parse_document(quad_doc, ModelDocument))
        assert exc.value.pointer == "/loads/0/node"

    def test_schema_error_is_value_error(self):
        assert issubclass(SchemaError, ValueError)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"sso_model": 1,')
        with pytest.raises(SchemaError) as exc:
            load_model(str(path))
        assert "Malformed JSON" in str(exc.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_model(str(tmp_path / "absent.json"))


class TestParameterSelections:
    def test_expand_sets(self):
        model = dome(n=2)
        free = ParameterSelection(kind="node_coord", nodes="free", axis="Z").expand(model)
        assert [p.node for p in free] == [2, 4, 5, 6, 8]
        assert all(p.axis == 2 for p in free)
        thick = ParameterSelection(kind="shell_thickness", elements="quads").expand(model)
        assert [p.element for p in thick] == [1, 2, 3, 4]
        one = ParameterSelection(kind="density_ratio", element=3).expand(model)
        assert one[0].label == "density_ratio:3"

    @pytest.mark.parametrize("selection", [
        {"kind": "node_coord", "node": 1},
        {"kind": "node_coord", "node": 1, "nodes": "all", "axis": 0},
        {"kind": "node_coord", "node": 1, "axis": "W"},
        {"kind": "shell_thickness"},
        {"kind": "elastic_modulus", "element": 1},
    ])
    def test_invalid_selection(self, selection):
        with pytest.raises(SchemaError):
            parse_document(selection, ParameterSelection)

    def test_load_parameters(self, tmp_path):
        model = dome(n=2)
        path = _write(tmp_path / "params.json", {
            "parameters": [{"kind": "node_coord", "node": 5, "axis": 2},
                           {"kind": "shell_thickness", "elements": [1, 2]}],
            "objective": {"kind": "penalized_volume", "t_min": 0.05, "u_max": 0.01},
        })
        params, objective = load_parameters(path, model)
        assert [p.label for p in params] == ["node_coord:5:Z", "shell_thickness:1", "shell_thickness:2"]
        assert objective.kind == "penalized_volume"

    def test_parameter_on_missing_element(self, tmp_path):
        path = _write(tmp_path / "params.json", {"parameters": [{"kind": "density_ratio", "element": 40}]})
        with pytest.raises(SchemaError) as exc:
            load_parameters(path, dome(n=2))
        assert exc.value.pointer == "/parameters/0"

    def test_penalized_volume_needs_limits(self, tmp_path):
        path = _write(tmp_path / "params.json", {
            "parameters": [{"kind": "density_ratio", "element": 1}],
            "objective": {"kind": "penalized_volume", "t_min": 0.05},
        })
        with pytest.raises(SchemaError):
            load_parameters(path, dome(n=2))


class TestScenarios:
    def _scenario(self, **overrides):
        doc = {
            "model": "dome.json",
            "groups": [{"name": "rho", "select": {"kind": "density_ratio", "elements": "quads"},
                        "lower": 0.01, "upper": 1.0}],
            "constraints": [{"kind": "volume", "group": "rho", "budget": 8.0}],
            "optimizer": {"kind": "mma", "move": 0.2},
        }
        doc.update(overrides)
        return doc

    def test_valid_scenario(self):
        doc = parse_document(self._scenario(), ScenarioDocument)
        assert doc.max_iter == 100
        assert doc.optimizer.options() == {"move": 0.2}

    def test_needs_groups_or_network(self):
        with pytest.raises(SchemaError):
            parse_document(self._scenario(groups=[], constraints=[]), ScenarioDocument)
        doc = parse_document(self._scenario(groups=[], constraints=[], nn={"V_star": 8.0}), ScenarioDocument)
        assert doc.nn.widths == [1, 40, 40, 40, 2]

    def test_constraint_group_must_exist(self):
        with pytest.raises(SchemaError):
            parse_document(self._scenario(constraints=[{"group": "t", "budget": 1.0}]), ScenarioDocument)

    def test_bad_bounds_and_budget(self):
        groups = [{"name": "rho", "select": {"kind": "density_ratio", "element": 1}, "lower": 1.0, "upper": 0.5}]
        with pytest.raises(SchemaError):
            parse_document(self._scenario(groups=groups), ScenarioDocument)
        with pytest.raises(SchemaError) as exc:
            parse_document(self._scenario(constraints=[{"group": "rho", "budget": 0}]), ScenarioDocument)
        assert exc.value.pointer == "/constraints/0/budget"

    def test_model_path_is_relative_to_scenario(self, tmp_path):
        path = _write(tmp_path / "scenario.json", self._scenario())
        _, model_path = load_scenario(path)
        assert model_path == str(tmp_path / "dome.json")
