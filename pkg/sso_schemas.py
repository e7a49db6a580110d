#!/usr/bin/env python3
"""
JSON file formats: models, parameter selections and optimization scenarios.

Documents are validated with pydantic; any violation is reported as a
SchemaError carrying a JSON pointer to the offending field.
"""

import json
import logging
import os
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Type, TypeVar, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from sso_model import (
    AXES,
    BeamColumnSpec,
    ModelBuilder,
    ModelError,
    QuadShellSpec,
    StructuralModel,
)
from sso_sensitivity import DesignParameter

logger = logging.getLogger(__name__)

MODEL_SCHEMA_VERSION = 1

Doc = TypeVar("Doc", bound=BaseModel)


class SchemaError(ValueError):
    """Invalid input document; `pointer` locates the field (RFC 6901 style)."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{message} (at {pointer or '/'})")
        self.pointer = pointer


def _pointer(loc: Sequence[Any]) -> str:
    return "".join(f"/{part}" for part in loc)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ------- model documents -------
class NodeDoc(_Strict):
    id: int
    x: float
    y: float
    z: float


class SupportDoc(_Strict):
    node: int
    mask: List[Union[bool, int]] = Field(min_length=6, max_length=6)
    prescribed: Optional[List[float]] = Field(default=None, min_length=6, max_length=6)


class LoadDoc(_Strict):
    node: int
    components: List[float] = Field(min_length=6, max_length=6)


class BeamColumnDoc(_Strict):
    id: int
    i_node: int
    j_node: int
    E: float
    G: float
    Iy: float
    Iz: float
    J: float
    A: float
    density: float = 1.0


class QuadDoc(_Strict):
    id: int
    nodes: List[int] = Field(min_length=4, max_length=4)
    t: float
    E: float
    nu: float
    kappa_x: float = 1.0
    kappa_y: float = 1.0
    density: float = 1.0


class ModelDocument(_Strict):
    sso_model: Literal[1]
    simp_penalty: float = 1.0
    nodes: List[NodeDoc]
    supports: List[SupportDoc] = []
    loads: List[LoadDoc] = []
    beamcols: List[BeamColumnDoc] = []
    quads: List[QuadDoc] = []


# ------- parameter selections -------
NodeSet = Union[Literal["all", "free"], List[int]]
ElementSet = Union[Literal["all", "quads", "beamcols"], List[int]]


class ParameterSelection(_Strict):
    """One parameter, or a set of them selected by node or element ids."""
    kind: Literal["node_coord", "shell_thickness", "density_ratio"]
    node: Optional[int] = None
    nodes: Optional[NodeSet] = None
    axis: Optional[Union[int, str]] = None
    element: Optional[int] = None
    elements: Optional[ElementSet] = None

    @field_validator("axis")
    @classmethod
    def _axis(cls, v):
        if isinstance(v, str):
            if v.upper() not in AXES:
                raise ValueError(f"axis must be one of {AXES}")
            return AXES.index(v.upper())
        if v is not None and v not in (0, 1, 2):
            raise ValueError("axis must be 0, 1 or 2")
        return v

    @model_validator(mode="after")
    def _complete(self):
        if self.kind == "node_coord":
            if (self.node is None) == (self.nodes is None):
                raise ValueError("node_coord needs exactly one of node / nodes")
            if self.axis is None:
                raise ValueError("node_coord needs an axis")
        elif (self.element is None) == (self.elements is None):
            raise ValueError(f"{self.kind} needs exactly one of element / elements")
        return self

    def expand(self, model: StructuralModel) -> List[DesignParameter]:
        if self.kind == "node_coord":
            if self.node is not None:
                ids = [self.node]
            elif self.nodes == "all":
                ids = model.node_ids
            elif self.nodes == "free":
                supported = set(model.supported_node_ids())
                ids = [n for n in model.node_ids if n not in supported]
            else:
                ids = list(self.nodes)
            return [DesignParameter.node_coord(n, self.axis) for n in ids]

        if self.element is not None:
            ids = [self.element]
        elif self.elements == "all":
            ids = [e.id for e in model.elements]
        elif self.elements == "quads":
            ids = [e.id for e in model.quads]
        elif self.elements == "beamcols":
            ids = [e.id for e in model.beamcols]
        else:
            ids = list(self.elements)
        make = DesignParameter.shell_thickness if self.kind == "shell_thickness" else DesignParameter.density_ratio
        return [make(e) for e in ids]


class ObjectiveDoc(_Strict):
    kind: Literal["strain_energy", "penalized_volume"] = "strain_energy"
    t_min: Optional[float] = None
    u_max: Optional[float] = None
    epsilon: float = 1.0
    kappa: float = 1.015
    component: int = 2

    @model_validator(mode="after")
    def _size_fields(self):
        if self.kind == "penalized_volume" and (self.t_min is None or self.u_max is None):
            raise ValueError("penalized_volume needs t_min and u_max")
        return self


class ParameterFile(_Strict):
    parameters: List[ParameterSelection] = Field(min_length=1)
    objective: ObjectiveDoc = ObjectiveDoc()


# ------- scenarios -------
class BoxDoc(_Strict):
    z_min: float
    z_max: float


class GroupDoc(_Strict):
    name: str
    select: ParameterSelection
    lower: float
    upper: float
    box: Optional[BoxDoc] = None
    filter_radius: Optional[float] = None

    @model_validator(mode="after")
    def _bounds(self):
        if self.lower > self.upper:
            raise ValueError("lower must not exceed upper")
        return self


class ConstraintDoc(_Strict):
    kind: Literal["volume"] = "volume"
    group: str
    budget: float = Field(gt=0)


class OptimizerDoc(BaseModel):
    model_config = ConfigDict(extra="allow")
    kind: Literal["gd", "adam", "mma"] = "gd"

    def options(self) -> Dict[str, Any]:
        return dict(self.model_extra or {})


class NnDoc(_Strict):
    widths: List[int] = [1, 40, 40, 40, 2]
    output: Literal["sigmoid", "softmax"] = "sigmoid"
    lr: float = 0.01
    epochs: int = 100
    alpha2_start: float = 0.1
    alpha2_step: float = 0.05
    P_start: float = 2.0
    P_step: float = 0.06
    P_cap: float = 8.0
    V_star: float = Field(gt=0)
    seed: int = 0
    p_min: float = 0.01
    alpha1: Optional[float] = None
    z_min: float = 0.0
    z_max: float = 3.0
    shape_radius: Optional[float] = None
    density_radius: Optional[float] = None
    design_supports: bool = False
    enforce_budget: bool = True
    support_nodes: Optional[List[int]] = None


class ScenarioDocument(_Strict):
    model: str
    solver: Optional[Literal["dense", "sparse"]] = None
    simp_penalty: Optional[float] = None
    objective: ObjectiveDoc = ObjectiveDoc()
    groups: List[GroupDoc] = []
    constraints: List[ConstraintDoc] = []
    filter_mode: Literal["gradient", "variable"] = "gradient"
    optimizer: OptimizerDoc = OptimizerDoc()
    max_iter: int = Field(default=100, ge=0)
    snapshot_every: int = Field(default=0, ge=0)
    log_every: int = Field(default=10, ge=0)
    nn: Optional[NnDoc] = None

    @model_validator(mode="after")
    def _groups_or_nn(self):
        if not self.groups and self.nn is None:
            raise ValueError("scenario needs design groups or an nn section")
        names = [g.name for g in self.groups]
        if len(set(names)) != len(names):
            raise ValueError("group names must be unique")
        for c in self.constraints:
            if c.group not in names:
                raise ValueError(f"constraint refers to unknown group {c.group!r}")
        return self


# ------- loading -------
def load_json(path: str) -> Any:
    if not os.path.exists(path):
        raise FileNotFoundError(f"No such file: {path}")
    with open(path, "r") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"Malformed JSON in {path}: {e.msg} (line {e.lineno}, column {e.colno})") from None


def parse_document(data: Any, doc_type: Type[Doc], source: str = "document") -> Doc:
    try:
        return doc_type.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise SchemaError(f"{source}: {first['msg']}", _pointer(first["loc"])) from None


def build_model(doc: ModelDocument) -> StructuralModel:
    """Feed a validated document through the builder; builder errors get a pointer."""
    builder = ModelBuilder(simp_penalty=doc.simp_penalty)

    def guarded(pointer: str, action, *args):
        try:
            action(*args)
        except ModelError as e:
            raise SchemaError(str(e), f"{pointer}/{e.field}" if e.field else pointer) from None

    for i, n in enumerate(doc.nodes):
        guarded(f"/nodes/{i}", builder.add_node, n.id, n.x, n.y, n.z)
    for i, b in enumerate(doc.beamcols):
        guarded(f"/beamcols/{i}", builder.add_beamcol, BeamColumnSpec(**b.model_dump()))
    for i, q in enumerate(doc.quads):
        data = q.model_dump()
        data["nodes"] = tuple(data["nodes"])
        guarded(f"/quads/{i}", builder.add_quad, QuadShellSpec(**data))
    for i, s in enumerate(doc.supports):
        guarded(f"/supports/{i}", builder.add_support, s.node, s.mask, s.prescribed)
    for i, ld in enumerate(doc.loads):
        guarded(f"/loads/{i}", builder.add_nodal_load, ld.node, ld.components)
    try:
        return builder.finalize()
    except ModelError as e:
        raise SchemaError(str(e), f"/{e.field}" if e.field else "") from None


def load_model(path: str) -> StructuralModel:
    model = build_model(parse_document(load_json(path), ModelDocument, path))
    logger.info(f"Loaded model {path}: {model.summary()}")
    return model


def model_to_document(model: StructuralModel) -> Dict[str, Any]:
    doc: Dict[str, Any] = {
        "sso_model": MODEL_SCHEMA_VERSION,
        "simp_penalty": model.simp_penalty,
        "nodes": [{"id": n.id, "x": n.x, "y": n.y, "z": n.z} for n in model.nodes],
        "supports": [
            {"node": s.node, "mask": [int(m) for m in s.mask],
             **({"prescribed": list(s.prescribed)} if any(s.prescribed) else {})}
            for s in model.supports
        ],
        "loads": [{"node": ld.node, "components": list(ld.components)} for ld in model.loads],
        "beamcols": [
            {"id": b.id, "i_node": b.i_node, "j_node": b.j_node, "E": b.E, "G": b.G, "Iy": b.Iy,
             "Iz": b.Iz, "J": b.J, "A": b.A, "density": b.density}
            for b in model.beamcols
        ],
        "quads": [
            {"id": q.id, "nodes": list(q.nodes), "t": q.t, "E": q.E, "nu": q.nu,
             "kappa_x": q.kappa_x, "kappa_y": q.kappa_y, "density": q.density}
            for q in model.quads
        ],
    }
    return doc


def save_model(model: StructuralModel, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        json.dump(model_to_document(model), f, indent=2)
    return path


def load_parameters(path: str, model: StructuralModel) -> Tuple[List[Any], ObjectiveDoc]:
    """Expanded design parameters and the objective named in a parameter file."""
    doc = parse_document(load_json(path), ParameterFile, path)
    params = []
    for i, sel in enumerate(doc.parameters):
        try:
            expanded = sel.expand(model)
            for p in expanded:
                p.validate(model)
        except (ModelError, KeyError) as e:
            raise SchemaError(str(e), f"/parameters/{i}") from None
        params.extend(expanded)
    return params, doc.objective


def load_scenario(path: str) -> Tuple[ScenarioDocument, str]:
    """Scenario document and the resolved model path (relative to the scenario file)."""
    doc = parse_document(load_json(path), ScenarioDocument, path)
    model_path = doc.model
    if not os.path.isabs(model_path):
        model_path = os.path.join(os.path.dirname(os.path.abspath(path)), model_path)
    return doc, model_path
