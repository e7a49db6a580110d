#!/usr/bin/env python3
"""
Structural model definition for the optimizer.

Nodes, supports, nodal loads and elements are collected by a ModelBuilder and
frozen into an immutable StructuralModel. Every node carries 6 DOF ordered
(UX, UY, UZ, RX, RY, RZ); global DOF numbering is node-major over the sorted
node ids, so node index i and component c map to 6*i + c.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

DOF_PER_NODE = 6
COMPONENTS = ("UX", "UY", "UZ", "RX", "RY", "RZ")
LOAD_COMPONENTS = ("FX", "FY", "FZ", "MX", "MY", "MZ")
AXES = ("X", "Y", "Z")


class ModelError(ValueError):
    """Invalid model input. `field` names the offending attribute or id when known."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class Node:
    id: int
    x: float
    y: float
    z: float

    @property
    def xyz(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class Support:
    """Constraint of a node; `mask` ordered like COMPONENTS."""
    node: int
    mask: Tuple[bool, ...]
    prescribed: Tuple[float, ...] = (0.0,) * DOF_PER_NODE

    @property
    def count(self) -> int:
        return sum(1 for m in self.mask if m)


@dataclass(frozen=True)
class NodalLoad:
    node: int
    components: Tuple[float, ...]


@dataclass(frozen=True)
class BeamColumnSpec:
    """3D Euler-Bernoulli frame member.

    Iz governs bending in the local x-y plane, Iy bending in the local x-z plane.
    `density` is the SIMP density ratio applied to E.
    """
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

    @property
    def nodes(self) -> Tuple[int, int]:
        return (self.i_node, self.j_node)


@dataclass(frozen=True)
class QuadShellSpec:
    """MITC-4 flat shell. `nodes` are given in cyclic order."""
    id: int
    nodes: Tuple[int, int, int, int]
    t: float
    E: float
    nu: float
    kappa_x: float = 1.0
    kappa_y: float = 1.0
    density: float = 1.0


Element = Union[BeamColumnSpec, QuadShellSpec]


def element_kind(element: Element) -> str:
    return "beamcol" if isinstance(element, BeamColumnSpec) else "quad"


@dataclass(frozen=True)
class StructuralModel:
    """Finalized, immutable model.

    `nodes` are sorted by id; `elements` keep insertion order; `supports` and
    `loads` are merged per node and sorted by node id.
    """
    nodes: Tuple[Node, ...]
    elements: Tuple[Element, ...]
    supports: Tuple[Support, ...]
    loads: Tuple[NodalLoad, ...]
    simp_penalty: float = 1.0
    _node_index: Dict[int, int] = field(default=None, init=False, repr=False, compare=False)
    _element_index: Dict[int, int] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_node_index", {n.id: i for i, n in enumerate(self.nodes)})
        object.__setattr__(self, "_element_index", {e.id: i for i, e in enumerate(self.elements)})

    # ------- sizes -------
    @property
    def dof(self) -> int:
        return DOF_PER_NODE * len(self.nodes)

    @property
    def dof_bc(self) -> int:
        return sum(s.count for s in self.supports)

    @property
    def node_ids(self) -> List[int]:
        return [n.id for n in self.nodes]

    @property
    def beamcols(self) -> List[BeamColumnSpec]:
        return [e for e in self.elements if isinstance(e, BeamColumnSpec)]

    @property
    def quads(self) -> List[QuadShellSpec]:
        return [e for e in self.elements if isinstance(e, QuadShellSpec)]

    # ------- lookups -------
    def node_index(self, node_id: int) -> int:
        try:
            return self._node_index[node_id]
        except KeyError:
            raise ModelError(f"Unknown node id {node_id}", field="node") from None

    def node(self, node_id: int) -> Node:
        return self.nodes[self.node_index(node_id)]

    def element(self, element_id: int) -> Element:
        try:
            return self.elements[self._element_index[element_id]]
        except KeyError:
            raise ModelError(f"Unknown element id {element_id}", field="element") from None

    def has_node(self, node_id: int) -> bool:
        return node_id in self._node_index

    def has_element(self, element_id: int) -> bool:
        return element_id in self._element_index

    def coordinates(self) -> np.ndarray:
        """(n_nodes, 3) coordinate array in DOF order."""
        return np.array([n.xyz for n in self.nodes], dtype=float)

    def node_dofs(self, node_id: int) -> np.ndarray:
        start = DOF_PER_NODE * self.node_index(node_id)
        return np.arange(start, start + DOF_PER_NODE)

    def element_dofs(self, element: Element) -> np.ndarray:
        return np.concatenate([self.node_dofs(n) for n in element.nodes])

    def element_coordinates(self, element: Element) -> np.ndarray:
        return np.array([self.node(n).xyz for n in element.nodes], dtype=float)

    def dof_label(self, index: int) -> Tuple[int, str]:
        """Map a global DOF index to (node id, component name)."""
        if not 0 <= index < self.dof:
            raise ModelError(f"DOF index {index} outside 0..{self.dof - 1}", field="dof")
        node_pos, comp = divmod(index, DOF_PER_NODE)
        return self.nodes[node_pos].id, COMPONENTS[comp]

    def constrained_dofs(self) -> Tuple[np.ndarray, np.ndarray]:
        """Constrained DOF indices and their prescribed values, in support order."""
        indices: List[int] = []
        values: List[float] = []
        for support in self.supports:
            base = DOF_PER_NODE * self.node_index(support.node)
            for c in range(DOF_PER_NODE):
                if support.mask[c]:
                    indices.append(base + c)
                    values.append(support.prescribed[c])
        return np.array(indices, dtype=int), np.array(values, dtype=float)

    def supported_node_ids(self) -> List[int]:
        return [s.node for s in self.supports]

    def elements_of_node(self, node_id: int) -> List[Element]:
        return [e for e in self.elements if node_id in e.nodes]

    # ------- functional updates -------
    def with_coordinates(self, coords: np.ndarray) -> "StructuralModel":
        """Copy with node coordinates replaced by an (n_nodes, 3) array."""
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (len(self.nodes), 3):
            raise ModelError(f"Expected coordinates of shape {(len(self.nodes), 3)}, got {coords.shape}")
        nodes = tuple(Node(n.id, float(x), float(y), float(z)) for n, (x, y, z) in zip(self.nodes, coords))
        return replace(self, nodes=nodes)

    def with_elements(self, elements: Sequence[Element]) -> "StructuralModel":
        return replace(self, elements=tuple(elements))

    def with_penalty(self, penalty: float) -> "StructuralModel":
        if penalty < 1.0:
            raise ModelError(f"SIMP penalty must be >= 1, got {penalty}", field="simp_penalty")
        return replace(self, simp_penalty=float(penalty))

    def summary(self) -> str:
        return (f"{len(self.nodes)} nodes, {len(self.beamcols)} beam-columns, "
                f"{len(self.quads)} quads, dof={self.dof}, dof_bc={self.dof_bc}")


def _finite(name: str, value: float, owner: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ModelError(f"{owner}: {name} must be finite, got {value}", field=name)
    return value


def _six(values: Sequence[float], name: str, owner: str) -> Tuple[float, ...]:
    values = tuple(values)
    if len(values) != DOF_PER_NODE:
        raise ModelError(f"{owner}: {name} needs {DOF_PER_NODE} entries, got {len(values)}", field=name)
    return tuple(_finite(name, v, owner) for v in values)


def quad_projected_area(coords: np.ndarray) -> float:
    """Area of a quadrilateral from the cross product of its diagonals."""
    d1 = coords[2] - coords[0]
    d2 = coords[3] - coords[1]
    return 0.5 * float(np.linalg.norm(np.cross(d1, d2)))


class ModelBuilder:
    """Mutable collector; `finalize()` produces the immutable StructuralModel."""

    def __init__(self, simp_penalty: float = 1.0):
        self._nodes: Dict[int, Node] = {}
        self._supports: Dict[int, Support] = {}
        self._loads: Dict[int, Tuple[float, ...]] = {}
        self._elements: List[Element] = []
        self._element_ids: set = set()
        self.simp_penalty = simp_penalty

    def add_node(self, id: int, x: float, y: float, z: float) -> "ModelBuilder":
        id = int(id)
        if id in self._nodes:
            raise ModelError(f"Duplicate node id {id}", field="id")
        owner = f"node {id}"
        self._nodes[id] = Node(id, _finite("x", x, owner), _finite("y", y, owner), _finite("z", z, owner))
        return self

    def _require_node(self, node: int, owner: str) -> int:
        node = int(node)
        if node not in self._nodes:
            raise ModelError(f"{owner}: unknown node {node}", field="node")
        return node

    def add_support(self, node: int, mask: Sequence[Union[bool, int]],
                    prescribed: Optional[Sequence[float]] = None) -> "ModelBuilder":
        """Constrain DOF of a node. Repeated calls merge masks by OR."""
        node = self._require_node(node, "support")
        mask = tuple(bool(m) for m in mask)
        if len(mask) != DOF_PER_NODE:
            raise ModelError(f"support on node {node}: mask needs 6 entries", field="mask")
        if not any(mask):
            raise ModelError(f"support on node {node}: mask constrains nothing", field="mask")
        values = _six(prescribed if prescribed is not None else (0.0,) * DOF_PER_NODE,
                      "prescribed", f"support on node {node}")

        existing = self._supports.get(node)
        if existing is not None:
            merged_mask = tuple(a or b for a, b in zip(existing.mask, mask))
            merged_values = tuple(v if m else old for old, v, m in zip(existing.prescribed, values, mask))
            self._supports[node] = Support(node, merged_mask, merged_values)
        else:
            self._supports[node] = Support(node, mask, values)
        return self

    def add_nodal_load(self, node: int, components: Sequence[float]) -> "ModelBuilder":
        node = self._require_node(node, "load")
        values = _six(components, "components", f"load on node {node}")
        current = self._loads.get(node, (0.0,) * DOF_PER_NODE)
        self._loads[node] = tuple(a + b for a, b in zip(current, values))
        return self

    def _register_element(self, element_id: int) -> None:
        if element_id in self._element_ids:
            raise ModelError(f"Duplicate element id {element_id}", field="id")
        self._element_ids.add(element_id)

    @staticmethod
    def _positive(owner: str, **values: float) -> None:
        for name, v in values.items():
            if not (math.isfinite(v) and v > 0):
                raise ModelError(f"{owner}: {name} must be > 0, got {v}", field=name)

    @staticmethod
    def _density(owner: str, density: float) -> None:
        if not (math.isfinite(density) and 0 < density <= 1):
            raise ModelError(f"{owner}: density must lie in (0, 1], got {density}", field="density")

    def add_beamcol(self, spec: BeamColumnSpec) -> "ModelBuilder":
        owner = f"beamcol {spec.id}"
        self._require_node(spec.i_node, owner)
        self._require_node(spec.j_node, owner)
        if spec.i_node == spec.j_node:
            raise ModelError(f"{owner}: i_node and j_node are both {spec.i_node}", field="j_node")
        self._positive(owner, E=spec.E, G=spec.G, Iy=spec.Iy, Iz=spec.Iz, J=spec.J, A=spec.A)
        self._density(owner, spec.density)
        xi = np.array(self._nodes[spec.i_node].xyz)
        xj = np.array(self._nodes[spec.j_node].xyz)
        if np.linalg.norm(xj - xi) <= 0:
            raise ModelError(f"{owner}: zero length", field="j_node")
        self._register_element(spec.id)
        self._elements.append(spec)
        return self

    def add_quad(self, spec: QuadShellSpec) -> "ModelBuilder":
        owner = f"quad {spec.id}"
        nodes = tuple(int(n) for n in spec.nodes)
        if len(nodes) != 4:
            raise ModelError(f"{owner}: needs 4 nodes, got {len(nodes)}", field="nodes")
        if len(set(nodes)) != 4:
            raise ModelError(f"{owner}: nodes must be distinct, got {nodes}", field="nodes")
        for n in nodes:
            self._require_node(n, owner)
        self._positive(owner, t=spec.t, E=spec.E, kappa_x=spec.kappa_x, kappa_y=spec.kappa_y)
        if not (0 <= spec.nu < 0.5):
            raise ModelError(f"{owner}: nu must satisfy 0 <= nu < 0.5, got {spec.nu}", field="nu")
        self._density(owner, spec.density)
        coords = np.array([self._nodes[n].xyz for n in nodes])
        if quad_projected_area(coords) <= 0:
            raise ModelError(f"{owner}: degenerate quadrilateral (zero projected area)", field="nodes")
        self._register_element(spec.id)
        self._elements.append(replace(spec, nodes=nodes))
        return self

    def finalize(self) -> StructuralModel:
        if not self._elements:
            raise ModelError("Model has no elements", field="elements")
        if not self._supports:
            raise ModelError("Model has no supports", field="supports")
        if self.simp_penalty < 1:
            raise ModelError(f"SIMP penalty must be >= 1, got {self.simp_penalty}", field="simp_penalty")

        nodes = tuple(self._nodes[i] for i in sorted(self._nodes))
        supports = tuple(self._supports[i] for i in sorted(self._supports))
        loads = tuple(NodalLoad(i, self._loads[i]) for i in sorted(self._loads))
        model = StructuralModel(nodes, tuple(self._elements), supports, loads, float(self.simp_penalty))
        logger.debug(f"Finalized model: {model.summary()}")
        return model
