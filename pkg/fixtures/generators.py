#!/usr/bin/env python3
"""
Procedural model generators.

Every generator returns a finalized StructuralModel. Node ids start at 1 and
grids are numbered row by row (x fastest), so scenario files can refer to
nodes by id without shipping meshes.
"""

import logging
import math
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from sso_model import BeamColumnSpec, ModelBuilder, QuadShellSpec, StructuralModel

logger = logging.getLogger(__name__)

PIN = (1, 1, 1, 0, 0, 0)
FIXED = (1, 1, 1, 1, 1, 1)
ARCH_PIN = (1, 1, 1, 1, 0, 1)


def _down(load: float) -> Tuple[float, ...]:
    return (0.0, 0.0, -abs(load), 0.0, 0.0, 0.0)


def parabola(x: float, span: float, rise: float) -> float:
    """Parabolic profile through (0, 0), (span/2, rise), (span, 0)."""
    return 4.0 * rise * x * (span - x) / span ** 2


def shear_modulus(E: float, nu: float) -> float:
    return E / (2.0 * (1.0 + nu))


def rectangular_section(depth: float, width: float) -> Dict[str, float]:
    """A, strong/weak second moments and the thin-rectangle torsion constant."""
    long_side, short_side = max(depth, width), min(depth, width)
    ratio = short_side / long_side
    beta = (1.0 / 3.0) * (1.0 - 0.63 * ratio + 0.052 * ratio ** 5)
    return {
        "A": depth * width,
        "Iy": width * depth ** 3 / 12.0,
        "Iz": depth * width ** 3 / 12.0,
        "J": beta * long_side * short_side ** 3,
    }


# ------- grids -------
def grid_node_id(i: int, j: int, n_x: int) -> int:
    """Id of grid point (i, j) on a grid with n_x elements along x."""
    return j * (n_x + 1) + i + 1


def _add_grid(builder: ModelBuilder, n_x: int, n_y: int, length_x: float, length_y: float,
              height: Callable[[float, float], float]) -> List[int]:
    ids = []
    for j in range(n_y + 1):
        for i in range(n_x + 1):
            x = length_x * i / n_x
            y = length_y * j / n_y
            nid = grid_node_id(i, j, n_x)
            builder.add_node(nid, x, y, height(x, y))
            ids.append(nid)
    return ids


def _add_grid_quads(builder: ModelBuilder, n_x: int, n_y: int, t: float, E: float, nu: float,
                    density: float = 1.0) -> None:
    eid = 1
    for j in range(n_y):
        for i in range(n_x):
            nodes = (grid_node_id(i, j, n_x), grid_node_id(i + 1, j, n_x),
                     grid_node_id(i + 1, j + 1, n_x), grid_node_id(i, j + 1, n_x))
            builder.add_quad(QuadShellSpec(eid, nodes, t, E, nu, density=density))
            eid += 1


def corner_ids(n_x: int, n_y: int) -> List[int]:
    return [grid_node_id(0, 0, n_x), grid_node_id(n_x, 0, n_x),
            grid_node_id(n_x, n_y, n_x), grid_node_id(0, n_y, n_x)]


def mid_edge_ids(n_x: int, n_y: int) -> List[int]:
    if n_x % 2 or n_y % 2:
        raise ValueError("Mid-edge supports need an even number of elements per side")
    return [grid_node_id(n_x // 2, 0, n_x), grid_node_id(n_x, n_y // 2, n_x),
            grid_node_id(n_x // 2, n_y, n_x), grid_node_id(0, n_y // 2, n_x)]


def center_id(n_x: int, n_y: int) -> int:
    if n_x % 2 or n_y % 2:
        raise ValueError("A center node needs an even number of elements per side")
    return grid_node_id(n_x // 2, n_y // 2, n_x)


# ------- beams -------
def spring(k: float = 2.0, force: float = 4.0) -> StructuralModel:
    """Single axial member with one free DOF: u = force / k."""
    b = ModelBuilder()
    b.add_node(1, 0.0, 0.0, 0.0).add_node(2, 1.0, 0.0, 0.0)
    b.add_beamcol(BeamColumnSpec(1, 1, 2, E=k, G=1.0, Iy=1.0, Iz=1.0, J=1.0, A=1.0))
    b.add_support(1, FIXED)
    b.add_support(2, (0, 1, 1, 1, 1, 1))
    b.add_nodal_load(2, (force, 0.0, 0.0, 0.0, 0.0, 0.0))
    return b.finalize()


def cantilever(length: float = 2.0, n_elements: int = 4, load: float = 10.0, E: float = 2.0e8,
               G: float = 8.0e7, Iy: float = 2.0e-5, Iz: float = 1.0e-5, J: float = 3.0e-5,
               A: float = 1.0e-2) -> StructuralModel:
    """Beam along X clamped at x = 0 with a tip load in global +Y (tip deflection P L^3 / 3 E Iz)."""
    b = ModelBuilder()
    for i in range(n_elements + 1):
        b.add_node(i + 1, length * i / n_elements, 0.0, 0.0)
    for i in range(n_elements):
        b.add_beamcol(BeamColumnSpec(i + 1, i + 1, i + 2, E, G, Iy, Iz, J, A))
    b.add_support(1, FIXED)
    b.add_nodal_load(n_elements + 1, (0.0, load, 0.0, 0.0, 0.0, 0.0))
    return b.finalize()


def arch_2d(span: float = 10.0, rise: float = 5.0, n_elements: int = 99, load: float = 500.0,
            E: float = 1.99e8, nu: float = 0.3, Iy: float = 6.6e-5, Iz: float = 3.3e-6,
            A: float = 4.3e-3, J: Optional[float] = None) -> StructuralModel:
    """Parabolic arch in the XZ plane, pinned at both ends, downward load on every interior node."""
    J = J if J is not None else Iy + Iz
    G = shear_modulus(E, nu)
    b = ModelBuilder()
    for i in range(n_elements + 1):
        x = span * i / n_elements
        b.add_node(i + 1, x, 0.0, parabola(x, span, rise))
    for i in range(n_elements):
        b.add_beamcol(BeamColumnSpec(i + 1, i + 1, i + 2, E, G, Iy, Iz, J, A))
    b.add_support(1, ARCH_PIN)
    b.add_support(n_elements + 1, ARCH_PIN)
    for i in range(2, n_elements + 1):
        b.add_nodal_load(i, _down(load))
    return b.finalize()


def arch_center_node(n_elements: int = 99) -> int:
    """Node nearest mid-span of arch_2d."""
    return n_elements // 2 + 1


def multi_span_arch(spans: int = 100, elements_per_span: int = 2, span: float = 30.0,
                    rise: float = 10.0, load: float = 10.0, E: float = 2.0e8, nu: float = 0.3,
                    section: Optional[Dict[str, float]] = None) -> StructuralModel:
    """Chain of parabolic arches on shared pinned piers; dof = 6 (spans * elements_per_span + 1)."""
    if spans < 1 or elements_per_span < 1:
        raise ValueError("spans and elements_per_span must be >= 1")
    sec = section or rectangular_section(0.6, 0.3)
    G = shear_modulus(E, nu)
    b = ModelBuilder()
    n_nodes = spans * elements_per_span + 1
    for k in range(n_nodes):
        s, local = divmod(k, elements_per_span)
        if s == spans:
            s, local = spans - 1, elements_per_span
        x_local = span * local / elements_per_span
        b.add_node(k + 1, s * span + x_local, 0.0, parabola(x_local, span, rise))
    for k in range(n_nodes - 1):
        b.add_beamcol(BeamColumnSpec(k + 1, k + 1, k + 2, E, G, sec["Iy"], sec["Iz"], sec["J"], sec["A"]))
    for s in range(spans + 1):
        b.add_support(s * elements_per_span + 1, ARCH_PIN)
    for k in range(n_nodes):
        if k % elements_per_span:
            b.add_nodal_load(k + 1, _down(load))
    return b.finalize()


def gridshell(n_x: int = 13, n_y: int = 13, length_x: float = 25.0, length_y: float = 15.0,
              rise: float = 1.0, load: float = 10.0, E: float = 3.79e7, nu: float = 0.3,
              depth: float = 0.2, width: float = 0.1) -> StructuralModel:
    """Beam grid on a shallow doubly curved surface, corners pinned, downward load on every other node."""
    sec = rectangular_section(depth, width)
    G = shear_modulus(E, nu)
    b = ModelBuilder()
    _add_grid(b, n_x, n_y, length_x, length_y, lambda x, y: _bubble(x, y, length_x, length_y, rise))
    eid = 1
    for j in range(n_y + 1):
        for i in range(n_x + 1):
            a = grid_node_id(i, j, n_x)
            if i < n_x:
                b.add_beamcol(BeamColumnSpec(eid, a, grid_node_id(i + 1, j, n_x), E, G,
                                             sec["Iy"], sec["Iz"], sec["J"], sec["A"]))
                eid += 1
            if j < n_y:
                b.add_beamcol(BeamColumnSpec(eid, a, grid_node_id(i, j + 1, n_x), E, G,
                                             sec["Iy"], sec["Iz"], sec["J"], sec["A"]))
                eid += 1
    supports = corner_ids(n_x, n_y)
    for nid in supports:
        b.add_support(nid, PIN)
    for nid in range(1, (n_x + 1) * (n_y + 1) + 1):
        if nid not in supports:
            b.add_nodal_load(nid, _down(load))
    return b.finalize()


def _bubble(x: float, y: float, length_x: float, length_y: float, rise: float) -> float:
    xi = 2.0 * x / length_x - 1.0
    eta = 2.0 * y / length_y - 1.0
    return rise * (1.0 - xi ** 2) * (1.0 - eta ** 2)


# ------- shells -------
def barrel_arch(n: int = 20, span: float = 19.0, rise: float = 4.5, load: float = 500.0,
                t: float = 0.25, E: float = 1.99e8, nu: float = 0.2) -> StructuralModel:
    """Parabolic barrel vault, n x n quads, ground edges x = 0 and x = span pinned."""
    b = ModelBuilder()
    _add_grid(b, n, n, span, span, lambda x, y: parabola(x, span, rise))
    _add_grid_quads(b, n, n, t, E, nu)
    supported = set()
    for j in range(n + 1):
        for i in (0, n):
            nid = grid_node_id(i, j, n)
            b.add_support(nid, PIN)
            supported.add(nid)
    for nid in range(1, (n + 1) ** 2 + 1):
        if nid not in supported:
            b.add_nodal_load(nid, _down(load))
    return b.finalize()


def plate_flexural_rigidity(E: float, t: float, nu: float) -> float:
    return E * t ** 3 / (12.0 * (1.0 - nu ** 2))


def navier_center_deflection(load: float, side: float, D: float, terms: int = 201) -> float:
    """Series solution for a centrally loaded, simply supported square plate."""
    total = 0.0
    for m in range(1, terms + 1, 2):
        for n in range(1, terms + 1, 2):
            total += 1.0 / (m * m + n * n) ** 2
    return 4.0 * load * side ** 2 / (math.pi ** 4 * D) * total


def simply_supported_plate(n: int = 32, side: float = 1.0, thickness_ratio: float = 0.01,
                           load: float = 1.0, E: float = 1.0e6, nu: float = 0.3) -> StructuralModel:
    """Flat square plate, hard simple supports on all edges, unit point load at the center."""
    t = thickness_ratio * side
    b = ModelBuilder()
    _add_grid(b, n, n, side, side, lambda x, y: 0.0)
    _add_grid_quads(b, n, n, t, E, nu)
    for j in range(n + 1):
        for i in range(n + 1):
            nid = grid_node_id(i, j, n)
            on_x_edge = i in (0, n)
            on_y_edge = j in (0, n)
            mask = [1, 1, int(on_x_edge or on_y_edge), int(on_x_edge), int(on_y_edge), 1]
            b.add_support(nid, mask)
    b.add_nodal_load(center_id(n, n), _down(load))
    return b.finalize()


def dome(n: int = 8, span: float = 6.0, rise: float = 1.8, supports: str = "corners",
         loads: str = "center", load: float = 500.0, t: float = 0.15, E: float = 2.0e10,
         nu: float = 0.3, density: float = 1.0) -> StructuralModel:
    """Square shallow dome z = rise (1 - xi^2)(1 - eta^2).

    supports: 'corners' or 'mid_edges' (pinned).
    loads: 'center', 'corners' or 'corners_center' (downward point loads).
    """
    b = ModelBuilder()
    _add_grid(b, n, n, span, span, lambda x, y: _bubble(x, y, span, span, rise))
    _add_grid_quads(b, n, n, t, E, nu, density)
    if supports == "corners":
        support_ids = corner_ids(n, n)
    elif supports == "mid_edges":
        support_ids = mid_edge_ids(n, n)
    else:
        raise ValueError(f"Unknown support layout {supports!r}")
    for nid in support_ids:
        b.add_support(nid, PIN)
    load_ids = {
        "center": [center_id(n, n)],
        "corners": corner_ids(n, n),
        "corners_center": corner_ids(n, n) + [center_id(n, n)],
    }.get(loads)
    if load_ids is None:
        raise ValueError(f"Unknown load layout {loads!r}")
    for nid in load_ids:
        b.add_nodal_load(nid, _down(load))
    return b.finalize()


def random_model(seed: int = 0, n: int = 2, with_beams: bool = True) -> StructuralModel:
    """Small irregular shell patch with edge beams and random force loads, for derivative checks."""
    rng = np.random.default_rng(seed)
    span = 2.0
    b = ModelBuilder(simp_penalty=3.0)
    heights = rng.uniform(0.0, 0.4, size=(n + 1) ** 2)
    jitter = rng.uniform(-0.1, 0.1, size=((n + 1) ** 2, 2)) * span / n
    for j in range(n + 1):
        for i in range(n + 1):
            nid = grid_node_id(i, j, n)
            dx, dy = jitter[nid - 1] if 0 < i < n and 0 < j < n else (0.0, 0.0)
            b.add_node(nid, span * i / n + dx, span * j / n + dy, heights[nid - 1])
    eid = 1
    for j in range(n):
        for i in range(n):
            nodes = (grid_node_id(i, j, n), grid_node_id(i + 1, j, n),
                     grid_node_id(i + 1, j + 1, n), grid_node_id(i, j + 1, n))
            b.add_quad(QuadShellSpec(eid, nodes, t=float(rng.uniform(0.05, 0.15)), E=1.0e4, nu=0.3,
                                     kappa_x=float(rng.uniform(0.8, 1.2)), kappa_y=float(rng.uniform(0.8, 1.2)),
                                     density=float(rng.uniform(0.5, 1.0))))
            eid += 1
    if with_beams:
        sec = rectangular_section(0.1, 0.05)
        for i in range(n):
            b.add_beamcol(BeamColumnSpec(eid, grid_node_id(i, n, n), grid_node_id(i + 1, n, n), 1.0e4,
                                         shear_modulus(1.0e4, 0.3), sec["Iy"], sec["Iz"], sec["J"], sec["A"],
                                         density=float(rng.uniform(0.5, 1.0))))
            eid += 1
    for nid in (grid_node_id(0, 0, n), grid_node_id(n, 0, n)):
        b.add_support(nid, FIXED)
    b.add_support(grid_node_id(0, n, n), PIN)
    supported = {grid_node_id(0, 0, n), grid_node_id(n, 0, n), grid_node_id(0, n, n)}
    for nid in range(1, (n + 1) ** 2 + 1):
        if nid not in supported:
            force = rng.uniform(-1.0, 1.0, size=3)
            b.add_nodal_load(nid, (force[0], force[1], force[2] - 1.0, 0.0, 0.0, 0.0))
    return b.finalize()


FIXTURES: Dict[str, Callable[..., StructuralModel]] = {
    "spring": spring,
    "cantilever": cantilever,
    "arch-2d": arch_2d,
    "multi-span-arch": multi_span_arch,
    "gridshell": gridshell,
    "barrel-arch": barrel_arch,
    "plate": simply_supported_plate,
    "dome": dome,
    "random": random_model,
}


def build_fixture(name: str, **options: Any) -> StructuralModel:
    try:
        generator = FIXTURES[name]
    except KeyError:
        raise ValueError(f"Unknown fixture {name!r}; available: {', '.join(sorted(FIXTURES))}") from None
    model = generator(**options)
    logger.info(f"Fixture {name}: {model.summary()}")
    return model
