#!/usr/bin/env python3
"""
Element stiffness kernels and their design derivatives.

Both kernels are written once against the arithmetic of sso_dual, so the same
code returns the primal global-frame stiffness for plain inputs and exact
forward-mode derivatives when selected inputs are seeded as dual numbers.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from sso_dual import DualArray, cross, dot3, is_dual, norm, seed, stack, tensordot, value
from sso_model import (
    BeamColumnSpec,
    Element,
    ModelError,
    QuadShellSpec,
    StructuralModel,
)

logger = logging.getLogger(__name__)

# Beam members closer than this to global Z use global X as auxiliary vector
VERTICAL_TOLERANCE_RAD = 1e-6
SHEAR_CORRECTION = 5.0 / 6.0
DRILLING_FACTOR = 1e-6


class ElementError(ModelError):
    """Element-level failure (degenerate geometry). Carries the element id when known."""

    def __init__(self, message: str, element_id: Optional[int] = None):
        super().__init__(message, field="element")
        self.element_id = element_id


@dataclass
class ElementStiffness:
    matrix: np.ndarray
    dof_indices: Optional[np.ndarray] = None


@dataclass
class ElementJacobian:
    entries: np.ndarray
    load: np.ndarray


# ------- beam-column -------
def _beam_patterns() -> np.ndarray:
    """Constant 12x12 patterns P_i so that k_local = sum_i c_i * P_i."""
    P = np.zeros((10, 12, 12))

    def put(i, entries):
        for (r, c), v in entries.items():
            P[i, r, c] = v
            P[i, c, r] = v

    put(0, {(0, 0): 1, (0, 6): -1, (6, 6): 1})                       # EA/L
    put(1, {(3, 3): 1, (3, 9): -1, (9, 9): 1})                       # GJ/L
    # bending in local x-y plane (v, theta_z), governed by Iz
    put(2, {(1, 1): 1, (1, 7): -1, (7, 7): 1})                       # 12EI/L^3
    put(3, {(1, 5): 1, (1, 11): 1, (5, 7): -1, (7, 11): -1})          # 6EI/L^2
    put(4, {(5, 5): 1, (11, 11): 1})                                 # 4EI/L
    put(5, {(5, 11): 1})                                             # 2EI/L
    # bending in local x-z plane (w, theta_y), governed by Iy
    put(6, {(2, 2): 1, (2, 8): -1, (8, 8): 1})
    put(7, {(2, 4): -1, (2, 10): -1, (4, 8): 1, (8, 10): 1})
    put(8, {(4, 4): 1, (10, 10): 1})
    put(9, {(4, 10): 1})
    return P


def _rotation_blocks(n_blocks: int) -> np.ndarray:
    """Q[r, c] = kron(I_n, e_r e_c^T) so that T = sum_rc R[r, c] * Q[r, c]."""
    size = 3 * n_blocks
    Q = np.zeros((3, 3, size, size))
    for r in range(3):
        for c in range(3):
            for b in range(n_blocks):
                Q[r, c, 3 * b + r, 3 * b + c] = 1.0
    return Q


BEAM_PATTERNS = _beam_patterns()
BEAM_ROTATION = _rotation_blocks(4)
QUAD_ROTATION = _rotation_blocks(8)


def beam_local_axes(xi: Any, xj: Any) -> Tuple[Any, Any]:
    """Rows (x, y, z) of the member frame and the member length."""
    d = xj - xi
    L = norm(d)
    ex = d / L
    if abs(float(value(ex)[2])) > math.cos(VERTICAL_TOLERANCE_RAD):
        aux = np.array([1.0, 0.0, 0.0])
    else:
        aux = np.array([0.0, 0.0, 1.0])
    ez = aux - dot3(aux, ex) * ex
    ez = ez / norm(ez)
    ey = cross(ez, ex)
    return stack([ex, ey, ez]), L


def beamcol_kernel(xi: Any, xj: Any, E: Any, G: Any, Iy: Any, Iz: Any, J: Any, A: Any) -> Any:
    """Global 12x12 stiffness T^T k T of a 3D frame member."""
    R, L = beam_local_axes(xi, xj)
    if float(value(L)) <= 0:
        raise ElementError("beam-column has zero length")
    coeffs = stack([
        E * A / L,
        G * J / L,
        12.0 * E * Iz / L ** 3,
        6.0 * E * Iz / L ** 2,
        4.0 * E * Iz / L,
        2.0 * E * Iz / L,
        12.0 * E * Iy / L ** 3,
        6.0 * E * Iy / L ** 2,
        4.0 * E * Iy / L,
        2.0 * E * Iy / L,
    ])
    k_local = tensordot(coeffs, BEAM_PATTERNS, 1)
    T = tensordot(R, BEAM_ROTATION, 2)
    return T.T @ k_local @ T


def beam_local_stiffness(spec: BeamColumnSpec, length: float, simp_penalty: float = 1.0) -> np.ndarray:
    """Local-frame 12x12 matrix, handy for checks against textbook tables."""
    E = effective_modulus(spec.E, spec.density, simp_penalty)
    L = float(length)
    coeffs = np.array([
        E * spec.A / L, spec.G * spec.J / L,
        12 * E * spec.Iz / L ** 3, 6 * E * spec.Iz / L ** 2, 4 * E * spec.Iz / L, 2 * E * spec.Iz / L,
        12 * E * spec.Iy / L ** 3, 6 * E * spec.Iy / L ** 2, 4 * E * spec.Iy / L, 2 * E * spec.Iy / L,
    ])
    return np.tensordot(coeffs, BEAM_PATTERNS, 1)


# ------- MITC-4 quad -------
GAUSS = 1.0 / math.sqrt(3.0)
GAUSS_POINTS = [(-GAUSS, -GAUSS), (GAUSS, -GAUSS), (GAUSS, GAUSS), (-GAUSS, GAUSS)]
R_NODES = np.array([-1.0, 1.0, 1.0, -1.0])
S_NODES = np.array([-1.0, -1.0, 1.0, 1.0])


def shape_functions(r: float, s: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bilinear N, dN/dr, dN/ds at natural point (r, s)."""
    N = 0.25 * (1 + r * R_NODES) * (1 + s * S_NODES)
    dNr = 0.25 * R_NODES * (1 + s * S_NODES)
    dNs = 0.25 * S_NODES * (1 + r * R_NODES)
    return N, dNr, dNs


def _placement(rows: int, entries: Sequence[Tuple[int, int, float]]) -> np.ndarray:
    """(4, rows, 24) selector: node i's scalar lands at (row, 6*i + dof) scaled."""
    S = np.zeros((4, rows, 24))
    for i in range(4):
        for row, dof, scale in entries:
            S[i, row, 6 * i + dof] = scale
    return S


# membrane: eps_xx = u,x ; eps_yy = v,y ; gamma_xy = u,y + v,x
MEMBRANE_X = _placement(3, [(0, 0, 1.0), (2, 1, 1.0)])
MEMBRANE_Y = _placement(3, [(1, 1, 1.0), (2, 0, 1.0)])
# bending with u = z*theta_y, v = -z*theta_x
BENDING_X = _placement(3, [(0, 4, 1.0), (2, 3, -1.0)])
BENDING_Y = _placement(3, [(1, 3, -1.0), (2, 4, 1.0)])
# covariant transverse shear rows: w, theta_x, theta_y columns
SHEAR_W = _placement(1, [(0, 2, 1.0)])[:, 0, :]
SHEAR_TX = _placement(1, [(0, 3, 1.0)])[:, 0, :]
SHEAR_TY = _placement(1, [(0, 4, 1.0)])[:, 0, :]
DRILLING = np.diag([1.0 if k % 6 == 5 else 0.0 for k in range(24)])


def quad_frame(X: Any) -> Tuple[Any, Any, Any]:
    """Local frame rows (e1, e2, n) and in-plane nodal coordinates (x, y).

    The normal comes from the diagonals; e1 points from the midpoint of edge
    4-1 to the midpoint of edge 2-3, projected onto the element plane.
    """
    n = cross(X[2] - X[0], X[3] - X[1])
    n_len = norm(n)
    if float(value(n_len)) <= 0:
        raise ElementError("quad has zero projected area")
    n = n / n_len
    v1 = (X[1] + X[2] - X[0] - X[3]) * 0.5
    e1 = v1 - dot3(v1, n) * n
    e1 = e1 / norm(e1)
    e2 = cross(n, e1)
    rel = X - X.sum(axis=0) * 0.25
    return stack([e1, e2, n]), rel @ e1, rel @ e2


def _jacobian(dNr: np.ndarray, dNs: np.ndarray, xl: Any, yl: Any) -> Tuple[Any, Any, Any, Any]:
    return dot3(dNr, xl), dot3(dNr, yl), dot3(dNs, xl), dot3(dNs, yl)


def _shear_rz(r: float, s: float, xl: Any, yl: Any) -> Any:
    N, dNr, dNs = shape_functions(r, s)
    x_r, y_r, _, _ = _jacobian(dNr, dNs, xl, yl)
    return dNr @ SHEAR_W - y_r * (N @ SHEAR_TX) + x_r * (N @ SHEAR_TY)


def _shear_sz(r: float, s: float, xl: Any, yl: Any) -> Any:
    N, dNr, dNs = shape_functions(r, s)
    _, _, x_s, y_s = _jacobian(dNr, dNs, xl, yl)
    return dNs @ SHEAR_W - y_s * (N @ SHEAR_TX) + x_s * (N @ SHEAR_TY)


def quad_local_parts(X: Any, t: Any, E: Any, nu: float, kappa_x: float = 1.0,
                     kappa_y: float = 1.0) -> Dict[str, Any]:
    """Membrane, bending, shear and drilling 24x24 blocks in the element frame.

    Also returns the frame rotation under key 'rotation'. Raises ElementError
    when the Jacobian determinant is not positive at a Gauss point.
    """
    R, xl, yl = quad_frame(X)

    nu = float(nu)
    membrane_c = np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - nu)]])
    cross_k = math.sqrt(kappa_x * kappa_y)
    bending_c = np.array([
        [kappa_x, nu * cross_k, 0.0],
        [nu * cross_k, kappa_y, 0.0],
        [0.0, 0.0, 0.5 * (1.0 - nu) * cross_k],
    ])
    Cm = (E * t / (1.0 - nu ** 2)) * membrane_c
    Db = (E * t ** 3 / (12.0 * (1.0 - nu ** 2))) * bending_c
    shear_rigidity = SHEAR_CORRECTION * E / (2.0 * (1.0 + nu)) * t

    # tying points: A(0,-1), C(0,1) for gamma_rz; D(-1,0), B(1,0) for gamma_sz
    rz_a, rz_c = _shear_rz(0.0, -1.0, xl, yl), _shear_rz(0.0, 1.0, xl, yl)
    sz_d, sz_b = _shear_sz(-1.0, 0.0, xl, yl), _shear_sz(1.0, 0.0, xl, yl)

    Km = Kb = Ks = 0.0
    for r, s in GAUSS_POINTS:
        _, dNr, dNs = shape_functions(r, s)
        x_r, y_r, x_s, y_s = _jacobian(dNr, dNs, xl, yl)
        det = x_r * y_s - y_r * x_s
        if float(value(det)) <= 0:
            raise ElementError(f"non-positive Jacobian determinant at ({r:.3f}, {s:.3f})")
        dNx = (y_s * dNr - y_r * dNs) / det
        dNy = (x_r * dNs - x_s * dNr) / det

        Bm = tensordot(dNx, MEMBRANE_X, 1) + tensordot(dNy, MEMBRANE_Y, 1)
        Bb = tensordot(dNx, BENDING_X, 1) + tensordot(dNy, BENDING_Y, 1)
        g_rz = 0.5 * (1 - s) * rz_a + 0.5 * (1 + s) * rz_c
        g_sz = 0.5 * (1 - r) * sz_d + 0.5 * (1 + r) * sz_b
        Bs = stack([(y_s * g_rz - y_r * g_sz) / det, (x_r * g_sz - x_s * g_rz) / det])

        Km = Km + (Bm.T @ Cm @ Bm) * det
        Kb = Kb + (Bb.T @ Db @ Bb) * det
        Ks = Ks + (Bs.T @ Bs) * (shear_rigidity * det)

    plate = Kb + Ks
    diag = np.diag(value(plate))
    rot_mean = [0.5 * (diag[6 * i + 3] + diag[6 * i + 4]) for i in range(4)]
    i_max = int(np.argmax(rot_mean))
    k_drill = DRILLING_FACTOR * 0.5 * (plate[6 * i_max + 3, 6 * i_max + 3] + plate[6 * i_max + 4, 6 * i_max + 4])
    Kd = k_drill * DRILLING

    return {"membrane": Km, "bending": Kb, "shear": Ks, "drilling": Kd, "rotation": R}


def quad_kernel(X: Any, t: Any, E: Any, nu: float, kappa_x: float = 1.0, kappa_y: float = 1.0) -> Any:
    """Global 24x24 MITC-4 stiffness."""
    parts = quad_local_parts(X, t, E, nu, kappa_x, kappa_y)
    K_local = parts["membrane"] + parts["bending"] + parts["shear"] + parts["drilling"]
    T = tensordot(parts["rotation"], QUAD_ROTATION, 2)
    return T.T @ K_local @ T


def quad_area(X: Any) -> Any:
    """Mid-surface area of the projected quad by 2x2 Gauss integration."""
    _, xl, yl = quad_frame(X)
    area = 0.0
    for r, s in GAUSS_POINTS:
        _, dNr, dNs = shape_functions(r, s)
        x_r, y_r, x_s, y_s = _jacobian(dNr, dNs, xl, yl)
        area = area + (x_r * y_s - y_r * x_s)
    return area


# ------- model-facing API -------
def effective_modulus(E: Any, density: Any, simp_penalty: float) -> Any:
    """SIMP-penalized modulus density**P * E."""
    return E * density ** simp_penalty


def beamcol_stiffness(spec: BeamColumnSpec, node_coords: np.ndarray, simp_penalty: float = 1.0,
                      dof_indices: Optional[np.ndarray] = None) -> ElementStiffness:
    coords = np.asarray(node_coords, dtype=float)
    E = effective_modulus(spec.E, spec.density, simp_penalty)
    try:
        K = beamcol_kernel(coords[0], coords[1], E, spec.G, spec.Iy, spec.Iz, spec.J, spec.A)
    except ElementError as e:
        raise ElementError(f"beamcol {spec.id}: {e}", spec.id) from e
    return ElementStiffness(np.asarray(K), dof_indices)


def quad_stiffness(spec: QuadShellSpec, node_coords: np.ndarray, simp_penalty: float = 1.0,
                   dof_indices: Optional[np.ndarray] = None) -> ElementStiffness:
    coords = np.asarray(node_coords, dtype=float)
    E = effective_modulus(spec.E, spec.density, simp_penalty)
    try:
        K = quad_kernel(coords, spec.t, E, spec.nu, spec.kappa_x, spec.kappa_y)
    except ElementError as e:
        raise ElementError(f"quad {spec.id}: {e}", spec.id) from e
    return ElementStiffness(np.asarray(K), dof_indices)


def element_stiffness(model: StructuralModel, element: Element) -> ElementStiffness:
    coords = model.element_coordinates(element)
    dofs = model.element_dofs(element)
    if isinstance(element, BeamColumnSpec):
        return beamcol_stiffness(element, coords, model.simp_penalty, dofs)
    return quad_stiffness(element, coords, model.simp_penalty, dofs)


# Local parameter handles: ("coord", position in element, axis) | ("thickness",) | ("density",)
LocalParam = Tuple


def local_parameter(element: Element, param: Any) -> Optional[LocalParam]:
    """Translate a design parameter into an element-local handle, or None if it does not touch it."""
    if param.kind == "node_coord":
        if param.node in element.nodes:
            return ("coord", element.nodes.index(param.node), int(param.axis))
        return None
    if param.element != element.id:
        return None
    if param.kind == "shell_thickness":
        if not isinstance(element, QuadShellSpec):
            raise ModelError(f"shell_thickness parameter targets non-shell element {element.id}",
                             field="element")
        return ("thickness",)
    if param.kind == "density_ratio":
        return ("density",)
    raise ModelError(f"Unknown parameter kind {param.kind!r}", field="kind")


def element_tangents(model: StructuralModel, element: Element,
                     handles: Sequence[LocalParam]) -> Tuple[np.ndarray, np.ndarray]:
    """Element stiffness and its derivatives along each local handle.

    Returns (K, dK) with dK of shape (len(handles), n, n); one forward pass
    carries all directions.
    """
    coords = model.element_coordinates(element)
    rows: List[List[Any]] = [list(map(float, c)) for c in coords]
    thickness: Any = getattr(element, "t", None)
    density: Any = element.density

    base = []
    for h in handles:
        if h[0] == "coord":
            base.append(rows[h[1]][h[2]])
        elif h[0] == "thickness":
            base.append(thickness)
        else:
            base.append(density)
    duals = seed(base)
    for h, d in zip(handles, duals):
        if h[0] == "coord":
            rows[h[1]][h[2]] = d
        elif h[0] == "thickness":
            thickness = d
        else:
            density = d

    X = stack([stack(r) for r in rows])
    E = effective_modulus(element.E, density, model.simp_penalty)
    try:
        if isinstance(element, BeamColumnSpec):
            K = beamcol_kernel(X[0], X[1], E, element.G, element.Iy, element.Iz, element.J, element.A)
        else:
            K = quad_kernel(X, thickness, E, element.nu, element.kappa_x, element.kappa_y)
    except ElementError as e:
        raise ElementError(f"element {element.id}: {e}", element.id) from e

    n = 12 if isinstance(element, BeamColumnSpec) else 24
    if not is_dual(K):
        return np.asarray(K), np.zeros((len(handles), n, n))
    return K.val, K.dot


def element_jacobian(model: StructuralModel, element: Element, param: Any) -> ElementJacobian:
    """d(k_e)/d(param) in global coordinates; zeros when param does not touch the element."""
    n = 12 if isinstance(element, BeamColumnSpec) else 24
    handle = local_parameter(element, param)
    if handle is None:
        return ElementJacobian(np.zeros((n, n)), np.zeros(n))
    _, dK = element_tangents(model, element, [handle])
    return ElementJacobian(dK[0], np.zeros(n))
