#!/usr/bin/env python3
"""
Adjoint sensitivities of scalar objectives g(u, p).

For K_aug u_aug = f_aug the gradient is

    dg/dp = dg/dp|explicit - lambda^T (dK/dp u - df/dp),   K_aug^T lambda = [dg/du; 0]

so one extra solve with the cached factorization serves any number of design
parameters. Element derivatives dK/dp come from forward-mode passes through
the element kernels, batched per element over all parameters touching it.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from sso_assembly import AugmentedSystem, assemble_system
from sso_dual import DualArray
from sso_elements import element_tangents, local_parameter
from sso_linsolve import SolveHandle, Solution, SolverChoice, solve
from sso_model import AXES, ModelError, QuadShellSpec, StructuralModel

logger = logging.getLogger(__name__)

PARAMETER_KINDS = ("node_coord", "shell_thickness", "density_ratio")
DEFAULT_FD_STEP = 1e-6


@dataclass(frozen=True)
class DesignParameter:
    """One scalar of the design vector."""
    kind: str
    node: Optional[int] = None
    axis: Optional[int] = None
    element: Optional[int] = None

    def __post_init__(self):
        if self.kind not in PARAMETER_KINDS:
            raise ModelError(f"Unknown parameter kind {self.kind!r}", field="kind")
        if self.kind == "node_coord":
            if self.node is None or self.axis not in (0, 1, 2):
                raise ModelError("node_coord parameter needs node and axis in 0..2", field="axis")
        elif self.element is None:
            raise ModelError(f"{self.kind} parameter needs an element id", field="element")

    @classmethod
    def node_coord(cls, node: int, axis: Any) -> "DesignParameter":
        if isinstance(axis, str):
            axis = AXES.index(axis.upper())
        return cls("node_coord", node=int(node), axis=int(axis))

    @classmethod
    def shell_thickness(cls, element: int) -> "DesignParameter":
        return cls("shell_thickness", element=int(element))

    @classmethod
    def density_ratio(cls, element: int) -> "DesignParameter":
        return cls("density_ratio", element=int(element))

    @property
    def label(self) -> str:
        if self.kind == "node_coord":
            return f"node_coord:{self.node}:{AXES[self.axis]}"
        return f"{self.kind}:{self.element}"

    def validate(self, model: StructuralModel) -> None:
        if self.kind == "node_coord":
            model.node(self.node)
            return
        element = model.element(self.element)
        if self.kind == "shell_thickness" and not isinstance(element, QuadShellSpec):
            raise ModelError(f"{self.label}: element {self.element} is not a shell", field="element")

    def value(self, model: StructuralModel) -> float:
        if self.kind == "node_coord":
            return float(model.node(self.node).xyz[self.axis])
        element = model.element(self.element)
        return float(element.t if self.kind == "shell_thickness" else element.density)


def parameter_values(model: StructuralModel, params: Sequence[DesignParameter]) -> np.ndarray:
    return np.array([p.value(model) for p in params], dtype=float)


def apply_parameters(model: StructuralModel, params: Sequence[DesignParameter],
                     values: Sequence[float]) -> StructuralModel:
    """Copy of the model with the parameter values substituted."""
    values = np.asarray(values, dtype=float)
    if len(values) != len(params):
        raise ValueError(f"Got {len(values)} values for {len(params)} parameters")
    coords = None
    updates: Dict[int, Dict[str, float]] = {}
    for p, v in zip(params, values):
        if p.kind == "node_coord":
            if coords is None:
                coords = model.coordinates()
            coords[model.node_index(p.node), p.axis] = v
        elif p.kind == "shell_thickness":
            updates.setdefault(p.element, {})["t"] = float(v)
        else:
            updates.setdefault(p.element, {})["density"] = float(v)

    out = model
    if coords is not None:
        out = out.with_coordinates(coords)
    if updates:
        for eid in updates:
            model.element(eid)
        out = out.with_elements([replace(e, **updates[e.id]) if e.id in updates else e
                                 for e in out.elements])
    return out


# ------- objectives -------
class Objective:
    """Scalar objective g(u, p). Subclasses provide value, grad_u and, when p enters explicitly, grad_p."""

    name = "objective"

    def value(self, model: StructuralModel, f: np.ndarray, u: np.ndarray,
              params: Sequence[DesignParameter]) -> float:
        raise NotImplementedError

    def grad_u(self, model: StructuralModel, f: np.ndarray, u: np.ndarray,
               params: Sequence[DesignParameter]) -> np.ndarray:
        raise NotImplementedError

    def grad_p(self, model: StructuralModel, f: np.ndarray, u: np.ndarray,
               params: Sequence[DesignParameter]) -> np.ndarray:
        return np.zeros(len(params))

    def advance(self, model: StructuralModel, f: np.ndarray, u: np.ndarray) -> None:
        """Hook called once per optimization iteration after the evaluation is recorded."""

    def state(self) -> Dict[str, float]:
        """Adaptive quantities worth logging in the history."""
        return {}


def strain_energy(f: np.ndarray, u: np.ndarray) -> float:
    """0.5 f^T u."""
    f = np.asarray(f, dtype=float)
    u = np.asarray(u, dtype=float)
    if f.shape != u.shape:
        raise ValueError(f"Shape mismatch {f.shape} vs {u.shape}")
    return 0.5 * float(f @ u)


class StrainEnergy(Objective):
    name = "strain_energy"

    def value(self, model, f, u, params):
        return strain_energy(f, u)

    def grad_u(self, model, f, u, params):
        return 0.5 * np.asarray(f, dtype=float)


class CustomObjective(Objective):
    """User function fn(u, p) -> scalar.

    Gradients come from `grad_u_fn`/`grad_p_fn` when supplied; otherwise fn is
    differentiated by forward-mode chunks, so it must use arithmetic that
    DualArray supports.
    """

    name = "custom"

    def __init__(self, fn: Callable[[Any, Any], Any],
                 grad_u_fn: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
                 grad_p_fn: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
                 chunk: int = 64):
        self.fn = fn
        self.grad_u_fn = grad_u_fn
        self.grad_p_fn = grad_p_fn
        self.chunk = chunk

    def value(self, model, f, u, params):
        return float(np.asarray(self.fn(u, parameter_values(model, params))))

    def _forward_gradient(self, x: np.ndarray, call: Callable[[Any], Any]) -> np.ndarray:
        grad = np.zeros(len(x))
        for start in range(0, len(x), self.chunk):
            stop = min(start + self.chunk, len(x))
            dot = np.zeros((stop - start, len(x)))
            dot[np.arange(stop - start), np.arange(start, stop)] = 1.0
            out = call(DualArray(x, dot))
            if isinstance(out, DualArray):
                grad[start:stop] = out.dot.reshape(stop - start)
        return grad

    def grad_u(self, model, f, u, params):
        p = parameter_values(model, params)
        if self.grad_u_fn is not None:
            return np.asarray(self.grad_u_fn(u, p), dtype=float)
        return self._forward_gradient(np.asarray(u, dtype=float), lambda ud: self.fn(ud, p))

    def grad_p(self, model, f, u, params):
        p = parameter_values(model, params)
        if self.grad_p_fn is not None:
            return np.asarray(self.grad_p_fn(u, p), dtype=float)
        if not len(p):
            return np.zeros(0)
        return self._forward_gradient(p, lambda pd: self.fn(u, pd))


# ------- adjoint -------
@dataclass
class SensitivityResult:
    value: float
    gradient: np.ndarray
    adjoint: np.ndarray
    solution: Optional[Solution] = field(default=None, repr=False)
    system: Optional[AugmentedSystem] = field(default=None, repr=False)


def adjoint_solve(handle: SolveHandle, dg_du: np.ndarray) -> np.ndarray:
    """Solve K_aug^T lambda = [dg/du; 0]; returns the full augmented lambda."""
    system = handle.system
    dg_du = np.asarray(dg_du, dtype=float)
    if dg_du.shape != (system.dof,):
        raise ValueError(f"dg/du has shape {dg_du.shape}, expected ({system.dof},)")
    rhs = np.concatenate([dg_du, np.zeros(system.dof_bc)])
    return handle.solve_transpose(rhs)


def implicit_term(model: StructuralModel, params: Sequence[DesignParameter],
                  u: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """lambda^T dK/dp u for every parameter, accumulated over touched elements only."""
    out = np.zeros(len(params))
    touched: Dict[int, List[Tuple[int, Tuple]]] = {}
    node_params: Dict[int, List[int]] = {}
    for i, p in enumerate(params):
        if p.kind == "node_coord":
            node_params.setdefault(p.node, []).append(i)
        else:
            element = model.element(p.element)
            touched.setdefault(element.id, []).append((i, local_parameter(element, p)))
    if node_params:
        for element in model.elements:
            for node in element.nodes:
                for i in node_params.get(node, ()):
                    touched.setdefault(element.id, []).append((i, local_parameter(element, params[i])))

    for element_id, entries in touched.items():
        element = model.element(element_id)
        handles: List[Tuple] = []
        slots: List[int] = []
        for _, h in entries:
            if h not in handles:
                handles.append(h)
            slots.append(handles.index(h))
        _, dK = element_tangents(model, element, handles)
        dofs = model.element_dofs(element)
        contrib = np.einsum("i,kij,j->k", lam[dofs], dK, u[dofs])
        for (i, _), slot in zip(entries, slots):
            out[i] += contrib[slot]
    return out


def sensitivity(model: StructuralModel, objective: Objective, params: Sequence[DesignParameter],
                choice: Optional[SolverChoice] = None, system: Optional[AugmentedSystem] = None,
                solution: Optional[Solution] = None,
                load_derivative: Optional[np.ndarray] = None) -> SensitivityResult:
    """Objective value and dg/dp for all parameters with one primal and one adjoint solve.

    `load_derivative` is an optional (n_params, dof) array of df/dp; built-in
    parameter kinds leave the loads unchanged.
    """
    for p in params:
        p.validate(model)
    system = system or assemble_system(model)
    solution = solution or solve(system, choice, model.node_ids)
    u = solution.u
    f = system.f

    g = objective.value(model, f, u, params)
    lam_aug = adjoint_solve(solution.handle, objective.grad_u(model, f, u, params))
    lam = lam_aug[:system.dof]

    gradient = objective.grad_p(model, f, u, params) - implicit_term(model, params, u, lam)
    if load_derivative is not None:
        gradient = gradient + np.asarray(load_derivative, dtype=float) @ lam
    if not np.all(np.isfinite(gradient)):
        raise FloatingPointError("Non-finite sensitivity")
    return SensitivityResult(float(g), gradient, lam_aug, solution, system)


def evaluate_objective(model: StructuralModel, objective: Objective,
                       params: Sequence[DesignParameter], choice: Optional[SolverChoice] = None) -> float:
    system = assemble_system(model)
    solution = solve(system, choice, model.node_ids)
    return float(objective.value(model, system.f, solution.u, params))


def fd_gradient(model: StructuralModel, objective: Objective, params: Sequence[DesignParameter],
                step: float = DEFAULT_FD_STEP, choice: Optional[SolverChoice] = None,
                relative: bool = True) -> np.ndarray:
    """Central differences, two solves per parameter; oracle only.

    The step for parameter i is step * (1 + |p_i|) when `relative`, else step.
    """
    base = parameter_values(model, params)
    grad = np.zeros(len(params))
    for i in range(len(params)):
        h = step * (1.0 + abs(base[i])) if relative else step
        plus, minus = base.copy(), base.copy()
        plus[i] += h
        minus[i] -= h
        g_plus = evaluate_objective(apply_parameters(model, params, plus), objective, params, choice)
        g_minus = evaluate_objective(apply_parameters(model, params, minus), objective, params, choice)
        grad[i] = (g_plus - g_minus) / (2.0 * h)
    return grad


def relative_errors(adjoint: np.ndarray, fd: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """|a - f| / max(|a|, |f|), with entries below floor * scale reported as absolute error."""
    adjoint = np.asarray(adjoint, dtype=float)
    fd = np.asarray(fd, dtype=float)
    scale = max(np.max(np.abs(adjoint), initial=0.0), np.max(np.abs(fd), initial=0.0), 1e-300)
    denom = np.maximum(np.maximum(np.abs(adjoint), np.abs(fd)), floor * scale)
    return np.abs(adjoint - fd) / denom
