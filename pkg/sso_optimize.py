#!/usr/bin/env python3
"""
Objectives, parameter transforms, optimizers and the optimization loop for
shape, size and shape+topology problems.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from sso_dual import DualArray, seed, stack
from sso_elements import effective_modulus, quad_area
from sso_filters import HatFilter
from sso_linsolve import NumericalError, SingularSystemError, SolverChoice
from sso_mma import MmaSettings, MmaState, mma_step
from sso_model import DOF_PER_NODE, QuadShellSpec, StructuralModel
from sso_sensitivity import (
    DesignParameter,
    Objective,
    apply_parameters,
    parameter_values,
    sensitivity,
)

logger = logging.getLogger(__name__)


# ------- SIMP -------
@dataclass(frozen=True)
class SimpConfig:
    P: float = 3.0
    p_min: float = 0.01
    E_ref: Any = 1.0

    def __post_init__(self):
        if self.P < 1:
            raise ValueError(f"SIMP penalty must be >= 1, got {self.P}")
        if not 0 < self.p_min < 1:
            raise ValueError(f"p_min must lie in (0, 1), got {self.p_min}")


def _check_density(p_T: np.ndarray, config: SimpConfig) -> np.ndarray:
    p_T = np.asarray(p_T, dtype=float)
    tol = 1e-12
    if np.any(p_T < config.p_min - tol) or np.any(p_T > 1 + tol):
        raise ValueError(f"Density outside [{config.p_min}, 1]: min {p_T.min()}, max {p_T.max()}")
    return p_T


def simp_modulus(p_T: Any, config: SimpConfig) -> Any:
    """E = p_T**P * E_ref, the modulus element stiffness is built with."""
    p_T = _check_density(p_T, config)
    return effective_modulus(np.asarray(config.E_ref, dtype=float), p_T, config.P)


def simp_derivative(p_T: Any, config: SimpConfig) -> Any:
    p_T = _check_density(p_T, config)
    return config.P * p_T ** (config.P - 1) * np.asarray(config.E_ref, dtype=float)


# ------- shape normalization -------
@dataclass(frozen=True)
class ShapeBox:
    z_min: float = 0.0
    z_max: float = 1.0

    def __post_init__(self):
        if not self.z_max > self.z_min:
            raise ValueError(f"ShapeBox needs z_max > z_min, got ({self.z_min}, {self.z_max})")

    @property
    def span(self) -> float:
        return self.z_max - self.z_min


def shape_normalize(Z: Any, box: ShapeBox) -> Any:
    return (np.asarray(Z, dtype=float) - box.z_min) / box.span


def shape_denormalize(p_S: Any, box: ShapeBox) -> Any:
    return box.z_min + np.asarray(p_S, dtype=float) * box.span


# ------- size objective -------
@dataclass
class SizeObjectiveConfig:
    t_min: float
    u_max: float
    epsilon: float = 1.0
    kappa: float = 1.015
    component: int = 2
    areas: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kappa <= 1:
            raise ValueError(f"kappa must be > 1, got {self.kappa}")
        if self.t_min <= 0 or self.u_max <= 0 or self.epsilon <= 0:
            raise ValueError("t_min, u_max and epsilon must be positive")
        if not 0 <= self.component < DOF_PER_NODE:
            raise ValueError(f"component must be in 0..5, got {self.component}")


def displacement_violation(u: np.ndarray, config: SizeObjectiveConfig) -> float:
    """c = sum_j max(0, |u_j|/u_max - 1) over the monitored component."""
    monitored = np.abs(np.asarray(u)[config.component::DOF_PER_NODE]) / config.u_max - 1.0
    return float(np.sum(np.maximum(monitored, 0.0)))


def penalized_material(p: np.ndarray, areas: np.ndarray, t_min: float) -> float:
    """W = sum A_i p_i + sum max(0, (t_min - p_i)/t_min)."""
    p = np.asarray(p, dtype=float)
    return float(np.dot(areas, p) + np.sum(np.maximum(0.0, (t_min - p) / t_min)))


def next_epsilon(epsilon: float, violation: float, kappa: float) -> float:
    return epsilon / kappa if violation == 0 else epsilon * kappa


def size_objective(p: np.ndarray, u: np.ndarray, config: SizeObjectiveConfig) -> Tuple[float, float]:
    """g = (1 + eps*c) * W and the epsilon for the next iteration."""
    if config.areas is None:
        raise ValueError("size_objective needs element areas in the config")
    c = displacement_violation(u, config)
    W = penalized_material(p, np.asarray(config.areas, dtype=float), config.t_min)
    return (1.0 + config.epsilon * c) * W, next_epsilon(config.epsilon, c, config.kappa)


class PenalizedVolume(Objective):
    """Material volume of all shells with displacement and thickness penalties.

    Areas are measured on the current geometry, so node coordinates also enter
    the explicit gradient.
    """

    name = "penalized_volume"

    def __init__(self, config: SizeObjectiveConfig):
        self.config = config

    @staticmethod
    def _shells(model: StructuralModel) -> List[QuadShellSpec]:
        return model.quads

    def _areas(self, model: StructuralModel) -> np.ndarray:
        return np.array([float(quad_area(model.element_coordinates(q))) for q in self._shells(model)])

    def _parts(self, model: StructuralModel, u: np.ndarray) -> Tuple[float, float, np.ndarray, np.ndarray]:
        shells = self._shells(model)
        thickness = np.array([q.t for q in shells])
        areas = self._areas(model)
        c = displacement_violation(u, self.config)
        W = penalized_material(thickness, areas, self.config.t_min)
        return c, W, thickness, areas

    def value(self, model, f, u, params):
        c, W, _, _ = self._parts(model, u)
        return (1.0 + self.config.epsilon * c) * W

    def grad_u(self, model, f, u, params):
        c, W, _, _ = self._parts(model, u)
        cfg = self.config
        grad = np.zeros(len(u))
        comp = np.asarray(u)[cfg.component::DOF_PER_NODE]
        active = np.abs(comp) / cfg.u_max - 1.0 > 0
        grad[cfg.component::DOF_PER_NODE] = np.where(active, np.sign(comp) / cfg.u_max, 0.0)
        return cfg.epsilon * W * grad

    def grad_p(self, model, f, u, params):
        c, W, thickness, areas = self._parts(model, u)
        factor = 1.0 + self.config.epsilon * c
        t_min = self.config.t_min
        index = {q.id: i for i, q in enumerate(self._shells(model))}
        grad = np.zeros(len(params))
        for k, p in enumerate(params):
            if p.kind == "shell_thickness" and p.element in index:
                i = index[p.element]
                below = thickness[i] < t_min
                grad[k] = factor * (areas[i] - (1.0 / t_min if below else 0.0))
            elif p.kind == "node_coord":
                for q in model.quads:
                    if p.node not in q.nodes:
                        continue
                    rows = [list(map(float, r)) for r in model.element_coordinates(q)]
                    pos = q.nodes.index(p.node)
                    rows[pos][p.axis] = seed([rows[pos][p.axis]])[0]
                    dA = quad_area(stack([stack(r) for r in rows]))
                    grad[k] += factor * q.t * float(dA.dot[0])
        return grad

    def advance(self, model, f, u):
        c = displacement_violation(u, self.config)
        self.config = replace(self.config, epsilon=next_epsilon(self.config.epsilon, c, self.config.kappa))

    def state(self):
        return {"epsilon": self.config.epsilon}


# ------- first-order updates -------
def _clamp(p: np.ndarray, lower: Optional[np.ndarray], upper: Optional[np.ndarray]) -> np.ndarray:
    if lower is not None or upper is not None:
        p = np.clip(p, lower if lower is not None else -np.inf, upper if upper is not None else np.inf)
    return p


def gd_step(p: np.ndarray, grad: np.ndarray, step: float, lower: Optional[np.ndarray] = None,
            upper: Optional[np.ndarray] = None) -> np.ndarray:
    """p - step * grad, clamped to bounds when given."""
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    return _clamp(np.asarray(p, dtype=float) - step * np.asarray(grad, dtype=float), lower, upper)


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    t: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"Learning rate must be non-negative, got {self.lr}")


def adam_step(state: AdamState, grad: np.ndarray, p: np.ndarray, lower: Optional[np.ndarray] = None,
              upper: Optional[np.ndarray] = None) -> Tuple[AdamState, np.ndarray]:
    """Bias-corrected Adam update."""
    grad = np.asarray(grad, dtype=float)
    m = np.zeros_like(grad) if state.m is None else state.m
    v = np.zeros_like(grad) if state.v is None else state.v
    t = state.t + 1
    m = state.beta1 * m + (1 - state.beta1) * grad
    v = state.beta2 * v + (1 - state.beta2) * grad * grad
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    p_new = np.asarray(p, dtype=float) - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, t=t), _clamp(p_new, lower, upper)


class Optimizer:
    """Common step interface over the design vector."""

    name = "optimizer"

    def step(self, x: np.ndarray, f0: float, grad: np.ndarray, cons: np.ndarray,
             cons_grads: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class GradientDescent(Optimizer):
    name = "gd"

    def __init__(self, step: float = 0.1):
        if step <= 0:
            raise ValueError(f"step must be positive, got {step}")
        self.step_size = step

    def step(self, x, f0, grad, cons, cons_grads, lower, upper):
        return gd_step(x, grad, self.step_size, lower, upper)


class Adam(Optimizer):
    name = "adam"

    def __init__(self, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.state = AdamState(lr, beta1, beta2, eps)

    def step(self, x, f0, grad, cons, cons_grads, lower, upper):
        self.state, x_new = adam_step(self.state, grad, x, lower, upper)
        return x_new


class Mma(Optimizer):
    name = "mma"

    def __init__(self, settings: Optional[MmaSettings] = None):
        self.settings = settings or MmaSettings()
        self.state: Optional[MmaState] = None

    def step(self, x, f0, grad, cons, cons_grads, lower, upper):
        if self.state is None:
            self.state = MmaState(lower, upper, self.settings)
        self.state, x_new = mma_step(self.state, x, f0, grad, cons, cons_grads)
        return x_new


def make_optimizer(kind: str, **options: Any) -> Optimizer:
    kind = kind.lower()
    if kind in ("gd", "gradient_descent"):
        return GradientDescent(options.get("step", 0.1))
    if kind == "adam":
        return Adam(options.get("lr", 0.01), options.get("beta1", 0.9),
                    options.get("beta2", 0.999), options.get("eps", 1e-8))
    if kind == "mma":
        keys = MmaSettings.__dataclass_fields__.keys()
        return Mma(MmaSettings(**{k: v for k, v in options.items() if k in keys}))
    raise ValueError(f"Unknown optimizer {kind!r}; expected gd, adam or mma")


# ------- problem definition -------
def parameter_positions(model: StructuralModel, params: Sequence[DesignParameter]) -> np.ndarray:
    """Plan (XY) location of each parameter: its node, or its element's centroid."""
    out = np.zeros((len(params), 2))
    for k, p in enumerate(params):
        if p.kind == "node_coord":
            out[k] = model.node(p.node).xyz[:2]
        else:
            out[k] = model.element_coordinates(model.element(p.element))[:, :2].mean(axis=0)
    return out


@dataclass
class VariableGroup:
    """A block of design variables sharing bounds, an optional shape box and filter."""
    name: str
    params: List[DesignParameter]
    lower: np.ndarray
    upper: np.ndarray
    box: Optional[ShapeBox] = None
    filter: Optional[HatFilter] = None

    def __post_init__(self):
        n = len(self.params)
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if np.any(self.lower > self.upper):
            raise ValueError(f"Group {self.name}: lower bound above upper bound")
        if self.filter is not None and self.filter.size != n:
            raise ValueError(f"Group {self.name}: filter has {self.filter.size} points for {n} variables")

    @property
    def size(self) -> int:
        return len(self.params)

    def to_values(self, x: np.ndarray) -> np.ndarray:
        return shape_denormalize(x, self.box) if self.box is not None else np.asarray(x, dtype=float)

    def from_values(self, values: np.ndarray) -> np.ndarray:
        return shape_normalize(values, self.box) if self.box is not None else np.asarray(values, dtype=float)

    def chain(self, grad_values: np.ndarray) -> np.ndarray:
        """d/dx from d/d(value); the shape box contributes (z_max - z_min)."""
        return grad_values * self.box.span if self.box is not None else grad_values


class Constraint:
    """g(x_phys) <= 0 on one group's physical design variables."""

    name = "constraint"

    def value(self, values: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, values: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class VolumeConstraint(Constraint):
    """sum(p)/budget - 1 <= 0."""

    name = "volume"

    def __init__(self, group: str, budget: float):
        if budget <= 0:
            raise ValueError(f"Volume budget must be positive, got {budget}")
        self.group = group
        self.budget = float(budget)

    def value(self, values):
        return float(np.sum(values)) / self.budget - 1.0

    def gradient(self, values):
        return np.full(len(values), 1.0 / self.budget)


@dataclass
class OptimizationProblem:
    model: StructuralModel
    objective: Objective
    groups: List[VariableGroup]
    constraints: List[Constraint] = field(default_factory=list)
    filter_mode: str = "gradient"
    choice: SolverChoice = field(default_factory=SolverChoice)
    snapshot_every: int = 0
    log_every: int = 10

    def __post_init__(self):
        if self.filter_mode not in ("gradient", "variable"):
            raise ValueError(f"filter_mode must be 'gradient' or 'variable', got {self.filter_mode!r}")
        names = [g.name for g in self.groups]
        for c in self.constraints:
            if getattr(c, "group", None) not in names:
                raise ValueError(f"Constraint {c.name} refers to unknown group {getattr(c, 'group', None)!r}")

    @property
    def params(self) -> List[DesignParameter]:
        return [p for g in self.groups for p in g.params]

    @property
    def lower(self) -> np.ndarray:
        return np.concatenate([g.lower for g in self.groups])

    @property
    def upper(self) -> np.ndarray:
        return np.concatenate([g.upper for g in self.groups])

    def slices(self) -> Dict[str, slice]:
        out, start = {}, 0
        for g in self.groups:
            out[g.name] = slice(start, start + g.size)
            start += g.size
        return out

    def initial_design(self) -> np.ndarray:
        x = np.concatenate([g.from_values(parameter_values(self.model, g.params)) for g in self.groups])
        return np.clip(x, self.lower, self.upper)

    def physical(self, x: np.ndarray) -> np.ndarray:
        if self.filter_mode != "variable":
            return x.copy()
        out = x.copy()
        for g, sl in zip(self.groups, self.slices().values()):
            if g.filter is not None:
                out[sl] = g.filter.apply(x[sl])
        return out

    def values(self, x_phys: np.ndarray) -> np.ndarray:
        return np.concatenate([g.to_values(x_phys[sl]) for g, sl in zip(self.groups, self.slices().values())])


@dataclass
class OptimizationHistory:
    rows: List[Dict[str, float]] = field(default_factory=list)
    snapshots: List[Dict[str, Any]] = field(default_factory=list)
    aborted: Optional[str] = None
    design: Optional[np.ndarray] = None
    model: Optional[StructuralModel] = None

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r["objective"] for r in self.rows])


def model_snapshot(model: StructuralModel, iteration: int) -> Dict[str, Any]:
    """Geometry/field snapshot as plain point and element lists."""
    return {
        "iteration": iteration,
        "nodes": [[n.id, n.x, n.y, n.z] for n in model.nodes],
        "elements": [
            {"id": e.id, "nodes": list(e.nodes), "density": e.density,
             **({"t": e.t} if isinstance(e, QuadShellSpec) else {})}
            for e in model.elements
        ],
    }


Callback = Callable[[int, Dict[str, float], StructuralModel], None]


def run_optimization(problem: OptimizationProblem, optimizer: Optimizer, max_iter: int,
                     callbacks: Sequence[Callback] = ()) -> OptimizationHistory:
    """Evaluate, differentiate, filter and step; max_iter steps give max_iter + 1 evaluations.

    A solver failure stops the loop; everything recorded so far is kept.
    """
    if max_iter < 0:
        raise ValueError(f"max_iter must be >= 0, got {max_iter}")
    params = problem.params
    slices = problem.slices()
    lower, upper = problem.lower, problem.upper
    x = problem.initial_design()
    history = OptimizationHistory()
    if problem.constraints and not isinstance(optimizer, Mma):
        logger.warning(f"{optimizer.name} ignores constraints; they are only recorded")

    for k in range(max_iter + 1):
        start = time.time()
        x_phys = problem.physical(x)
        values = problem.values(x_phys)
        model_k = apply_parameters(problem.model, params, values)
        try:
            result = sensitivity(model_k, problem.objective, params, problem.choice)
        except (SingularSystemError, NumericalError, FloatingPointError) as e:
            logger.error(f"Iteration {k}: solver failure, stopping: {e}")
            history.aborted = f"iteration {k}: {e}"
            break

        grad_phys = np.concatenate([g.chain(result.gradient[sl]) for g, sl in zip(problem.groups, slices.values())])
        cons = np.array([c.value(x_phys[slices[c.group]]) for c in problem.constraints])
        cons_grads = np.zeros((len(problem.constraints), len(x)))
        for i, c in enumerate(problem.constraints):
            cons_grads[i, slices[c.group]] = c.gradient(x_phys[slices[c.group]])

        grad = grad_phys.copy()
        for g, sl in zip(problem.groups, slices.values()):
            if g.filter is None:
                continue
            if problem.filter_mode == "variable":
                grad[sl] = g.filter.apply_transpose(grad_phys[sl])
                for i in range(len(problem.constraints)):
                    cons_grads[i, sl] = g.filter.apply_transpose(cons_grads[i, sl])
            else:
                grad[sl] = g.filter.apply(grad_phys[sl])

        u = result.solution.u
        row: Dict[str, float] = {
            "iteration": k,
            "objective": result.value,
            "max_abs_uz": float(np.max(np.abs(u[2::DOF_PER_NODE]))) if len(u) else 0.0,
            "grad_norm": float(np.linalg.norm(grad)),
        }
        for i, c in enumerate(problem.constraints):
            row[f"{c.name}_{i}"] = float(cons[i])
        row.update(problem.objective.state())
        row["seconds"] = time.time() - start
        history.rows.append(row)
        history.design = x.copy()
        history.model = model_k

        if problem.snapshot_every and (k % problem.snapshot_every == 0 or k == max_iter):
            history.snapshots.append(model_snapshot(model_k, k))
        for cb in callbacks:
            cb(k, row, model_k)
        if problem.log_every and k % problem.log_every == 0:
            logger.info(f"  iter {k:4d}  objective {result.value:.6e}  |grad| {row['grad_norm']:.3e}"
                        + "".join(f"  {c.name} {cons[i]:+.3e}" for i, c in enumerate(problem.constraints)))

        problem.objective.advance(model_k, result.system.f, u)
        if k == max_iter:
            break
        x = optimizer.step(x, result.value, grad, cons, cons_grads, lower, upper)

    return history
