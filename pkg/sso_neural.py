#!/usr/bin/env python3
"""
Neural reparameterization of shape and topology.

A small fully connected network maps each node's normalized centrality to a
(shape, density) pair. The fields are filtered, mapped onto the model (Z
coordinates and SIMP element densities), analyzed, and the loss gradient is
carried back through the adjoint sensitivity, the filters and the network.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from sso_assembly import assemble_system
from sso_filters import HatFilter, maybe_filter
from sso_linsolve import NumericalError, SingularSystemError, SolverChoice, solve
from sso_model import StructuralModel
from sso_optimize import AdamState, ShapeBox, adam_step, model_snapshot, shape_denormalize
from sso_sensitivity import DesignParameter, Objective, apply_parameters, sensitivity

logger = logging.getLogger(__name__)

OUTPUT_MODES = ("sigmoid", "softmax")


# ------- network -------
@dataclass(frozen=True)
class MlpArchitecture:
    widths: Tuple[int, ...] = (1, 40, 40, 40, 2)
    output: str = "sigmoid"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError(f"Invalid layer widths {widths}")
        if widths[-1] != 2:
            raise ValueError(f"Output width must be 2 (shape, density), got {widths[-1]}")
        if self.output not in OUTPUT_MODES:
            raise ValueError(f"Unknown output mode {self.output!r}; expected one of {OUTPUT_MODES}")

    @property
    def shapes(self) -> List[Tuple[int, int]]:
        return list(zip(self.widths[:-1], self.widths[1:]))

    @property
    def param_count(self) -> int:
        return sum(n_in * n_out + n_out for n_in, n_out in self.shapes)


@dataclass
class MlpParams:
    """Weights (fan_in, fan_out) and biases per layer."""
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @property
    def size(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))


def init_params(arch: MlpArchitecture, seed: int = 0) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in arch.shapes:
        limit = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-limit, limit, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return MlpParams(weights, biases)


def zero_params(arch: MlpArchitecture) -> MlpParams:
    return MlpParams([np.zeros(s) for s in arch.shapes], [np.zeros(n) for _, n in arch.shapes])


def flatten_params(params: MlpParams) -> np.ndarray:
    parts = []
    for W, b in zip(params.weights, params.biases):
        parts.append(W.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts) if parts else np.zeros(0)


def unflatten_params(flat: np.ndarray, arch: MlpArchitecture) -> MlpParams:
    flat = np.asarray(flat, dtype=float)
    if flat.size != arch.param_count:
        raise ValueError(f"Expected {arch.param_count} parameters, got {flat.size}")
    weights, biases, pos = [], [], 0
    for n_in, n_out in arch.shapes:
        weights.append(flat[pos:pos + n_in * n_out].reshape(n_in, n_out).copy())
        pos += n_in * n_out
        biases.append(flat[pos:pos + n_out].copy())
        pos += n_out
    return MlpParams(weights, biases)


def params_to_document(params: MlpParams, arch: MlpArchitecture) -> Dict[str, Any]:
    return {
        "widths": list(arch.widths),
        "output": arch.output,
        "shapes": [list(s) for s in arch.shapes],
        "values": flatten_params(params).tolist(),
    }


def params_from_document(doc: Dict[str, Any]) -> Tuple[MlpParams, MlpArchitecture]:
    try:
        arch = MlpArchitecture(tuple(doc["widths"]), doc.get("output", "sigmoid"))
        if [list(s) for s in arch.shapes] != [list(s) for s in doc.get("shapes", arch.shapes)]:
            raise ValueError("Layer shapes do not match widths")
        return unflatten_params(np.asarray(doc["values"], dtype=float), arch), arch
    except KeyError as e:
        raise ValueError(f"Parameter document is missing {e}") from None


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class ForwardCache:
    activations: List[np.ndarray]
    pre_activations: List[np.ndarray]
    outputs: np.ndarray


def mlp_forward(params: MlpParams, features: np.ndarray, arch: MlpArchitecture) -> Tuple[np.ndarray, ForwardCache]:
    """ReLU hidden layers, squashed outputs in (0, 1); returns (n, 2) and the backprop cache."""
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != arch.widths[0]:
        raise ValueError(f"Feature width {x.shape[1]} does not match input width {arch.widths[0]}")
    activations, pre = [x], []
    last = len(params.weights) - 1
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = activations[-1] @ W + b
        pre.append(z)
        if k < last:
            activations.append(np.maximum(z, 0.0))
    out = _sigmoid(pre[-1]) if arch.output == "sigmoid" else _softmax(pre[-1])
    return out, ForwardCache(activations, pre, out)


def mlp_backward(params: MlpParams, cache: ForwardCache, grad_out: np.ndarray, arch: MlpArchitecture) -> np.ndarray:
    """Flat gradient of sum(grad_out * outputs) with respect to every weight and bias."""
    s = cache.outputs
    if arch.output == "sigmoid":
        delta = grad_out * s * (1.0 - s)
    else:
        delta = s * (grad_out - np.sum(grad_out * s, axis=1, keepdims=True))
    grads_W: List[np.ndarray] = [None] * len(params.weights)
    grads_b: List[np.ndarray] = [None] * len(params.weights)
    for k in range(len(params.weights) - 1, -1, -1):
        grads_W[k] = cache.activations[k].T @ delta
        grads_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ params.weights[k].T) * (cache.pre_activations[k - 1] > 0)
    return flatten_params(MlpParams(grads_W, grads_b))


# ------- features and field mapping -------
@dataclass
class NodeFeatures:
    node_ids: List[int]
    values: np.ndarray

    def as_matrix(self) -> np.ndarray:
        return self.values[:, None]


def centrality_features(model: StructuralModel, support_nodes: Sequence[int]) -> NodeFeatures:
    """Summed planar (XY) distance of each node to every support, scaled so the maximum is 1."""
    if not len(support_nodes):
        raise ValueError("Centrality needs at least one support node")
    xy = model.coordinates()[:, :2]
    supports = np.array([xy[model.node_index(n)] for n in support_nodes])
    total = np.linalg.norm(xy[:, None, :] - supports[None, :, :], axis=2).sum(axis=1)
    peak = total.max()
    if peak <= 0:
        raise ValueError("All nodes coincide in plan with the supports; centrality is undefined")
    return NodeFeatures(model.node_ids, total / peak)


def quad_connectivity(model: StructuralModel) -> np.ndarray:
    """(n_quads, 4) node positions for every shell element."""
    return np.array([[model.node_index(n) for n in q.nodes] for q in model.quads], dtype=int).reshape(-1, 4)


def nodal_to_element_density(nodal: np.ndarray, connectivity: np.ndarray) -> np.ndarray:
    return np.asarray(nodal, dtype=float)[np.asarray(connectivity)].mean(axis=1)


def element_to_nodal_transpose(grad_elem: np.ndarray, connectivity: np.ndarray, n_nodes: int) -> np.ndarray:
    """Transpose of nodal_to_element_density."""
    out = np.zeros(n_nodes)
    conn = np.asarray(connectivity)
    np.add.at(out, conn, np.repeat(np.asarray(grad_elem, dtype=float)[:, None] / conn.shape[1], conn.shape[1], axis=1))
    return out


# ------- loss -------
@dataclass(frozen=True)
class NnLossConfig:
    alpha1: float
    alpha2: float
    V_star: float

    def __post_init__(self):
        if self.alpha1 == 0:
            raise ValueError("alpha1 must be non-zero")
        if self.V_star <= 0:
            raise ValueError(f"V_star must be positive, got {self.V_star}")


def nn_loss(u: np.ndarray, f: np.ndarray, p_T: np.ndarray, config: NnLossConfig) -> float:
    """g = f.u / alpha1 + alpha2 * (sum(p_T)/V* - 1)^2."""
    usage = float(np.sum(p_T)) / config.V_star - 1.0
    return float(np.dot(f, u)) / config.alpha1 + config.alpha2 * usage ** 2


class NnLoss(Objective):
    """nn_loss as an adjoint-ready objective; p_T comes from the density parameters."""

    name = "nn_loss"

    def __init__(self, config: NnLossConfig):
        self.config = config

    @staticmethod
    def _densities(model: StructuralModel, params: Sequence[DesignParameter]) -> Tuple[np.ndarray, np.ndarray]:
        mask = np.array([p.kind == "density_ratio" for p in params], dtype=bool)
        values = np.array([model.element(p.element).density for p in params if p.kind == "density_ratio"])
        return mask, values

    def value(self, model, f, u, params):
        _, p_T = self._densities(model, params)
        return nn_loss(u, f, p_T, self.config)

    def grad_u(self, model, f, u, params):
        return np.asarray(f, dtype=float) / self.config.alpha1

    def grad_p(self, model, f, u, params):
        mask, p_T = self._densities(model, params)
        grad = np.zeros(len(params))
        usage = float(np.sum(p_T)) / self.config.V_star - 1.0
        grad[mask] = 2.0 * self.config.alpha2 * usage / self.config.V_star
        return grad


def repair_budget(p_T: np.ndarray, V_star: float, p_min: float) -> Tuple[np.ndarray, float]:
    """Shrink densities toward p_min until sum(p_T) <= V*; returns the densities and the applied scale."""
    p_T = np.asarray(p_T, dtype=float)
    total = float(np.sum(p_T))
    if total <= V_star:
        return p_T, 1.0
    floor = p_min * len(p_T)
    if V_star <= floor:
        raise ValueError(f"Budget {V_star} is not above the density floor {floor}")
    scale = (V_star - floor) / (total - floor)
    return p_min + scale * (p_T - p_min), scale


# ------- training -------
@dataclass
class TrainConfig:
    V_star: float
    lr: float = 0.01
    epochs: int = 100
    alpha2_start: float = 0.1
    alpha2_step: float = 0.05
    P_start: float = 2.0
    P_step: float = 0.06
    P_cap: float = 8.0
    p_min: float = 0.01
    alpha1: Optional[float] = None
    z_min: float = 0.0
    z_max: float = 3.0
    shape_radius: Optional[float] = None
    density_radius: Optional[float] = None
    design_supports: bool = False
    enforce_budget: bool = True
    seed: int = 0
    log_every: int = 10

    def __post_init__(self):
        if self.V_star <= 0:
            raise ValueError(f"V_star must be positive, got {self.V_star}")
        if self.lr < 0 or self.epochs < 0:
            raise ValueError("lr and epochs must be non-negative")
        if self.alpha2_step < 0 or self.P_step < 0:
            raise ValueError("Schedules must be non-decreasing")
        if self.P_start < 1 or self.P_cap < self.P_start:
            raise ValueError(f"Invalid penalty schedule start {self.P_start}, cap {self.P_cap}")
        if not 0 < self.p_min < 1:
            raise ValueError(f"p_min must lie in (0, 1), got {self.p_min}")

    def alpha2(self, epoch: int) -> float:
        return self.alpha2_start + self.alpha2_step * epoch

    def penalty(self, epoch: int) -> float:
        return min(self.P_start + self.P_step * epoch, self.P_cap)

    @property
    def box(self) -> ShapeBox:
        return ShapeBox(self.z_min, self.z_max)


@dataclass
class NeuralFields:
    shape: np.ndarray
    density: np.ndarray
    z: np.ndarray
    p_T: np.ndarray


class NeuralDesignProblem:
    """Maps network parameters to a model and differentiates the loss end to end."""

    def __init__(self, model: StructuralModel, arch: MlpArchitecture, config: TrainConfig,
                 support_nodes: Optional[Sequence[int]] = None, choice: Optional[SolverChoice] = None):
        if not model.quads:
            raise ValueError("Neural reparameterization needs shell elements")
        self.model = model
        self.arch = arch
        self.config = config
        self.choice = choice or SolverChoice()
        self.support_nodes = list(support_nodes) if support_nodes is not None else model.supported_node_ids()
        self.features = centrality_features(model, self.support_nodes)
        if arch.widths[0] != 1:
            raise ValueError(f"Input width must match the single centrality feature, got {arch.widths[0]}")

        supported = set(model.supported_node_ids())
        self.shape_index = np.array([i for i, n in enumerate(model.node_ids)
                                     if config.design_supports or n not in supported], dtype=int)
        self.connectivity = quad_connectivity(model)
        self.params = ([DesignParameter.node_coord(model.node_ids[i], 2) for i in self.shape_index]
                       + [DesignParameter.density_ratio(q.id) for q in model.quads])
        coords = model.coordinates()
        centroids = coords[self.connectivity].mean(axis=1)
        self.shape_filter: Optional[HatFilter] = maybe_filter(coords[:, :2], config.shape_radius)
        self.density_filter: Optional[HatFilter] = maybe_filter(centroids[:, :2], config.density_radius)
        self.alpha1 = config.alpha1
        logger.debug(f"Neural problem: {len(self.shape_index)} shape nodes, {len(model.quads)} density elements")

    def fields(self, theta: np.ndarray) -> Tuple[NeuralFields, ForwardCache]:
        net = unflatten_params(theta, self.arch)
        out, cache = mlp_forward(net, self.features.as_matrix(), self.arch)
        shape = out[:, 0]
        if self.shape_filter is not None:
            shape = self.shape_filter.apply(shape)
        density = nodal_to_element_density(out[:, 1], self.connectivity)
        if self.density_filter is not None:
            density = self.density_filter.apply(density)
        p_T = self.config.p_min + (1.0 - self.config.p_min) * density
        z = shape_denormalize(shape[self.shape_index], self.config.box)
        return NeuralFields(shape, density, z, p_T), cache

    def design_model(self, fields: NeuralFields, epoch: int) -> StructuralModel:
        base = self.model.with_penalty(self.config.penalty(epoch))
        return apply_parameters(base, self.params, np.concatenate([fields.z, fields.p_T]))

    def feasible_model(self, fields: NeuralFields, epoch: int) -> Tuple[StructuralModel, float]:
        """Design model with densities shrunk onto the volume budget when the soft penalty overshoots it."""
        p_T, scale = repair_budget(fields.p_T, self.config.V_star, self.config.p_min)
        return self.design_model(replace(fields, p_T=p_T), epoch), scale

    def evaluate(self, theta: np.ndarray, epoch: int = 0) -> Tuple[float, np.ndarray, Dict[str, Any]]:
        """Loss, flat gradient with respect to theta, and the quantities worth recording."""
        fields, cache = self.fields(theta)
        model_k = self.design_model(fields, epoch)
        if self.alpha1 is None:
            system = assemble_system(model_k)
            self.alpha1 = float(np.dot(system.f, solve(system, self.choice, model_k.node_ids).u))
            logger.info(f"Loss normalizer alpha1 = {self.alpha1:.6e}")
        objective = NnLoss(NnLossConfig(self.alpha1, self.config.alpha2(epoch), self.config.V_star))
        result = sensitivity(model_k, objective, self.params, self.choice)

        ns = len(self.shape_index)
        n_nodes = len(self.model.nodes)
        d_shape = np.zeros(n_nodes)
        d_shape[self.shape_index] = result.gradient[:ns] * self.config.box.span
        if self.shape_filter is not None:
            d_shape = self.shape_filter.apply_transpose(d_shape)
        d_density = result.gradient[ns:] * (1.0 - self.config.p_min)
        if self.density_filter is not None:
            d_density = self.density_filter.apply_transpose(d_density)
        d_nodal = element_to_nodal_transpose(d_density, self.connectivity, n_nodes)

        grad = mlp_backward(unflatten_params(theta, self.arch), cache,
                            np.column_stack([d_shape, d_nodal]), self.arch)
        compliance = float(np.dot(result.system.f, result.solution.u))
        info = {
            "strain_energy": 0.5 * compliance,
            "sum_p_T": float(np.sum(fields.p_T)),
            "alpha2": self.config.alpha2(epoch),
            "penalty": self.config.penalty(epoch),
            "model": model_k,
            "fields": fields,
        }
        return result.value, grad, info


@dataclass
class TrainingHistory:
    rows: List[Dict[str, float]] = field(default_factory=list)
    aborted: Optional[str] = None
    model: Optional[StructuralModel] = None
    snapshot: Optional[Dict[str, Any]] = None
    budget_scale: float = 1.0

    @property
    def losses(self) -> np.ndarray:
        return np.array([r["loss"] for r in self.rows])

    @property
    def design_sum_p_T(self) -> Optional[float]:
        """Sum of element densities in the delivered design."""
        if self.model is None:
            return None
        return float(sum(q.density for q in self.model.quads))


def train(model: StructuralModel, arch: MlpArchitecture, config: TrainConfig,
          support_nodes: Optional[Sequence[int]] = None, choice: Optional[SolverChoice] = None,
          params: Optional[MlpParams] = None,
          callbacks: Sequence[Callable[[int, Dict[str, float]], None]] = ()) -> Tuple[MlpParams, TrainingHistory]:
    """Adam over the network parameters with the loss and penalty schedules advancing per epoch.

    A solver failure stops training; the history so far and the last good
    parameters are returned. With enforce_budget the delivered model has its
    densities shrunk onto V* when the soft volume penalty leaves it above.
    """
    problem = NeuralDesignProblem(model, arch, config, support_nodes, choice)
    theta = flatten_params(params if params is not None else init_params(arch, config.seed))
    state = AdamState(lr=config.lr)
    history = TrainingHistory()
    fields: Optional[NeuralFields] = None

    logger.info(f"Training {arch.widths} ({arch.param_count} parameters) for {config.epochs} epochs")
    for epoch in range(config.epochs):
        start = time.time()
        try:
            loss, grad, info = problem.evaluate(theta, epoch)
        except (SingularSystemError, NumericalError, FloatingPointError) as e:
            logger.error(f"Epoch {epoch}: solver failure, stopping: {e}")
            history.aborted = f"epoch {epoch}: {e}"
            break
        history.model = info.pop("model")
        fields = info.pop("fields")
        row = {"epoch": epoch, "loss": loss, **info, "grad_norm": float(np.linalg.norm(grad)),
               "seconds": time.time() - start}
        history.rows.append(row)
        for cb in callbacks:
            cb(epoch, row)
        if config.log_every and epoch % config.log_every == 0:
            logger.info(f"  epoch {epoch:4d}  loss {loss:.6e}  sum(p_T) {info['sum_p_T']:.3f}  P {info['penalty']:.2f}")
        state, theta = adam_step(state, grad, theta)

    if history.model is not None:
        last_epoch = len(history.rows) - 1
        if config.enforce_budget:
            history.model, history.budget_scale = problem.feasible_model(fields, last_epoch)
            if history.budget_scale < 1.0:
                logger.info(f"Final densities scaled by {history.budget_scale:.6f} onto V* = {config.V_star}")
        history.snapshot = model_snapshot(history.model, last_epoch)
    return unflatten_params(theta, arch), history
