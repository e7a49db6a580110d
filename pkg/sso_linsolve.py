#!/usr/bin/env python3
"""
Direct solvers for the augmented system.

Two backends are available: dense LU (scipy.linalg.lu_factor) and sparse LU
on the compressed-column form (scipy.sparse.linalg.splu). K_aug is symmetric
indefinite because of the zero multiplier block, so Cholesky is not an option.
A SolveHandle keeps the factorization so the adjoint pass reuses it.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Any, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from sso_assembly import AugmentedSystem
from sso_model import COMPONENTS, DOF_PER_NODE

logger = logging.getLogger(__name__)

SOLVER_ALIASES = {"dense": "dense", "dense_lu": "dense", "sparse": "sparse", "sparse_lu": "sparse"}
DENSE_LOCATE_LIMIT = 4000


class SingularSystemError(RuntimeError):
    """Zero pivot during factorization.

    `index` is the unknown suspected of being unconstrained; `node` and
    `component` are filled in when the index falls inside the first dof rows.
    """

    def __init__(self, message: str, index: Optional[int] = None, node: Optional[int] = None,
                 component: Optional[str] = None):
        super().__init__(message)
        self.index = index
        self.node = node
        self.component = component


class NumericalError(RuntimeError):
    """Non-finite input data."""


@dataclass(frozen=True)
class SolverChoice:
    kind: str = "sparse"
    pivot_tolerance: float = 1e-20
    check_symmetry: bool = True

    def __post_init__(self):
        kind = SOLVER_ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise ValueError(f"Unknown solver {self.kind!r}; expected one of {sorted(SOLVER_ALIASES)}")
        object.__setattr__(self, "kind", kind)
        if self.pivot_tolerance < 0:
            raise ValueError("pivot_tolerance must be non-negative")


@dataclass
class SolverStats:
    """Process-wide counters used to verify the adjoint cost property."""
    factorizations: int = 0
    solves: int = 0

    def reset(self) -> None:
        self.factorizations = 0
        self.solves = 0


STATS = SolverStats()


@dataclass
class Solution:
    u: np.ndarray
    multipliers: np.ndarray
    residual_norm: float
    handle: Any = field(default=None, repr=False, compare=False)


def _describe(index: int, system: AugmentedSystem, node_ids: Optional[list]) -> Tuple[str, Optional[int], Optional[str]]:
    if index < system.dof:
        pos, comp = divmod(index, DOF_PER_NODE)
        node = node_ids[pos] if node_ids is not None else pos
        label = "node id" if node_ids is not None else "node position"
        return f"unknown {index} ({label} {node}, {COMPONENTS[comp]})", node, COMPONENTS[comp]
    return f"multiplier row {index - system.dof}", None, None


def _singular(system: AugmentedSystem, index: Optional[int], reason: str,
              node_ids: Optional[list]) -> SingularSystemError:
    if index is None:
        return SingularSystemError(f"Singular system ({reason}); no candidate DOF located")
    where, node, comp = _describe(int(index), system, node_ids)
    return SingularSystemError(
        f"Singular system ({reason}); candidate unconstrained DOF: {where}",
        index=int(index), node=node, component=comp,
    )


def _dense_zero_pivot(A: np.ndarray, tolerance: float) -> Tuple[Any, Optional[int]]:
    """Factor densely; return (factors, column of the first negligible pivot or None)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    diag = np.abs(np.diag(lu))
    scale = diag.max() if diag.size else 0.0
    bad = np.flatnonzero(~(diag > tolerance * scale)) if scale > 0 else np.arange(diag.size)
    return (lu, piv), (int(bad[0]) if bad.size else None)


def _zero_row_candidate(system: AugmentedSystem) -> Optional[int]:
    """First DOF with an all-zero stiffness row; fallback locator."""
    K = system.stiffness()
    row_norm = np.asarray(abs(K).sum(axis=1)).ravel()
    zero = np.flatnonzero(row_norm == 0)
    return int(zero[0]) if zero.size else None


class SolveHandle:
    """Factorized K_aug; immutable after construction."""

    def __init__(self, system: AugmentedSystem, choice: SolverChoice, node_ids: Optional[list] = None):
        self.system = system
        self.choice = choice
        self.node_ids = node_ids
        self._check_finite()
        if choice.kind == "dense":
            self._factor_dense()
        else:
            self._factor_sparse()
        STATS.factorizations += 1

    def _check_finite(self) -> None:
        if not np.all(np.isfinite(self.system.K_aug.vals)):
            raise NumericalError("K_aug contains non-finite entries")
        if not np.all(np.isfinite(self.system.f_aug)):
            raise NumericalError("f_aug contains non-finite entries")

    def _factor_dense(self) -> None:
        factors, bad = _dense_zero_pivot(self.system.K_aug.to_dense(), self.choice.pivot_tolerance)
        if bad is not None:
            raise _singular(self.system, bad, "zero pivot in dense LU", self.node_ids)
        self._dense = factors
        self._sparse = None

    def _factor_sparse(self) -> None:
        A = self.system.K_aug.to_csc()
        try:
            lu = spla.splu(A)
        except RuntimeError as e:
            raise _singular(self.system, self._locate(), f"sparse LU failed: {e}", self.node_ids) from None
        diag = np.abs(lu.U.diagonal())
        scale = diag.max() if diag.size else 0.0
        bad = np.flatnonzero(~(diag > self.choice.pivot_tolerance * scale))
        if bad.size:
            # factor column j holds original column inverse(perm_c)[j]
            original = int(np.argsort(lu.perm_c)[bad[0]])
            raise _singular(self.system, original, "zero pivot in sparse LU", self.node_ids)
        self._sparse = lu
        self._dense = None

    def _locate(self) -> Optional[int]:
        candidate = _zero_row_candidate(self.system)
        if candidate is not None or self.system.size > DENSE_LOCATE_LIMIT:
            return candidate
        _, bad = _dense_zero_pivot(self.system.K_aug.to_dense(), self.choice.pivot_tolerance)
        return bad

    def _finish(self, x: np.ndarray) -> np.ndarray:
        STATS.solves += 1
        if not np.all(np.isfinite(x)):
            bad = int(np.flatnonzero(~np.isfinite(x))[0])
            raise _singular(self.system, bad, "non-finite solution", self.node_ids)
        return x

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if self._dense is not None:
            x = scipy.linalg.lu_solve(self._dense, rhs, check_finite=False)
        else:
            x = self._sparse.solve(rhs)
        return self._finish(x)

    def solve_transpose(self, rhs: np.ndarray) -> np.ndarray:
        """Solve K_aug^T x = rhs with the same factors."""
        rhs = np.asarray(rhs, dtype=float)
        if not np.any(rhs):
            return np.zeros_like(rhs)
        if self._dense is not None:
            x = scipy.linalg.lu_solve(self._dense, rhs, trans=1, check_finite=False)
        else:
            x = self._sparse.solve(rhs, trans="T")
        return self._finish(x)


def factorize(system: AugmentedSystem, choice: Optional[SolverChoice] = None,
              node_ids: Optional[list] = None) -> SolveHandle:
    return SolveHandle(system, choice or SolverChoice(), node_ids)


def residual_norm(system: AugmentedSystem, x: np.ndarray) -> float:
    return float(np.linalg.norm(system.K_aug.to_csr() @ x - system.f_aug))


def solve(system: AugmentedSystem, choice: Optional[SolverChoice] = None,
          node_ids: Optional[list] = None, handle: Optional[SolveHandle] = None) -> Solution:
    """Factorize (unless a handle is given) and solve K_aug u_aug = f_aug."""
    handle = handle or factorize(system, choice, node_ids)
    x = handle.solve(system.f_aug)
    res = residual_norm(system, x)
    logger.debug(f"Solved {system.size} unknowns ({handle.choice.kind}), residual {res:.3e}")
    return Solution(x[:system.dof], x[system.dof:], res, handle)


def solve_transpose(handle: SolveHandle, rhs: np.ndarray) -> np.ndarray:
    return handle.solve_transpose(rhs)
