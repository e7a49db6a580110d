#!/usr/bin/env python3
"""
Global assembly: element triplets, load vector, support constraints and the
Lagrange-multiplier augmented system

    [ K  V^T ] [ u      ]   [ f ]
    [ V   0  ] [ lambda ] = [ b ]
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.io
import scipy.sparse as sp

from sso_elements import ElementError, element_stiffness
from sso_model import StructuralModel

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-9


@dataclass
class TripletMatrix:
    """Coordinate-format matrix; duplicate (row, col) entries add up."""
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    shape: Tuple[int, int]

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.vals = np.asarray(self.vals, dtype=float)
        if not (len(self.rows) == len(self.cols) == len(self.vals)):
            raise ValueError("Triplet arrays must have equal length")
        if len(self.rows):
            if self.rows.min() < 0 or self.rows.max() >= self.shape[0]:
                raise ValueError(f"Row index out of range for shape {self.shape}")
            if self.cols.min() < 0 or self.cols.max() >= self.shape[1]:
                raise ValueError(f"Column index out of range for shape {self.shape}")

    @property
    def nnz(self) -> int:
        return len(self.vals)

    def to_csr(self) -> sp.csr_matrix:
        return sp.coo_matrix((self.vals, (self.rows, self.cols)), shape=self.shape).tocsr()

    def to_csc(self) -> sp.csc_matrix:
        return sp.coo_matrix((self.vals, (self.rows, self.cols)), shape=self.shape).tocsc()

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.shape)
        np.add.at(dense, (self.rows, self.cols), self.vals)
        return dense

    def transpose(self) -> "TripletMatrix":
        return TripletMatrix(self.cols, self.rows, self.vals, (self.shape[1], self.shape[0]))


@dataclass
class AugmentedSystem:
    K_aug: TripletMatrix
    f_aug: np.ndarray
    dof: int
    dof_bc: int
    symmetric: bool = True

    @property
    def size(self) -> int:
        return self.dof + self.dof_bc

    @property
    def f(self) -> np.ndarray:
        return self.f_aug[:self.dof]

    @property
    def b(self) -> np.ndarray:
        return self.f_aug[self.dof:]

    def stiffness(self) -> sp.csr_matrix:
        """The K block alone, duplicates summed."""
        K = self.K_aug.to_csr()
        return K[:self.dof, :self.dof]


def _element_triplets(model: StructuralModel, element) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    try:
        ke = element_stiffness(model, element)
    except ElementError as e:
        if e.element_id is None:
            e.element_id = element.id
        raise
    dofs = ke.dof_indices
    n = len(dofs)
    rows = np.repeat(dofs, n)
    cols = np.tile(dofs, n)
    return rows, cols, ke.matrix.ravel()


def assemble_stiffness(model: StructuralModel, workers: Optional[int] = None) -> TripletMatrix:
    """Concatenate element triplets in element order, row-major within each element."""
    if workers and workers > 1 and len(model.elements) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(lambda e: _element_triplets(model, e), model.elements))
    else:
        blocks = [_element_triplets(model, e) for e in model.elements]
    rows = np.concatenate([b[0] for b in blocks])
    cols = np.concatenate([b[1] for b in blocks])
    vals = np.concatenate([b[2] for b in blocks])
    return TripletMatrix(rows, cols, vals, (model.dof, model.dof))


def assemble_load(model: StructuralModel) -> np.ndarray:
    f = np.zeros(model.dof)
    for load in model.loads:
        f[model.node_dofs(load.node)] += load.components
    return f


def build_constraints(model: StructuralModel) -> Tuple[TripletMatrix, np.ndarray]:
    """V with one unit entry per constrained DOF, and the prescribed values b."""
    indices, b = model.constrained_dofs()
    m = len(indices)
    V = TripletMatrix(np.arange(m), indices, np.ones(m), (m, model.dof))
    return V, b


def is_symmetric(matrix: TripletMatrix, tolerance: float = SYMMETRY_TOLERANCE) -> bool:
    A = matrix.to_csr()
    scale = abs(A).max() if A.nnz else 0.0
    if scale == 0:
        return True
    diff = A - A.T
    return (abs(diff).max() if diff.nnz else 0.0) <= tolerance * scale


def assemble_augmented(K: TripletMatrix, V: TripletMatrix, f: np.ndarray, b: np.ndarray,
                       check_symmetry: bool = True) -> AugmentedSystem:
    dof = K.shape[0]
    dof_bc = V.shape[0]
    if K.shape != (dof, dof):
        raise ValueError(f"K must be square, got {K.shape}")
    if V.shape[1] != dof:
        raise ValueError(f"V has {V.shape[1]} columns, K has {dof}")
    f = np.asarray(f, dtype=float)
    b = np.asarray(b, dtype=float)
    if f.shape != (dof,) or b.shape != (dof_bc,):
        raise ValueError(f"Load/prescribed shapes {f.shape}, {b.shape} do not match ({dof},), ({dof_bc},)")

    rows = np.concatenate([K.rows, V.rows + dof, V.cols])
    cols = np.concatenate([K.cols, V.cols, V.rows + dof])
    vals = np.concatenate([K.vals, V.vals, V.vals])
    K_aug = TripletMatrix(rows, cols, vals, (dof + dof_bc, dof + dof_bc))

    symmetric = is_symmetric(K) if check_symmetry else True
    if not symmetric:
        logger.warning("Assembled stiffness is not symmetric; transpose solves use the transposed factors")
    return AugmentedSystem(K_aug, np.concatenate([f, b]), dof, dof_bc, symmetric)


def assemble_system(model: StructuralModel, workers: Optional[int] = None,
                    check_symmetry: bool = True) -> AugmentedSystem:
    K = assemble_stiffness(model, workers)
    V, b = build_constraints(model)
    return assemble_augmented(K, V, assemble_load(model), b, check_symmetry)


def reactions(model: StructuralModel, system: AugmentedSystem, u: np.ndarray) -> Dict[int, np.ndarray]:
    """Support reactions K u - f per supported node (6 components, zero where free)."""
    residual = system.stiffness() @ u - system.f
    out: Dict[int, np.ndarray] = {}
    for support in model.supports:
        dofs = model.node_dofs(support.node)
        out[support.node] = np.where(support.mask, residual[dofs], 0.0)
    return out


def dump_system(system: AugmentedSystem, directory: str) -> List[str]:
    """Write K_aug (Matrix Market coordinate) and f_aug (plain text) for debugging."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    k_path = out / "K_aug.mtx"
    f_path = out / "f_aug.txt"
    scipy.io.mmwrite(str(k_path), system.K_aug.to_csr().tocoo(), comment="augmented stiffness")
    np.savetxt(f_path, system.f_aug)
    logger.info(f"✓ Dumped augmented system to {out}")
    return [str(k_path), str(f_path)]
