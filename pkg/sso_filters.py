#!/usr/bin/env python3
"""
Hat (linear cone) filter over a point cloud.

w_ij = max(0, r - d_ij), rows normalized to sum to one. Positions are nodes
for shape variables and element centroids for topology variables.
"""

import logging
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

logger = logging.getLogger(__name__)


class HatFilter:
    """Row-normalized sparse hat-weight matrix."""

    def __init__(self, positions: np.ndarray, radius: float):
        positions = np.asarray(positions, dtype=float)
        if positions.ndim != 2:
            raise ValueError(f"positions must be (n, dim), got shape {positions.shape}")
        if radius <= 0:
            raise ValueError(f"Filter radius must be positive, got {radius}")
        self.positions = positions
        self.radius = float(radius)

        n = len(positions)
        tree = cKDTree(positions)
        neighbors = tree.query_ball_point(positions, r=self.radius)
        rows, cols, vals = [], [], []
        for i, js in enumerate(neighbors):
            js = np.asarray(sorted(js), dtype=int)
            w = np.maximum(0.0, self.radius - np.linalg.norm(positions[js] - positions[i], axis=1))
            keep = w > 0
            rows.append(np.full(int(keep.sum()), i))
            cols.append(js[keep])
            vals.append(w[keep])
        H = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsr()
        row_sums = np.asarray(H.sum(axis=1)).ravel()
        self.weights = sp.diags(1.0 / row_sums) @ H
        self.weights = self.weights.tocsr()
        self._weights_t = self.weights.T.tocsr()
        logger.debug(f"Hat filter: {n} points, radius {self.radius}, {self.weights.nnz} weights")

    def __repr__(self) -> str:
        return f"HatFilter(n={len(self.positions)}, radius={self.radius:g})"

    @property
    def size(self) -> int:
        return len(self.positions)

    def apply(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.size:
            raise ValueError(f"Expected {self.size} values, got {values.shape[0]}")
        return self.weights @ values

    def apply_transpose(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.size:
            raise ValueError(f"Expected {self.size} values, got {values.shape[0]}")
        return self._weights_t @ values


def hat_filter_apply(values: np.ndarray, filt: HatFilter) -> np.ndarray:
    return filt.apply(values)


def maybe_filter(positions: np.ndarray, radius: Optional[float]) -> Optional[HatFilter]:
    """A filter when a positive radius is configured, else None."""
    if radius is None or radius <= 0:
        return None
    return HatFilter(positions, radius)
