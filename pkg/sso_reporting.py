#!/usr/bin/env python3
"""
Run reports, phase timing and CSV/JSON writers for command outputs.
"""

import csv
import json
import logging
import os
import time
from contextlib import contextmanager
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, field_validator

from sso_model import COMPONENTS, StructuralModel

logger = logging.getLogger(__name__)


class RunReport(BaseModel):
    """Summary written as report.json by every command."""
    command: str
    timings: Dict[str, float] = Field(default_factory=dict)
    dof: Optional[int] = None
    dof_bc: Optional[int] = None
    solver: Optional[str] = None
    results: Dict[str, Any] = Field(default_factory=dict)
    files: List[str] = Field(default_factory=list)

    @field_validator("timings")
    @classmethod
    def _nonnegative(cls, v):
        for name, seconds in v.items():
            if seconds < 0:
                raise ValueError(f"timing {name} is negative")
        return v

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        """Accumulate wall-clock time of a block under `name`."""
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.timings[name] = self.timings.get(name, 0.0) + elapsed
            logger.debug(f"{self.command}: {name} took {elapsed:.4f}s")

    def add_file(self, path: str) -> str:
        self.files.append(path)
        return path

    def write(self, directory: str, name: str = "report.json") -> str:
        path = os.path.join(directory, name)
        self.files.append(path)
        with open(path, "w") as f:
            json.dump(self.model_dump(), f, indent=2, default=_json_default)
        return path


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def ensure_dir(directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    return directory


def write_rows(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def write_dicts(path: str, rows: List[Dict[str, Any]]) -> str:
    """CSV from dict rows; the header is the union of keys in first-seen order."""
    header: List[str] = []
    for row in rows:
        for key in row:
            if key not in header:
                header.append(key)
    return write_rows(path, header, ([row.get(k, "") for k in header] for row in rows))


def _cell(v: Any) -> Any:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_json(path: str, data: Any) -> str:
    with open(path, "w") as f:
        json.dump(data, f, indent=2, default=_json_default)
    return path


def write_displacements(path: str, model: StructuralModel, u: np.ndarray) -> str:
    """One row per node: id and the six displacement components."""
    u = np.asarray(u).reshape(len(model.nodes), len(COMPONENTS))
    return write_rows(path, ["node"] + list(COMPONENTS),
                      ([n.id] + list(row) for n, row in zip(model.nodes, u)))


def write_reactions(path: str, reactions: Dict[int, np.ndarray]) -> str:
    header = ["node"] + [f"R{c}" for c in ("FX", "FY", "FZ", "MX", "MY", "MZ")]
    return write_rows(path, header, ([node] + list(values) for node, values in sorted(reactions.items())))
