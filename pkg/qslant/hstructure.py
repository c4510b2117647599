"""Hypercomplex (quaternionic Hermitian) structures on R^4m."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from pydantic import ValidationError

from qslant.errors import DimensionMismatchError, StructureError
from qslant.logger import logger
from qslant.numkernel import Matrix
from qslant.schema import StructureDocument

TAGS = ("I", "J", "K")

# 4x4 blocks, column j is the image of e_{j+1}
_BLOCK_I = np.array(
    [[0, -1, 0, 0],
     [1, 0, 0, 0],
     [0, 0, 0, -1],
     [0, 0, 1, 0]], dtype=float)
_BLOCK_J = np.array(
    [[0, 0, -1, 0],
     [0, 0, 0, 1],
     [1, 0, 0, 0],
     [0, -1, 0, 0]], dtype=float)
_BLOCK_K = np.array(
    [[0, 0, 0, -1],
     [0, 0, -1, 0],
     [0, 1, 0, 0],
     [1, 0, 0, 0]], dtype=float)


@dataclass(frozen=True, eq=False)
class HypercomplexStructure:
    I: Matrix
    J: Matrix
    K: Matrix

    @property
    def dim(self) -> int:
        return self.I.shape[0]

    def get(self, tag: str) -> Matrix:
        if tag not in TAGS:
            raise KeyError(f"unknown structure tag '{tag}'")
        return getattr(self, tag)

    def items(self) -> Iterator[tuple[str, Matrix]]:
        for tag in TAGS:
            yield tag, self.get(tag)


@dataclass(frozen=True)
class StructureValidation:
    residuals: dict[str, float]
    tolerance: float

    @property
    def worst(self) -> float:
        return max(self.residuals.values())

    @property
    def passed(self) -> bool:
        return self.worst <= self.tolerance


def canonical_hypercomplex(m: int) -> HypercomplexStructure:
    if m < 1:
        raise ValueError("m must be at least 1")
    eye = np.eye(m)
    return HypercomplexStructure(np.kron(eye, _BLOCK_I), np.kron(eye, _BLOCK_J), np.kron(eye, _BLOCK_K))


def _max_abs(a: Matrix) -> float:
    return float(np.max(np.abs(a)))


def validate(h: HypercomplexStructure, tol: float = 1e-12) -> StructureValidation:
    """Max residual of each quaternion relation, of orthogonality and of skew-symmetry."""
    shapes = {h.I.shape, h.J.shape, h.K.shape}
    if len(shapes) != 1:
        raise DimensionMismatchError(f"structure matrices have different shapes {sorted(shapes)}")
    rows, cols = h.I.shape
    if rows != cols or rows == 0 or rows % 4 != 0:
        raise DimensionMismatchError(f"structure matrices must be square of size 4m, got {rows}x{cols}")

    I, J, K = h.I, h.J, h.K
    eye = np.eye(rows)
    residuals = {
        "II+id": _max_abs(I @ I + eye),
        "JJ+id": _max_abs(J @ J + eye),
        "KK+id": _max_abs(K @ K + eye),
        "IJ-K": _max_abs(I @ J - K),
        "JI+K": _max_abs(J @ I + K),
        "JK-I": _max_abs(J @ K - I),
        "KJ+I": _max_abs(K @ J + I),
        "KI-J": _max_abs(K @ I - J),
        "IK+J": _max_abs(I @ K + J),
    }
    for tag, r in h.items():
        residuals[f"{tag}t{tag}-id"] = _max_abs(r.T @ r - eye)
        residuals[f"{tag}t+{tag}"] = _max_abs(r.T + r)
    return StructureValidation(residuals, tol)


def conjugate(h: HypercomplexStructure, q: Matrix) -> HypercomplexStructure:
    """The structure (Q I Q^T, Q J Q^T, Q K Q^T) for an orthogonal Q."""
    q = np.asarray(q, dtype=float)
    if q.shape != (h.dim, h.dim):
        raise DimensionMismatchError(f"conjugating matrix must be {h.dim}x{h.dim}")
    return HypercomplexStructure(q @ h.I @ q.T, q @ h.J @ q.T, q @ h.K @ q.T)


def load_structure(document) -> HypercomplexStructure:
    """Read a structure document (dim plus row-major I, J, K) and validate it."""
    try:
        if isinstance(document, str):
            doc = StructureDocument.parse_raw(document)
        elif isinstance(document, StructureDocument):
            doc = document
        else:
            doc = StructureDocument.parse_obj(document)
    except (ValidationError, json.JSONDecodeError) as e:
        raise StructureError(f"invalid structure document: {e}") from e

    matrices = []
    for tag in TAGS:
        m = np.asarray(getattr(doc, tag), dtype=float)
        if m.shape != (doc.dim, doc.dim):
            raise DimensionMismatchError(f"matrix {tag} has shape {m.shape}, expected ({doc.dim}, {doc.dim})")
        matrices.append(m)
    h = HypercomplexStructure(*matrices)
    report = validate(h)
    if not report.passed:
        failing = {k: v for k, v in report.residuals.items() if v > report.tolerance}
        logger.error(f"Structure rejected, failing relations: {failing}")
        raise StructureError(f"structure violates the quaternion relations: {failing}")
    return h
