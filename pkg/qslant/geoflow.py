"""Second-order geometry of a Riemannian map from flat R^4m.

Both metrics are Euclidean, so the Levi-Civita connections are coordinate
differentiation and the second fundamental form (nabla F_*)(X, Y) is the Hessian
contraction sum_ab X^a Y^b d_a d_b F. Projector fields (vertical, horizontal,
D1, D2) are differentiated with central differences; F itself and user frame
fields are differentiated exactly.

Frames used by the condition evaluators are projected seeds: a seed field (a
user frame from the map spec, or a constant vector) multiplied by a projector
field. They are smooth wherever the projector field is, and at the point they
span the target distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from qslant.config import settings
from qslant.errors import FrameUnavailableError, PreconditionError
from qslant.exprmap import VectorFieldExpr
from qslant.hstructure import TAGS, HypercomplexStructure
from qslant.logger import logger
from qslant.numkernel import (
    Matrix,
    Subspace,
    directional_derivative,
    hessian,
    jacobian,
    projector,
    projector_derivative,
)
from qslant.slantlab import (
    Classification,
    PointAnalysis,
    SemiSlantReport,
    TangentSplit,
    semi_slant_decompose,
    split_tangent,
)

SEMI_SLANT_VERDICTS = ("almost_h_semi_slant", "h_semi_slant", "strictly_h_semi_slant")


# --- Pointwise tensors ---
@dataclass(frozen=True, eq=False)
class SecondFormValue:
    value: np.ndarray
    range_component: np.ndarray
    range_perp_component: np.ndarray


def second_fundamental_form(f, p, X, Y, split: TangentSplit | None = None) -> SecondFormValue:
    split = split_tangent(f, p) if split is None else split
    value = np.einsum("cab,a,b->c", hessian(f, p), np.asarray(X, float), np.asarray(Y, float))
    along_range = projector(split.range) @ value
    return SecondFormValue(value, along_range, value - along_range)


def tension(f, p, frame: Matrix | None = None) -> np.ndarray:
    """Trace of the second fundamental form over an orthonormal frame (identity by default)."""
    hess = hessian(f, p)
    if frame is None:
        return np.einsum("caa->c", hess)
    frame = np.asarray(frame, dtype=float)
    return np.einsum("cab,ai,bi->c", hess, frame, frame)


def _oneill(dP: Matrix, P_V: Matrix, P_H: Matrix, W) -> np.ndarray:
    # H (dP) V W - V (dP) H W, with dP the derivative of the vertical projector
    W = np.asarray(W, dtype=float)
    return P_H @ dP @ P_V @ W - P_V @ dP @ P_H @ W


def oneill_T(f, p, E, W, split: TangentSplit | None = None) -> np.ndarray:
    split = split_tangent(f, p) if split is None else split
    P_V, P_H = split.p_vertical, split.p_horizontal
    dP = projector_derivative(f, p, P_V @ np.asarray(E, float)).estimate
    return _oneill(dP, P_V, P_H, W)


def oneill_A(f, p, E, W, split: TangentSplit | None = None) -> np.ndarray:
    split = split_tangent(f, p) if split is None else split
    P_V, P_H = split.p_vertical, split.p_horizontal
    dP = projector_derivative(f, p, P_H @ np.asarray(E, float)).estimate
    return _oneill(dP, P_V, P_H, W)


# --- Fields built from projector fields ---
@dataclass(frozen=True, eq=False)
class Field:
    """seed(q) acted on by ops at q; ops[-1] acts first.

    ops are "V", "H" (projector fields), "I", "J", "K" (constant structures) and
    "D1:<tag>", "D2:<tag>" (distribution projector fields).
    """

    seed: VectorFieldExpr | np.ndarray
    ops: tuple[str, ...] = ()

    def apply(self, *ops: str) -> "Field":
        return Field(self.seed, tuple(ops) + self.ops)


def as_field(x) -> Field:
    if isinstance(x, Field):
        return x
    if isinstance(x, VectorFieldExpr):
        return Field(x)
    return Field(np.asarray(x, dtype=float))


class PointCalculus:
    """Projector fields, their derivatives and O'Neill tensors at one analysed point."""

    def __init__(self, f, h: HypercomplexStructure, analysis: PointAnalysis):
        self.f = f
        self.h = h
        self.split = analysis.split
        self.reports = analysis.reports
        self.p = self.split.point
        self.P_V = self.split.p_vertical
        self.P_H = self.split.p_horizontal
        self.fd_error = 0.0
        self._derivatives: dict[tuple[str, bytes], Matrix] = {}

    def tolerance(self) -> float:
        return settings.condition_tol + 10.0 * self.fd_error

    # pointwise matrices
    def matrix(self, op: str) -> Matrix:
        if op == "V":
            return self.P_V
        if op == "H":
            return self.P_H
        if op in TAGS:
            return self.h.get(op)
        kind, tag = op.split(":")
        report = self.reports[tag]
        return projector(report.d1 if kind == "D1" else report.d2)

    def blocks(self, tag: str) -> tuple[Matrix, Matrix, Matrix, Matrix]:
        """phi, omega, B, C as endomorphisms of R^D."""
        R = self.h.get(tag)
        return self.P_V @ R @ self.P_V, self.P_H @ R @ self.P_V, self.P_V @ R @ self.P_H, self.P_H @ R @ self.P_H

    def _distribution_projector(self, op: str, q: np.ndarray) -> Matrix:
        kind, tag = op.split(":")
        split = split_tangent(self.f, q)
        if split.rank != self.split.rank or not split.is_riemannian:
            raise FrameUnavailableError(f"the vertical space changes near {self.p.tolist()}, no smooth {op} frame")
        report = semi_slant_decompose(split, self.h.get(tag), structure_tag=tag)
        sub = report.d1 if kind == "D1" else report.d2
        expected = self.matrix(op)
        if sub.dim != int(round(np.trace(expected))):
            raise FrameUnavailableError(f"dim {op} changes near {self.p.tolist()}, no smooth frame")
        return projector(sub)

    def derivative(self, op: str, direction) -> Matrix:
        direction = np.asarray(direction, dtype=float)
        if op in TAGS:
            return np.zeros_like(self.P_V)
        if op == "H":
            return -self.derivative("V", direction)
        key = (op, direction.tobytes())
        if key not in self._derivatives:
            if op == "V":
                d = projector_derivative(self.f, self.p, direction)
            else:
                d = directional_derivative(lambda q: self._distribution_projector(op, q), self.p, direction)
            self.fd_error = max(self.fd_error, d.error)
            self._derivatives[key] = d.estimate
        return self._derivatives[key]

    # fields
    def value(self, fld: Field) -> np.ndarray:
        v = fld.seed.value(self.p) if isinstance(fld.seed, VectorFieldExpr) else fld.seed
        for op in reversed(fld.ops):
            v = self.matrix(op) @ v
        return v

    def covariant(self, fld: Field, direction) -> np.ndarray:
        """Flat derivative of the field along ``direction`` at p (product rule over ops)."""
        direction = np.asarray(direction, dtype=float)
        if isinstance(fld.seed, VectorFieldExpr):
            v = fld.seed.value(self.p)
            dv = jacobian(fld.seed, self.p) @ direction
        else:
            v = fld.seed
            dv = np.zeros_like(v)
        for op in reversed(fld.ops):
            M = self.matrix(op)
            dv = M @ dv + self.derivative(op, direction) @ v
            v = M @ v
        return dv

    def T(self, E, W) -> np.ndarray:
        return _oneill(self.derivative("V", self.P_V @ E), self.P_V, self.P_H, W)

    def A(self, E, W) -> np.ndarray:
        return _oneill(self.derivative("V", self.P_H @ E), self.P_V, self.P_H, W)

    def frames(self, op: str) -> list[Field]:
        """Smooth fields spanning the distribution ``op`` at p."""
        if self.f.frames:
            return [Field(seed, (op,)) for seed in self.f.frames]
        sub = _subspace(self, op)
        return [Field(sub.basis[:, i].copy(), (op,)) for i in range(sub.dim)]


def _subspace(calc: PointCalculus, op: str) -> Subspace:
    if op == "V":
        return calc.split.vertical
    if op == "H":
        return calc.split.horizontal
    kind, tag = op.split(":")
    report = calc.reports[tag]
    return report.d1 if kind == "D1" else report.d2


def point_calculi(f, h: HypercomplexStructure, classification: Classification) -> list[PointCalculus]:
    if classification.verdict not in SEMI_SLANT_VERDICTS:
        raise PreconditionError(
            f"condition evaluators need an almost h-semi-slant map, verdict is {classification.verdict}"
        )
    return [PointCalculus(f, h, a) for a in classification.points]


def _norm(v) -> float:
    return float(np.linalg.norm(v))


# --- Connections ---
def vertical_connection(f, p, X_field, Y_field, split: TangentSplit | None = None) -> np.ndarray:
    """V(nabla_X Y) at p for a vertical X."""
    p = np.asarray(p, dtype=float)
    split = split_tangent(f, p) if split is None else split
    x = as_field(X_field)
    y = as_field(Y_field)
    x_val = x.seed.value(p) if isinstance(x.seed, VectorFieldExpr) else x.seed
    if _norm(split.p_horizontal @ x_val) > 1e-9 * max(1.0, _norm(x_val)):
        raise PreconditionError("X is not vertical at the point")
    if isinstance(y.seed, VectorFieldExpr):
        dy = jacobian(y.seed, p) @ x_val
    else:
        dy = np.zeros_like(x_val)
    return split.p_vertical @ dy


@dataclass(frozen=True)
class ParallelDefects:
    omega: float
    phi: float
    fiber_balance: float | None = None  # |T_{phi X} phi X + cos^2(theta) T_X X| when omega is parallel


def omega_parallel_residual(f, p, report: SemiSlantReport, X_field, Y_field, h: HypercomplexStructure) -> ParallelDefects:
    """|(nabla_X omega) Y| and |(nabla_X phi) Y| for vertical X.

    ``h`` is the structure the report was computed against; report.R must be one of its members.
    """
    tag = report.structure_tag
    if tag not in TAGS:
        raise PreconditionError(f"report is tagged '{tag}', expected one of {TAGS}")
    if h.dim != report.R.shape[0] or not np.allclose(h.get(tag), report.R, rtol=0.0, atol=1e-12):
        raise PreconditionError(f"the report's {tag} is not the {tag} of the given structure")
    calc = PointCalculus(f, h, PointAnalysis(report.split, {tag: report}))
    x, y = as_field(X_field), as_field(Y_field)
    x_val = calc.value(x)
    if _norm(calc.P_H @ x_val) > 1e-9 * max(1.0, _norm(x_val)):
        raise PreconditionError("X is not vertical at the point")
    return _parallel_defects(calc, tag, x, y)


def _parallel_defects(calc: PointCalculus, tag: str, x: Field, y: Field) -> ParallelDefects:
    report = calc.reports[tag]
    phi, omega, _, _ = calc.blocks(tag)
    x_val = calc.value(x)
    nabla_hat_xy = calc.P_V @ calc.covariant(y, x_val)
    omega_defect = calc.P_H @ calc.covariant(y.apply("H", tag), x_val) - omega @ nabla_hat_xy
    phi_defect = calc.P_V @ calc.covariant(y.apply("V", tag), x_val) - phi @ nabla_hat_xy

    balance = None
    if _norm(omega_defect) <= calc.tolerance() and report.theta is not None and report.theta < math.pi / 2:
        x2 = projector(report.d2) @ x_val
        phi_x2 = phi @ x2
        balance = _norm(calc.T(phi_x2, phi_x2) + report.cos_theta**2 * calc.T(x2, x2))
    return ParallelDefects(_norm(omega_defect), _norm(phi_defect), balance)


# --- Condition residuals ---
@dataclass(frozen=True)
class ConditionResidual:
    condition_id: str
    max_residual: float
    frame_pairs_evaluated: int
    tolerance: float
    structure_tag: str | None = None
    oracle_residual: float | None = None
    parts: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance

    @property
    def agrees(self) -> bool | None:
        if self.oracle_residual is None:
            return None
        return self.passed == (self.oracle_residual <= self.tolerance)


class _Tally:
    """Running maxima of named residual parts over points and frame pairs."""

    def __init__(self, *names: str):
        self.parts = {n: 0.0 for n in names}
        self.oracle: float | None = None
        self.pairs = 0
        self._calcs: list[PointCalculus] = []

    def watch(self, calc: PointCalculus) -> None:
        self._calcs.append(calc)

    @property
    def tolerance(self) -> float:
        return max([settings.condition_tol, *(c.tolerance() for c in self._calcs)])

    def add(self, name: str, vec) -> None:
        self.parts[name] = max(self.parts[name], _norm(vec))

    def add_oracle(self, vec) -> None:
        self.oracle = max(self.oracle or 0.0, _norm(vec))

    def result(self, condition_id: str, tag: str | None, with_oracle: bool = True) -> ConditionResidual:
        oracle = (self.oracle or 0.0) if with_oracle else None
        residual = ConditionResidual(
            condition_id,
            max(self.parts.values()) if self.parts else 0.0,
            self.pairs,
            self.tolerance,
            tag,
            oracle,
            dict(self.parts),
        )
        if residual.agrees is False:
            logger.warning(f"{condition_id}[{tag}]: residual {residual.max_residual:.3e} disagrees with oracle {oracle:.3e}")
        return residual


def _calculi(f, h, classification, calcs):
    return point_calculi(f, h, classification) if calcs is None else calcs


def parallel_structure_residuals(f, h: HypercomplexStructure, classification: Classification, calcs: Sequence[PointCalculus] | None = None) -> list[ConditionResidual]:
    """The eight block identities that follow from nabla R = 0, for each R.

    vv: X, Y vertical; hh: Z, W horizontal; vh: nabla_X (R Z); hv: nabla_Z (R X).
    Each identity is split into its vertical and horizontal parts.
    """
    calcs = _calculi(f, h, classification, calcs)
    results = []
    for tag in TAGS:
        tallies = {name: _Tally("identity") for name in (
            "vv_vertical", "vv_horizontal", "hh_vertical", "hh_horizontal",
            "vh_vertical", "vh_horizontal", "hv_vertical", "hv_horizontal",
        )}
        for calc in calcs:
            phi, omega, B, C = calc.blocks(tag)
            P_V, P_H = calc.P_V, calc.P_H
            verticals, horizontals = calc.frames("V"), calc.frames("H")
            for t in tallies.values():
                t.watch(calc)

            for X in verticals:
                x = calc.value(X)
                for Y in verticals:
                    phi_y, omega_y = Y.apply("V", tag), Y.apply("H", tag)
                    nh_xy = P_V @ calc.covariant(Y, x)
                    t_xy = calc.T(x, calc.value(Y))
                    lhs = P_V @ calc.covariant(phi_y, x) + calc.T(x, calc.value(omega_y))
                    tallies["vv_vertical"].add("identity", lhs - phi @ nh_xy - B @ t_xy)
                    lhs = calc.T(x, calc.value(phi_y)) + P_H @ calc.covariant(omega_y, x)
                    tallies["vv_horizontal"].add("identity", lhs - omega @ nh_xy - C @ t_xy)
                    tallies["vv_vertical"].pairs += 1
                    tallies["vv_horizontal"].pairs += 1

            for Z in horizontals:
                z = calc.value(Z)
                for W in horizontals:
                    b_w, c_w = W.apply("V", tag), W.apply("H", tag)
                    a_zw = calc.A(z, calc.value(W))
                    hn_zw = P_H @ calc.covariant(W, z)
                    lhs = P_V @ calc.covariant(b_w, z) + calc.A(z, calc.value(c_w))
                    tallies["hh_vertical"].add("identity", lhs - phi @ a_zw - B @ hn_zw)
                    lhs = calc.A(z, calc.value(b_w)) + P_H @ calc.covariant(c_w, z)
                    tallies["hh_horizontal"].add("identity", lhs - omega @ a_zw - C @ hn_zw)
                    tallies["hh_vertical"].pairs += 1
                    tallies["hh_horizontal"].pairs += 1

            for X in verticals:
                x = calc.value(X)
                phi_x, omega_x = X.apply("V", tag), X.apply("H", tag)
                for Z in horizontals:
                    z = calc.value(Z)
                    b_z, c_z = Z.apply("V", tag), Z.apply("H", tag)
                    t_xz = calc.T(x, z)
                    hn_xz = P_H @ calc.covariant(Z, x)
                    lhs = P_V @ calc.covariant(b_z, x) + calc.T(x, calc.value(c_z))
                    tallies["vh_vertical"].add("identity", lhs - phi @ t_xz - B @ hn_xz)
                    lhs = calc.T(x, calc.value(b_z)) + P_H @ calc.covariant(c_z, x)
                    tallies["vh_horizontal"].add("identity", lhs - omega @ t_xz - C @ hn_xz)

                    a_zx = calc.A(z, x)
                    vn_zx = P_V @ calc.covariant(X, z)
                    lhs = P_V @ calc.covariant(phi_x, z) + calc.A(z, calc.value(omega_x))
                    tallies["hv_vertical"].add("identity", lhs - B @ a_zx - phi @ vn_zx)
                    lhs = calc.A(z, calc.value(phi_x)) + P_H @ calc.covariant(omega_x, z)
                    tallies["hv_horizontal"].add("identity", lhs - C @ a_zx - omega @ vn_zx)
                    for name in ("vh_vertical", "vh_horizontal", "hv_vertical", "hv_horizontal"):
                        tallies[name].pairs += 1

        for name, t in tallies.items():
            results.append(t.result(f"parallel_structure_{name}", tag, with_oracle=False))
    return results


def _bracket(calc: PointCalculus, X: Field, Y: Field) -> np.ndarray:
    return calc.covariant(Y, calc.value(X)) - calc.covariant(X, calc.value(Y))


def integrability_D1_residual(f, h: HypercomplexStructure, classification: Classification, calcs: Sequence[PointCalculus] | None = None) -> list[ConditionResidual]:
    """D1 integrable iff Q(nabla^_X phi Y - nabla^_Y phi X) = 0 and T_X phi Y = T_Y phi X on D1.

    Oracle: the part of [X, Y] outside D1.
    """
    calcs = _calculi(f, h, classification, calcs)
    results = []
    for tag in TAGS:
        tally = _Tally("d2_part", "horizontal_part")
        for calc in calcs:
            tally.watch(calc)
            frames = calc.frames(f"D1:{tag}")
            Q = calc.matrix(f"D2:{tag}")
            outside = np.eye(len(calc.p)) - calc.matrix(f"D1:{tag}")
            for i, X in enumerate(frames):
                for Y in frames[i + 1:]:
                    x, y = calc.value(X), calc.value(Y)
                    phi_x, phi_y = X.apply("V", tag), Y.apply("V", tag)
                    diff = calc.P_V @ (calc.covariant(phi_y, x) - calc.covariant(phi_x, y))
                    tally.add("d2_part", Q @ diff)
                    tally.add("horizontal_part", calc.T(x, calc.value(phi_y)) - calc.T(y, calc.value(phi_x)))
                    tally.add_oracle(outside @ _bracket(calc, X, Y))
                    tally.pairs += 1
        results.append(tally.result("d1_integrable", tag))
    return results


def integrability_D2_residual(f, h: HypercomplexStructure, classification: Classification, calcs: Sequence[PointCalculus] | None = None) -> list[ConditionResidual]:
    """D2 integrable iff P(nabla^_X phi Y - nabla^_Y phi X + T_X omega Y - T_Y omega X) = 0 on D2."""
    calcs = _calculi(f, h, classification, calcs)
    results = []
    for tag in TAGS:
        tally = _Tally("d1_part")
        for calc in calcs:
            tally.watch(calc)
            frames = calc.frames(f"D2:{tag}")
            P = calc.matrix(f"D1:{tag}")
            outside = np.eye(len(calc.p)) - calc.matrix(f"D2:{tag}")
            for i, X in enumerate(frames):
                for Y in frames[i + 1:]:
                    x, y = calc.value(X), calc.value(Y)
                    phi_x, phi_y = X.apply("V", tag), Y.apply("V", tag)
                    omega_x, omega_y = X.apply("H", tag), Y.apply("H", tag)
                    expr = (
                        calc.P_V @ (calc.covariant(phi_y, x) - calc.covariant(phi_x, y))
                        + calc.T(x, calc.value(omega_y))
                        - calc.T(y, calc.value(omega_x))
                    )
                    tally.add("d1_part", P @ expr)
                    tally.add_oracle(outside @ _bracket(calc, X, Y))
                    tally.pairs += 1
        results.append(tally.result("d2_integrable", tag))
    return results


def _vertical_pair_condition(calc: PointCalculus, tag: str, X: Field, Y: Field) -> np.ndarray:
    """omega(nabla^_X phi Y + T_X omega Y) + C(T_X phi Y + H nabla_X omega Y), which equals -H nabla_X Y."""
    _, omega, _, C = calc.blocks(tag)
    x = calc.value(X)
    phi_y, omega_y = Y.apply("V", tag), Y.apply("H", tag)
    vertical = calc.P_V @ calc.covariant(phi_y, x) + calc.T(x, calc.value(omega_y))
    horizontal = calc.T(x, calc.value(phi_y)) + calc.P_H @ calc.covariant(omega_y, x)
    return omega @ vertical + C @ horizontal


def totally_geodesic_residual(f, h: HypercomplexStructure, classification: Classification, calcs: Sequence[PointCalculus] | None = None) -> list[ConditionResidual]:
    """Vertical-pair and mixed conditions plus the range-normal hypothesis on horizontal pairs.

    Oracle: the largest entry of the second fundamental form over a full frame.
    """
    calcs = _calculi(f, h, classification, calcs)
    results = []
    for tag in TAGS:
        tally = _Tally("vertical_pairs", "mixed_pairs", "range_normal_hypothesis")
        for calc in calcs:
            tally.watch(calc)
            _, omega, _, C = calc.blocks(tag)
            verticals, horizontals = calc.frames("V"), calc.frames("H")
            for X in verticals:
                x = calc.value(X)
                for Y in verticals:
                    tally.add("vertical_pairs", _vertical_pair_condition(calc, tag, X, Y))
                    tally.pairs += 1
                for Z in horizontals:
                    b_z, c_z = Z.apply("V", tag), Z.apply("H", tag)
                    vertical = calc.P_V @ calc.covariant(b_z, x) + calc.T(x, calc.value(c_z))
                    horizontal = calc.T(x, calc.value(b_z)) + calc.P_H @ calc.covariant(c_z, x)
                    tally.add("mixed_pairs", omega @ vertical + C @ horizontal)
                    tally.pairs += 1

            hess = hessian(f, calc.p)
            q_bar = projector(calc.split.range_perp)
            hb = calc.split.horizontal.basis
            for i in range(hb.shape[1]):
                for j in range(hb.shape[1]):
                    tally.add("range_normal_hypothesis", q_bar @ np.einsum("cab,a,b->c", hess, hb[:, i], hb[:, j]))
            norms = np.linalg.norm(hess, axis=0) if hess.size else np.zeros(1)
            tally.oracle = max(tally.oracle or 0.0, float(np.max(norms)))
        results.append(tally.result("totally_geodesic", tag))
    return results


def product_decomposition_residual(f, h: HypercomplexStructure, classification: Classification, calcs: Sequence[PointCalculus] | None = None) -> list[ConditionResidual]:
    """Vertical and horizontal distributions both autoparallel.

    Horizontal-pair condition: phi(V nabla_Z B W + A_Z C W) + B(A_Z B W + H nabla_Z C W),
    which equals -V nabla_Z W. Oracle: |H nabla_X Y| and |V nabla_Z W| directly.
    """
    calcs = _calculi(f, h, classification, calcs)
    results = []
    for tag in TAGS:
        tally = _Tally("vertical_pairs", "horizontal_pairs")
        for calc in calcs:
            tally.watch(calc)
            phi, _, B, _ = calc.blocks(tag)
            verticals, horizontals = calc.frames("V"), calc.frames("H")
            for X in verticals:
                x = calc.value(X)
                for Y in verticals:
                    tally.add("vertical_pairs", _vertical_pair_condition(calc, tag, X, Y))
                    tally.add_oracle(calc.P_H @ calc.covariant(Y, x))
                    tally.pairs += 1
            for Z in horizontals:
                z = calc.value(Z)
                for W in horizontals:
                    b_w, c_w = W.apply("V", tag), W.apply("H", tag)
                    vertical = calc.P_V @ calc.covariant(b_w, z) + calc.A(z, calc.value(c_w))
                    horizontal = calc.A(z, calc.value(b_w)) + calc.P_H @ calc.covariant(c_w, z)
                    tally.add("horizontal_pairs", phi @ vertical + B @ horizontal)
                    tally.add_oracle(calc.P_V @ calc.covariant(W, z))
                    tally.pairs += 1
        results.append(tally.result("product_decomposition", tag))
    return results


def fiber_decomposition_residual(f, h: HypercomplexStructure, classification: Classification, calcs: Sequence[PointCalculus] | None = None) -> list[ConditionResidual]:
    """D1 and D2 both totally geodesic in M, so the fibers split as a product.

    D1 pairs: Q(phi nabla^_U phi V + B T_U phi V) and omega nabla^_U phi V + C T_U phi V.
    D2 pairs: the same with nabla_X R Y in place of nabla_U phi V, projected by P.
    Oracle: Q nabla^_U V, T_U V, P nabla^_X Y and T_X Y.
    """
    calcs = _calculi(f, h, classification, calcs)
    results = []
    for tag in TAGS:
        tally = _Tally("d1_in_fiber", "d1_horizontal", "d2_in_fiber", "d2_horizontal")
        for calc in calcs:
            tally.watch(calc)
            phi, omega, B, C = calc.blocks(tag)
            P = calc.matrix(f"D1:{tag}")
            Q = calc.matrix(f"D2:{tag}")

            d1_frames = calc.frames(f"D1:{tag}")
            for U in d1_frames:
                u = calc.value(U)
                for Vf in d1_frames:
                    phi_v = Vf.apply("V", tag)
                    vertical = calc.P_V @ calc.covariant(phi_v, u)
                    horizontal = calc.T(u, calc.value(phi_v))
                    tally.add("d1_in_fiber", Q @ (phi @ vertical + B @ horizontal))
                    tally.add("d1_horizontal", omega @ vertical + C @ horizontal)
                    tally.add_oracle(Q @ calc.P_V @ calc.covariant(Vf, u))
                    tally.add_oracle(calc.T(u, calc.value(Vf)))
                    tally.pairs += 1

            d2_frames = calc.frames(f"D2:{tag}")
            for X in d2_frames:
                x = calc.value(X)
                for Y in d2_frames:
                    phi_y, omega_y = Y.apply("V", tag), Y.apply("H", tag)
                    vertical = calc.P_V @ calc.covariant(phi_y, x) + calc.T(x, calc.value(omega_y))
                    horizontal = calc.T(x, calc.value(phi_y)) + calc.P_H @ calc.covariant(omega_y, x)
                    tally.add("d2_in_fiber", P @ (phi @ vertical + B @ horizontal))
                    tally.add("d2_horizontal", omega @ vertical + C @ horizontal)
                    tally.add_oracle(P @ calc.P_V @ calc.covariant(Y, x))
                    tally.add_oracle(calc.T(x, calc.value(Y)))
                    tally.pairs += 1
        results.append(tally.result("fiber_product", tag))
    return results


# --- Curvature summaries ---
@dataclass(frozen=True, eq=False)
class CurvatureSummary:
    point: np.ndarray
    tension: np.ndarray | None = None
    range_mean_curvature: np.ndarray | None = None
    horizontal_range_defect: float | None = None
    d2_traces: dict[str, float] = field(default_factory=dict)
    fiber_mean_curvature: np.ndarray | None = None
    umbilical_residual: float | None = None
    mean_curvature_defects: dict[str, float] = field(default_factory=dict)
    flags: dict[str, bool] = field(default_factory=dict)

    def merge(self, other: "CurvatureSummary") -> "CurvatureSummary":
        def pick(a, b):
            return a if a is not None else b

        return CurvatureSummary(
            point=self.point,
            tension=pick(self.tension, other.tension),
            range_mean_curvature=pick(self.range_mean_curvature, other.range_mean_curvature),
            horizontal_range_defect=pick(self.horizontal_range_defect, other.horizontal_range_defect),
            d2_traces={**other.d2_traces, **self.d2_traces},
            fiber_mean_curvature=pick(self.fiber_mean_curvature, other.fiber_mean_curvature),
            umbilical_residual=pick(self.umbilical_residual, other.umbilical_residual),
            mean_curvature_defects={**other.mean_curvature_defects, **self.mean_curvature_defects},
            flags={**other.flags, **self.flags},
        )


def harmonicity_report(f, h: HypercomplexStructure, classification: Classification, calcs: Sequence[PointCalculus] | None = None) -> list[CurvatureSummary]:
    """Tension field, range mean curvature and the sufficient conditions for harmonicity, per point.

    For each R, F is harmonic when the range mean curvature vanishes, D1^R is
    integrable and the second fundamental form has zero trace on D2^R; the same
    holds with the trace condition replaced by omega_R parallel and theta_R < pi/2.
    """
    calcs = _calculi(f, h, classification, calcs)
    summaries = []
    for calc in calcs:
        tol = calc.tolerance()
        hess = hessian(f, calc.p)
        tau = np.einsum("caa->c", hess)
        hb = calc.split.horizontal.basis
        l = hb.shape[1]
        horizontal_trace = np.einsum("cab,ai,bi->c", hess, hb, hb)
        q_bar = projector(calc.split.range_perp)
        p_bar = projector(calc.split.range)
        h_tilde = q_bar @ horizontal_trace / l if l else np.zeros(len(tau))
        range_defect = 0.0
        for i in range(l):
            for j in range(l):
                range_defect = max(range_defect, _norm(p_bar @ np.einsum("cab,a,b->c", hess, hb[:, i], hb[:, j])))

        single = Classification(classification.verdict, classification.reason, (PointAnalysis(calc.split, calc.reports),), classification.angles)
        d1_flags = {r.structure_tag: r.passed for r in integrability_D1_residual(f, h, single, [calc])}

        harmonic = _norm(tau) <= tol
        flags = {"harmonic": harmonic, "range_mean_curvature_zero": _norm(h_tilde) <= tol}
        traces = {}
        for tag in TAGS:
            report = calc.reports[tag]
            d2 = report.d2.basis
            trace = np.einsum("cab,ai,bi->c", hess, d2, d2)
            traces[tag] = _norm(trace)

            verticals = calc.frames("V")
            omega_parallel = all(
                _parallel_defects(calc, tag, X, Y).omega <= tol for X in verticals for Y in verticals
            )
            below_right = report.theta is None or report.theta < math.pi / 2
            flags[f"d1_integrable_{tag}"] = d1_flags[tag]
            flags[f"d2_trace_zero_{tag}"] = traces[tag] <= tol
            flags[f"omega_parallel_{tag}"] = omega_parallel
            flags[f"harmonic_by_trace_{tag}"] = flags["range_mean_curvature_zero"] and d1_flags[tag] and traces[tag] <= tol
            flags[f"harmonic_by_parallel_omega_{tag}"] = (
                flags["range_mean_curvature_zero"] and d1_flags[tag] and omega_parallel and below_right
            )

        implied = any(v for k, v in flags.items() if k.startswith("harmonic_by_"))
        flags["sufficient_conditions_consistent"] = harmonic or not implied
        if not flags["sufficient_conditions_consistent"]:
            logger.warning(f"Harmonicity conditions hold at {calc.p.tolist()} but |tau| = {_norm(tau):.3e}")
        summaries.append(
            CurvatureSummary(
                point=calc.p,
                tension=tau,
                range_mean_curvature=h_tilde,
                horizontal_range_defect=range_defect,
                d2_traces=traces,
                flags=flags,
            )
        )
    return summaries


def umbilical_report(f, h: HypercomplexStructure, classification: Classification, calcs: Sequence[PointCalculus] | None = None) -> list[CurvatureSummary]:
    """Fiber mean curvature H, the umbilical residual and where H lies, per point."""
    calcs = _calculi(f, h, classification, calcs)
    summaries = []
    for calc in calcs:
        tol = calc.tolerance()
        vb = calc.split.vertical.basis
        k = vb.shape[1]
        T = [[calc.T(vb[:, i], vb[:, j]) for j in range(k)] for i in range(k)]
        H = sum((T[i][i] for i in range(k)), np.zeros(len(calc.p))) / k if k else np.zeros(len(calc.p))
        residual = 0.0
        for i in range(k):
            for j in range(k):
                residual = max(residual, _norm(T[i][j] - (H if i == j else 0.0)))

        umbilical = residual <= tol
        flags = {"umbilical": umbilical, "minimal_fibers": _norm(H) <= tol}
        defects = {}
        for tag in TAGS:
            report = calc.reports[tag]
            if report.d2.dim == 0:
                # complex case: umbilical fibers are then minimal
                defects[tag] = _norm(H)
                if umbilical:
                    flags[f"minimal_when_complex_{tag}"] = _norm(H) <= tol
            else:
                defects[tag] = _norm(H - projector(report.omega_d2) @ H)
            if umbilical:
                flags[f"mean_curvature_in_omega_d2_{tag}"] = defects[tag] <= tol
        summaries.append(
            CurvatureSummary(
                point=calc.p,
                fiber_mean_curvature=H,
                umbilical_residual=residual,
                mean_curvature_defects=defects,
                flags=flags,
            )
        )
    return summaries
