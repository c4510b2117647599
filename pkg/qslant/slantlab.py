"""Pointwise analysis of a map against a hypercomplex structure.

At each point the tangent space splits into vertical (ker F_*) and horizontal
parts. For every R in {I, J, K} the vertical space is decomposed into an
R-invariant part D1 and a slant part D2 on which R makes a constant angle with
the vertical space. The tensors phi, omega, B, C are the blocks of R in the
(vertical, horizontal) bases:

    phi = V^T R V    omega = H^T R V    B = V^T R H    C = H^T R H
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from qslant.config import settings
from qslant.errors import (
    AmbiguousRankError,
    PreconditionError,
    StructuralInconsistencyError,
    UndefinedOperationError,
)
from qslant.hstructure import TAGS, HypercomplexStructure
from qslant.logger import logger
from qslant.numkernel import (
    Matrix,
    Subspace,
    jacobian,
    numerical_rank,
    orth_complement,
    principal_angles,
    projector,
    span,
    svd,
)


# --- Tangent split ---
@dataclass(frozen=True, eq=False)
class TangentSplit:
    point: np.ndarray
    jacobian: Matrix
    vertical: Subspace
    horizontal: Subspace
    range: Subspace
    range_perp: Subspace
    horizontal_singular_values: np.ndarray
    is_riemannian: bool
    rank: int
    eikonal_residual: float | None = None

    @property
    def p_vertical(self) -> Matrix:
        return projector(self.vertical)

    @property
    def p_horizontal(self) -> Matrix:
        return projector(self.horizontal)


def split_tangent(f, p, riemannian_tol: float | None = None) -> TangentSplit:
    riemannian_tol = settings.riemannian_tol if riemannian_tol is None else riemannian_tol
    p = np.asarray(p, dtype=float)
    jac = jacobian(f, p)
    u, sigma, v = svd(jac)
    rank = numerical_rank(sigma)

    # the rank must not depend on the threshold within two orders of magnitude
    loose = numerical_rank(sigma, settings.rank_rtol * 100)
    tight = numerical_rank(sigma, settings.rank_rtol / 100)
    if loose != rank or tight != rank:
        logger.error(f"Ambiguous rank at {p.tolist()}: singular values {sigma.tolist()}")
        raise AmbiguousRankError(
            f"rank of F_* at {p.tolist()} is {tight}, {rank} or {loose} depending on the threshold"
        )

    hsv = sigma[:rank]
    is_riemannian = bool(np.all(np.abs(hsv - 1.0) <= riemannian_tol))
    eikonal = None
    if is_riemannian:
        eikonal = abs(float(np.sum(jac * jac)) - rank)
    logger.debug(f"Split at {p.tolist()}: rank {rank}, singular values {hsv.tolist()}")
    return TangentSplit(
        point=p,
        jacobian=jac,
        vertical=Subspace(v[:, rank:]),
        horizontal=Subspace(v[:, :rank]),
        range=Subspace(u[:, :rank]),
        range_perp=Subspace(u[:, rank:]),
        horizontal_singular_values=hsv,
        is_riemannian=is_riemannian,
        rank=rank,
        eikonal_residual=eikonal,
    )


def energy_density(f, p) -> float:
    jac = jacobian(f, p)
    return 0.5 * float(np.sum(jac * jac))


# --- Semi-slant decomposition ---
@dataclass(frozen=True, eq=False)
class SemiSlantReport:
    structure_tag: str
    R: Matrix
    split: TangentSplit
    d1: Subspace
    d2: Subspace
    omega_d2: Subspace
    mu: Subspace
    theta: float | None
    cos_theta: float | None
    cosines: np.ndarray
    phi: Matrix
    omega: Matrix
    B: Matrix
    C: Matrix
    is_semi_slant: bool
    reason: str | None = None
    identity_residuals: dict[str, float] = field(default_factory=dict)

    @property
    def theta_display(self) -> str:
        if not self.is_semi_slant:
            return "undefined"
        if self.theta is None:
            return "0 (complex case)"
        if self.theta == math.pi / 2:
            return "pi/2"
        return f"{self.theta:.15g}"

    def d1_coords(self) -> Matrix:
        """Basis of D1 in the coordinates of the vertical basis."""
        return self.split.vertical.basis.T @ self.d1.basis

    def d2_coords(self) -> Matrix:
        return self.split.vertical.basis.T @ self.d2.basis


def _invariance_defect(sub: Subspace, R: Matrix) -> float:
    if sub.dim == 0:
        return 0.0
    image = R @ sub.basis
    return float(np.max(np.abs(image - sub.basis @ (sub.basis.T @ image))))


def semi_slant_decompose(split: TangentSplit, R: Matrix, tol: float | None = None, structure_tag: str = "R") -> SemiSlantReport:
    """Detect D1, D2 and the slant angle from the spectrum of -(P_V R P_V)^2 on the vertical space.

    The singular values of phi = V^T R V are the cosines of the angles between R X
    and the vertical space along the principal directions; phi^T phi = -phi^2 has
    their squares as eigenvalues. Cosines equal to one span D1.
    """
    if not split.is_riemannian:
        raise PreconditionError(f"F is not a Riemannian map at {split.point.tolist()}")
    tol = settings.cluster_tol if tol is None else tol
    R = np.asarray(R, dtype=float)
    V = split.vertical.basis
    H = split.horizontal.basis
    k = V.shape[1]

    phi = V.T @ R @ V
    omega = H.T @ R @ V
    B = V.T @ R @ H
    C = H.T @ R @ H

    if k == 0:
        cosines = np.zeros(0)
        in_d1 = np.zeros(0, dtype=bool)
        rows = np.zeros((0, 0))
    else:
        _, cosines, rows = np.linalg.svd(phi)
        cosines = np.clip(cosines, 0.0, 1.0)
        in_d1 = cosines**2 >= 1.0 - tol

    d1 = Subspace(V @ rows[in_d1].T) if k else Subspace.empty(split.vertical.ambient_dim)
    d2 = Subspace(V @ rows[~in_d1].T) if k else Subspace.empty(split.vertical.ambient_dim)
    logger.debug(f"{structure_tag}: cosines {cosines.tolist()}, dim D1 {d1.dim}, dim D2 {d2.dim}")

    # eigenvector error grows like the square root of the eigenvalue error
    invariance_tol = max(10.0 * math.sqrt(tol), 1e-6)
    defect = _invariance_defect(d1, R)
    if defect > invariance_tol:
        logger.error(f"{structure_tag}: D1 candidate is not invariant (defect {defect:.3e})")
        raise StructuralInconsistencyError(
            f"eigenvalue-1 eigenspace of -phi^2 for {structure_tag} is not {structure_tag}-invariant (defect {defect:.3e})"
        )

    rest = cosines[~in_d1]
    is_semi_slant = True
    reason = None
    theta = None
    cos_theta = None
    if rest.size:
        squares = rest**2
        width = float(squares.max() - squares.min())
        if width > tol:
            is_semi_slant = False
            reason = f"{structure_tag} has several slant clusters, cos^2 values {sorted(set(np.round(squares, 9).tolist()))}"
            logger.warning(f"Not semi-slant: {reason}")
        else:
            cos_theta = float(rest.mean())
            if cos_theta <= settings.right_angle_tol:
                cos_theta = 0.0
                theta = math.pi / 2
            else:
                theta = math.acos(cos_theta)

    P_H = split.p_horizontal
    omega_d2 = span(P_H @ R @ d2.basis, rank_tol=1e-6) if d2.dim else Subspace.empty(R.shape[0])
    mu = orth_complement(omega_d2, within=split.horizontal)

    report = SemiSlantReport(
        structure_tag=structure_tag,
        R=R,
        split=split,
        d1=d1,
        d2=d2,
        omega_d2=omega_d2,
        mu=mu,
        theta=theta,
        cos_theta=cos_theta,
        cosines=cosines,
        phi=phi,
        omega=omega,
        B=B,
        C=C,
        is_semi_slant=is_semi_slant,
        reason=reason,
    )
    return dataclasses.replace(report, identity_residuals=structural_identities(report))


def _max_abs(a: Matrix) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def structural_identities(report: SemiSlantReport) -> dict[str, float]:
    """Max-norm residuals of the block identities implied by R^2 = -id, and of the slant identities."""
    phi, omega, B, C = report.phi, report.omega, report.B, report.C
    k, l = phi.shape[0], C.shape[0]
    residuals = {
        "phi^2+B.omega+id": _max_abs(phi @ phi + B @ omega + np.eye(k)),
        "C^2+omega.B+id": _max_abs(C @ C + omega @ B + np.eye(l)),
        "omega.phi+C.omega": _max_abs(omega @ phi + C @ omega),
        "B.C+phi.B": _max_abs(B @ C + phi @ B),
        "d1_invariance": _invariance_defect(report.d1, report.R),
    }
    if not report.is_semi_slant:
        return residuals

    q1, q2 = report.d1_coords(), report.d2_coords()
    residuals["B_range_in_d2"] = _max_abs(q1.T @ B)
    residuals["mu_invariance"] = _invariance_defect(report.mu, report.R)
    if report.d2.dim:
        cos2 = report.cos_theta**2
        residuals["phi^2+cos^2.id_on_d2"] = _max_abs(phi @ phi @ q2 + cos2 * q2)
        phi_x = phi @ q2
        omega_x = omega @ q2
        eye = np.eye(q2.shape[1])
        residuals["phi_metric"] = _max_abs(phi_x.T @ phi_x - cos2 * eye)
        residuals["omega_metric"] = _max_abs(omega_x.T @ omega_x - (1.0 - cos2) * eye)
    if report.d2.dim == 0 or report.theta < math.pi / 2:
        rh = rhat(report)
        residuals["rhat^2+id"] = _max_abs(rh @ rh + np.eye(k))
    return residuals


def rhat(report: SemiSlantReport) -> Matrix:
    """R-hat = phi on D1 plus sec(theta) phi on D2, in vertical coordinates; squares to -id."""
    if not report.is_semi_slant:
        raise PreconditionError(f"{report.structure_tag} is not semi-slant, R-hat is undefined")
    q1, q2 = report.d1_coords(), report.d2_coords()
    rh = report.phi @ q1 @ q1.T
    if report.d2.dim:
        if report.cos_theta == 0.0:
            raise UndefinedOperationError(
                f"R-hat needs sec(theta) but theta_{report.structure_tag} = pi/2"
            )
        rh = rh + (report.phi @ q2 @ q2.T) / report.cos_theta
    return rh


def angle_oracle(split: TangentSplit, report: SemiSlantReport, samples: int | None = None, rng: np.random.Generator | None = None) -> float | None:
    """Max |angle(R X, vertical) - theta| over random unit X in D2, measured directly."""
    if not report.is_semi_slant or report.d2.dim == 0:
        return None
    samples = settings.oracle_samples if samples is None else samples
    rng = np.random.default_rng(settings.default_seed) if rng is None else rng
    P_V, P_H = split.p_vertical, split.p_horizontal
    worst = 0.0
    for _ in range(samples):
        c = rng.standard_normal(report.d2.dim)
        x = report.d2.basis @ (c / np.linalg.norm(c))
        rx = report.R @ x
        angle = math.atan2(np.linalg.norm(P_H @ rx), np.linalg.norm(P_V @ rx))
        worst = max(worst, abs(angle - report.theta))
    return worst


# --- Classification across I, J, K ---
@dataclass(frozen=True, eq=False)
class PointAnalysis:
    split: TangentSplit
    reports: dict[str, SemiSlantReport]


@dataclass(frozen=True, eq=False)
class Classification:
    verdict: str
    reason: str
    points: tuple[PointAnalysis, ...]
    angles: dict[str, float | None]
    shared_d1: Subspace | None = None
    witness_points: tuple[np.ndarray, np.ndarray] | None = None
    even_fibers: bool | None = None

    def display_angles(self) -> dict[str, str]:
        if not self.points or not self.points[0].reports:
            return {}
        return {tag: r.theta_display for tag, r in self.points[0].reports.items()}


def analyze_point(f, h: HypercomplexStructure, p, tol: float | None = None) -> PointAnalysis:
    split = split_tangent(f, p)
    if not split.is_riemannian:
        return PointAnalysis(split, {})
    reports = {tag: semi_slant_decompose(split, R, tol, tag) for tag, R in h.items()}
    return PointAnalysis(split, reports)


def _angles_differ(a: float | None, b: float | None) -> bool:
    if a is None or b is None:
        return (a is None) != (b is None)
    return abs(a - b) > settings.angle_tol


def _shared_d1(reports: dict[str, SemiSlantReport]) -> Subspace | None:
    d1 = [reports[tag].d1 for tag in TAGS]
    if len({s.dim for s in d1}) != 1:
        return None
    for i in range(len(d1)):
        for j in range(i + 1, len(d1)):
            angles = principal_angles(d1[i], d1[j])
            if angles and max(angles) > settings.subspace_tol:
                return None
    return d1[0]


def classify(f, h: HypercomplexStructure, points, tol: float | None = None, workers: int | None = None) -> Classification:
    points = [np.asarray(p, dtype=float) for p in points]
    if not points:
        raise PreconditionError("classification needs at least one point")
    if h.dim != f.domain_dim:
        raise PreconditionError(f"structure has dim {h.dim} but the map's domain is R^{f.domain_dim}")
    workers = settings.workers if workers is None else workers

    # per-point analyses are independent; results are collected in submission order
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        futures = [executor.submit(analyze_point, f, h, p, tol) for p in points]
        analyses = tuple(future.result() for future in futures)

    def verdict(name: str, reason: str, **extra) -> Classification:
        logger.info(f"Verdict for '{getattr(f, 'name', 'map')}': {name} ({reason})")
        first = analyses[0].reports
        angles = {tag: r.theta for tag, r in first.items()}
        return Classification(name, reason, analyses, angles, **extra)

    for a in analyses:
        if not a.split.is_riemannian:
            return verdict(
                "not_riemannian",
                f"horizontal singular values {a.split.horizontal_singular_values.tolist()} at {a.split.point.tolist()}",
            )
    ranks = {a.split.rank for a in analyses}
    if len(ranks) > 1:
        return verdict("not_riemannian", f"rank varies across points: {sorted(ranks)}")

    for a in analyses:
        for r in a.reports.values():
            if not r.is_semi_slant:
                return verdict("generic", r.reason)

    first = analyses[0]
    for a in analyses[1:]:
        for tag in TAGS:
            r0, r1 = first.reports[tag], a.reports[tag]
            if _angles_differ(r0.theta, r1.theta) or r0.d1.dim != r1.d1.dim:
                logger.warning(f"theta_{tag} is not constant: {r0.theta} vs {r1.theta}")
                return verdict(
                    "generic",
                    f"theta_{tag} differs between points ({r0.theta} vs {r1.theta})",
                    witness_points=(first.split.point, a.split.point),
                )

    thetas = [first.reports[tag].theta for tag in TAGS]
    even_fibers = None
    if any(t != math.pi / 2 for t in thetas):
        vertical_dim = first.split.vertical.dim
        if vertical_dim % 2:
            raise StructuralInconsistencyError(
                f"slant angles {thetas} are not all pi/2 but the fibers have odd dimension {vertical_dim}"
            )
        even_fibers = True

    shared = [_shared_d1(a.reports) for a in analyses]
    if any(s is None for s in shared):
        return verdict("almost_h_semi_slant", "D1 differs between I, J and K", even_fibers=even_fibers)
    if all(not _angles_differ(thetas[0], t) for t in thetas[1:]):
        return verdict(
            "strictly_h_semi_slant", "shared D1 and equal angles", shared_d1=shared[0], even_fibers=even_fibers
        )
    return verdict("h_semi_slant", "shared D1, angles differ between structures", shared_d1=shared[0], even_fibers=even_fibers)
