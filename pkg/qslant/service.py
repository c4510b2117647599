"""Orchestration behind the CLI: analyse one map, or verify the built-in corpus."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from qslant import __version__
from qslant.config import settings
from qslant.errors import QSlantError
from qslant.exprmap import SmoothMap, load_map_spec, parse_expr
from qslant.files import discover_corpus, load_corpus_entry, read_json, resolve_document
from qslant.geoflow import (
    SEMI_SLANT_VERDICTS,
    ConditionResidual,
    CurvatureSummary,
    fiber_decomposition_residual,
    harmonicity_report,
    integrability_D1_residual,
    integrability_D2_residual,
    parallel_structure_residuals,
    point_calculi,
    product_decomposition_residual,
    totally_geodesic_residual,
    umbilical_report,
)
from qslant.hstructure import TAGS, HypercomplexStructure, canonical_hypercomplex, conjugate, load_structure
from qslant.logger import logger
from qslant.numkernel import Subspace, principal_angles, random_orthogonal, span
from qslant.schema import (
    AnalysisConfig,
    ClassificationModel,
    ConditionResidualModel,
    CorpusEntry,
    CorpusExpectation,
    CorpusRow,
    CorpusTable,
    CurvatureModel,
    MapSpecDocument,
    PointReport,
    Report,
    SemiSlantModel,
    TangentSplitModel,
)
from qslant.slantlab import (
    Classification,
    PointAnalysis,
    SemiSlantReport,
    angle_oracle,
    classify,
    energy_density,
    semi_slant_decompose,
    structural_identities,
)

DEFAULT_BOX = (-1.0, 1.0)


# --- Inputs ---
def structure_for(structure: str, dim: int) -> HypercomplexStructure:
    if structure == "canonical":
        return canonical_hypercomplex(dim // 4)
    return load_structure(read_json(Path(structure)))


def sample_points(spec: MapSpecDocument, count: int, seed: int, explicit=None) -> list[np.ndarray]:
    """Explicit points win, then the spec's own points, then uniform draws from its box."""
    if explicit:
        return [np.asarray(p, dtype=float) for p in explicit]
    if spec.sample_points:
        return [np.asarray(p, dtype=float) for p in spec.sample_points]
    low, high = (spec.sample_box.low, spec.sample_box.high) if spec.sample_box else DEFAULT_BOX
    rng = np.random.default_rng(seed)
    return [rng.uniform(low, high, spec.domain_dim) for _ in range(count)]


def _evaluate(text: str, params, point) -> float:
    return float(parse_expr(text).evaluate([float(x) for x in point], dict(params)))


# --- Report assembly ---
def _split_model(f: SmoothMap, a: PointAnalysis) -> TangentSplitModel:
    s = a.split
    return TangentSplitModel(
        rank=s.rank,
        vertical_dim=s.vertical.dim,
        horizontal_dim=s.horizontal.dim,
        horizontal_singular_values=s.horizontal_singular_values.tolist(),
        is_riemannian=s.is_riemannian,
        energy_density=energy_density(f, s.point),
        eikonal_residual=s.eikonal_residual,
    )


def _slant_model(a: PointAnalysis, r: SemiSlantReport, rng: np.random.Generator) -> SemiSlantModel:
    return SemiSlantModel(
        structure_tag=r.structure_tag,
        is_semi_slant=r.is_semi_slant,
        reason=r.reason,
        d1_dim=r.d1.dim,
        d2_dim=r.d2.dim,
        omega_d2_dim=r.omega_d2.dim,
        mu_dim=r.mu.dim,
        theta=r.theta,
        theta_display=r.theta_display,
        cosines=r.cosines.tolist(),
        identity_residuals=r.identity_residuals,
        angle_oracle_error=angle_oracle(a.split, r, rng=rng),
    )


def _classification_model(c: Classification) -> ClassificationModel:
    first = c.points[0].reports
    return ClassificationModel(
        verdict=c.verdict,
        reason=c.reason,
        angles=c.angles,
        angle_display=c.display_angles(),
        d1_dims={t: r.d1.dim for t, r in first.items()},
        d2_dims={t: r.d2.dim for t, r in first.items()},
        shared_d1_dim=c.shared_d1.dim if c.shared_d1 is not None else None,
        witness_points=[p.tolist() for p in c.witness_points] if c.witness_points else None,
        even_fibers=c.even_fibers,
    )


def _condition_model(r: ConditionResidual) -> ConditionResidualModel:
    return ConditionResidualModel(
        condition_id=r.condition_id,
        structure_tag=r.structure_tag,
        max_residual=r.max_residual,
        frame_pairs_evaluated=r.frame_pairs_evaluated,
        tolerance=r.tolerance,
        passed=r.passed,
        oracle_residual=r.oracle_residual,
        agrees=r.agrees,
        parts=r.parts,
    )


def _norm(v) -> float:
    return float(np.linalg.norm(v)) if v is not None else 0.0


def _curvature_model(s: CurvatureSummary) -> CurvatureModel:
    return CurvatureModel(
        point=s.point.tolist(),
        tension=s.tension.tolist(),
        tension_norm=_norm(s.tension),
        range_mean_curvature=s.range_mean_curvature.tolist(),
        horizontal_range_defect=s.horizontal_range_defect,
        fiber_mean_curvature=s.fiber_mean_curvature.tolist(),
        mean_curvature_norm=_norm(s.fiber_mean_curvature),
        umbilical_residual=s.umbilical_residual,
        d2_traces=s.d2_traces,
        mean_curvature_defects=s.mean_curvature_defects,
        flags=s.flags,
    )


# --- Checks ---
def identity_failures(classification: Classification, tol: float) -> list[str]:
    failures = []
    for a in classification.points:
        where = a.split.point.tolist()
        if a.split.eikonal_residual is not None and a.split.eikonal_residual > tol:
            failures.append(f"eikonal residual {a.split.eikonal_residual:.3e} at {where}")
        for tag, r in a.reports.items():
            for name, value in r.identity_residuals.items():
                if value > tol:
                    failures.append(f"{tag} identity {name} = {value:.3e} at {where}")
            oracle = angle_oracle(a.split, r)
            if oracle is not None and oracle > settings.angle_tol:
                failures.append(f"{tag} angle oracle off by {oracle:.3e} at {where}")
    return failures


def curvature_failures(summaries: list[CurvatureSummary]) -> list[str]:
    failures = []
    for s in summaries:
        for name, value in s.flags.items():
            consistency = name == "sufficient_conditions_consistent"
            conclusion = name.startswith(("mean_curvature_in_omega_d2_", "minimal_when_complex_"))
            if (consistency or conclusion) and not value:
                failures.append(f"{name} fails at {s.point.tolist()}")
    return failures


CONDITION_CHECKS = {
    "integrability": (integrability_D1_residual, integrability_D2_residual),
    "geodesic": (totally_geodesic_residual,),
    "decomposition": (product_decomposition_residual, fiber_decomposition_residual),
}


def run_conditions(f, h, classification, checks, calcs) -> tuple[list[ConditionResidual], list[CurvatureSummary], dict[str, list[str]]]:
    """Second-order evaluators for the requested checks; failures keyed by check name."""
    conditions: list[ConditionResidual] = []
    failures: dict[str, list[str]] = {}
    if "identities" in checks:
        parallel = parallel_structure_residuals(f, h, classification, calcs)
        conditions += parallel
        failures["identities"] = [f"{r.condition_id}[{r.structure_tag}] = {r.max_residual:.3e}" for r in parallel if not r.passed]
    for check, evaluators in CONDITION_CHECKS.items():
        if check not in checks:
            continue
        found = [r for evaluate in evaluators for r in evaluate(f, h, classification, calcs)]
        conditions += found
        failures[check] = [
            f"{r.condition_id}[{r.structure_tag}] residual {r.max_residual:.3e} vs oracle {r.oracle_residual:.3e}"
            for r in found
            if r.agrees is False
        ]

    summaries: list[CurvatureSummary] = []
    if "harmonicity" in checks or "umbilical" in checks:
        harmonic = harmonicity_report(f, h, classification, calcs)
        umbilical = umbilical_report(f, h, classification, calcs)
        summaries = [a.merge(b) for a, b in zip(harmonic, umbilical)]
        for check in ("harmonicity", "umbilical"):
            if check in checks:
                failures[check] = curvature_failures(summaries)
    return conditions, summaries, failures


# --- analyze ---
def load_analysis_inputs(config: AnalysisConfig, directory=None) -> tuple[MapSpecDocument, SmoothMap, HypercomplexStructure]:
    document = read_json(resolve_document(config.map_spec, directory))
    f = load_map_spec(document, require_quaternionic=True)
    if config.params:
        f = f.with_params(config.params)
    spec = MapSpecDocument.parse_obj(document)
    h = structure_for(config.structure, f.domain_dim)
    return spec, f, h


def analyze(config: AnalysisConfig, directory=None, second_order: bool = True) -> Report:
    spec, f, h = load_analysis_inputs(config, directory)
    points = sample_points(spec, config.points, config.seed, config.explicit_points)
    logger.info(f"Analysing '{f.name}' at {len(points)} points (seed {config.seed})")
    classification = classify(f, h, points)

    rng = np.random.default_rng(config.seed)
    point_reports = [
        PointReport(
            point=a.split.point.tolist(),
            split=_split_model(f, a),
            structures=[_slant_model(a, a.reports[t], rng) for t in TAGS if t in a.reports],
        )
        for a in classification.points
    ]

    checks = list(config.checks)
    failed: list[str] = []
    conditions: list[ConditionResidual] = []
    summaries: list[CurvatureSummary] = []
    if classification.verdict == "not_riemannian":
        failed.append("classify")
    elif "identities" in checks and identity_failures(classification, config.tol):
        failed.append("identities")

    second_order = [c for c in checks if c != "classify"] if second_order else []
    if classification.verdict in SEMI_SLANT_VERDICTS and second_order:
        calcs = point_calculi(f, h, classification)
        conditions, summaries, failures = run_conditions(f, h, classification, checks, calcs)
        failed += [check for check, found in failures.items() if found and check not in failed]
    elif second_order:
        logger.warning(f"Skipping {second_order}: verdict {classification.verdict} has no semi-slant decomposition")

    report = Report(
        tool_version=__version__,
        map_name=f.name,
        params=dict(f.params),
        seed=config.seed,
        tol=config.tol,
        checks=checks,
        points=point_reports,
        classification=_classification_model(classification),
        conditions=[_condition_model(r) for r in conditions],
        curvature=[_curvature_model(s) for s in summaries],
        failed_checks=sorted(failed),
        passed=not failed,
    )
    logger.info(f"Analysis of '{f.name}' finished: verdict {classification.verdict}, failed checks {report.failed_checks}")
    return report


# --- verify-corpus ---
def param_sets(entry: CorpusEntry, seed: int) -> list[dict[str, float]]:
    """The entry's own params, then each grid value one at a time, then random draws from the box."""
    base = dict(entry.params)
    sets = [base]
    for name, values in entry.sweep.grid.items():
        sets += [{**base, name: float(v)} for v in values]
    rng = np.random.default_rng(seed)
    for _ in range(entry.sweep.draws):
        sets.append({**base, **{name: float(rng.uniform(lo, hi)) for name, (lo, hi) in entry.sweep.box.items()}})
    return sets


class _Checker:
    """Counts comparisons and records expected-vs-computed for the failing ones."""

    def __init__(self):
        self.count = 0
        self.failures: list[str] = []

    def equal(self, what: str, expected, computed) -> None:
        self.count += 1
        if expected != computed:
            self.failures.append(f"{what}: expected {expected}, got {computed}")

    def close(self, what: str, expected: float, computed: float | None, tol: float) -> None:
        self.count += 1
        if computed is None or not abs(expected - computed) <= tol:
            self.failures.append(f"{what}: expected {expected:.12g}, got {computed}")

    def small(self, what: str, value: float | None, tol: float) -> None:
        if value is None:
            return
        self.count += 1
        if not value <= tol:
            self.failures.append(f"{what}: {value:.3e} exceeds {tol:.1e}")


def _span_of(texts: list[list[str]], params, point) -> Subspace:
    vectors = np.array([[_evaluate(t, params, point) for t in row] for row in texts], dtype=float).T
    return span(vectors, 1e-9)


def check_expectations(chk: _Checker, expected: CorpusExpectation, classification: Classification, params) -> None:
    first = classification.points[0]
    chk.equal("riemannian", expected.riemannian, classification.verdict != "not_riemannian")
    chk.equal("verdict", expected.verdict, classification.verdict)
    if expected.rank is not None:
        chk.equal("rank", expected.rank, first.split.rank)
    if expected.vertical_dim is not None:
        chk.equal("vertical_dim", expected.vertical_dim, first.split.vertical.dim)
    if not first.reports:
        return
    for tag, dim in expected.d1_dims.items():
        chk.equal(f"dim D1^{tag}", dim, first.reports[tag].d1.dim)
    for tag, dim in expected.d2_dims.items():
        chk.equal(f"dim D2^{tag}", dim, first.reports[tag].d2.dim)
    for tag in expected.complex_tags:
        chk.equal(f"theta_{tag} display", "0 (complex case)", first.reports[tag].theta_display)

    for a in classification.points:
        p = a.split.point
        for tag, text in expected.cos_theta.items():
            chk.close(f"cos theta_{tag} at {p.tolist()}", _evaluate(text, params, p), a.reports[tag].cos_theta, settings.angle_tol)
        for label, spans in (("D1", expected.d1_span), ("D2", expected.d2_span)):
            for tag, texts in spans.items():
                computed = a.reports[tag].d1 if label == "D1" else a.reports[tag].d2
                want = _span_of(texts, params, p)
                chk.equal(f"dim {label}^{tag} span", want.dim, computed.dim)
                if want.dim == computed.dim:
                    angles = principal_angles(want, computed)
                    chk.small(f"{label}^{tag} principal angle at {p.tolist()}", max(angles, default=0.0), settings.subspace_tol)


def check_conjugated_identities(chk: _Checker, classification: Classification, h: HypercomplexStructure, rng) -> None:
    # first analysed point only
    split = classification.points[0].split
    for i in range(settings.conjugation_samples):
        hq = conjugate(h, random_orthogonal(h.dim, rng))
        for tag, R in hq.items():
            report = semi_slant_decompose(split, R, structure_tag=tag)
            worst = max(structural_identities(report).values())
            chk.small(f"conjugation {i} {tag} identities at {split.point.tolist()}", worst, settings.identity_tol)


def check_second_order(chk: _Checker, expected: CorpusExpectation, f, h, classification, params) -> None:
    calcs = point_calculi(f, h, classification)
    conditions, summaries, _ = run_conditions(f, h, classification, ["identities", *CONDITION_CHECKS, "harmonicity"], calcs)
    for r in conditions:
        if r.condition_id.startswith("parallel_structure_"):
            chk.small(f"{r.condition_id}[{r.structure_tag}]", r.max_residual, r.tolerance)
        else:
            chk.equal(f"{r.condition_id}[{r.structure_tag}] agrees with oracle", True, r.agrees)
        if r.condition_id == "totally_geodesic" and expected.totally_geodesic is not None:
            chk.equal(f"totally geodesic (oracle, {r.structure_tag})", expected.totally_geodesic, r.oracle_residual <= r.tolerance)

    for s in summaries:
        where = s.point.tolist()
        chk.equal(f"harmonicity conditions consistent at {where}", True, s.flags["sufficient_conditions_consistent"])
        if expected.harmonic is not None:
            chk.equal(f"harmonic at {where}", expected.harmonic, s.flags["harmonic"])
        if expected.umbilical is not None:
            chk.equal(f"umbilical at {where}", expected.umbilical, s.flags["umbilical"])
        for name, value in s.flags.items():
            if name.startswith(("mean_curvature_in_omega_d2_", "minimal_when_complex_")):
                chk.equal(f"{name} at {where}", True, value)
        if expected.tension_norm is not None:
            chk.close(f"|tau| at {where}", _evaluate(expected.tension_norm, params, s.point), _norm(s.tension), 1e-6)
        if expected.mean_curvature_norm is not None:
            chk.close(f"|H| at {where}", _evaluate(expected.mean_curvature_norm, params, s.point), _norm(s.fiber_mean_curvature), settings.condition_tol)


def verify_entry(entry: CorpusEntry, params: dict[str, float], seed: int) -> CorpusRow:
    chk = _Checker()
    try:
        f = load_map_spec(MapSpecDocument.parse_obj(entry.dict(exclude={"sweep", "expected"})), require_quaternionic=True)
        f = f.with_params(params) if params else f
        h = canonical_hypercomplex(f.domain_dim // 4)
        points = sample_points(entry, settings.default_points, seed)
        classification = classify(f, h, points)
        check_expectations(chk, entry.expected, classification, f.params)

        chk.count += 1
        chk.failures += identity_failures(classification, settings.identity_tol)
        if classification.verdict != "not_riemannian":
            check_conjugated_identities(chk, classification, h, np.random.default_rng(seed))
        if any(t is not None and t != math.pi / 2 for t in classification.angles.values()):
            chk.equal("even fibers", True, classification.even_fibers)
        if classification.verdict in SEMI_SLANT_VERDICTS:
            check_second_order(chk, entry.expected, f, h, classification, f.params)
    except QSlantError as e:
        logger.error(f"{entry.name} with {params} raised {e.code}: {e.detail}")
        chk.count += 1
        chk.failures.append(f"{e.code}: {e.detail}")

    row = CorpusRow(example=entry.name, params=params, passed=not chk.failures, checks_run=chk.count, failures=chk.failures)
    status = "passed" if row.passed else f"FAILED ({len(row.failures)} failures)"
    logger.info(f"Corpus entry '{entry.name}' {params}: {status}, {chk.count} checks")
    return row


def verify_corpus(directory=None, seed: int | None = None) -> CorpusTable:
    seed = settings.default_seed if seed is None else seed
    rows = []
    for path in discover_corpus(directory):
        entry = load_corpus_entry(path)
        for params in param_sets(entry, seed):
            rows.append(verify_entry(entry, params, seed))
    return CorpusTable(tool_version=__version__, seed=seed, rows=rows, passed=all(r.passed for r in rows))
