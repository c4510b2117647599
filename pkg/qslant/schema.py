from pydantic import BaseModel, Field, validator
from typing import Literal

Verdict = Literal["not_riemannian", "generic", "almost_h_semi_slant", "h_semi_slant", "strictly_h_semi_slant"]
StructureTag = Literal["I", "J", "K"]
CheckName = Literal["classify", "identities", "integrability", "harmonicity", "geodesic", "decomposition", "umbilical"]
ALL_CHECKS: list[str] = ["classify", "identities", "integrability", "harmonicity", "geodesic", "decomposition", "umbilical"]

SCHEMA_VERSION = 1


def round_floats(value):
    """15 significant digits, -0.0 folded into 0.0; recurses into lists and dicts."""
    if isinstance(value, float):
        return float(f"{value:.15g}") + 0.0
    if isinstance(value, list):
        return [round_floats(v) for v in value]
    if isinstance(value, dict):
        return {k: round_floats(v) for k, v in value.items()}
    return value


# --- Input documents ---
class SampleBox(BaseModel):
    low: float = Field(..., description="Lower bound applied to every coordinate")
    high: float = Field(..., description="Upper bound applied to every coordinate")

    @validator("high")
    def high_above_low(cls, v, values):
        if "low" in values and v <= values["low"]:
            raise ValueError("sample_box.high must exceed sample_box.low")
        return v


class MapSpecDocument(BaseModel):
    name: str = Field("map", description="Identifier used in reports")
    description: str | None = Field(None, description="Free text shown in corpus tables")
    domain_dim: int = Field(..., ge=1, description="Dimension D of the domain R^D")
    codomain_dim: int = Field(..., ge=1, description="Dimension n of the codomain R^n")
    components: list[str] = Field(..., description="One expression per codomain coordinate")
    params: dict[str, float] = Field(default_factory=dict, description="Parameter bindings by name")
    sample_points: list[list[float]] | None = Field(None, description="Explicit analysis points")
    sample_box: SampleBox | None = Field(None, description="Hypercube for random sampling")
    frames: list[list[str]] = Field(default_factory=list, description="Smooth frame seed fields, one expression per coordinate")


class ParamSweep(BaseModel):
    grid: dict[str, list[float]] = Field(default_factory=dict, description="Parameter values tried one at a time, in order")
    box: dict[str, tuple[float, float]] = Field(default_factory=dict, description="Parameter ranges for random draws")
    draws: int = Field(0, ge=0, description="Number of random parameter draws from box")


class CorpusExpectation(BaseModel):
    riemannian: bool = Field(True, description="Expected Riemannian-map verdict")
    verdict: Verdict = Field(..., description="Expected classification")
    rank: int | None = Field(None, description="Expected rank of F_*")
    vertical_dim: int | None = Field(None, description="Expected dimension of ker F_*")
    d1_dims: dict[StructureTag, int] = Field(default_factory=dict, description="Expected dim D1 per structure")
    d2_dims: dict[StructureTag, int] = Field(default_factory=dict, description="Expected dim D2 per structure")
    cos_theta: dict[StructureTag, str] = Field(default_factory=dict, description="Expected cos(theta) per structure, as an expression")
    complex_tags: list[StructureTag] = Field(default_factory=list, description="Structures whose D2 is empty")
    d1_span: dict[StructureTag, list[list[str]]] = Field(default_factory=dict, description="Vectors spanning the expected D1, as expressions")
    d2_span: dict[StructureTag, list[list[str]]] = Field(default_factory=dict, description="Vectors spanning the expected D2, as expressions")
    harmonic: bool | None = Field(None, description="Expected harmonicity")
    totally_geodesic: bool | None = Field(None, description="Expected total geodesicity")
    umbilical: bool | None = Field(None, description="Expected total umbilicity of the fibers")
    tension_norm: str | None = Field(None, description="Expected |tau(F)| as an expression in params and x1..xD")
    mean_curvature_norm: str | None = Field(None, description="Expected |H| as an expression")


class CorpusEntry(MapSpecDocument):
    sweep: ParamSweep = Field(default_factory=ParamSweep, description="Parameter values to verify")
    expected: CorpusExpectation = Field(..., description="Values the analysis must reproduce")


class StructureDocument(BaseModel):
    dim: int = Field(..., ge=4, description="Dimension 4m of the domain")
    I: list[list[float]] = Field(..., description="Row-major matrix of I")
    J: list[list[float]] = Field(..., description="Row-major matrix of J")
    K: list[list[float]] = Field(..., description="Row-major matrix of K")


class AnalysisConfig(BaseModel):
    map_spec: str = Field(..., description="Path of a map spec, or a corpus example name")
    structure: str = Field("canonical", description="'canonical' or the path of a structure document")
    points: int = Field(3, ge=1, description="Number of sampled points")
    explicit_points: list[list[float]] | None = Field(None, description="Points used instead of sampling")
    seed: int = Field(42, description="Seed of the point sampler")
    tol: float = Field(1e-9, gt=0, description="Tolerance for pointwise identities")
    checks: list[CheckName] = Field(default_factory=lambda: list(ALL_CHECKS), description="Checks to run")
    params: dict[str, float] = Field(default_factory=dict, description="Parameter overrides")


# --- Reports ---
class ReportModel(BaseModel):
    @validator("*", allow_reuse=True)
    def _round(cls, v):
        return round_floats(v)


class TangentSplitModel(ReportModel):
    rank: int = Field(..., description="Rank of F_* at the point")
    vertical_dim: int = Field(..., description="dim ker F_*")
    horizontal_dim: int = Field(..., description="dim (ker F_*)^perp")
    horizontal_singular_values: list[float] = Field(..., description="Nonzero singular values of F_*")
    is_riemannian: bool = Field(..., description="F_* restricted to the horizontal space is an isometry")
    energy_density: float = Field(..., description="|F_*|^2 / 2")
    eikonal_residual: float | None = Field(None, description="| |F_*|^2 - rank |, for Riemannian maps")


class SemiSlantModel(ReportModel):
    structure_tag: StructureTag = Field(..., description="Which of I, J, K")
    is_semi_slant: bool = Field(..., description="Spectrum splits into {1} and one other cluster")
    reason: str | None = Field(None, description="Why the structure is not semi-slant")
    d1_dim: int = Field(..., description="dim D1")
    d2_dim: int = Field(..., description="dim D2")
    omega_d2_dim: int = Field(..., description="dim omega D2")
    mu_dim: int = Field(..., description="dim mu")
    theta: float | None = Field(None, description="Slant angle in radians; null when D2 is empty")
    theta_display: str = Field(..., description="Human form of the angle")
    cosines: list[float] = Field(..., description="Singular values of the compressed structure on the vertical space")
    identity_residuals: dict[str, float] = Field(default_factory=dict, description="Structural identity residuals")
    angle_oracle_error: float | None = Field(None, description="Max deviation of sampled angles from theta")


class PointReport(ReportModel):
    point: list[float] = Field(..., description="Coordinates of the point")
    split: TangentSplitModel = Field(..., description="Vertical/horizontal split")
    structures: list[SemiSlantModel] = Field(default_factory=list, description="Per-structure decompositions")


class ClassificationModel(ReportModel):
    verdict: Verdict = Field(..., description="Overall verdict")
    reason: str = Field(..., description="Why this verdict was reached")
    angles: dict[str, float | None] = Field(default_factory=dict, description="theta per structure")
    angle_display: dict[str, str] = Field(default_factory=dict, description="Human form of the angles")
    d1_dims: dict[str, int] = Field(default_factory=dict, description="dim D1 per structure")
    d2_dims: dict[str, int] = Field(default_factory=dict, description="dim D2 per structure")
    shared_d1_dim: int | None = Field(None, description="dim of the D1 shared by I, J, K")
    witness_points: list[list[float]] | None = Field(None, description="Points where the angles disagree")
    even_fibers: bool | None = Field(None, description="Fiber dimension parity check, when it applies")


class ConditionResidualModel(ReportModel):
    condition_id: str = Field(..., description="Name of the condition")
    structure_tag: str | None = Field(None, description="Structure the condition was evaluated for")
    max_residual: float = Field(..., description="Max residual over points and frame pairs")
    frame_pairs_evaluated: int = Field(..., description="Number of frame pairs evaluated")
    tolerance: float = Field(..., description="Pass threshold")
    passed: bool = Field(..., description="max_residual <= tolerance")
    oracle_residual: float | None = Field(None, description="Independent oracle value")
    agrees: bool | None = Field(None, description="Condition and oracle agree about vanishing")
    parts: dict[str, float] = Field(default_factory=dict, description="Max residual of each part of the condition")


class CurvatureModel(ReportModel):
    point: list[float] = Field(..., description="Coordinates of the point")
    tension: list[float] = Field(..., description="Tension field tau(F)")
    tension_norm: float = Field(..., description="|tau(F)|")
    range_mean_curvature: list[float] = Field(..., description="Mean curvature of the range, pulled back")
    horizontal_range_defect: float = Field(..., description="max |range part of the second fundamental form| on horizontal pairs")
    fiber_mean_curvature: list[float] = Field(..., description="Mean curvature H of the fiber")
    mean_curvature_norm: float = Field(..., description="|H|")
    umbilical_residual: float = Field(..., description="max |T_X Y - <X,Y> H| over unit vertical pairs")
    d2_traces: dict[str, float] = Field(default_factory=dict, description="|trace of the second fundamental form over D2| per structure")
    mean_curvature_defects: dict[str, float] = Field(default_factory=dict, description="Distance of H from omega D2 per structure")
    flags: dict[str, bool] = Field(default_factory=dict, description="Hypotheses and conclusions evaluated numerically")


class Report(ReportModel):
    schema_version: int = Field(SCHEMA_VERSION, description="Report format version")
    tool_version: str = Field(..., description="qslant version")
    map_name: str = Field(..., description="Name of the analysed map")
    params: dict[str, float] = Field(default_factory=dict, description="Parameter values used")
    seed: int = Field(..., description="Sampler seed")
    tol: float = Field(..., description="Pointwise tolerance")
    checks: list[str] = Field(..., description="Checks requested")
    points: list[PointReport] = Field(default_factory=list, description="Per-point analysis")
    classification: ClassificationModel | None = Field(None, description="Overall classification")
    conditions: list[ConditionResidualModel] = Field(default_factory=list, description="Condition evaluators")
    curvature: list[CurvatureModel] = Field(default_factory=list, description="Curvature summaries per point")
    failed_checks: list[str] = Field(default_factory=list, description="Checks that did not pass")
    passed: bool = Field(..., description="True when no check failed")


class CorpusRow(ReportModel):
    example: str = Field(..., description="Corpus entry name")
    params: dict[str, float] = Field(default_factory=dict, description="Parameter values of this run")
    passed: bool = Field(..., description="All checks passed")
    checks_run: int = Field(..., description="Number of individual comparisons")
    failures: list[str] = Field(default_factory=list, description="Expected vs computed for each failure")


class CorpusTable(ReportModel):
    schema_version: int = Field(SCHEMA_VERSION, description="Report format version")
    tool_version: str = Field(..., description="qslant version")
    seed: int = Field(..., description="Sampler seed")
    rows: list[CorpusRow] = Field(default_factory=list, description="One row per example and parameter value")
    passed: bool = Field(..., description="True when every row passed")


class ErrorModel(BaseModel):
    code: str = Field(..., description="Machine-readable error code")
    message: str = Field(..., description="Human-readable message")
