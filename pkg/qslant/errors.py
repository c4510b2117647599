EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2
EXIT_NUMERIC_INSTABILITY = 3


# --- Custom Exceptions ---
class QSlantError(Exception):
    """Base error: a machine-readable code, a human message and the CLI exit status."""

    code = "qslant_error"
    exit_status = EXIT_INPUT_ERROR

    def __init__(self, detail: str, code: str | None = None):
        super().__init__(detail)
        self.detail = detail
        if code is not None:
            self.code = code

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.detail}


class SpecError(QSlantError):
    code = "invalid_spec"


class ExprSyntaxError(SpecError):
    code = "syntax_error"

    def __init__(self, detail: str, position: int):
        super().__init__(f"{detail} at position {position}")
        self.position = position


class UnknownIdentifierError(SpecError):
    code = "unknown_identifier"

    def __init__(self, name: str, position: int):
        super().__init__(f"unknown identifier '{name}' at position {position}")
        self.name = name
        self.position = position


class UnboundParameterError(SpecError):
    code = "unbound_parameter"


class DimensionMismatchError(SpecError):
    code = "dimension_mismatch"


class EvaluationError(SpecError):
    code = "evaluation_error"

    def __init__(self, detail: str, coordinate: int | None = None):
        super().__init__(detail)
        self.coordinate = coordinate


class StructureError(QSlantError):
    code = "invalid_structure"


class ConfigurationError(QSlantError):
    code = "configuration_error"


class PreconditionError(QSlantError):
    code = "precondition_failed"


class FrameUnavailableError(QSlantError):
    code = "frame_unavailable"


class UndefinedOperationError(QSlantError):
    code = "undefined_operation"


class NumericError(QSlantError):
    code = "numeric_error"
    exit_status = EXIT_NUMERIC_INSTABILITY


class SvdConvergenceError(NumericError):
    code = "svd_no_convergence"


class AmbiguousRankError(NumericError):
    code = "ambiguous_rank"


class ConstantRankViolation(NumericError):
    code = "constant_rank_violation"


class StructuralInconsistencyError(NumericError):
    code = "structural_inconsistency"
