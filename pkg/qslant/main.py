import argparse
import json
import sys

from pydantic import ValidationError

from qslant import __version__, service
from qslant.config import settings
from qslant.errors import EXIT_CHECK_FAILED, EXIT_INPUT_ERROR, EXIT_OK, ConfigurationError, QSlantError
from qslant.files import dump_model, write_report
from qslant.logger import configure_logging, logger
from qslant.schema import ALL_CHECKS, AnalysisConfig, ErrorModel


def parse_param(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected name=value, got '{text}'")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter {name} needs a number, got '{value}'")


def parse_checks(text: str) -> list[str]:
    checks = [c.strip() for c in text.split(",") if c.strip()]
    unknown = [c for c in checks if c not in ALL_CHECKS]
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown checks {unknown}; choose from {ALL_CHECKS}")
    return checks


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qslant",
        description="Analyse smooth maps from quaternionic R^4m against the semi-slant Riemannian map conditions.",
    )
    parser.add_argument("--version", action="version", version=f"qslant {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=settings.default_seed, help="Seed of the point sampler")
        p.add_argument("--json", dest="json_path", help="Write the report to this file instead of stdout")
        p.add_argument("--log-level", default=None, help="Override QSLANT_LOG_LEVEL for this run")

    for name, help_text in (
        ("analyze", "Classify a map and evaluate the requested checks"),
        ("identities", "Decomposition and structural identity residuals only"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("map_spec", help="Map spec file, or the name of a corpus example")
        p.add_argument("--points", type=int, default=settings.default_points, help="Number of sampled points")
        p.add_argument("--tol", type=float, default=settings.default_tol, help="Tolerance for pointwise identities")
        p.add_argument("--structure", default="canonical", help="'canonical' or a structure document")
        p.add_argument("--param", type=parse_param, action="append", default=[], help="Override a parameter, name=value")
        if name == "analyze":
            p.add_argument("--checks", type=parse_checks, default=list(ALL_CHECKS), help="Comma separated subset of checks")
        p.add_argument("--corpus-dir", default=None, help="Where to look up corpus example names")
        common(p)

    p = sub.add_parser("verify-corpus", help="Check every corpus example against its expectations")
    p.add_argument("--corpus-dir", default=None, help="Directory of corpus entries")
    common(p)
    return parser


def run(args: argparse.Namespace) -> int:
    if args.command == "verify-corpus":
        model = service.verify_corpus(args.corpus_dir, args.seed)
    else:
        checks = args.checks if args.command == "analyze" else ["classify", "identities"]
        try:
            config = AnalysisConfig(
                map_spec=args.map_spec,
                structure=args.structure,
                points=args.points,
                seed=args.seed,
                tol=args.tol,
                checks=checks,
                params=dict(args.param),
            )
        except ValidationError as e:
            raise ConfigurationError(f"invalid options: {e}") from e
        model = service.analyze(config, args.corpus_dir, second_order=args.command == "analyze")

    if args.json_path:
        write_report(model, args.json_path)
    else:
        sys.stdout.write(dump_model(model))
    return EXIT_OK if model.passed else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.log_level:
            configure_logging(args.log_level)
        return run(args)
    except QSlantError as e:
        logger.error(f"{e.code}: {e.detail}")
        sys.stderr.write(json.dumps(ErrorModel(**e.to_dict()).dict()) + "\n")
        return e.exit_status
    except OSError as e:
        logger.error(f"I/O error: {e}")
        sys.stderr.write(json.dumps(ErrorModel(code="io_error", message=str(e)).dict()) + "\n")
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
