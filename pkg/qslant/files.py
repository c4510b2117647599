import json
from pathlib import Path

from pydantic import BaseModel, ValidationError

from qslant.config import settings
from qslant.errors import ConfigurationError, SpecError
from qslant.logger import logger
from qslant.schema import CorpusEntry


def read_json(path: Path) -> dict:
    logger.debug(f"Reading {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigurationError(f"file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise SpecError(f"{path} is not valid JSON: {e}") from e


def corpus_dir(directory: str | Path | None = None) -> Path:
    return Path(directory or settings.corpus_dir)


def resolve_document(name_or_path: str, directory: str | Path | None = None) -> Path:
    """A file path, or the name of a corpus example ("example_5_7", "sphere_norm")."""
    path = Path(name_or_path)
    if path.is_file():
        return path
    candidate = corpus_dir(directory) / f"{name_or_path}.json"
    if candidate.is_file():
        return candidate
    logger.error(f"No map spec at {path} and no corpus example named '{name_or_path}'")
    raise ConfigurationError(f"no map spec file or corpus example named '{name_or_path}'")


def discover_corpus(directory: str | Path | None = None) -> list[Path]:
    root = corpus_dir(directory)
    files = sorted(root.glob("*.json")) if root.is_dir() else []
    if not files:
        logger.error(f"Corpus directory {root} has no entries")
        raise ConfigurationError(f"no corpus entries found in {root}")
    logger.info(f"Found {len(files)} corpus entries in {root}")
    return files


def load_corpus_entry(path: Path) -> CorpusEntry:
    try:
        return CorpusEntry.parse_obj(read_json(path))
    except ValidationError as e:
        raise SpecError(f"invalid corpus entry {path.name}: {e}") from e


def dump_model(model: BaseModel) -> str:
    # sorted keys keep repeated runs byte-identical
    return json.dumps(json.loads(model.json()), indent=2, sort_keys=True) + "\n"


def write_report(model: BaseModel, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_model(model), encoding="utf-8")
    logger.info(f"Report written to {path}")
    return path
