import logging

from qslant.config import settings
from qslant.errors import ConfigurationError

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

# --- Logging Setup ---
logger = logging.getLogger("qslant")


def configure_logging(level: str | None = None) -> int:
    """Set the qslant level by name (case-insensitive); the root handler is installed once."""
    name = (level or settings.log_level).upper()
    # getLevelNamesMapping is 3.11+; on older Pythons it is a copy of _nameToLevel
    levels = (
        logging.getLevelNamesMapping()
        if hasattr(logging, "getLevelNamesMapping")
        else dict(logging._nameToLevel)
    )
    if name not in levels:
        raise ConfigurationError(f"unknown log level '{name}', choose from {sorted(levels)}")
    logging.basicConfig(format=LOG_FORMAT)
    logger.setLevel(levels[name])
    return levels[name]


configure_logging()
