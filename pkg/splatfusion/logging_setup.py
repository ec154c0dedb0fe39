"""Package logging: console plus optional rotating file."""

import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

# The mapping worker logs from its own thread.
LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(threadName)-10s | %(name)s:%(lineno)d | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# Third-party loggers that flood DEBUG output while plots are written.
NOISY_LOGGERS = ("matplotlib", "PIL")


def setup_logging(
    level: str = "INFO",
    log_file: Optional[str] = None,
    max_bytes: int = 10 * 1024 * 1024,
    backup_count: int = 5,
    console_level: str = "INFO",
) -> logging.Logger:
    """
    Configure the `splatfusion` logger.

    Solver iterations log at DEBUG. With level DEBUG they reach the log file,
    while the console stays at console_level (or level, when higher).

    Args:
        level: Package log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Rotating log file; None logs to the console only
        max_bytes: File size that triggers rotation
        backup_count: Rotated files kept
        console_level: Lowest level printed to stderr

    Returns:
        The configured package logger
    """
    logger = logging.getLogger("splatfusion")
    logger.setLevel(getattr(logging, level.upper()))
    for handler in logger.handlers:
        handler.close()
    logger.handlers.clear()

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(max(getattr(logging, console_level.upper()), logger.level))
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(log_path, maxBytes=max_bytes, backupCount=backup_count)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    for name in NOISY_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)

    return logger
