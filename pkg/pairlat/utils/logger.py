import sys

from loguru import logger

LOGGER_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | "
    "<level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> | "
    "{extra[run]} - <level>{message}</level>"
)

logger.configure(extra={"run": "-"})


def setup_logger(run: str = "-", verbose: bool = False) -> None:
    """Install the single stderr sink used by the command line."""

    logger.remove()
    logger.configure(extra={"run": run})
    logger.add(sys.stderr, format=LOGGER_FORMAT, level="DEBUG" if verbose else "INFO")
