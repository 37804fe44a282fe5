"""
Runtime configuration, logging and console setup.

Settings come from the environment (optionally a .env file in the working
directory). Library code only logs; user-facing text goes through `console`.
"""

import logging
import os
from dataclasses import dataclass

from dotenv import find_dotenv, load_dotenv
from rich.console import Console
from rich.logging import RichHandler

from .errors import UsageError

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'

# Reports go to stdout, diagnostics and progress to stderr.
console = Console(soft_wrap=True, highlight=False)
err_console = Console(stderr=True, soft_wrap=True, highlight=False)


@dataclass(frozen=True)
class Settings:
    seed: int = 0
    log_level: str = "WARNING"
    workers: int = 1


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw, 0)
    except ValueError:
        raise UsageError(f"{name} must be an integer, got {raw!r}") from None


def load_settings() -> Settings:
    """Read PROBSUM_* variables, honouring a local .env file."""
    load_dotenv(find_dotenv(usecwd=True))
    seed = _env_int("PROBSUM_SEED", 0)
    if seed < 0 or seed >= 2**64:
        raise UsageError(f"PROBSUM_SEED must be a 64-bit unsigned integer, got {seed}")
    workers = _env_int("PROBSUM_WORKERS", 1)
    if workers < 1:
        raise UsageError(f"PROBSUM_WORKERS must be >= 1, got {workers}")
    level = os.environ.get("PROBSUM_LOG_LEVEL", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        raise UsageError(f"PROBSUM_LOG_LEVEL is not a logging level: {level!r}")
    return Settings(seed=seed, log_level=level, workers=workers)


def setup_logging(level: str = "WARNING") -> None:
    """Configure root logging through a stderr rich handler."""
    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        handlers=[RichHandler(console=err_console, show_time=False, show_path=False)],
        force=True,
    )
