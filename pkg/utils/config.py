# utils/config.py
"""
Runtime settings for the zoom-ann engine.
Reads optional overrides from the project .env file and the process environment.
"""

import os
import logging
from dataclasses import dataclass
from dotenv import load_dotenv

# Find the project root (.env location) relative to this file
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
env_path = os.path.join(project_root, '.env')
load_dotenv(dotenv_path=env_path, override=False)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Settings:
    """Engine-wide defaults. CLI flags take precedence over these."""
    log_level: str = 'INFO'
    io_mode: str = 'direct'
    alignment_bytes: int = 4096
    io_workers: int = 8
    machine_memory_bytes: int = 64 * 1024 ** 3
    kmeans_max_iters: int = 25
    scan_float64: bool = False


def _env_bool(name: str, default: bool) -> bool:
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() in ('1', 'true', 'yes', 'on')


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None or value.strip() == '':
        return default
    try:
        return int(value)
    except ValueError:
        logger.warning(f"Ignoring non-integer {name}={value!r}, using {default}")
        return default


def load_settings() -> Settings:
    """
    Build Settings from the environment.

    Returns:
        Settings with every unset variable at its default
    """
    io_mode = os.getenv('ZOOM_IO_MODE', 'direct').strip().lower()
    if io_mode not in ('direct', 'buffered'):
        logger.warning(f"Unknown ZOOM_IO_MODE={io_mode!r}, falling back to 'direct'")
        io_mode = 'direct'

    return Settings(
        log_level=os.getenv('ZOOM_LOG_LEVEL', 'INFO').upper(),
        io_mode=io_mode,
        alignment_bytes=_env_int('ZOOM_ALIGNMENT_BYTES', 4096),
        io_workers=_env_int('ZOOM_IO_WORKERS', 8),
        machine_memory_bytes=_env_int('ZOOM_MACHINE_MEMORY_BYTES', 64 * 1024 ** 3),
        kmeans_max_iters=_env_int('ZOOM_KMEANS_MAX_ITERS', 25),
        scan_float64=_env_bool('ZOOM_SCAN_FLOAT64', False),
    )


def configure_logging(level: str = None) -> None:
    """Apply the project log format. Called once by entry points."""
    level = (level or load_settings().log_level).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)
