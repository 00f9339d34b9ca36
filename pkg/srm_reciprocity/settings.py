"""
Runtime settings: logging setup, key-value config files and environment defaults.
"""

import logging
import os
from pathlib import Path
from typing import Dict, List, Optional, Union

THREADS_ENV_VAR = "SRM_THREADS"
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def configure_logging(verbose: bool = False, quiet: bool = False,
                      log_file: Optional[Union[str, Path]] = None) -> None:
    """Configure the root logger for command-line runs."""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))

    level = logging.INFO
    if verbose:
        level = logging.DEBUG
    elif quiet:
        level = logging.WARNING

    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)


def normalize_key(key: str) -> str:
    """'--sigma-a', 'sigma_a' and 'Sigma-A' all map to 'sigma_a'."""
    return key.strip().lstrip('-').replace('-', '_').lower()


def read_key_value_file(path: Union[str, Path]) -> Dict[str, str]:
    """
    Parse a ``key = value`` file.

    Blank lines and lines starting with '#' are ignored; ':' is accepted as a
    separator too. Keys are normalised with :func:`normalize_key`.

    Raises:
        FileNotFoundError: if the file does not exist
        ValueError: on a line without a separator or a repeated key
    """
    config_path = Path(path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    values: Dict[str, str] = {}
    with open(config_path, 'r', encoding='utf-8') as f:
        for line_number, raw_line in enumerate(f, start=1):
            line = raw_line.strip()
            if not line or line.startswith('#'):
                continue
            separator = '=' if '=' in line else ':' if ':' in line else None
            if separator is None:
                raise ValueError(f"{config_path}:{line_number}: expected 'key = value', got {line!r}")
            key, value = line.split(separator, 1)
            key = normalize_key(key)
            if key in values:
                raise ValueError(f"{config_path}:{line_number}: duplicate key {key!r}")
            values[key] = value.strip()
    return values


def parse_bool(value: Union[str, bool]) -> bool:
    if isinstance(value, bool):
        return value
    lowered = value.strip().lower()
    if lowered in {'1', 'true', 'yes', 'on'}:
        return True
    if lowered in {'0', 'false', 'no', 'off'}:
        return False
    raise ValueError(f"Not a boolean: {value!r}")


def default_threads() -> int:
    """Thread count from SRM_THREADS, else 1."""
    raw = os.getenv(THREADS_ENV_VAR)
    if not raw:
        return 1
    try:
        threads = int(raw)
    except ValueError:
        logging.getLogger(__name__).warning(f"Ignoring non-integer {THREADS_ENV_VAR}={raw!r}")
        return 1
    return max(threads, 1)
