"""
Run manifests: one JSON record per command run listing what went in and what came out.
"""

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Union

from . import __version__

logger = logging.getLogger(__name__)

HASH_CHUNK_SIZE = 1 << 16


def file_sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(HASH_CHUNK_SIZE), b''):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: Dict[str, object] = field(default_factory=dict)
    seeds: Dict[str, int] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    tool_version: str = __version__
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec='seconds'))
    wall_clock_seconds: float = 0.0
    _clock: float = field(default_factory=time.perf_counter, repr=False)

    def add_input(self, path: Union[str, Path]) -> None:
        """Record an input file by content hash."""
        self.inputs[str(path)] = file_sha256(path)

    def add_outputs(self, paths) -> None:
        for path in paths:
            self.outputs.append(Path(path).name)

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data.pop('_clock')
        return data

    @property
    def filename(self) -> str:
        return f"manifest-{self.command}.json"

    def write(self, output_dir: Union[str, Path]) -> Path:
        """Stamp the wall-clock time and write ``manifest-<command>.json``."""
        self.wall_clock_seconds = round(time.perf_counter() - self._clock, 3)
        path = Path(output_dir) / self.filename
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False, default=str)
        logger.info(f"Manifest written to {path}")
        return path


def load_manifest(path: Union[str, Path]) -> Optional[Dict[str, object]]:
    path = Path(path)
    if not path.exists():
        return None
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)
