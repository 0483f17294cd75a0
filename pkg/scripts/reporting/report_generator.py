"""
Report Generation Module
========================

Writes run results (JSON reports, CSV tables) and the run manifest that
lists every output file with its content hash.
"""

import json
import time
from dataclasses import dataclass, asdict, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List

import numpy as np
import pandas as pd

from utils.helpers import file_sha256, validate_output_directory

ARTIFACT_VERSION = "1.0.0"
MANIFEST_NAME = "manifest.json"
RESOLVED_CONFIG_NAME = "resolved_config.json"


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


@dataclass
class RunManifest:
    """Resolved config, seeds and the hashed file inventory of one run"""
    subcommand: str
    config: Dict
    seeds: List[int]
    version: str = ARTIFACT_VERSION
    started: str = ""
    wall_clock_seconds: float = 0.0
    files: List[Dict] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return asdict(self)


class ReportGenerator:
    """Serializes results of one subcommand into the output directory"""

    def __init__(self, output_dir: Path, subcommand: str, resolved_config: Dict, seeds: List[int]):
        self.output_dir = validate_output_directory(Path(output_dir))
        self.start_time = time.time()
        self.written: List[Path] = []
        self.manifest = RunManifest(subcommand, resolved_config, list(seeds),
                                    started=datetime.now().isoformat(timespec='seconds'))

    def write_json(self, name: str, payload: Dict) -> Path:
        path = self.output_dir / name
        with open(path, 'w') as f:
            json.dump(_jsonable(payload), f, indent=2, sort_keys=True)
            f.write("\n")
        self.written.append(path)
        return path

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.output_dir / name
        frame.to_csv(path, index=False)
        self.written.append(path)
        return path

    def register(self, path: Path) -> Path:
        """Track a file written by another component (charts, binary bundles)"""
        self.written.append(Path(path))
        return Path(path)

    def finalize(self) -> RunManifest:
        """Echo the resolved config, hash every output and write the manifest"""
        self.write_json(RESOLVED_CONFIG_NAME, self.manifest.config)
        inventory = []
        for path in sorted(set(self.written)):
            if path.name == MANIFEST_NAME:
                continue
            inventory.append({'name': path.name, 'sha256': file_sha256(path), 'bytes': path.stat().st_size})
        self.manifest.files = inventory
        self.manifest.wall_clock_seconds = round(time.time() - self.start_time, 3)
        with open(self.output_dir / MANIFEST_NAME, 'w') as f:
            json.dump(_jsonable(self.manifest.to_dict()), f, indent=2, sort_keys=True)
            f.write("\n")
        return self.manifest

    def print_final_summary(self, passed: bool):
        print("\n" + "=" * 70)
        print(f"{'🎉' if passed else '⚠️ '} {self.manifest.subcommand.upper()} COMPLETED"
              f"{'' if passed else ' WITH FAILED CHECKS'}")
        print("=" * 70)
        print(f"📊 Duration: {self.manifest.wall_clock_seconds:.1f} s")
        print(f"📁 Results Directory: {self.output_dir}")
        print()
        print("📋 Generated Files:")
        for entry in self.manifest.files:
            print(f"   📄 {entry['name']} ({entry['bytes']} bytes)")
        print(f"   📄 {MANIFEST_NAME}")
        print()
