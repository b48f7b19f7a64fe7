import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from app.config import get_settings
from app.engines.scenario import gains_from_positions
from app.errors import ScenarioError
from app.models import ScenarioConfig, Topology

logger = logging.getLogger("Storage")

DATA_DIR = Path(get_settings().data_dir)
BATCHES_FILE = "batches.json"


class ResultStorage:
    def __init__(self, root: Optional[Path] = None):
        self.root = Path(root) if root is not None else DATA_DIR
        self.root.mkdir(parents=True, exist_ok=True)

        if not (self.root / BATCHES_FILE).exists():
            self._write_file(self.root / BATCHES_FILE, {})

    def _read_file(self, filepath: Path) -> Dict:
        with open(filepath, "r") as f:
            return json.load(f)

    def _write_file(self, filepath: Path, data: Dict):
        filepath.parent.mkdir(parents=True, exist_ok=True)
        with open(filepath, "w") as f:
            json.dump(data, f, indent=2, default=str)

    def resolve(self, path: str | Path) -> Path:
        """Absolute paths are kept; relative ones live under the storage root"""
        path = Path(path)
        return path if path.is_absolute() else self.root / path

    # Topology operations
    def dump_topology(self, topology: Topology, path: str | Path) -> Path:
        """
        Positions, links and availability; the gain matrix is written only
        for synthetic topologies (positional gains are recomputed on load).
        Config values stay in linear units so a reload is exact.
        """
        target = self.resolve(path)
        data: Dict[str, Any] = {
            "source": topology.source,
            "config": topology.config.model_dump(),
            "availability": [list(channels) for channels in topology.availability],
        }
        if topology.positions is not None:
            data["positions"] = topology.positions.tolist()
            data["links"] = topology.links.tolist()
        if topology.source != "positional" or topology.positions is None:
            data["gains"] = topology.gains.tolist()
        self._write_file(target, data)
        return target

    def load_topology(self, path: str | Path) -> Topology:
        data = self._read_file(self.resolve(path))
        config = ScenarioConfig(**data["config"])
        positions = np.asarray(data["positions"]) if "positions" in data else None
        links = np.asarray(data["links"], dtype=np.int64) if "links" in data else None
        if "gains" in data:
            gains = np.asarray(data["gains"], dtype=float)
        elif positions is not None and links is not None:
            gains = gains_from_positions(positions, links, config)
        else:
            raise ScenarioError(f"Topology file {path} has neither gains nor positions")
        return Topology(
            gains=gains,
            availability=tuple(tuple(int(c) for c in channels) for channels in data["availability"]),
            config=config,
            positions=positions,
            links=links,
            source=data.get("source", "positional"),
        )

    # Tables
    def write_frame(self, frame: pd.DataFrame, path: str | Path) -> Path:
        target = self.resolve(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(target, index=False)
        logger.debug("Wrote %d rows to %s", len(frame), target)
        return target

    def read_frame(self, path: str | Path) -> pd.DataFrame:
        return pd.read_csv(self.resolve(path))

    def write_manifest(self, manifest: Dict[str, Any], path: str | Path) -> Path:
        target = self.resolve(path)
        self._write_file(target, manifest)
        return target

    # Batch operations (HTTP background jobs)
    def create_batch(self, batch_id: str, record: Dict[str, Any]) -> Dict[str, Any]:
        batches = self._read_file(self.root / BATCHES_FILE)
        batches[batch_id] = record
        self._write_file(self.root / BATCHES_FILE, batches)
        return record

    def get_batch(self, batch_id: str) -> Optional[Dict[str, Any]]:
        batches = self._read_file(self.root / BATCHES_FILE)
        return batches.get(batch_id)

    def update_batch(self, batch_id: str, updates: Dict[str, Any]) -> Optional[Dict[str, Any]]:
        batches = self._read_file(self.root / BATCHES_FILE)
        if batch_id in batches:
            batches[batch_id].update(updates)
            self._write_file(self.root / BATCHES_FILE, batches)
            return batches[batch_id]
        return None

    def list_batches(self) -> List[Dict[str, Any]]:
        return list(self._read_file(self.root / BATCHES_FILE).values())


# Global storage instance
storage = ResultStorage()
