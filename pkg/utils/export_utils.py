import json
import logging
import os
from typing import Any, Dict, List, Sequence, Union

import pandas as pd
from pydantic import BaseModel

from backend.monitors import CSV_COLUMNS, TimeSeriesRecord
from backend.solver import Snapshot
from config import flow_defaults as defaults

logger = logging.getLogger(__name__)


class ExportUtils:
    """Writes run artifacts with deterministic names and full float precision."""

    def __init__(self, export_dir: str = defaults.OUTPUT_DIR):
        self.export_dir = export_dir
        os.makedirs(export_dir, exist_ok=True)

    def _path(self, filename: str) -> str:
        return os.path.join(self.export_dir, filename)

    def write_trajectory(self, records: Sequence[TimeSeriesRecord],
                         filename: str = "trajectory.csv") -> str:
        """Trajectory CSV with exactly the monitor columns."""
        df = pd.DataFrame([rec.csv_row() for rec in records], columns=CSV_COLUMNS)
        filepath = self._path(filename)
        df.to_csv(filepath, index=False, float_format=defaults.CSV_FLOAT_FORMAT)
        logger.info(f"Wrote {len(df)} records to {filepath}")
        return filepath

    def write_snapshots(self, snapshots: Sequence[Snapshot], prefix: str = "snapshot") -> List[str]:
        paths = []
        for k, snap in enumerate(snapshots):
            df = pd.DataFrame({"y": snap.y, "u": snap.u})
            filepath = self._path(f"{prefix}_{k}.csv")
            df.to_csv(filepath, index=False, float_format=defaults.CSV_FLOAT_FORMAT)
            paths.append(filepath)
        if paths:
            logger.info(f"Wrote {len(paths)} snapshots to {self.export_dir}")
        return paths

    def write_report(self, report: Union[BaseModel, Dict[str, Any], List[Any]],
                     filename: str) -> str:
        """JSON report with sorted keys."""
        if isinstance(report, BaseModel):
            data = report.model_dump(mode="json")
        elif isinstance(report, list):
            data = [item.model_dump(mode="json") if isinstance(item, BaseModel) else item
                    for item in report]
        else:
            data = report
        filepath = self._path(filename)
        with open(filepath, "w") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")
        return filepath
