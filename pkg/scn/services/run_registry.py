import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from scn.config import settings
from scn.errors import DataError
from scn.services.evaluation_service import DENSITY_FILE, EVAL_FILE
from scn.services.plot_service import PLOT_FILE, emit_plot
from scn.services.training_service import METRICS_FILE

logger = logging.getLogger(__name__)


@dataclass
class RunSummary:
    name: str
    epochs: int
    final_train_loss: Optional[float]
    final_test_loss: Optional[float]
    has_eval: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "epochs": self.epochs,
            "final_train_loss": self.final_train_loss,
            "final_test_loss": self.final_test_loss,
            "has_eval": self.has_eval,
        }


def _json_float(value: str) -> Optional[float]:
    # JSON 里没有 nan
    number = float(value)
    return None if number != number else number


def _read_rows(path: Path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


class RunRegistry:
    """只读地浏览 runs 目录下的训练结果"""

    def __init__(self, root: Union[str, Path, None] = None):
        self.root = Path(root) if root else settings.runs_root

    def run_dir(self, name: str) -> Path:
        if not name or "/" in name or "\\" in name or ".." in name:
            raise DataError(f"invalid run name: {name!r}")
        path = self.root / name
        if not (path / METRICS_FILE).is_file():
            raise DataError(f"run not found: {name}")
        return path

    def list_runs(self) -> List[RunSummary]:
        if not self.root.is_dir():
            return []
        runs = []
        for path in sorted(p for p in self.root.iterdir() if (p / METRICS_FILE).is_file()):
            rows = _read_rows(path / METRICS_FILE)
            last = rows[-1] if rows else None
            runs.append(RunSummary(
                name=path.name,
                epochs=len(rows),
                final_train_loss=_json_float(last["train_loss"]) if last else None,
                final_test_loss=_json_float(last["test_loss"]) if last else None,
                has_eval=(path / EVAL_FILE).is_file(),
            ))
        return runs

    def metrics(self, name: str) -> List[Dict[str, Any]]:
        rows = _read_rows(self.run_dir(name) / METRICS_FILE)
        return [
            {
                "epoch": int(row["epoch"]),
                "train_loss": _json_float(row["train_loss"]),
                "test_loss": _json_float(row["test_loss"]),
                "test_accuracy": _json_float(row["test_accuracy"]),
                "wall_ms": int(row["wall_ms"]),
            }
            for row in rows
        ]

    def density(self, name: str) -> List[Dict[str, Any]]:
        path = self.run_dir(name) / DENSITY_FILE
        if not path.is_file():
            raise DataError(f"run {name} has no {DENSITY_FILE}; run eval first")
        return [
            {
                "bin_lo": float(row["bin_lo"]),
                "bin_hi": float(row["bin_hi"]),
                "matching_count": int(row["matching_count"]),
                "non_matching_count": int(row["non_matching_count"]),
            }
            for row in _read_rows(path)
        ]

    def plot(self, name: str) -> Path:
        run_dir = self.run_dir(name)
        svg = run_dir / PLOT_FILE
        if not svg.is_file():
            logger.info(f"📊 rendering loss curve for {name}")
            emit_plot(run_dir / METRICS_FILE, svg)
        return svg
