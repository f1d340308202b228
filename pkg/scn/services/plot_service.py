import csv
import io
import logging
from pathlib import Path
from typing import Dict, List, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from scn.errors import DataError  # noqa: E402

logger = logging.getLogger(__name__)

PLOT_FILE = "loss_curve.svg"

# SVG 中的随机 id 和时间戳会让输出不可复现
matplotlib.rcParams["svg.hashsalt"] = "scn-loss-curve"
matplotlib.rcParams["svg.fonttype"] = "path"


def read_metrics(path: Union[str, Path]) -> List[Dict[str, float]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"metrics file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
    if not rows:
        raise DataError(f"metrics file has no rows: {path}")
    return rows


def _padded(lo: float, hi: float) -> tuple:
    pad = 0.05 * (hi - lo) if hi > lo else max(abs(lo) * 0.05, 0.5)
    return lo - pad, hi + pad


def render_loss_curve(rows: List[Dict[str, float]]) -> bytes:
    epochs = [r["epoch"] for r in rows]
    train = [r["train_loss"] for r in rows]
    test = [r["test_loss"] for r in rows]
    values = [v for v in train + test if v == v]

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    try:
        ax.plot(epochs, train, marker="o", markersize=3, label="train loss")
        if any(v == v for v in test):
            ax.plot(epochs, test, marker="s", markersize=3, label="test loss")
        ax.set_xlim(*_padded(min(epochs), max(epochs)))
        if values:
            ax.set_ylim(*_padded(min(values), max(values)))
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.grid(True, alpha=0.3)
        ax.legend()
        buffer = io.BytesIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return buffer.getvalue()


def emit_plot(metrics_csv: Union[str, Path], output: Union[str, Path, None] = None) -> Path:
    metrics_csv = Path(metrics_csv)
    output = Path(output) if output else metrics_csv.parent / PLOT_FILE
    svg = render_loss_curve(read_metrics(metrics_csv))
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_bytes(svg)
    logger.info(f"✅ loss curve written to {output}")
    return output
