import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from scn.config import RunConfig
from scn.data.datasets import FaceDataset, load_dataset
from scn.data.protocol import kfold
from scn.errors import ConfigError
from scn.services.training_service import TrainingService, check_data_available, format_float

logger = logging.getLogger(__name__)

MARGINS = (0.2, 0.5, 1.0, 2.0)
GRID_METRICS = ("euclidean_sq", "manhattan_exp", "cosine")
GRIDSEARCH_FILE = "gridsearch.csv"
GRIDSEARCH_HEADER = "rank,margin,metric,mean_test_loss,fold_losses"


@dataclass
class GridPoint:
    margin: float
    metric: str
    fold_losses: List[float] = field(default_factory=list)

    @property
    def mean_test_loss(self) -> float:
        finite = [x for x in self.fold_losses if not math.isnan(x)]
        return float(np.mean(finite)) if finite else math.nan


@dataclass
class GridSearchResult:
    points: List[GridPoint]
    skipped: List[str] = field(default_factory=list)

    def ranked(self) -> List[GridPoint]:
        return sorted(self.points, key=lambda p: (math.isnan(p.mean_test_loss), p.mean_test_loss,
                                                  p.margin, p.metric))

    def csv(self) -> str:
        lines = [GRIDSEARCH_HEADER]
        for rank, p in enumerate(self.ranked(), 1):
            folds = ";".join(format_float(x) for x in p.fold_losses)
            lines.append(f"{rank},{p.margin:g},{p.metric},{format_float(p.mean_test_loss)},{folds}")
        return "\n".join(lines) + "\n"


class GridSearchService:
    """margin × metric 网格，每个组合在 subject 级 k 折上训练并取测试 loss 均值"""

    def __init__(self, config: RunConfig, margins: Sequence[float] = MARGINS,
                 metrics: Sequence[str] = GRID_METRICS, dataset: Optional[FaceDataset] = None):
        self.config = config
        self.margins = tuple(margins)
        self.metrics = tuple(metrics)
        self.dataset = dataset

    def _point_config(self, margin: float, metric: str, fold: int) -> RunConfig:
        out = self.config.run_dir / "gridsearch" / f"m{margin:g}-{metric}" / f"fold{fold}"
        if self.config.loss == "double_margin":
            # m_p 取网格值，m_n 保持比例
            ratio = self.config.m_n / self.config.m_p
            return self.config.with_updates(metric=metric, m_p=margin, m_n=margin * ratio, output_dir=str(out))
        return self.config.with_updates(metric=metric, m=margin, output_dir=str(out))

    def run(self, write_files: bool = True) -> GridSearchResult:
        config = self.config
        if self.dataset is None:
            check_data_available(config)
            self.dataset = load_dataset(config.dataset, config.data_dir, config.image_size, config.seed,
                                        config.synth_subjects, config.synth_per_subject)
        folds = kfold(self.dataset, config.kfold_k, config.seed)
        result = GridSearchResult(points=[])

        for metric in self.metrics:
            for margin in self.margins:
                try:
                    point_configs = [self._point_config(margin, metric, i) for i in range(len(folds))]
                except ConfigError as e:
                    logger.warning(f"⚠️ skip margin={margin:g} metric={metric}: {e}")
                    result.skipped.append(f"m{margin:g}-{metric}")
                    continue
                point = GridPoint(margin, metric)
                for i, (split, fold_config) in enumerate(zip(folds, point_configs)):
                    trainer = TrainingService(fold_config, self.dataset, split, write_files=write_files)
                    point.fold_losses.append(trainer.run().final_test_loss)
                logger.info(f"📊 margin={margin:g} metric={metric}: mean test loss {point.mean_test_loss:.6f}")
                result.points.append(point)

        if write_files:
            config.run_dir.mkdir(parents=True, exist_ok=True)
            (config.run_dir / GRIDSEARCH_FILE).write_text(result.csv(), encoding="utf-8")
            logger.info(f"✅ wrote {GRIDSEARCH_FILE} to {config.run_dir}")
        return result
