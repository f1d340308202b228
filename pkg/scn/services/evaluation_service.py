import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from scn.config import RunConfig
from scn.data.datasets import FaceDataset, load_dataset
from scn.data.protocol import PairBatch, PairStream, SplitSpec, split_subjects
from scn.errors import DataError
from scn.models.checkpoint import apply_checkpoint, load_checkpoint
from scn.models.encoder import build_encoder
from scn.models.siamese import (
    DensityHistogram,
    SiameseNetwork,
    accuracy,
    histogram,
    overlap_coefficient,
    select_threshold,
)
from scn.services.training_service import FINAL_CHECKPOINT, check_data_available, format_float, measure

logger = logging.getLogger(__name__)

EVAL_FILE = "eval.csv"
DENSITY_FILE = "density.csv"
EVAL_HEADER = "pairs,loss,accuracy,threshold,overlap_coefficient"
DENSITY_HEADER = "bin_lo,bin_hi,matching_count,non_matching_count"
DENSITY_BINS = 50


@dataclass
class EvalResult:
    pairs: int
    loss: float
    accuracy: float
    threshold: float
    overlap: float
    density: DensityHistogram

    def csv(self) -> str:
        row = [str(self.pairs), format_float(self.loss), format_float(self.accuracy),
               format_float(self.threshold), format_float(self.overlap)]
        return EVAL_HEADER + "\n" + ",".join(row) + "\n"

    def density_csv(self) -> str:
        lines = [DENSITY_HEADER]
        for lo, hi, matching, non_matching in self.density.rows():
            lines.append(f"{format_float(lo)},{format_float(hi)},{matching},{non_matching}")
        return "\n".join(lines) + "\n"


def evaluate_pairs(net: SiameseNetwork, pairs: PairBatch, batch_size: int,
                   validation: Optional[PairBatch] = None, bins: int = DENSITY_BINS) -> EvalResult:
    """loss、扫描阈值下的准确率，以及同人 / 异人两组 D 的直方图"""
    loss, D = measure(net, pairs, batch_size)
    if validation is not None:
        _, val_D = measure(net, validation, batch_size)
        threshold, _ = select_threshold(val_D, validation.labels, net.metric)
    else:
        # 阈值不在被评估的对上扫描
        threshold = net.default_threshold()
        logger.warning(f"⚠️ no validation pairs, using the margin threshold {threshold:.6f} instead of a sweep")
    density = histogram(D, pairs.labels, bins)
    return EvalResult(
        pairs=len(pairs),
        loss=loss,
        accuracy=accuracy(D, pairs.labels, threshold, net.metric),
        threshold=threshold,
        overlap=overlap_coefficient(density.matching, density.non_matching),
        density=density,
    )


class EvaluationService:
    def __init__(self, config: RunConfig, checkpoint: Optional[Union[str, Path]] = None,
                 dataset: Optional[FaceDataset] = None, split: Optional[SplitSpec] = None):
        self.config = config
        self.checkpoint = Path(checkpoint) if checkpoint else config.run_dir / FINAL_CHECKPOINT
        self.dataset = dataset
        self.split = split

    def run(self, write_files: bool = True) -> EvalResult:
        config = self.config
        logger.info(f"🚀 evaluating {self.checkpoint}")
        ckpt = load_checkpoint(self.checkpoint)
        if self.dataset is None:
            check_data_available(config)
            self.dataset = load_dataset(config.dataset, config.data_dir, config.image_size, config.seed,
                                        config.synth_subjects, config.synth_per_subject)
        split = self.split or split_subjects(self.dataset, config.holdout, config.seed)
        stream = PairStream(self.dataset, split, config.pairs_per_epoch, config.batch_size, config.pos_ratio,
                            config.seed, config.validation_fraction, config.test_pairs)

        encoder = build_encoder(config)
        try:
            apply_checkpoint(encoder, ckpt)
        except Exception as e:
            logger.error(f"❌ checkpoint does not match the configured model: {e}")
            raise
        net = SiameseNetwork.from_config(encoder, config)

        # 没有测试 subject 时退回到验证切片
        test = stream.test()
        pairs, validation = (test, stream.validation()) if test is not None else (stream.validation(), None)
        if pairs is None:
            raise DataError("no evaluation pairs: holdout and validation_fraction are both 0")
        result = evaluate_pairs(net, pairs, config.batch_size, validation)
        logger.info(
            f"📊 eval: pairs={result.pairs} loss={result.loss:.6f} accuracy={result.accuracy:.4f} "
            f"threshold={result.threshold:.6f} overlap={result.overlap:.4f}"
        )
        if write_files:
            out = config.run_dir
            out.mkdir(parents=True, exist_ok=True)
            (out / EVAL_FILE).write_text(result.csv(), encoding="utf-8")
            (out / DENSITY_FILE).write_text(result.density_csv(), encoding="utf-8")
            logger.info(f"✅ wrote {EVAL_FILE} and {DENSITY_FILE} to {out}")
        return result
