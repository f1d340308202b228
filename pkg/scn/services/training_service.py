import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np

from scn.config import RunConfig
from scn.core.autograd import backward
from scn.core.random import SplitMix64
from scn.core.tensor import Tensor, graph_scope, no_grad
from scn.data.datasets import FaceDataset, load_dataset
from scn.data.protocol import PairBatch, PairStream, SplitAudit, SplitSpec, audit_split, split_subjects
from scn.errors import DataError
from scn.models.checkpoint import save_checkpoint
from scn.models.encoder import Encoder, build_encoder
from scn.models.siamese import SiameseNetwork, accuracy, select_threshold
from scn.nn.optim import SGD, AMSGrad

logger = logging.getLogger(__name__)

METRICS_HEADER = "epoch,train_loss,test_loss,test_accuracy,wall_ms"
CONFIG_FILE = "config.txt"
METRICS_FILE = "metrics.csv"
FINAL_CHECKPOINT = "checkpoint_final.ckpt"
BEST_CHECKPOINT = "checkpoint_best.ckpt"
AUDIT_FILE = "split_audit.txt"


def format_float(value: float) -> str:
    return "nan" if math.isnan(value) else format(value, ".17g")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    test_loss: float
    test_accuracy: float
    wall_ms: int

    def csv_row(self) -> str:
        return ",".join([
            str(self.epoch),
            format_float(self.train_loss),
            format_float(self.test_loss),
            format_float(self.test_accuracy),
            str(self.wall_ms),
        ])


@dataclass
class TrainingResult:
    run_dir: Path
    history: List[EpochMetrics] = field(default_factory=list)
    audit: Optional[SplitAudit] = None
    threshold: Optional[float] = None

    @property
    def final_train_loss(self) -> float:
        return self.history[-1].train_loss

    @property
    def final_test_loss(self) -> float:
        return self.history[-1].test_loss


def check_data_available(config: RunConfig) -> None:
    """数据集缺失时在构建模型之前报错"""
    if config.dataset == "synthetic":
        return
    if not config.data_path.is_dir():
        raise DataError(f"dataset directory not found for {config.dataset}: {config.data_path}")


def measure(net: SiameseNetwork, pairs: PairBatch, batch_size: int) -> Tuple[float, np.ndarray]:
    """评估模式下分块前向，返回 (整体 loss, D)"""
    with no_grad():
        chunks = [net.forward_pair(chunk, "eval").data for chunk in pairs.batches(batch_size)]
        D = np.concatenate(chunks)
        loss = net.pair_loss(Tensor._wrap(D), pairs.labels).item()
    return loss, D


def make_optimizer(encoder: Encoder, config: RunConfig):
    params = encoder.named_parameters()
    if config.optimizer == "sgd":
        return SGD(params, lr=config.alpha)
    return AMSGrad(params, config.alpha, config.theta1, config.theta2, config.eps, config.flat_lr)


class TrainingService:
    def __init__(self, config: RunConfig, dataset: Optional[FaceDataset] = None,
                 split: Optional[SplitSpec] = None, write_files: bool = True):
        self.config = config
        self.dataset = dataset
        self.split = split
        self.write_files = write_files
        self.encoder: Optional[Encoder] = None
        self.net: Optional[SiameseNetwork] = None
        self.optimizer = None
        self.stream: Optional[PairStream] = None

    def prepare(self) -> None:
        config = self.config
        if self.dataset is None:
            check_data_available(config)
            self.dataset = load_dataset(config.dataset, config.data_dir, config.image_size, config.seed,
                                        config.synth_subjects, config.synth_per_subject)
        if self.split is None:
            self.split = split_subjects(self.dataset, config.holdout, config.seed)
        self.stream = PairStream(self.dataset, self.split, config.pairs_per_epoch, config.batch_size,
                                 config.pos_ratio, config.seed, config.validation_fraction,
                                 config.test_pairs, config.fixed_pairs)
        self.encoder = build_encoder(config)
        self.net = SiameseNetwork.from_config(self.encoder, config)
        self.optimizer = make_optimizer(self.encoder, config)

    def train_step(self, batch: PairBatch, step: int) -> float:
        seed = SplitMix64(self.config.seed).derive("step", step).seed
        with graph_scope():
            loss, _ = self.net.loss(batch, "train", seed)
            grads = backward(loss)
        self.optimizer.step(grads)
        return loss.item()

    def evaluate(self) -> Tuple[float, float, Optional[float]]:
        """返回 (test_loss, test_accuracy, threshold)；没有测试 subject 时为 nan"""
        test = self.stream.test()
        if test is None:
            return math.nan, math.nan, None
        test_loss, test_D = measure(self.net, test, self.config.batch_size)
        validation = self.stream.validation()
        if validation is not None:
            _, val_D = measure(self.net, validation, self.config.batch_size)
            threshold, _ = select_threshold(val_D, validation.labels, self.config.metric)
        else:
            threshold = self.net.default_threshold()
        return test_loss, accuracy(test_D, test.labels, threshold, self.config.metric), threshold

    def _save(self, name: str) -> None:
        save_checkpoint(self.encoder.named_parameters(), self.optimizer.state,
                        self.config.run_dir / name, self.encoder.named_buffers())

    def run(self, on_epoch: Optional[Callable[[EpochMetrics], None]] = None) -> TrainingResult:
        config = self.config
        logger.info(f"🚀 training {config.model} on {config.dataset} for {config.epochs} epochs (seed={config.seed})")
        try:
            self.prepare()
        except Exception as e:
            logger.error(f"❌ failed to prepare training run: {e}")
            raise

        run_dir = config.run_dir
        result = TrainingResult(run_dir)
        if self.write_files:
            run_dir.mkdir(parents=True, exist_ok=True)
            (run_dir / CONFIG_FILE).write_text(config.echo(), encoding="utf-8")
            (run_dir / METRICS_FILE).write_text(METRICS_HEADER + "\n", encoding="utf-8")

        train_seen = set()
        best_loss = math.inf
        step = 0
        for epoch in range(1, config.epochs + 1):
            started = time.perf_counter()
            pairs = self.stream.epoch_pairs(epoch)
            train_seen |= pairs.subjects()
            losses = []
            for batch in pairs.batches(config.batch_size):
                step += 1
                losses.append(self.train_step(batch, step))
            test_loss, test_acc, threshold = self.evaluate()
            wall_ms = int(round((time.perf_counter() - started) * 1000))

            row = EpochMetrics(epoch, float(np.mean(losses)), test_loss, test_acc, wall_ms)
            result.history.append(row)
            result.threshold = threshold
            logger.info(
                f"📊 epoch {epoch}/{config.epochs} train_loss={row.train_loss:.6f} "
                f"test_loss={row.test_loss:.6f} test_acc={row.test_accuracy:.4f} ({wall_ms} ms)"
            )
            if self.write_files:
                with open(run_dir / METRICS_FILE, "a", encoding="utf-8") as fh:
                    fh.write(row.csv_row() + "\n")
                score = row.test_loss if not math.isnan(row.test_loss) else row.train_loss
                if score < best_loss:
                    best_loss = score
                    self._save(BEST_CHECKPOINT)
            if on_epoch is not None:
                on_epoch(row)

        test = self.stream.test()
        result.audit = audit_split(self.split, [train_seen], [test] if test is not None else [])
        logger.info(
            f"📊 split audit: {len(result.audit.train_seen)} train / {len(result.audit.test_seen)} test subjects seen, "
            f"overlap={sorted(result.audit.overlap) or 'none'}"
        )
        if self.write_files:
            self._save(FINAL_CHECKPOINT)
            (run_dir / AUDIT_FILE).write_text(result.audit.report(), encoding="utf-8")
            logger.info(f"✅ run finished, files written to {run_dir}")
        if not result.audit.ok:
            raise DataError(f"zero-shot split violated: {sorted(result.audit.overlap | result.audit.leaked)}")
        return result
