from scn.data.datasets import FaceDataset, FaceImage, load_att, load_dataset, load_lfw, synth_dataset, synth_template
from scn.data.pgm import load_pgm, read_pgm, write_pgm
from scn.data.preprocess import preprocess, resize_bilinear, to_grayscale
from scn.data.protocol import (
    PairBatch,
    PairStream,
    SplitAudit,
    SplitSpec,
    audit_split,
    kfold,
    sample_pairs,
    split_subjects,
)

__all__ = [
    "FaceDataset",
    "FaceImage",
    "PairBatch",
    "PairStream",
    "SplitAudit",
    "SplitSpec",
    "audit_split",
    "kfold",
    "load_att",
    "load_dataset",
    "load_lfw",
    "load_pgm",
    "preprocess",
    "read_pgm",
    "resize_bilinear",
    "sample_pairs",
    "split_subjects",
    "synth_dataset",
    "synth_template",
    "to_grayscale",
    "write_pgm",
]
