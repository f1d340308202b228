from scn.models.checkpoint import Checkpoint, apply_checkpoint, load_checkpoint, save_checkpoint
from scn.models.encoder import (
    CapsuleEncoder,
    ClassCapsuleHead,
    Embedding,
    EncoderParams,
    StandardEncoder,
    build_capsule_params,
    build_encoder,
    build_standard,
    encode,
)
from scn.models.siamese import (
    SiameseNetwork,
    accuracy,
    histogram,
    overlap_coefficient,
    predict_match,
    select_threshold,
)

__all__ = [
    "CapsuleEncoder",
    "Checkpoint",
    "ClassCapsuleHead",
    "Embedding",
    "EncoderParams",
    "SiameseNetwork",
    "StandardEncoder",
    "accuracy",
    "apply_checkpoint",
    "build_capsule_params",
    "build_encoder",
    "build_standard",
    "encode",
    "histogram",
    "load_checkpoint",
    "overlap_coefficient",
    "predict_match",
    "save_checkpoint",
    "select_threshold",
]
