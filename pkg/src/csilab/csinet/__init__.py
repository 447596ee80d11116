"""CSINet: FiLM-modulated IMU features, IMU-anchored cross-modal attention,
cosine similarity head and scale-aware fusion over window sizes."""

from .batch import Normalizer, SegmentBatch, augment_negatives, make_batch
from .checkpoint import CheckpointError, decode, digest, encode, load, save, verify
from .config import ModelConfig, TrainConfig, config_digest, model_config_from_dict, train_config_from_dict
from .model import (
    NoDecision,
    Scores,
    as_tensors,
    cross_modal_attend,
    expected_shapes,
    film_modulate,
    forward,
    fuse_windows,
    infonce_loss,
    init_params,
    predict_from_scores,
    similarity,
)
from .train import (
    DivergenceError,
    TrainResult,
    accuracy,
    build_features,
    evaluate_features,
    features_for,
    predict,
    tier_seed,
    train,
    train_on_features,
)
