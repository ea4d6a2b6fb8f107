"""Sample-aware dynamic data augmentation.

Per-sample augmentation strengths are derived from the temporal variance of
each sample's prediction changes during training.
"""
from sada.augment import AugDraw, AugOp, MagnitudeSpec, apply_op, draw_for_sample, magnitude_of
from sada.config import ExperimentConfig, Policy, parse_config, serialize_config
from sada.kernels import BACKEND
from sada.tracker import (
    Direction,
    InfluenceTracker,
    StrengthTable,
    TrackerConfig,
    ema_update,
    kl_delta,
    normalize_strengths,
    window_variance,
)
from sada.trainer import EpochReport, run_training

__version__ = "0.1.0"
