"""Adaptive gated multimodal fusion with entropy and importance gates."""

from .data import Dataset, SyntheticSpec, generate, load_csv, save_csv, split
from .encoders import EncodedTriple, ModalityBundle
from .fusion import (GateDiagnostics, FusionParams, ablation_variant, adaptive_fuse, concat_fuse,
                     entropy_gate, feature_entropy, importance_gate)
from .metrics import MetricsReport, acc2, acc7, f1_binary, high_error_mask, mae, psc
from .model import AGFNModel, ModelConfig
from .numerics import Rng
from .training import TrainConfig, train
from .tsne import tsne

__version__ = "0.1.0"
