"""Finite-difference sweep over every layer type and the end-to-end model."""

from dataclasses import dataclass

import numpy as np

from .autograd import Affine, Identity, MeanPool, Scale, Tanh, grad_check
from .encoders import CrossAttention, Encoder, MultimodalEncoder
from .fusion import ConcatProjection, EntropyGate, FusionLayer, ImportanceGate, PredictionHead
from .model import AGFNModel, ModelConfig
from .numerics import Rng, derive_seed

TOLERANCE = 1e-4

# Small widths keep 100 instances per layer well inside the time budget.
_B, _DIN, _D, _HID = 2, 3, 3, 4


def _randomize(layer, rng, scale=0.7):
    for p in layer.params.values():
        p[...] = scale * rng.normal(p.shape)
    return layer


def _seq(rng, length=None):
    L = length or 2 + rng.integers(2)
    return rng.normal((_B, L, _DIN))


def _stack(rng):
    return rng.normal((_B, 3, _D))


def _cases():
    """name -> factory(rng) returning (layer, inputs)."""
    return {
        "Identity": lambda r: (Identity(), r.normal((_B, _D))),
        "Scale": lambda r: (Scale(r.uniform(-3, 3)), r.normal((_B, _D))),
        "Affine": lambda r: (_randomize(Affine(_DIN, _D, r), r), r.normal((_B, _DIN))),
        "Tanh": lambda r: (Tanh(), r.normal((_B, _D))),
        "MeanPool": lambda r: (MeanPool(), _seq(r)),
        "Encoder": lambda r: (_randomize(Encoder(_DIN, _D, r), r), _seq(r)),
        "CrossAttention": lambda r: (_randomize(CrossAttention(_DIN, r), r), (_seq(r), _seq(r))),
        "MultimodalEncoder": lambda r: (
            _randomize(MultimodalEncoder((_DIN,) * 3, _D, True, r), r), (_seq(r), _seq(r), _seq(r))),
        "EntropyGate": lambda r: (_randomize(EntropyGate(_D, r.uniform(0.5, 2.0), r), r), _stack(r)),
        "ImportanceGate": lambda r: (_randomize(ImportanceGate(_D, r), r), _stack(r)),
        "ConcatProjection": lambda r: (_randomize(ConcatProjection(_D, r), r), _stack(r)),
        "FusionLayer": lambda r: (_randomize(FusionLayer(_D, "full", r.uniform(0.5, 2.0), r), r), _stack(r)),
        "PredictionHead": lambda r: (_randomize(PredictionHead(_D, _HID, r), r), r.normal((_B, _D))),
        "AGFNModel": lambda r: (
            _randomize(AGFNModel(ModelConfig(_DIN, _DIN, _DIN, _D, _HID, "full",
                                             r.uniform(0.5, 2.0), True), r), r),
            (_seq(r), _seq(r), _seq(r))),
    }


LAYER_TYPES = tuple(_cases())


@dataclass
class LayerCheck:
    name: str
    instances: int
    max_error: float

    @property
    def ok(self):
        return self.max_error <= TOLERANCE


def run_grad_checks(instances=100, seed=0, corrupt_layer=None, corrupt=0.5, names=None):
    results = []
    for idx, (name, factory) in enumerate(_cases().items()):
        if names is not None and name not in names:
            continue
        rng = Rng(derive_seed(seed, idx))
        worst = 0.0
        for _ in range(instances):
            layer, inputs = factory(rng)
            rep = grad_check(layer, inputs, rng=rng,
                             corrupt=corrupt if name == corrupt_layer else 0.0)
            worst = max(worst, rep.max_error)
        results.append(LayerCheck(name, instances, worst))
    return results


def format_report(results):
    lines = ["layer,instances,max_rel_error,status"]
    for r in results:
        lines.append(f"{r.name},{r.instances},{r.max_error:.3e},{'ok' if r.ok else 'FAIL'}")
    return "\n".join(lines) + "\n"
