"""Unimodal encoders and the cross-modal attention refinement stage.

Each modality sequence is mean-pooled, projected to the shared width ``d``
and squashed with tanh.  Optionally, before pooling, every modality attends
to the row-concatenation of the other two (single head, residual).
"""

from dataclasses import dataclass, field

import numpy as np

from .autograd import Affine, Composite, Layer, MeanPool, Tanh
from .errors import DomainError, ShapeError
from .numerics import softmax

MODALITIES = ("T", "A", "V")


@dataclass
class ModalityBundle:
    text: np.ndarray
    audio: np.ndarray
    visual: np.ndarray
    label: float
    sample_id: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("text", "audio", "visual"):
            seq = np.asarray(getattr(self, name), dtype=np.float64)
            if seq.ndim != 2 or seq.shape[0] < 1:
                raise ShapeError(f"{name} sequence must be L x d with L >= 1, got {seq.shape}")
            setattr(self, name, seq)
        if not -3.0 <= self.label <= 3.0:
            raise DomainError(f"label {self.label} outside [-3, 3]")

    @property
    def sequences(self):
        return (self.text, self.audio, self.visual)


@dataclass
class EncodedTriple:
    h_T: np.ndarray
    h_A: np.ndarray
    h_V: np.ndarray

    def __post_init__(self):
        shapes = {np.shape(self.h_T), np.shape(self.h_A), np.shape(self.h_V)}
        if len(shapes) != 1:
            raise ShapeError(f"modality vectors differ in shape: {shapes}")

    def stacked(self):
        """(3, d) array in T, A, V order."""
        return np.stack([self.h_T, self.h_A, self.h_V])

    @classmethod
    def from_stacked(cls, h):
        return cls(h[0].copy(), h[1].copy(), h[2].copy())


class Encoder(Composite):
    """Mean-pool over time, affine ``d_in -> d``, tanh."""

    def __init__(self, d_in, d, rng=None):
        super().__init__()
        self.d_in, self.d = d_in, d
        self.pool = self.add_child("pool", MeanPool())
        self.proj = self.add_child("proj", Affine(d_in, d, rng))
        self.act = self.add_child("act", Tanh())

    def _forward(self, seq):
        return self.act.forward(self.proj.forward(self.pool.forward(seq))), True

    def _backward(self, g, _):
        return self.pool.backward(self.proj.backward(self.act.backward(g)))


class CrossAttention(Layer):
    """``q + softmax((q Wq)(kv Wk)^T / sqrt(d)) (kv Wv)`` for batched sequences.

    Input is the pair ``(q_seq, kv_seq)`` of shapes (B, Lq, d) and (B, Lk, d).
    """

    def __init__(self, d, rng=None, init_scale=1.0):
        super().__init__()
        self.d = d
        for name in ("Wq", "Wk", "Wv"):
            if rng is None:
                W = np.zeros((d, d))
            else:
                W = init_scale * rng.uniform(-1.0, 1.0, size=(d, d)) / np.sqrt(d)
            self.add_param(name, W)
        self.last_weights = None

    def _forward(self, x):
        q_seq, kv_seq = (np.asarray(a, dtype=np.float64) for a in x)
        if q_seq.shape[-1] != self.d or kv_seq.shape[-1] != self.d:
            raise ShapeError(
                f"attention width {self.d} does not match inputs {q_seq.shape}, {kv_seq.shape}")
        p = self.params
        Q = q_seq @ p["Wq"]
        K = kv_seq @ p["Wk"]
        V = kv_seq @ p["Wv"]
        scores = Q @ np.swapaxes(K, -1, -2) / np.sqrt(self.d)
        P = softmax(scores, axis=-1)
        self.last_weights = P
        out = q_seq + P @ V
        return out, (q_seq, kv_seq, Q, K, V, P)

    def _backward(self, g, cache):
        q_seq, kv_seq, Q, K, V, P = cache
        p = self.params
        dP = g @ np.swapaxes(V, -1, -2)
        dV = np.swapaxes(P, -1, -2) @ g
        dS = P * (dP - np.sum(dP * P, axis=-1, keepdims=True)) / np.sqrt(self.d)
        dQ = dS @ K
        dK = np.swapaxes(dS, -1, -2) @ Q
        d = self.d
        self._acc("Wq", q_seq.reshape(-1, d).T @ dQ.reshape(-1, d))
        self._acc("Wk", kv_seq.reshape(-1, d).T @ dK.reshape(-1, d))
        self._acc("Wv", kv_seq.reshape(-1, d).T @ dV.reshape(-1, d))
        dq = g + dQ @ p["Wq"].T
        dkv = dK @ p["Wk"].T + dV @ p["Wv"].T
        return dq, dkv


class MultimodalEncoder(Composite):
    """Encodes a batch ``(X_T, X_A, X_V)`` into a (B, 3, d) stack of modality vectors.

    With attention enabled every modality is refined against the other two,
    all three reading the unrefined inputs, which requires equal input widths.
    """

    def __init__(self, dims, d, use_attention=False, rng=None):
        super().__init__()
        self.dims = tuple(int(x) for x in dims)
        self.d = d
        self.use_attention = bool(use_attention)
        if self.use_attention and len(set(self.dims)) != 1:
            raise ShapeError(f"cross-modal attention needs equal modality widths, got {self.dims}")
        self.encoders = [self.add_child(f"enc_{m}", Encoder(d_in, d, rng))
                         for m, d_in in zip(MODALITIES, self.dims)]
        self.attention = []
        if self.use_attention:
            self.attention = [self.add_child(f"attn_{m}", CrossAttention(self.dims[0], rng, 0.5))
                              for m in MODALITIES]

    @staticmethod
    def _others(xs, i):
        return np.concatenate([xs[j] for j in range(3) if j != i], axis=1)

    def _forward(self, xs):
        xs = tuple(np.asarray(x, dtype=np.float64) for x in xs)
        if len(xs) != 3:
            raise ShapeError("expected three modality sequences")
        for x, d_in in zip(xs, self.dims):
            if x.ndim != 3 or x.shape[-1] != d_in:
                raise ShapeError(f"modality input {x.shape} does not match width {d_in}")
        if self.use_attention:
            refined = [att.forward((xs[i], self._others(xs, i)))
                       for i, att in enumerate(self.attention)]
        else:
            refined = xs
        hs = [enc.forward(r) for enc, r in zip(self.encoders, refined)]
        return np.stack(hs, axis=1), tuple(x.shape[1] for x in xs)

    def _backward(self, g, lengths):
        dref = [enc.backward(g[:, i, :]) for i, enc in enumerate(self.encoders)]
        if not self.use_attention:
            return tuple(dref)
        dx = [None, None, None]
        for i, att in enumerate(self.attention):
            dq, dkv = att.backward(dref[i])
            dx[i] = dq if dx[i] is None else dx[i] + dq
            offset = 0
            for j in range(3):
                if j == i:
                    continue
                part = dkv[:, offset:offset + lengths[j], :]
                offset += lengths[j]
                dx[j] = part.copy() if dx[j] is None else dx[j] + part
        return tuple(dx)


def encode(encoder, seq):
    """Encode one L x d_in sequence into a d-vector."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] < 1:
        raise ShapeError(f"sequence must be L x d_in with L >= 1, got {seq.shape}")
    out = encoder.forward(seq[None])
    encoder.reset()
    return out[0]


def cross_attention(attention, q_seq, kv_seq):
    out = attention.forward((np.asarray(q_seq)[None], np.asarray(kv_seq)[None]))
    attention.reset()
    return out[0]


def encode_bundle(encoder, bundle, use_attention=None):
    """Run a ``MultimodalEncoder`` on one bundle and return an ``EncodedTriple``.

    ``use_attention`` may override the encoder's own setting only to turn
    attention off; attention layers must exist to turn it on.
    """
    saved = encoder.use_attention
    if use_attention is not None:
        if use_attention and not encoder.attention:
            raise ShapeError("encoder was built without attention layers")
        encoder.use_attention = bool(use_attention)
    try:
        h = encoder.forward(tuple(s[None] for s in bundle.sequences))
    finally:
        encoder.use_attention = saved
        encoder.reset()
    return EncodedTriple.from_stacked(h[0])
