"""Dual-gated adaptive fusion, the concatenation baseline and ablation arms.

All layers take the stacked modality representations as one (B, 3, d)
array in T, A, V order and return a fused (B, d) array.

Entropy gate: each modality vector is turned into a distribution by softmax
and its Shannon entropy (nats) damps that modality's projected logit,
``w = softmax_m(z_m * exp(-H_m / tau))``, ``h_entropy = sum_m w_m h_m``.

Importance gate: one sigmoid gate vector computed from the concatenation
rescales every modality before a joint projection back to width d.

The full model blends the two with ``alpha = sigmoid(alpha_raw)``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autograd import Affine, Composite, Layer, Tanh, glorot
from .encoders import EncodedTriple
from .errors import DomainError, ShapeError
from .numerics import log_softmax, sigmoid, softmax

MODES = ("full", "ieg_only", "mig_only", "no_gfm")


def feature_entropy(h):
    """Entropy in nats of ``softmax(h)``; lies in [0, ln d]."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] < 2:
        raise DomainError("feature entropy needs dimension >= 2")
    logp = log_softmax(h, axis=-1)
    H = -np.sum(np.exp(logp) * logp, axis=-1)
    H = np.maximum(H, 0.0)
    return float(H) if H.ndim == 0 else H


@dataclass
class GateDiagnostics:
    H: np.ndarray
    w_entropy: np.ndarray
    g: np.ndarray
    alpha: float


@dataclass
class FusionParams:
    W_z: Optional[np.ndarray] = None
    b_z: Optional[np.ndarray] = None
    tau: float = 1.0
    W_g: Optional[np.ndarray] = None
    b_g: Optional[np.ndarray] = None
    W_f: Optional[np.ndarray] = None
    b_f: Optional[np.ndarray] = None
    alpha_raw: float = 0.0
    W_c: Optional[np.ndarray] = None
    b_c: Optional[np.ndarray] = None

    @classmethod
    def random(cls, d, rng, tau=1.0, alpha_raw=0.0, bias_scale=0.0):
        def bias(n):
            return bias_scale * rng.normal(n) if bias_scale else np.zeros(n)
        return cls(
            W_z=glorot(rng, 3 * d, 3), b_z=bias(3), tau=tau,
            W_g=glorot(rng, 3 * d, d), b_g=bias(d),
            W_f=glorot(rng, 3 * d, d), b_f=bias(d),
            alpha_raw=alpha_raw,
            W_c=glorot(rng, 3 * d, d), b_c=bias(d),
        )


def _stack(t):
    if isinstance(t, EncodedTriple):
        return t.stacked()[None]
    h = np.asarray(t, dtype=np.float64)
    if h.ndim == 2:
        h = h[None]
    if h.ndim != 3 or h.shape[1] != 3:
        raise ShapeError(f"expected (B, 3, d) modality stack, got {h.shape}")
    return h


def _entropy_forward(hs, W_z, b_z, tau):
    B, _, d = hs.shape
    c = hs.reshape(B, 3 * d)
    logp = log_softmax(hs, axis=-1)
    P = np.exp(logp)
    H = -np.sum(P * logp, axis=-1)
    z = c @ W_z + b_z
    e = np.exp(-H / tau)
    u = z * e
    w = softmax(u, axis=-1)
    h_ent = np.einsum("bm,bmd->bd", w, hs)
    return h_ent, (c, logp, P, H, z, e, w)


def _entropy_backward(g, hs, cache, W_z, tau):
    c, logp, P, H, z, e, w = cache
    dhs = w[:, :, None] * g[:, None, :]
    dw = np.einsum("bd,bmd->bm", g, hs)
    du = w * (dw - np.sum(w * dw, axis=-1, keepdims=True))
    dz = du * e
    dH = du * z * (-e / tau)
    dhs += dH[:, :, None] * (-P * (logp + H[:, :, None]))
    dW_z = c.T @ dz
    db_z = dz.sum(axis=0)
    dhs += (dz @ W_z.T).reshape(hs.shape)
    return dhs, dW_z, db_z


def _importance_forward(hs, W_g, b_g, W_f, b_f):
    B, _, d = hs.shape
    c = hs.reshape(B, 3 * d)
    gate = sigmoid(c @ W_g + b_g)
    gc = (gate[:, None, :] * hs).reshape(B, 3 * d)
    return gc @ W_f + b_f, (c, gate, gc)


def _importance_backward(g, hs, cache, W_g, W_f):
    c, gate, gc = cache
    B, _, d = hs.shape
    dgc = (g @ W_f.T).reshape(B, 3, d)
    dW_f = gc.T @ g
    db_f = g.sum(axis=0)
    dhs = dgc * gate[:, None, :]
    dgate = np.sum(dgc * hs, axis=1)
    dzg = dgate * gate * (1.0 - gate)
    dW_g = c.T @ dzg
    db_g = dzg.sum(axis=0)
    dhs += (dzg @ W_g.T).reshape(B, 3, d)
    return dhs, dW_g, db_g, dW_f, db_f


class EntropyGate(Layer):
    def __init__(self, d, tau=1.0, rng=None):
        super().__init__()
        if not tau > 0:
            raise DomainError("tau must be positive")
        self.d, self.tau = d, float(tau)
        self.add_param("W_z", glorot(rng, 3 * d, 3) if rng is not None else np.zeros((3 * d, 3)))
        self.add_param("b_z", np.zeros(3))
        self.last = None

    def _forward(self, hs):
        hs = _stack(hs)
        h_ent, cache = _entropy_forward(hs, self.params["W_z"], self.params["b_z"], self.tau)
        self.last = {"H": cache[3], "w": cache[6]}
        return h_ent, (hs, cache)

    def _backward(self, g, cache):
        hs, inner = cache
        dhs, dW, db = _entropy_backward(g, hs, inner, self.params["W_z"], self.tau)
        self._acc("W_z", dW)
        self._acc("b_z", db)
        return dhs


class ImportanceGate(Layer):
    def __init__(self, d, rng=None):
        super().__init__()
        self.d = d
        for name in ("W_g", "W_f"):
            self.add_param(name, glorot(rng, 3 * d, d) if rng is not None else np.zeros((3 * d, d)))
        self.add_param("b_g", np.zeros(d))
        self.add_param("b_f", np.zeros(d))
        self.last = None

    def _forward(self, hs):
        hs = _stack(hs)
        p = self.params
        h_imp, cache = _importance_forward(hs, p["W_g"], p["b_g"], p["W_f"], p["b_f"])
        self.last = {"g": cache[1]}
        return h_imp, (hs, cache)

    def _backward(self, g, cache):
        hs, inner = cache
        p = self.params
        dhs, dW_g, db_g, dW_f, db_f = _importance_backward(g, hs, inner, p["W_g"], p["W_f"])
        self._acc("W_g", dW_g)
        self._acc("b_g", db_g)
        self._acc("W_f", dW_f)
        self._acc("b_f", db_f)
        return dhs


class ConcatProjection(Layer):
    """Concatenate the three modality vectors, then a learned affine 3d -> d."""

    def __init__(self, d, rng=None):
        super().__init__()
        self.d = d
        self.proj = Affine(3 * d, d, rng)
        self._params = self.proj._params
        self._grads = self.proj._grads

    def _forward(self, hs):
        hs = _stack(hs)
        B = hs.shape[0]
        return self.proj.forward(hs.reshape(B, -1)), hs.shape

    def _backward(self, g, shape):
        return self.proj.backward(g).reshape(shape)


class FusionLayer(Composite):
    """Fusion stage for one ablation arm: full, ieg_only, mig_only or no_gfm."""

    def __init__(self, d, mode="full", tau=1.0, rng=None):
        super().__init__()
        if mode not in MODES:
            raise DomainError(f"unknown fusion mode {mode!r}; expected one of {MODES}")
        self.d, self.mode, self.tau = d, mode, float(tau)
        self.ieg = self.mig = self.concat = None
        if mode in ("full", "ieg_only"):
            self.ieg = self.add_child("ieg", EntropyGate(d, tau, rng))
        if mode in ("full", "mig_only"):
            self.mig = self.add_child("mig", ImportanceGate(d, rng))
        if mode == "full":
            self.add_param("alpha_raw", np.zeros(1))
        if mode == "no_gfm":
            self.concat = self.add_child("concat", ConcatProjection(d, rng))

    @property
    def alpha(self):
        if self.mode != "full":
            return {"ieg_only": 1.0, "mig_only": 0.0}.get(self.mode, float("nan"))
        return float(sigmoid(self._params["alpha_raw"])[0])

    def _forward(self, hs):
        hs = _stack(hs)
        if self.mode == "no_gfm":
            return self.concat.forward(hs), None
        if self.mode == "ieg_only":
            return self.ieg.forward(hs), None
        if self.mode == "mig_only":
            return self.mig.forward(hs), None
        h_ent = self.ieg.forward(hs)
        h_imp = self.mig.forward(hs)
        a = self.alpha
        return a * h_ent + (1.0 - a) * h_imp, (h_ent, h_imp, a)

    def _backward(self, g, cache):
        if self.mode == "no_gfm":
            return self.concat.backward(g)
        if self.mode == "ieg_only":
            return self.ieg.backward(g)
        if self.mode == "mig_only":
            return self.mig.backward(g)
        h_ent, h_imp, a = cache
        dalpha = float(np.sum(g * (h_ent - h_imp)))
        self._acc("alpha_raw", np.array([dalpha * a * (1.0 - a)]))
        return self.ieg.backward(a * g) + self.mig.backward((1.0 - a) * g)

    def diagnostics(self):
        """Per-sample gate record of the most recent forward pass."""
        H = w = g = None
        if self.ieg is not None and self.ieg.last is not None:
            H, w = self.ieg.last["H"], self.ieg.last["w"]
        if self.mig is not None and self.mig.last is not None:
            g = self.mig.last["g"]
        return GateDiagnostics(H=H, w_entropy=w, g=g, alpha=self.alpha)

    def load_fusion_params(self, fp):
        """Copy a ``FusionParams`` into this layer's parameter arrays."""
        p = self.params
        pairs = {"ieg.W_z": fp.W_z, "ieg.b_z": fp.b_z, "mig.W_g": fp.W_g, "mig.b_g": fp.b_g,
                 "mig.W_f": fp.W_f, "mig.b_f": fp.b_f, "concat.W": fp.W_c, "concat.b": fp.b_c}
        for name, value in pairs.items():
            if name in p and value is not None:
                p[name][...] = value
        if "alpha_raw" in p:
            p["alpha_raw"][...] = fp.alpha_raw
        if self.ieg is not None:
            self.ieg.tau = float(fp.tau)
        return self


class PredictionHead(Composite):
    """affine d -> hidden, tanh, affine hidden -> 1."""

    def __init__(self, d, hidden=32, rng=None):
        super().__init__()
        self.d, self.hidden = d, hidden
        self.fc1 = self.add_child("fc1", Affine(d, hidden, rng))
        self.act = self.add_child("act", Tanh())
        self.fc2 = self.add_child("fc2", Affine(hidden, 1, rng))

    def _forward(self, h):
        return self.fc2.forward(self.act.forward(self.fc1.forward(h))), True

    def _backward(self, g, _):
        return self.fc1.backward(self.act.backward(self.fc2.backward(g)))


# Single-sample functional surface over FusionParams.

def entropy_gate(t, params):
    """Returns ``(h_entropy, w)`` for one encoded triple."""
    hs = _stack(t)
    h_ent, cache = _entropy_forward(hs, params.W_z, params.b_z, params.tau)
    return h_ent[0], cache[6][0]


def importance_gate(t, params):
    """Returns ``(h_importance, g)`` for one encoded triple."""
    hs = _stack(t)
    h_imp, cache = _importance_forward(hs, params.W_g, params.b_g, params.W_f, params.b_f)
    return h_imp[0], cache[1][0]


def adaptive_fuse(t, params):
    hs = _stack(t)
    h_ent, ecache = _entropy_forward(hs, params.W_z, params.b_z, params.tau)
    h_imp, icache = _importance_forward(hs, params.W_g, params.b_g, params.W_f, params.b_f)
    alpha = float(sigmoid(np.array([params.alpha_raw], dtype=np.float64))[0])
    h = alpha * h_ent + (1.0 - alpha) * h_imp
    diag = GateDiagnostics(H=ecache[3][0], w_entropy=ecache[6][0], g=icache[1][0], alpha=alpha)
    return h[0], diag


def concat_fuse(t):
    if isinstance(t, EncodedTriple):
        return np.concatenate([t.h_T, t.h_A, t.h_V])
    return _stack(t)[0].reshape(-1)


def ablation_variant(mode, t, params):
    if mode == "full":
        return adaptive_fuse(t, params)[0]
    if mode == "ieg_only":
        return entropy_gate(t, params)[0]
    if mode == "mig_only":
        return importance_gate(t, params)[0]
    if mode == "no_gfm":
        return concat_fuse(t) @ params.W_c + params.b_c
    raise DomainError(f"unknown fusion mode {mode!r}; expected one of {MODES}")
