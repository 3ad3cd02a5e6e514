"""L1 objective with VAT consistency, AdamW, cosine schedule, early stopping."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, DomainError, ShapeError
from .model import AGFNModel
from .numerics import Rng, derive_seed, global_norm_clip

log = logging.getLogger(__name__)

# Sub-stream ids under the experiment seed.
STREAM_INIT, STREAM_SHUFFLE, STREAM_VAT = 0, 1, 2


@dataclass
class TrainConfig:
    lr_main: float = 1e-4
    lr_final: float = 1e-6
    batch_size: int = 32
    weight_decay: float = 0.01
    vat_lambda: float = 0.1
    vat_steps: int = 5
    vat_epsilon: float = 1.0
    vat_xi: float = 1e-6
    vat_enabled: bool = True
    clip_norm: float = 1.0
    max_epochs: int = 100
    patience: int = 8
    seed: int = 1111

    def validate(self):
        for name in ("lr_main", "lr_final", "vat_epsilon", "vat_xi", "clip_norm"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.weight_decay < 0 or self.vat_lambda < 0:
            raise DomainError("weight_decay and vat_lambda must be nonnegative")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1 or self.vat_steps < 1:
            raise DomainError("batch_size, patience, max_epochs and vat_steps must be >= 1")


def l1_loss(pred, target):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape or pred.size == 0:
        raise ShapeError(f"l1_loss needs equal non-empty lengths, got {pred.size} and {target.size}")
    return float(np.mean(np.abs(pred - target)))


def _normalize_rows(v):
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / np.where(norms > 0, norms, 1.0), norms[:, 0]


def vat_perturbation(head, h, epsilon=1.0, xi=1e-6, steps=1, rng=None):
    """Per-row adversarial direction for ``head`` around ``h`` by power iteration.

    Starting from a random unit vector ``d``, each step replaces ``d`` with the
    normalized gradient of ``(f(h + xi d) - f(h))^2``.  Rows whose gradient
    vanishes keep their current direction.  Returns ``epsilon * d`` with every
    row of norm ``epsilon``.  The head's parameter gradients are left untouched.
    """
    if steps < 1 or not epsilon > 0 or not xi > 0:
        raise DomainError("VAT needs steps >= 1 and positive epsilon, xi")
    rng = rng or Rng(0)
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    saved = {k: g.copy() for k, g in head.grads.items()}
    d, _ = _normalize_rows(rng.normal(h.shape))
    y0 = head.forward(h)
    for _ in range(steps):
        y1 = head.forward(h + xi * d)
        grad = head.backward(2.0 * (y1 - y0)) * xi
        new_d, norms = _normalize_rows(grad)
        ok = norms > 0
        d[ok] = new_d[ok]
    head.reset()
    for k, g in head.grads.items():
        g[...] = saved[k]
    return epsilon * d


def total_loss(model, xs, y, cfg, rng=None):
    """Forward and backward for one batch; gradients accumulate into ``model``.

    Loss is ``L1(f(h), y) + vat_lambda * mean((f(h + r_adv) - f(h))^2)`` where
    ``r_adv`` is held constant.  Returns ``(total, l1, consistency)``.
    """
    y = np.asarray(y, dtype=np.float64)
    B = y.shape[0]
    head = model.head
    h = model.fuse(xs)
    pred = head.forward(h)[:, 0]
    l1 = float(np.mean(np.abs(pred - y)))
    d_clean = np.sign(pred - y) / B
    consistency = 0.0
    dh_adv = None
    if cfg.vat_enabled:
        r_adv = vat_perturbation(head, h, cfg.vat_epsilon, cfg.vat_xi, cfg.vat_steps, rng)
        pred_adv = head.forward(h + r_adv)[:, 0]
        diff = pred_adv - pred
        consistency = float(np.mean(diff * diff))
        dh_adv = head.backward((2.0 * cfg.vat_lambda * diff / B)[:, None])
        d_clean = d_clean - 2.0 * cfg.vat_lambda * diff / B
        head.forward(h)
    dh = head.backward(d_clean[:, None])
    if dh_adv is not None:
        dh = dh + dh_adv
    model.fuse_backward(dh)
    total = l1 + cfg.vat_lambda * consistency if cfg.vat_enabled else l1
    return total, l1, consistency


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adamw_step(params, grads, state, lr, weight_decay, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place AdamW update with decoupled weight decay."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p *= 1.0 - lr * weight_decay
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


def cosine_lr(step, total_steps, lr_main, lr_final):
    if total_steps < 1 or not 0 <= step <= total_steps:
        raise DomainError(f"step {step} outside [0, {total_steps}]")
    if step == total_steps:
        return lr_final
    return lr_final + 0.5 * (lr_main - lr_final) * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class TrainResult:
    model: AGFNModel
    history: list
    best_epoch: int
    best_val_mae: float


def _validation_mae(model, xs, y):
    pred, _ = model.predict(xs)
    return float(np.mean(np.abs(pred - y)))


def train(train_set, val_set, model_cfg, cfg):
    """Train with early stopping on validation MAE; returns the best-epoch model."""
    cfg.validate()
    if len(train_set) == 0 or len(val_set) == 0:
        raise DomainError("training and validation splits must be non-empty")
    model = AGFNModel(model_cfg, Rng(derive_seed(cfg.seed, STREAM_INIT)))
    shuffle_rng = Rng(derive_seed(cfg.seed, STREAM_SHUFFLE))
    vat_rng = Rng(derive_seed(cfg.seed, STREAM_VAT))
    xs, y = train_set.arrays()
    vxs, vy = val_set.arrays()
    n = y.shape[0]
    per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.max_epochs * per_epoch
    params = model.params
    opt = OptimizerState()
    history = []
    best = (math.inf, 0, None)
    since_best = 0
    step = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            model.zero_grad()
            loss, _, _ = total_loss(model, tuple(x[idx] for x in xs), y[idx], cfg, vat_rng)
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, step {step}")
            grads = model.grads
            global_norm_clip([grads[k] for k in params], cfg.clip_norm)
            lr = cosine_lr(step, total_steps, cfg.lr_main, cfg.lr_final)
            adamw_step(params, grads, opt, lr, cfg.weight_decay)
            step += 1
            losses.append(loss)
        val_mae = _validation_mae(model, vxs, vy)
        if not math.isfinite(val_mae):
            raise DivergenceError(f"non-finite validation MAE at epoch {epoch}")
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "val_mae": val_mae, "lr": lr})
        log.debug("epoch %d loss %.6f val_mae %.6f", epoch, history[-1]["train_loss"], val_mae)
        if val_mae < best[0]:
            best = (val_mae, epoch, model.state_dict())
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    model.load_state_dict(best[2])
    return TrainResult(model=model, history=history, best_epoch=best[1], best_val_mae=best[0])
