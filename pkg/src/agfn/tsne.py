"""Exact O(n^2) t-SNE for small feature sets.

Affinities use a per-point Gaussian bandwidth found by bisection on
log-precision so every conditional distribution hits the target perplexity.
Optimisation is plain gradient descent with momentum and per-coordinate
gains, with early exaggeration for the first 250 iterations.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

EXAGGERATION_ITERS = 250
MOMENTUM_EARLY, MOMENTUM_LATE = 0.5, 0.8
MIN_GAIN = 0.01
KL_EVERY = 50
_P_FLOOR = 1e-12


@dataclass
class Embedding2D:
    coords: np.ndarray
    kl_history: list = field(default_factory=list)
    perplexities: np.ndarray = None


def squared_distances(X):
    # Explicit differences rather than the Gram-matrix identity: identical rows
    # then give bit-identical distance rows, so duplicates stay coincident.
    D = np.zeros((X.shape[0], X.shape[0]))
    for k in range(X.shape[1]):
        diff = X[:, k, None] - X[None, :, k]
        D += diff * diff
    return D


def _row_entropy(Dn, beta):
    """Entropy (nats) and normalized rows of exp(-beta * Dn); Dn has +inf on the diagonal."""
    W = np.exp(-beta[:, None] * Dn)
    # Sorted row sums: points with identical neighbourhoods get bit-identical rows.
    S = np.sort(W, axis=1).sum(axis=1)
    P = W / S[:, None]
    with np.errstate(invalid="ignore"):
        terms = np.where(P > 0, Dn * P, 0.0)
    H = np.log(S) + beta * np.sort(terms, axis=1).sum(axis=1)
    return H, P


def conditional_affinities(X, perplexity, max_bisections=60, tol=1e-4):
    """Row-stochastic P(j|i) matrix and the achieved per-row perplexities."""
    D = squared_distances(np.asarray(X, dtype=np.float64))
    n = D.shape[0]
    off = ~np.eye(n, dtype=bool)
    Dn = np.where(off, D, np.inf)
    # Shift by the nearest-neighbour distance and rescale by the mean; both
    # leave the achievable perplexities unchanged and keep exp() in range.
    dmin = Dn.min(axis=1)
    Dn = Dn - dmin[:, None]
    scale = np.array([row[np.isfinite(row)].mean() for row in Dn])
    scale[scale <= 0] = 1.0
    Dn = Dn / scale[:, None]
    target = np.log(perplexity)
    lo = np.full(n, -40.0)
    hi = np.full(n, 40.0)
    log_beta = np.zeros(n)
    for _ in range(max_bisections):
        H, _ = _row_entropy(Dn, np.exp(log_beta))
        if np.all(np.abs(np.exp(H) - perplexity) < tol):
            break
        too_flat = H > target
        lo = np.where(too_flat, log_beta, lo)
        hi = np.where(too_flat, hi, log_beta)
        log_beta = 0.5 * (lo + hi)
    H, P = _row_entropy(Dn, np.exp(log_beta))
    return P, np.exp(H)


def joint_affinities(P_cond):
    n = P_cond.shape[0]
    P = (P_cond + P_cond.T) / (2.0 * n)
    return np.maximum(P, _P_FLOOR)


def pca_init(X, scale=1e-4):
    Xc = X - X.mean(axis=0)
    U, S, Vt = np.linalg.svd(Xc, full_matrices=False)
    comps = Vt[:2]
    # Deterministic sign: largest-magnitude loading of each component positive.
    signs = np.sign(comps[np.arange(comps.shape[0]), np.argmax(np.abs(comps), axis=1)])
    signs[signs == 0] = 1.0
    Y = Xc @ (comps * signs[:, None]).T
    if Y.shape[1] < 2:
        Y = np.hstack([Y, np.zeros((Y.shape[0], 2 - Y.shape[1]))])
    std = Y[:, 0].std()
    return Y / std * scale if std > 0 else Y


def _q_matrix(Y):
    num = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    return num, np.maximum(num / num.sum(), _P_FLOOR)


def kl_divergence(P, Y):
    _, Q = _q_matrix(Y)
    mask = ~np.eye(P.shape[0], dtype=bool)
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def tsne(features, perplexity=30.0, lr=200.0, early_exaggeration=12.0, iters=2000, init="pca"):
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise DomainError(f"features must be n x d, got shape {X.shape}")
    n = X.shape[0]
    if n < 5:
        raise DomainError(f"t-SNE needs at least 5 points, got {n}")
    if perplexity >= n - 1:
        raise DomainError(f"perplexity {perplexity} must be below n - 1 = {n - 1}")
    if init != "pca":
        raise DomainError(f"unsupported init {init!r}")
    P_cond, perps = conditional_affinities(X, perplexity)
    P = joint_affinities(P_cond)
    Y = pca_init(X)
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    history = [(0, kl_divergence(P, Y))]
    for it in range(iters):
        exaggerate = it < EXAGGERATION_ITERS
        momentum = MOMENTUM_EARLY if exaggerate else MOMENTUM_LATE
        Pe = P * early_exaggeration if exaggerate else P
        num, Q = _q_matrix(Y)
        W = (Pe - Q) * num
        grad = np.empty_like(Y)
        for k in range(Y.shape[1]):
            grad[:, k] = 4.0 * np.sum(W * (Y[:, k, None] - Y[None, :, k]), axis=1)
        gains = np.where(update * grad < 0.0, gains + 0.2, gains * 0.8)
        np.maximum(gains, MIN_GAIN, out=gains)
        update = momentum * update - lr * gains * grad
        Y = Y + update
        if (it + 1) % KL_EVERY == 0 or it + 1 == iters:
            history.append((it + 1, kl_divergence(P, Y)))
    return Embedding2D(coords=Y, kl_history=history, perplexities=perps)
