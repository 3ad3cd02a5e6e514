"""Dense float64 arithmetic, a portable PRNG and the statistical primitives.

Matrices are plain ``numpy.ndarray`` objects of dtype float64.  The helpers
here add the shape and finiteness checks the rest of the package relies on.
"""

import math

import numpy as np

from .errors import DomainError, ShapeError

_MASK64 = (1 << 64) - 1


def as_matrix(a):
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def _check_finite(a, what="result"):
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{what} contains non-finite entries")
    return a


def matmul(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return _check_finite(a @ b)


def softmax(v, axis=-1):
    """Max-shifted softmax along ``axis``; a 1-D input gives a 1-D output."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0 or v.shape[axis] == 0:
        raise DomainError("softmax of an empty vector")
    _check_finite(v, "softmax input")
    e = np.exp(v - v.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(v, axis=-1):
    v = np.asarray(v, dtype=np.float64)
    shifted = v - v.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def sigmoid(v):
    """Elementwise logistic function that never overflows."""
    v = np.asarray(v, dtype=np.float64)
    _check_finite(v, "sigmoid input")
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def pearson(x, y):
    """Sample Pearson correlation; 0.0 when either input has zero variance."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DomainError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise DomainError("pearson needs at least two observations")
    # Test constancy directly: mean() of a constant vector can be off by one ulp.
    if np.all(x == x[0]) or np.all(y == y[0]):
        return 0.0
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def global_norm(grads):
    return math.sqrt(sum(float(np.sum(np.square(g))) for g in grads))


def global_norm_clip(grads, max_norm):
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``.

    Returns ``(grads, scale)`` where ``scale`` is 1.0 when no clipping happened.
    """
    if not max_norm > 0:
        raise DomainError("max_norm must be positive")
    g = global_norm(grads)
    if g <= max_norm:
        return grads, 1.0
    scale = max_norm / g
    for arr in grads:
        arr *= scale
    return grads, scale


def splitmix64(state):
    """One SplitMix64 step: returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class Rng:
    """xoshiro256++ generator seeded through SplitMix64.

    Draw sequences depend only on the 64-bit seed, so they are identical on
    every platform.  One instance per stream; never share across threads.
    """

    def __init__(self, seed):
        sm = int(seed) & _MASK64
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self.s = s

    @classmethod
    def from_state(cls, state):
        rng = cls.__new__(cls)
        if len(state) != 4 or not any(state):
            raise DomainError("xoshiro256++ state must be four words, not all zero")
        rng.s = [int(w) & _MASK64 for w in state]
        return rng

    def next_u64(self):
        s0, s1, s2, s3 = self.s
        x = (s0 + s3) & _MASK64
        result = ((((x << 23) | (x >> 41)) & _MASK64) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
        self.s = [s0, s1, s2, s3]
        return result

    def u64_list(self, n):
        s0, s1, s2, s3 = self.s
        out = [0] * n
        m = _MASK64
        for i in range(n):
            x = (s0 + s3) & m
            out[i] = ((((x << 23) | (x >> 41)) & m) + s0) & m
            t = (s1 << 17) & m
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & m
        self.s = [s0, s1, s2, s3]
        return out

    def random(self, size=None):
        """Uniform doubles in [0, 1) built from the top 53 bits."""
        if size is None:
            return (self.next_u64() >> 11) * 2.0**-53
        n = int(np.prod(size))
        bits = np.array([u >> 11 for u in self.u64_list(n)], dtype=np.float64)
        return (bits * 2.0**-53).reshape(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return low + (high - low) * self.random(size)

    def normal(self, size=None, loc=0.0, scale=1.0):
        """Gaussian draws by Box-Muller; each pair of uniforms yields two normals."""
        n = 1 if size is None else int(np.prod(size))
        pairs = (n + 1) // 2
        u = self.random(2 * pairs)
        u1 = 1.0 - u[0::2]
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        z = loc + scale * z[:n]
        return float(z[0]) if size is None else z.reshape(size)

    def integers(self, n):
        """Uniform integer in [0, n) by multiply-shift."""
        if n < 1:
            raise DomainError("integers() needs n >= 1")
        return (self.next_u64() * n) >> 64

    def permutation(self, n):
        """Fisher-Yates shuffle of range(n)."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.integers(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return np.array(idx, dtype=np.int64)

    def unit_vector(self, d):
        v = self.normal(d)
        norm = np.linalg.norm(v)
        while norm == 0.0:
            v = self.normal(d)
            norm = np.linalg.norm(v)
        return v / norm


def derive_seed(seed, stream):
    """Independent 64-bit seed for a named sub-stream of ``seed``."""
    _, out = splitmix64((int(seed) ^ (0xA5A5A5A5 * (int(stream) + 1))) & _MASK64)
    return out
