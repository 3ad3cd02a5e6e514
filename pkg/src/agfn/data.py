"""Synthetic multimodal data, the feature-file format, and 70/10/20 splits.

Feature file layout::

    #agfn-features v1 dT=<int> dA=<int> dV=<int> seq=<int>
    sample_id,label,<seq*dT text>,<seq*dA audio>,<seq*dV visual>

Values are written with 12 significant digits, UTF-8, ``\\n`` line endings.
"""

import re
from dataclasses import dataclass, field

import numpy as np

from .encoders import MODALITIES, ModalityBundle
from .errors import DomainError, ParseError
from .numerics import Rng

HEADER_RE = re.compile(r"^#agfn-features v1 dT=(\d+) dA=(\d+) dV=(\d+) seq=(\d+)$")


@dataclass
class SyntheticSpec:
    n: int = 1000
    seq_len: int = 4
    d_T: int = 16
    d_A: int = 16
    d_V: int = 16
    noise_std: tuple = (0.5, 0.5, 0.5)
    conflict_prob: float = 0.0
    missing_prob: float = 0.0
    seed: int = 1111

    def validate(self):
        if self.n < 1 or self.seq_len < 1:
            raise DomainError("n and seq_len must be >= 1")
        if min(self.d_T, self.d_A, self.d_V) < 2:
            raise DomainError("modality dimensions must be >= 2")
        if len(self.noise_std) != 3 or min(self.noise_std) < 0:
            raise DomainError("noise_std needs three nonnegative values")
        for p in (self.conflict_prob, self.missing_prob):
            if not 0.0 <= p <= 1.0:
                raise DomainError(f"probability {p} outside [0, 1]")


@dataclass
class Dataset:
    samples: list
    provenance: object = None
    directions: tuple = field(default=None, repr=False)

    def __len__(self):
        return len(self.samples)

    @property
    def dims(self):
        s = self.samples[0]
        return (s.text.shape[1], s.audio.shape[1], s.visual.shape[1])

    @property
    def seq_len(self):
        return self.samples[0].text.shape[0]

    @property
    def ids(self):
        return [s.sample_id for s in self.samples]

    def arrays(self):
        """``((X_T, X_A, X_V), y)`` with X_m of shape (n, L, d_m)."""
        xs = tuple(np.stack([s.sequences[i] for s in self.samples]) for i in range(3))
        y = np.array([s.label for s in self.samples], dtype=np.float64)
        return xs, y

    def subset(self, idx, tag=None):
        return Dataset([self.samples[i] for i in idx], provenance=tag or self.provenance,
                       directions=self.directions)

    def event_counts(self):
        conflict = sum(1 for s in self.samples if s.meta.get("conflict") is not None)
        missing = sum(1 for s in self.samples if s.meta.get("missing") is not None)
        return conflict, missing


def generate(spec):
    """Draw a dataset whose modalities all encode the label along a hidden direction.

    Per sample: label ``s ~ U[-3, 3]``; every row of modality m is
    ``s * u_m + N(0, noise_std_m)``.  With ``conflict_prob`` one modality uses
    ``-s``; otherwise, with ``missing_prob``, one modality is zeroed.  The draw
    sequence per sample is fixed regardless of which events fire.
    """
    spec.validate()
    rng = Rng(spec.seed)
    dims = (spec.d_T, spec.d_A, spec.d_V)
    directions = tuple(rng.unit_vector(d) for d in dims)
    samples = []
    width = len(str(spec.n - 1))
    for i in range(spec.n):
        s = rng.uniform(-3.0, 3.0)
        r_conflict, m_conflict = rng.random(), rng.integers(3)
        r_missing, m_missing = rng.random(), rng.integers(3)
        conflict = m_conflict if r_conflict < spec.conflict_prob else None
        missing = None
        if conflict is None and r_missing < spec.missing_prob:
            missing = m_missing
        seqs = []
        for m, (d, u, sd) in enumerate(zip(dims, directions, spec.noise_std)):
            noise = rng.normal((spec.seq_len, d))
            signal = -s if m == conflict else s
            seq = signal * u[None, :] + sd * noise
            if m == missing:
                seq = np.zeros_like(seq)
            seqs.append(seq)
        meta = {"conflict": None if conflict is None else MODALITIES[conflict],
                "missing": None if missing is None else MODALITIES[missing]}
        samples.append(ModalityBundle(seqs[0], seqs[1], seqs[2], float(s), f"s{i:0{width}d}", meta))
    return Dataset(samples, provenance=spec, directions=directions)


def split(ds, seed):
    """Seeded shuffle, then contiguous 70/10/20 train/val/test partition."""
    n = len(ds)
    if n < 10:
        raise DomainError(f"need at least 10 samples to split, got {n}")
    order = Rng(seed).permutation(n)
    n_train = (7 * n) // 10
    n_val = n // 10
    return (ds.subset(order[:n_train], "train"),
            ds.subset(order[n_train:n_train + n_val], "val"),
            ds.subset(order[n_train + n_val:], "test"))


def _fmt(x):
    return f"{x:.12g}"


def save_csv(ds, path):
    dT, dA, dV = ds.dims
    lines = [f"#agfn-features v1 dT={dT} dA={dA} dV={dV} seq={ds.seq_len}"]
    for s in ds.samples:
        values = np.concatenate([seq.reshape(-1) for seq in s.sequences])
        lines.append(",".join([s.sample_id, _fmt(s.label)] + [_fmt(v) for v in values]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_csv(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file", 1)
    m = HEADER_RE.match(lines[0])
    if not m:
        raise ParseError(f"malformed header {lines[0]!r}", 1)
    dT, dA, dV, seq = (int(g) for g in m.groups())
    if min(dT, dA, dV, seq) < 1:
        raise ParseError("header dimensions must be positive", 1)
    expected = 2 + seq * (dT + dA + dV)
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != expected:
            raise ParseError(f"expected {expected} fields, got {len(fields)}", lineno)
        try:
            label = float(fields[1])
            values = np.array([float(v) for v in fields[2:]], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"bad number: {exc}", lineno) from None
        if not np.all(np.isfinite(values)) or not np.isfinite(label):
            raise ParseError("non-finite value", lineno)
        if not -3.0 <= label <= 3.0:
            raise ParseError(f"label {label} outside [-3, 3]", lineno)
        a, b = seq * dT, seq * (dT + dA)
        samples.append(ModalityBundle(values[:a].reshape(seq, dT), values[a:b].reshape(seq, dA),
                                      values[b:].reshape(seq, dV), label, fields[0]))
    if not samples:
        raise ParseError("no data rows", 2)
    return Dataset(samples, provenance=str(path))
