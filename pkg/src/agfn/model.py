"""The full network: encoders -> (attention) -> fusion -> prediction head.

Model files are a small text container: a magic line, ``key=value``
architecture lines, then one ``param <name> <shape>`` line per parameter
followed by its row-major values written with 17 significant digits.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .autograd import Composite
from .encoders import MultimodalEncoder
from .errors import ParseError
from .fusion import FusionLayer, PredictionHead
from .numerics import Rng

MAGIC = "#agfn-model v1"


@dataclass
class ModelConfig:
    d_T: int = 16
    d_A: int = 16
    d_V: int = 16
    d: int = 32
    hidden: int = 32
    mode: str = "full"
    tau: float = 1.0
    use_attention: bool = True

    @property
    def dims(self):
        return (self.d_T, self.d_A, self.d_V)


class AGFNModel(Composite):
    def __init__(self, cfg, rng=None):
        super().__init__()
        self.cfg = cfg
        rng = rng if rng is not None else Rng(0)
        self.encoder = self.add_child("encoder", MultimodalEncoder(cfg.dims, cfg.d, cfg.use_attention, rng))
        self.fusion = self.add_child("fusion", FusionLayer(cfg.d, cfg.mode, cfg.tau, rng))
        self.head = self.add_child("head", PredictionHead(cfg.d, cfg.hidden, rng))

    def fuse(self, xs):
        """Fused representation for a batch; caches for ``fuse_backward``."""
        return self.fusion.forward(self.encoder.forward(xs))

    def fuse_backward(self, dh):
        return self.encoder.backward(self.fusion.backward(dh))

    def _forward(self, xs):
        return self.head.forward(self.fuse(xs)), True

    def _backward(self, g, _):
        return self.fuse_backward(self.head.backward(g))

    def predict(self, xs, batch_size=512):
        """Predictions and fused features for a full array set, without caching."""
        n = xs[0].shape[0]
        preds, feats = [], []
        for start in range(0, n, batch_size):
            chunk = tuple(x[start:start + batch_size] for x in xs)
            h = self.fuse(chunk)
            preds.append(self.head.forward(h)[:, 0])
            feats.append(h)
        self.reset()
        if not preds:
            return np.zeros(0), np.zeros((0, self.cfg.d))
        return np.concatenate(preds), np.concatenate(feats)

    def state_dict(self):
        return {k: v.copy() for k, v in self.params.items()}

    def load_state_dict(self, state):
        params = self.params
        for k, v in state.items():
            params[k][...] = v

    def save(self, path, meta=None):
        lines = [MAGIC]
        for k, v in asdict(self.cfg).items():
            lines.append(f"{k}={v}")
        for k, v in (meta or {}).items():
            lines.append(f"meta.{k}={v}")
        for name, p in self.params.items():
            shape = "x".join(str(s) for s in p.shape)
            lines.append(f"param {name} {shape}")
            lines.append(" ".join(f"{x:.17g}" for x in p.reshape(-1)))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        """Returns ``(model, meta)``."""
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
        if not lines or lines[0] != MAGIC:
            raise ParseError("not an AGFN model file", 1)
        fields = {}
        meta = {}
        i = 1
        while i < len(lines) and lines[i] and not lines[i].startswith("param "):
            key, sep, value = lines[i].partition("=")
            if not sep:
                raise ParseError(f"malformed header line {lines[i]!r}", i + 1)
            if key.startswith("meta."):
                meta[key[5:]] = value
            else:
                fields[key] = value
            i += 1
        types = ModelConfig.__annotations__
        kwargs = {}
        for key, value in fields.items():
            if key not in types:
                raise ParseError(f"unknown model field {key!r}")
            t = types[key]
            kwargs[key] = (value == "True") if t is bool else t(value)
        model = cls(ModelConfig(**kwargs))
        params = model.params
        seen = set()
        while i < len(lines) and lines[i]:
            head = lines[i].split()
            if len(head) != 3 or head[0] != "param":
                raise ParseError(f"expected a param line, got {lines[i]!r}", i + 1)
            name = head[1]
            shape = tuple(int(s) for s in head[2].split("x") if s)
            if name not in params or params[name].shape != shape:
                raise ParseError(f"parameter {name} {shape} does not fit the architecture", i + 1)
            values = np.array([float(x) for x in lines[i + 1].split()], dtype=np.float64)
            if values.size != params[name].size:
                raise ParseError(f"parameter {name} has {values.size} values", i + 2)
            params[name][...] = values.reshape(shape)
            seen.add(name)
            i += 2
        missing = set(params) - seen
        if missing:
            raise ParseError(f"model file lacks parameters {sorted(missing)}")
        return model, meta
