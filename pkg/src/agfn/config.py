"""Flat ``key=value`` experiment configuration.

Lines are ``dotted.key=value``; ``#`` starts a comment.  Unknown keys are
rejected and every key has a default, so a resolved config always carries
the full key set.  The config hash covers every key except ``paths.*``.
"""

import hashlib
from dataclasses import dataclass

from .data import SyntheticSpec
from .errors import ConfigError
from .fusion import MODES
from .model import ModelConfig
from .training import TrainConfig


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _triple(text):
    parts = tuple(float(p) for p in text.split(","))
    if len(parts) != 3:
        raise ValueError("expected three comma-separated numbers")
    return parts


def _mode(text):
    if text not in MODES:
        raise ValueError(f"expected one of {MODES}")
    return text


def _seeds(text):
    seeds = tuple(int(p) for p in text.split(",") if p.strip())
    if not seeds:
        raise ValueError("need at least one seed")
    return seeds


# key -> (parser, default)
SCHEMA = {
    "seed": (int, 1111),
    "data.n": (int, 1000),
    "data.seq_len": (int, 4),
    "data.d_T": (int, 16),
    "data.d_A": (int, 16),
    "data.d_V": (int, 16),
    "data.noise_std": (_triple, (0.5, 0.5, 0.5)),
    "data.conflict_prob": (float, 0.0),
    "data.missing_prob": (float, 0.0),
    "model.d": (int, 32),
    "model.hidden": (int, 32),
    "model.use_attention": (_bool, True),
    "fusion.mode": (_mode, "full"),
    "fusion.tau": (float, 1.0),
    "train.lr_main": (float, 1e-4),
    "train.lr_final": (float, 1e-6),
    "train.batch_size": (int, 32),
    "train.weight_decay": (float, 0.01),
    "train.max_epochs": (int, 100),
    "train.patience": (int, 8),
    "train.clip_norm": (float, 1.0),
    "vat.enabled": (_bool, True),
    "vat.lambda": (float, 0.1),
    "vat.steps": (int, 5),
    "vat.epsilon": (float, 1.0),
    "vat.xi": (float, 1e-6),
    "tsne.perplexity": (float, 30.0),
    "tsne.lr": (float, 200.0),
    "tsne.early_exaggeration": (float, 12.0),
    "tsne.iters": (int, 2000),
    "ablate.seeds": (_seeds, (1111, 1112, 1113)),
    "paths.data": (str, ""),
    "paths.model": (str, ""),
    "paths.out": (str, ""),
}


def _canonical(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_canonical(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ExperimentConfig:
    values: dict

    @classmethod
    def defaults(cls):
        return cls({k: default for k, (_, default) in SCHEMA.items()})

    @classmethod
    def parse(cls, text, source="<config>"):
        cfg = cls.defaults()
        seen = set()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
            if key not in SCHEMA:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            if key in seen:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
            seen.add(key)
            cfg.set(key, value, f"{source}:{lineno}")
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.parse(text, str(path))

    def set(self, key, value, where="override"):
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        parser = SCHEMA[key][0]
        try:
            self.values[key] = parser(value) if isinstance(value, str) else value
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key}: {exc}") from None
        return self

    def __getitem__(self, key):
        return self.values[key]

    def with_value(self, key, value):
        return ExperimentConfig(dict(self.values)).set(key, value)

    def canonical_lines(self, include_paths=False):
        return [f"{k}={_canonical(self.values[k])}" for k in sorted(self.values)
                if include_paths or not k.startswith("paths.")]

    def to_text(self):
        return "\n".join(self.canonical_lines(include_paths=True)) + "\n"

    @property
    def config_hash(self):
        blob = "\n".join(self.canonical_lines()).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def synthetic_spec(self):
        v = self.values
        return SyntheticSpec(n=v["data.n"], seq_len=v["data.seq_len"], d_T=v["data.d_T"],
                             d_A=v["data.d_A"], d_V=v["data.d_V"], noise_std=v["data.noise_std"],
                             conflict_prob=v["data.conflict_prob"],
                             missing_prob=v["data.missing_prob"], seed=v["seed"])

    def model_config(self, dims=None):
        v = self.values
        dT, dA, dV = dims or (v["data.d_T"], v["data.d_A"], v["data.d_V"])
        return ModelConfig(d_T=dT, d_A=dA, d_V=dV, d=v["model.d"], hidden=v["model.hidden"],
                           mode=v["fusion.mode"], tau=v["fusion.tau"],
                           use_attention=v["model.use_attention"])

    def train_config(self):
        v = self.values
        return TrainConfig(lr_main=v["train.lr_main"], lr_final=v["train.lr_final"],
                           batch_size=v["train.batch_size"], weight_decay=v["train.weight_decay"],
                           vat_lambda=v["vat.lambda"], vat_steps=v["vat.steps"],
                           vat_epsilon=v["vat.epsilon"], vat_xi=v["vat.xi"],
                           vat_enabled=v["vat.enabled"], clip_norm=v["train.clip_norm"],
                           max_epochs=v["train.max_epochs"], patience=v["train.patience"],
                           seed=v["seed"])

    def tsne_kwargs(self):
        v = self.values
        return dict(perplexity=v["tsne.perplexity"], lr=v["tsne.lr"],
                    early_exaggeration=v["tsne.early_exaggeration"], iters=v["tsne.iters"])
