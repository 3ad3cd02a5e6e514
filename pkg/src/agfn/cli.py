"""Command-line entry point: generate, train, evaluate, ablate, analyze, grad-check.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
"""

import argparse
import logging
import sys

import numpy as np

from . import data as data_mod
from .config import ExperimentConfig
from .errors import ConfigError, DivergenceError, DomainError, ParseError, ShapeError
from .experiments import run_arm
from .fusion import MODES
from .gradcheck import format_report, run_grad_checks
from .metrics import MetricsReport, high_error_mask, psc
from .model import AGFNModel
from .training import train
from .tsne import tsne

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("agfn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load_config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.defaults()
    if getattr(args, "seed", None) is not None:
        cfg.set("seed", args.seed)
    return cfg


def _require(value, what):
    if not value:
        raise ConfigError(f"missing {what}")
    return value


def _select(ds, which, seed):
    if which == "all":
        return ds
    tr, va, te = data_mod.split(ds, seed)
    return {"train": tr, "val": va, "test": te}[which]


def _load_model(path):
    try:
        return AGFNModel.load(path)
    except OSError as exc:
        raise ParseError(f"cannot read model {path}: {exc}") from None


def _check_dims(model, ds):
    if tuple(ds.dims) != model.cfg.dims:
        raise ShapeError(f"data widths {ds.dims} do not match model widths {model.cfg.dims}")


def cmd_generate(args):
    cfg = _load_config(args)
    out = _require(args.out or cfg["paths.out"], "--out")
    ds = data_mod.generate(cfg.synthetic_spec())
    data_mod.save_csv(ds, out)
    conflicts, missing = ds.event_counts()
    print(f"samples={len(ds)} conflicts={conflicts} missing={missing}")
    return EXIT_OK


def cmd_train(args):
    cfg = _load_config(args)
    out = _require(args.out or cfg["paths.model"], "--out")
    ds = data_mod.load_csv(_require(args.data or cfg["paths.data"], "--data"))
    tr, va, _ = data_mod.split(ds, cfg["seed"])
    result = train(tr, va, cfg.model_config(ds.dims), cfg.train_config())
    meta = {"seed": cfg["seed"], "config_hash": cfg.config_hash, "best_epoch": result.best_epoch}
    result.model.save(out, meta)
    xs, y = va.arrays()
    pred, _ = result.model.predict(xs)
    report = MetricsReport.compute(pred, y, cfg["seed"], cfg.config_hash).to_text()
    _write(out + ".report", report)
    sys.stdout.write(report)
    return EXIT_OK


def cmd_evaluate(args):
    model, meta = _load_model(_require(args.model, "--model"))
    ds = data_mod.load_csv(_require(args.data, "--data"))
    _check_dims(model, ds)
    seed = int(meta.get("seed", 0))
    part = _select(ds, args.split, seed)
    xs, y = part.arrays()
    pred, _ = model.predict(xs)
    report = MetricsReport.compute(pred, y, seed, meta.get("config_hash", "")).to_text()
    if args.out:
        _write(args.out, report)
    sys.stdout.write(report)
    return EXIT_OK


def cmd_ablate(args):
    cfg = _load_config(args)
    out = _require(args.out or cfg["paths.out"], "--out")
    seeds = cfg["ablate.seeds"]
    if args.seeds:
        cfg.set("ablate.seeds", args.seeds)
        seeds = cfg["ablate.seeds"]
    data_path = args.data or cfg["paths.data"]
    shared = data_mod.load_csv(data_path) if data_path else None
    lines = ["mode,seed,acc2,f1,acc7,mae,config_hash"]
    by_mode = {m: [] for m in MODES}
    for seed in seeds:
        seeded = cfg.with_value("seed", seed)
        ds = shared if shared is not None else data_mod.generate(seeded.synthetic_spec())
        for mode in MODES:
            arm_cfg = seeded.with_value("fusion.mode", mode)
            arm = run_arm(ds, seed, mode, arm_cfg.train_config(), arm_cfg.model_config(ds.dims),
                          arm_cfg.config_hash)
            r = arm.report
            by_mode[mode].append(r)
            lines.append(f"{mode},{seed},{r.acc2:.6f},{r.f1:.6f},{r.acc7:.6f},{r.mae:.6f},"
                         f"{r.config_hash}")
    for mode in MODES:
        rs = by_mode[mode]
        med = [float(np.median([getattr(r, k) for r in rs])) for k in ("acc2", "f1", "acc7", "mae")]
        lines.append(f"{mode},median," + ",".join(f"{v:.6f}" for v in med) + f",{cfg.config_hash}")
    text = "\n".join(lines) + "\n"
    _write(out, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_analyze(args):
    cfg = _load_config(args)
    out = _require(args.out or cfg["paths.out"], "--out")
    model, meta = _load_model(_require(args.model, "--model"))
    ds = data_mod.load_csv(_require(args.data, "--data"))
    _check_dims(model, ds)
    part = _select(ds, args.split, int(meta.get("seed", 0)))
    xs, y = part.arrays()
    pred, feats = model.predict(xs)
    errors = np.abs(pred - y)
    emb = tsne(feats, **cfg.tsne_kwargs())
    value = psc(emb.coords, errors)
    flags = high_error_mask(errors)
    lines = [f"# config_hash={meta.get('config_hash', '')} psc={value:.6f}",
             "sample_id,x,y,error,high_error"]
    for sid, (x0, x1), e, f in zip(part.ids, emb.coords, errors, flags):
        lines.append(f"{sid},{x0:.6f},{x1:.6f},{e:.6f},{int(f)}")
    _write(out, "\n".join(lines) + "\n")
    print(f"psc={value:.6f}")
    return EXIT_OK


def cmd_grad_check(args):
    names = set(args.layers.split(",")) if args.layers else None
    results = run_grad_checks(args.instances, args.seed or 0, args.corrupt_layer, names=names)
    text = format_report(results)
    if args.out:
        _write(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK if all(r.ok for r in results) else EXIT_NUMERIC


def build_parser():
    p = _Parser(prog="agfn", description="Adaptive gated multimodal fusion toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="flat key=value config file")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--out", help="primary output file")
        return sp

    common(sub.add_parser("generate", help="write a synthetic feature file"))
    t = common(sub.add_parser("train", help="train a model on a feature file"))
    t.add_argument("--data")
    e = common(sub.add_parser("evaluate", help="score a model on a feature file"))
    e.add_argument("--model")
    e.add_argument("--data")
    e.add_argument("--split", choices=("all", "train", "val", "test"), default="all")
    a = common(sub.add_parser("ablate", help="train and score all four fusion modes"))
    a.add_argument("--data")
    a.add_argument("--seeds", help="comma-separated seeds")
    z = common(sub.add_parser("analyze", help="t-SNE embedding and PSC of fused features"))
    z.add_argument("--model")
    z.add_argument("--data")
    z.add_argument("--split", choices=("all", "train", "val", "test"), default="test")
    g = common(sub.add_parser("grad-check", help="finite-difference check of every layer"))
    g.add_argument("--instances", type=int, default=100)
    g.add_argument("--layers", help="comma-separated subset of layer names")
    g.add_argument("--corrupt-layer", help=argparse.SUPPRESS)
    return p


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "evaluate": cmd_evaluate,
            "ablate": cmd_ablate, "analyze": cmd_analyze, "grad-check": cmd_grad_check}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"agfn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"agfn: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"agfn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, ShapeError, DomainError, OSError) as exc:
        print(f"agfn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
