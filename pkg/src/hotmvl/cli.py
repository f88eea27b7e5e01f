"""
Command-line front end.

    hotmvl synth   --out DIR [generator flags]
    hotmvl train   DATASET --out DIR [--mode unsupervised|semisupervised] [config flags]
    hotmvl eval    DATASET --checkpoint FILE --out DIR [--split test|valid|train]
    hotmvl ablate  DATASET --out DIR [--trials T] [config flags]
    hotmvl export-plan PLAN --out DIR [--dataset DATASET]

Training settings resolve as defaults < ``--config`` file < flags.  The config
file is flat ``key = value`` text using :class:`TrainConfig` field names.
Every run writes ``run.json`` next to its outputs; it records the exact
argument list, so ``replay`` reproduces the run.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import hashlib
import json
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .data import SplitSpec, SynthSpec, generate_synthetic, load_manifest, split_and_unalign, unalign, write_manifest
from .errors import DataError, NumericalError
from .eval import accuracy, export_plan_heatmap, run_ablation
from .ot import TransportPlan
from .train import (
    TrainConfig,
    fit_classifier,
    load_model,
    predict,
    save_model,
    train_semisupervised,
    train_unsupervised,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- config -------------------------------------------------------------------

_TRAIN_FIELDS = {f.name: f for f in fields(TrainConfig)}


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_hidden(text):
    text = text.strip().strip("()[]")
    return tuple(int(t) for t in text.replace(",", " ").split())


def _coerce(name, text):
    default = _TRAIN_FIELDS[name].default
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, tuple):
        return _parse_hidden(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text.strip()


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; unknown keys and bad values are usage errors."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from None
    out = {}
    for i, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{i}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TRAIN_FIELDS:
            raise UsageError(f"{path}:{i}: unknown config key {key!r}")
        try:
            out[key] = _coerce(key, value)
        except ValueError as e:
            raise UsageError(f"{path}:{i}: bad value for {key}: {e}") from None
    return out


def format_config(values: dict) -> str:
    lines = []
    for k, v in values.items():
        if isinstance(v, (list, tuple)):
            v = ",".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def resolve_config(args) -> TrainConfig:
    values = read_config(args.config) if args.config else {}
    for name in _TRAIN_FIELDS:
        flag = getattr(args, f"cfg_{name}", None)
        if flag is not None:
            values[name] = flag
    if args.seed is not None:
        values["seed"] = args.seed
    try:
        return TrainConfig.from_dict(values)
    except ValueError as e:
        raise UsageError(str(e)) from None


# -- shared helpers -----------------------------------------------------------


def _prepare_out(path, force):
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise UsageError(f"--out {out} exists and is not a directory")
    if out.exists() and any(out.iterdir()) and not force:
        raise UsageError(f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _provenance(dataset_dir):
    p = Path(dataset_dir)
    manifest = p / "manifest.json" if p.is_dir() else p
    info = {"path": str(p)}
    if manifest.exists():
        info["manifest_sha256"] = _digest(manifest)
    return info


def _write_run_manifest(out, args, argv, config, provenance, outputs, t0):
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "config": config,
        "dataset": provenance,
        "seed": args.seed if config is None else config.get("seed", args.seed),
        "outputs": {k: str(v) for k, v in outputs.items()},
        "wall_clock": time.perf_counter() - t0,
        "version": __version__,
    }
    (out / "run.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


# -- subcommands --------------------------------------------------------------


def _synth_spec(args) -> SynthSpec:
    kw = {}
    if args.assignment is not None:
        kw["assignment"] = tuple(int(t) for t in args.assignment.replace(",", " ").split())
    for name in ("n_samples", "n_classes", "latent_dim", "view_dim", "class_sep", "code_noise", "noise"):
        v = getattr(args, name)
        if v is not None:
            kw[name] = v
    if args.seed is not None:
        kw["seed"] = args.seed
    try:
        return SynthSpec(**kw)
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_synth(args, argv):
    spec = _synth_spec(args)
    resolved = {k: (list(v) if isinstance(v, tuple) else v) for k, v in spec.__dict__.items()}
    if args.print_config:
        print(format_config(resolved), end="")
        return EXIT_OK
    t0 = time.perf_counter()
    out = _prepare_out(args.out, args.force)
    ds = generate_synthetic(spec)
    manifest = write_manifest(ds, out, name="synthetic")
    (out / "generator.json").write_text(json.dumps(resolved, indent=2) + "\n")
    _write_run_manifest(out, args, argv, resolved, {"generator": resolved}, {"manifest": manifest}, t0)
    print(f"wrote {ds.n_views} views x {ds.n_samples} samples to {out}")
    return EXIT_OK


def cmd_train(args, argv):
    config = resolve_config(args)
    if args.print_config:
        print(format_config(config.to_dict()), end="")
        return EXIT_OK
    t0 = time.perf_counter()
    ds = load_manifest(args.dataset)
    out = _prepare_out(args.out, args.force)
    split = None
    if args.mode == "semisupervised":
        if ds.labels is None:
            raise DataError(f"{args.dataset}: semi-supervised training needs labels, but the dataset has none")
        split = split_and_unalign(ds, SplitSpec(seed=config.seed))
        model, report = train_semisupervised(split, config)
    elif ds.labels is not None:
        split = split_and_unalign(ds, SplitSpec(seed=config.seed))
        model, report = train_unsupervised(split.train_pool, config, valid=split.valid)
        fit_classifier(model, split.train_labeled_aligned, ds.n_classes, seed=config.seed)
    else:
        model, report = train_unsupervised(unalign(ds, config.seed), config)
    meta = {
        "mode": args.mode,
        "config": config.to_dict(),
        "split_seed": config.seed if split is not None else None,
        "view_names": list(ds.names),
    }
    outputs = {"checkpoint": out / "model.ckpt", "report": out / "report.jsonl"}
    save_model(outputs["checkpoint"], model, meta)
    outputs["report"].write_text(report.to_jsonl())
    (out / "config.txt").write_text(format_config(config.to_dict()))
    if report.final_plan is not None:
        outputs["plan"] = out / "plan.json"
        outputs["plan"].write_text(report.final_plan.to_json() + "\n")
    _write_run_manifest(out, args, argv, config.to_dict(), _provenance(args.dataset), outputs, t0)
    print(f"trained {args.mode} model ({config.regularizer}) in {report.wall_clock:.1f}s -> {out}")
    return EXIT_OK


def cmd_eval(args, argv):
    t0 = time.perf_counter()
    try:
        model, meta = load_model(args.checkpoint)
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"{args.checkpoint}: cannot load checkpoint: {e}") from None
    if model.classifier is None:
        raise DataError(f"{args.checkpoint}: checkpoint has no classifier head")
    ds = load_manifest(args.dataset)
    if ds.labels is None:
        raise DataError(f"{args.dataset}: evaluation needs labels")
    if ds.n_views != model.encoders.n_views:
        raise DataError(f"checkpoint has {model.encoders.n_views} views, dataset has {ds.n_views}")
    for s, (name, d) in enumerate(zip(ds.names, ds.dims)):
        if d != model.encoders.input_dims[s]:
            raise DataError(
                f"view {s} ({name}): checkpoint expects dim {model.encoders.input_dims[s]}, dataset has {d}"
            )
    seed = meta.get("split_seed")
    if args.split == "all" or seed is None:
        part = ds
    else:
        split = split_and_unalign(ds, SplitSpec(seed=seed))
        part = {"test": split.test, "valid": split.valid, "train": split.train_labeled_aligned}[args.split]
    preds = predict(model, part.views)
    result = {
        "checkpoint": str(args.checkpoint),
        "split": args.split if seed is not None else "all",
        "n_samples": int(part.n_samples),
        "accuracy": accuracy(preds, part.labels),
    }
    out = _prepare_out(args.out, args.force)
    path = out / "eval.json"
    path.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    _write_run_manifest(out, args, argv, None, _provenance(args.dataset), {"eval": path}, t0)
    print(f"accuracy {result['accuracy']:.4f} on {result['n_samples']} {result['split']} samples")
    return EXIT_OK


def cmd_ablate(args, argv):
    config = resolve_config(args)
    if args.print_config:
        print(format_config(config.to_dict()), end="")
        return EXIT_OK
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    t0 = time.perf_counter()
    ds = load_manifest(args.dataset)
    if ds.labels is None:
        raise DataError(f"{args.dataset}: ablation needs labels")
    out = _prepare_out(args.out, args.force)
    seeds = [config.seed + i for i in range(args.trials)]
    report = run_ablation(ds, config, seeds=seeds)
    path = out / "ablation.json"
    path.write_text(report.to_json() + "\n")
    _write_run_manifest(out, args, argv, config.to_dict(), _provenance(args.dataset), {"ablation": path}, t0)
    for row in report.rows:
        print(f"{row['removed']:>12s}  {row['mean']:.4f} +/- {row['std']:.4f}")
    return EXIT_OK


def cmd_export_plan(args, argv):
    t0 = time.perf_counter()
    try:
        plan = TransportPlan.from_json(Path(args.plan).read_text())
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"{args.plan}: cannot read plan: {e}") from None
    names = None
    if args.dataset:
        names = load_manifest(args.dataset).names
    if names is None or len(names) != plan.weights.shape[0]:
        names = [f"view{s}" for s in range(plan.weights.shape[0])]
    out = _prepare_out(args.out, args.force)
    csv_path, json_path = export_plan_heatmap(plan, names, out / "plan_heatmap.csv")
    prov = _provenance(args.dataset) if args.dataset else {"plan": str(args.plan)}
    _write_run_manifest(out, args, argv, None, prov, {"csv": csv_path, "json": json_path}, t0)
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _add_globals(p):
    p.add_argument("--seed", type=int, default=None, help="random seed (overrides the config file)")
    p.add_argument("--config", default=None, help="flat key = value training config")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--force", action="store_true", help="write into a non-empty output directory")
    p.add_argument("--print-config", action="store_true", help="print the resolved settings and exit")


def _add_train_flags(p):
    for name, f in _TRAIN_FIELDS.items():
        if name == "seed":
            continue
        flag = "--" + name.replace("_", "-")
        if isinstance(f.default, bool):
            p.add_argument(flag, dest=f"cfg_{name}", type=_parse_bool, default=None, metavar="BOOL")
        elif isinstance(f.default, tuple):
            p.add_argument(flag, dest=f"cfg_{name}", type=_parse_hidden, default=None, metavar="W[,W...]")
        elif name == "regularizer":
            from .regularizers import KINDS
            p.add_argument(flag, dest=f"cfg_{name}", choices=KINDS, default=None)
        else:
            p.add_argument(flag, dest=f"cfg_{name}", type=type(f.default), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hotmvl", description="HOT multi-view representation learning")
    parser.add_argument("--version", action="version", version=f"hotmvl {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a planted-cluster synthetic dataset")
    _add_globals(p)
    p.add_argument("--assignment", default=None, help="planted cluster per view, e.g. 0,0,1,1,2,2 (-1 = noise)")
    p.add_argument("--n-samples", dest="n_samples", type=int, default=None)
    p.add_argument("--n-classes", dest="n_classes", type=int, default=None)
    p.add_argument("--latent-dim", dest="latent_dim", type=int, default=None)
    p.add_argument("--view-dim", dest="view_dim", type=int, default=None)
    p.add_argument("--class-sep", dest="class_sep", type=float, default=None)
    p.add_argument("--code-noise", dest="code_noise", type=float, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train encoders (and classifier) on a dataset")
    _add_globals(p)
    p.add_argument("dataset", help="dataset directory or manifest.json")
    p.add_argument("--mode", choices=("unsupervised", "semisupervised"), default="unsupervised")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy of a checkpoint on a dataset split")
    _add_globals(p)
    p.add_argument("dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("test", "valid", "train", "all"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="retrain with each view removed in turn")
    _add_globals(p)
    p.add_argument("dataset")
    p.add_argument("--trials", type=int, default=1)
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export-plan", help="write a transport plan as a labeled CSV heatmap")
    _add_globals(p)
    p.add_argument("plan", help="plan JSON written by train")
    p.add_argument("--dataset", default=None, help="dataset whose view names label the rows")
    p.set_defaults(func=cmd_export_plan)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand (synth, train, eval, ablate, export-plan)")
        if args.out is None and not getattr(args, "print_config", False):
            raise UsageError(f"{args.command}: --out is required")
        return args.func(args, argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


def replay(run_manifest, out=None, force=True) -> int:
    """Re-run the command recorded in a ``run.json``, optionally into another directory."""
    manifest = json.loads(Path(run_manifest).read_text())
    argv = list(manifest["argv"])
    if out is not None:
        argv = _replace_flag(argv, "--out", str(out))
    if force and "--force" not in argv:
        argv.append("--force")
    return main(argv)


def _replace_flag(argv, flag, value):
    out, skip = [], False
    for i, a in enumerate(argv):
        if skip:
            skip = False
            continue
        if a == flag:
            skip = True
            continue
        if a.startswith(flag + "="):
            continue
        out.append(a)
    return out + [flag, value]


if __name__ == "__main__":
    sys.exit(main())
