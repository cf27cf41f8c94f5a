"""Command-line surface: data generation, clustering, pretraining, probing,
finetuning, evaluation and report plots.

Commands: gen-data, cluster, pretrain, probe, finetune, eval, report.
Every command takes --config (flat key=value file, unknown keys rejected),
with command-line flags overriding file values, and echoes the merged
configuration into <out>/effective_config.txt. Exit codes: 0 success,
1 usage or configuration error, 2 numeric or unexpected runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import pathlib
import sys
from typing import Any, Callable

import numpy as np

from . import evaluate as eval_mod
from . import plots
from .data import (
    AugmentConfig,
    DatasetManifest,
    SyntheticSpec,
    generate_synthetic,
    load_manifest,
    split_manifest,
    write_manifest,
)
from .errors import (
    ConfigurationError,
    GeoSSLError,
    ManifestParseError,
    NumericError,
    ValidationError,
)
from .geocluster import GeoClusterModel, cluster_stats, fit_kmeans_restarts
from .model import EncoderConfig
from .trainer import (
    Checkpoint,
    TrainConfig,
    load_checkpoint,
    pretrain,
    read_trace_csv,
    save_checkpoint,
    write_trace_csv,
)


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors, per the CLI contract."""

    def error(self, message: str):  # noqa: D401
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Option plumbing: one table per command drives argparse, the config file
# schema, merging, and the effective-config echo.
# ---------------------------------------------------------------------------

def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigurationError(f"expected a boolean, got {text!r}")


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("none", "") else int(text)


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("none", "") else float(text)


def _int_list(text: str) -> tuple[int, ...]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if not parts:
        raise ConfigurationError("expected a comma-separated list of integers")
    return tuple(int(p) for p in parts)


@dataclasses.dataclass
class Opt:
    parse: Callable[[str], Any]
    default: Any
    help: str
    required: bool = False


def _path_opt(help_text: str, required: bool = False) -> Opt:
    return Opt(str, None, help_text, required)


COMMON = {
    "config": Opt(str, None, "flat key=value configuration file; flags override it"),
    "seed": Opt(int, 0, "base random seed"),
    "out": Opt(str, None, "output directory (created if missing)", required=True),
}

GEN_DATA_OPTS = {
    **COMMON,
    "areas": Opt(int, 200, "number of areas to generate"),
    "classes": Opt(int, 4, "number of semantic classes"),
    "views": Opt(_opt_int, None, "fixed views per area (overrides min/max)"),
    "min_views": Opt(int, 1, "minimum views per area"),
    "max_views": Opt(int, 3, "maximum views per area"),
    "n_geo": Opt(_opt_int, None, "number of latent geo-centers (default 2*classes)"),
    "rho": Opt(float, 0.9, "probability that class follows the geo-center"),
    "temporal_noise": Opt(float, 0.5, "strength of per-view nuisance variation"),
    "area_offset": Opt(float, 0.06, "per-area constant color shift bound"),
    "coord_noise": Opt(float, 1.0, "coordinate scatter around centers, degrees"),
    "template_contrast": Opt(float, 0.16, "RMS contrast of class templates"),
    "height": Opt(int, 32, "image height"),
    "width": Opt(int, 32, "image width"),
}

CLUSTER_OPTS = {
    **COMMON,
    "manifest": _path_opt("dataset manifest (.jsonl)", required=True),
    "k": Opt(int, None, "number of location clusters", required=True),
    "restarts": Opt(int, 10, "independent k-means restarts, best inertia wins"),
}

PRETRAIN_OPTS = {
    **COMMON,
    "manifest": _path_opt("dataset manifest (.jsonl)", required=True),
    "geo_model": _path_opt("geo-cluster model JSON (required by geo variants)"),
    "resume": _path_opt("checkpoint to resume from"),
    "stop_after_epochs": Opt(_opt_int, None, "pause after this many total epochs"),
    "variant": Opt(str, "moco", "training variant"),
    "epochs": Opt(int, 20, "total training epochs"),
    "batch_size": Opt(int, 64, "areas per optimization step"),
    "lr": Opt(float, 0.05, "peak learning rate"),
    "lr_floor": Opt(float, 0.0, "final learning rate of the cosine schedule"),
    "schedule": Opt(str, "cosine", "learning-rate schedule: cosine or constant"),
    "optimizer_momentum": Opt(float, 0.9, "SGD momentum"),
    "weight_decay": Opt(float, 1e-4, "L2 weight decay"),
    "temperature": Opt(float, 0.2, "contrastive softmax temperature"),
    "alpha": Opt(float, 1.0, "contrastive loss weight"),
    "beta": Opt(float, 1.0, "geo classification loss weight"),
    "ema_momentum": Opt(float, 0.999, "key-encoder EMA momentum"),
    "queue_size": Opt(int, 1024, "negative queue capacity"),
    "k_clusters": Opt(_opt_int, None, "expected geo-cluster count (checked against the model)"),
    "head_input": Opt(str, "projection", "head input: projection or backbone"),
    "embed_dim": Opt(int, 64, "embedding dimensionality"),
    "widths": Opt(_int_list, (32, 64), "conv channel widths, comma separated"),
    "proj_depth": Opt(int, 2, "projection MLP layer count"),
    "activation": Opt(str, "tanh", "activation: tanh or relu"),
    "aug_crop_min": Opt(float, 0.6, "minimum crop area fraction"),
    "aug_crop_max": Opt(float, 1.0, "maximum crop area fraction"),
    "aug_flip_prob": Opt(float, 0.5, "horizontal flip probability"),
    "aug_brightness": Opt(float, 0.2, "brightness jitter bound"),
    "aug_contrast": Opt(float, 0.2, "contrast jitter bound"),
    "aug_saturation": Opt(float, 0.2, "saturation jitter bound"),
    "aug_grayscale_prob": Opt(float, 0.1, "grayscale conversion probability"),
}

PROBE_OPTS = {
    **COMMON,
    "checkpoint": _path_opt("pretraining checkpoint (.npz)", required=True),
    "manifest": _path_opt("labeled manifest providing probe training features", required=True),
    "holdout_fraction": Opt(float, 0.0, "area fraction reserved for eval (probe trains on the rest)"),
    "split_seed": Opt(int, 0, "seed of the train/holdout split"),
    "feature_source": Opt(str, "backbone", "probe features: backbone or projection"),
    "max_iters": Opt(int, 500, "probe gradient-descent iteration budget"),
    "tol": Opt(float, 1e-8, "probe gradient sup-norm stopping tolerance"),
    "l2": Opt(float, 1e-4, "probe ridge penalty"),
    "standardize": Opt(_bool, True, "standardize features before probing"),
}

EVAL_OPTS = {
    **COMMON,
    "checkpoint": _path_opt("pretraining checkpoint (.npz)", required=True),
    "probe": _path_opt("trained linear probe (.npz)", required=True),
    "manifest": _path_opt("labeled manifest to evaluate on", required=True),
    "holdout_fraction": Opt(float, 0.0, "evaluate only the held-out area fraction"),
    "split_seed": Opt(int, 0, "seed of the train/holdout split"),
    "granularity": Opt(str, "temporal", "single or temporal"),
    "rule": Opt(str, "mean", "temporal aggregation rule: mean or max_confidence"),
}

FINETUNE_OPTS = {
    **COMMON,
    "checkpoint": _path_opt("pretraining checkpoint (.npz)", required=True),
    "manifest": _path_opt("labeled manifest", required=True),
    "holdout_fraction": Opt(float, 0.0, "area fraction reserved for eval (0: eval on train)"),
    "split_seed": Opt(int, 0, "seed of the train/holdout split"),
    "epochs": Opt(int, 5, "finetuning epochs (0 reproduces the frozen probe)"),
    "batch_size": Opt(int, 64, "views per optimization step"),
    "lr": Opt(float, 0.003, "finetuning learning rate"),
    "optimizer_momentum": Opt(float, 0.9, "SGD momentum"),
    "weight_decay": Opt(float, 1e-4, "L2 weight decay"),
    "clip_norm": Opt(_opt_float, 10.0, "global gradient-norm ceiling (none disables)"),
    "keep_best": Opt(_bool, True, "return the best epoch-end model by train top-1"),
    "feature_source": Opt(str, "backbone", "head input: backbone or projection"),
    "max_iters": Opt(int, 500, "head-init probe iteration budget"),
    "tol": Opt(float, 1e-8, "head-init probe stopping tolerance"),
    "l2": Opt(float, 1e-4, "head-init probe ridge penalty"),
    "standardize": Opt(_bool, True, "standardize features for the head-init probe"),
}

REPORT_OPTS = {
    **COMMON,
    "trace": _path_opt("loss trace CSV from pretrain or finetune"),
    "manifest": _path_opt("dataset manifest, for the views histogram"),
    "geo_model": _path_opt("geo-cluster model JSON, for map and stats plots"),
    "report": _path_opt("EvalReport JSON, for per-class bars"),
}

COMMANDS: dict[str, dict[str, Opt]] = {
    "gen-data": GEN_DATA_OPTS,
    "cluster": CLUSTER_OPTS,
    "pretrain": PRETRAIN_OPTS,
    "probe": PROBE_OPTS,
    "finetune": FINETUNE_OPTS,
    "eval": EVAL_OPTS,
    "report": REPORT_OPTS,
}

COMMAND_HELP = {
    "gen-data": "generate a synthetic geo-temporal dataset",
    "cluster": "fit location clusters over a manifest's coordinates",
    "pretrain": "run self-supervised or baseline pretraining",
    "probe": "fit a frozen-feature linear probe from a checkpoint",
    "finetune": "finetune encoder and class head from a checkpoint",
    "eval": "apply a trained probe and emit metric reports",
    "report": "render diagnostic plots from pipeline artifacts",
}


def build_parser() -> _Parser:
    parser = _Parser(prog="geossl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, opts in COMMANDS.items():
        p = sub.add_parser(name, help=COMMAND_HELP[name])
        for key, opt in opts.items():
            flag = "--" + key.replace("_", "-")
            # argparse default None so the merge can tell "absent" from value
            p.add_argument(flag, dest=key, type=str, default=None, help=opt.help)
    return parser


def read_config_file(path: str | pathlib.Path) -> dict[str, str]:
    """Flat key=value lines; '#' comments and blank lines ignored."""
    path = pathlib.Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    values: dict[str, str] = {}
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {line_no}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    values.pop("command", None)   # effective_config.txt files are re-usable as input
    return values


def merge_options(command: str, args: argparse.Namespace) -> dict[str, Any]:
    """defaults < config file < explicit flags; unknown config keys rejected."""
    opts = COMMANDS[command]
    file_values: dict[str, str] = {}
    if getattr(args, "config", None) is not None:
        file_values = read_config_file(args.config)
        unknown = sorted(set(file_values) - set(opts))
        if unknown:
            raise ConfigurationError(
                f"unknown config keys for {command}: {', '.join(unknown)}"
            )
    effective: dict[str, Any] = {}
    for key, opt in opts.items():
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            effective[key] = opt.parse(cli_value)
        elif key in file_values:
            effective[key] = opt.parse(file_values[key])
        else:
            effective[key] = opt.default
    return effective


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def write_effective_config(out_dir: pathlib.Path, command: str, effective: dict[str, Any]) -> None:
    lines = [f"command={command}"]
    for key in sorted(effective):
        if key == "config":
            continue
        lines.append(f"{key}={_format_value(effective[key])}")
    (out_dir / "effective_config.txt").write_text("\n".join(lines) + "\n")


def _prepare_out(effective: dict[str, Any], parser: _Parser) -> pathlib.Path:
    if effective.get("out") is None:
        parser.error("--out is required")
    out = pathlib.Path(effective["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_present(effective: dict[str, Any], keys: list[str], parser: _Parser) -> None:
    missing = [k for k in keys if effective.get(k) is None]
    if missing:
        parser.error("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _require_file(path_text: str, what: str) -> pathlib.Path:
    path = pathlib.Path(path_text)
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _choice(effective: dict[str, Any], key: str, allowed: tuple[str, ...]) -> None:
    if effective[key] not in allowed:
        raise ConfigurationError(f"{key} must be one of {allowed}, got {effective[key]!r}")


def _load_split(
    manifest_path: str, holdout_fraction: float, split_seed: int
) -> tuple[DatasetManifest, DatasetManifest]:
    """(train part, eval part); fraction 0 uses the full manifest for both."""
    manifest = load_manifest(_require_file(manifest_path, "manifest"))
    if holdout_fraction == 0.0:
        return manifest, manifest
    train, hold = split_manifest(manifest, holdout_fraction, split_seed)
    if hold.n_areas == 0 or train.n_areas == 0:
        raise ConfigurationError(
            f"holdout_fraction {holdout_fraction} leaves an empty split for {manifest.n_areas} areas"
        )
    return train, hold


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen_data(effective: dict[str, Any], out: pathlib.Path) -> None:
    views = effective["views"]
    min_views = views if views is not None else effective["min_views"]
    max_views = views if views is not None else effective["max_views"]
    spec = SyntheticSpec(
        n_areas=effective["areas"],
        n_classes=effective["classes"],
        min_views=min_views,
        max_views=max_views,
        h=effective["height"],
        w=effective["width"],
        n_geo=effective["n_geo"],
        rho=effective["rho"],
        temporal_noise=effective["temporal_noise"],
        area_offset=effective["area_offset"],
        coord_noise=effective["coord_noise"],
        template_contrast=effective["template_contrast"],
    )
    manifest = generate_synthetic(spec, seed=effective["seed"])
    write_manifest(manifest, out)
    print(f"wrote {manifest.n_areas} areas / {manifest.total_samples} views to {out}")


def cmd_cluster(effective: dict[str, Any], out: pathlib.Path, parser: _Parser) -> None:
    _require_present(effective, ["manifest", "k"], parser)
    manifest = load_manifest(_require_file(effective["manifest"], "manifest"))
    coords = [(a.views[0].lat, a.views[0].lon) for a in manifest.areas]
    model = fit_kmeans_restarts(
        coords, effective["k"], seed=effective["seed"], n_restarts=effective["restarts"]
    )
    model.save(out / "geo_model.json")
    plots.plot_cluster_map(manifest, model, out / "cluster_map.png")
    print(f"fit {model.k} clusters over {manifest.n_areas} areas, inertia {model.inertia:.6f}")


def cmd_pretrain(effective: dict[str, Any], out: pathlib.Path, parser: _Parser) -> None:
    _require_present(effective, ["manifest"], parser)
    manifest = load_manifest(_require_file(effective["manifest"], "manifest"))

    geo_model = None
    geo_model_path = effective["geo_model"]
    if geo_model_path is not None:
        geo_model = GeoClusterModel.load(_require_file(geo_model_path, "geo model"))

    start_state = None
    if effective["resume"] is not None:
        start_state = load_checkpoint(_require_file(effective["resume"], "checkpoint"))
        cfg = start_state.config
    else:
        cfg = TrainConfig(
            variant=effective["variant"],
            epochs=effective["epochs"],
            batch_size=effective["batch_size"],
            lr=effective["lr"],
            lr_floor=effective["lr_floor"],
            schedule=effective["schedule"],
            optimizer_momentum=effective["optimizer_momentum"],
            weight_decay=effective["weight_decay"],
            temperature=effective["temperature"],
            alpha=effective["alpha"],
            beta=effective["beta"],
            ema_momentum=effective["ema_momentum"],
            queue_size=effective["queue_size"],
            k_clusters=effective["k_clusters"],
            seed=effective["seed"],
            head_input=effective["head_input"],
            encoder=EncoderConfig(
                height=manifest.h, width=manifest.w, channels=manifest.ch,
                widths=effective["widths"],
                embed_dim=effective["embed_dim"],
                proj_depth=effective["proj_depth"],
                activation=effective["activation"],
            ),
            augment=AugmentConfig(
                crop_scale=(effective["aug_crop_min"], effective["aug_crop_max"]),
                flip_prob=effective["aug_flip_prob"],
                brightness=effective["aug_brightness"],
                contrast=effective["aug_contrast"],
                saturation=effective["aug_saturation"],
                grayscale_prob=effective["aug_grayscale_prob"],
            ),
        )
    ckpt, trace = pretrain(
        manifest, geo_model, cfg,
        start_state=start_state,
        stop_after_epochs=effective["stop_after_epochs"],
        geo_model_path=geo_model_path,
    )
    save_checkpoint(ckpt, out / "checkpoint.npz")
    write_trace_csv(trace, out / "loss.csv")
    last = trace[-1] if trace else None
    tail = f", final loss {last.loss_total:.6f}" if last else ""
    print(f"pretrained {ckpt.variant} for {ckpt.epochs_completed}/{cfg.epochs} epochs{tail}")


def cmd_probe(effective: dict[str, Any], out: pathlib.Path, parser: _Parser) -> None:
    _require_present(effective, ["checkpoint", "manifest"], parser)
    _choice(effective, "feature_source", eval_mod.FEATURE_SOURCES)
    ckpt = load_checkpoint(_require_file(effective["checkpoint"], "checkpoint"))
    train, _ = _load_split(
        effective["manifest"], effective["holdout_fraction"], effective["split_seed"]
    )
    if train.n_classes is None:
        raise ConfigurationError("probe training requires n_classes in the manifest header")
    feats = eval_mod.extract_features(ckpt, train, source=effective["feature_source"])
    probe_cfg = eval_mod.ProbeConfig(
        max_iters=effective["max_iters"], tol=effective["tol"],
        l2=effective["l2"], standardize=effective["standardize"],
    )
    probe, train_acc = eval_mod.train_linear_probe(
        feats.features, feats.labels, train.n_classes, probe_cfg,
        feature_source=effective["feature_source"],
    )
    probe.save(out / "probe.npz")
    summary = {
        "train_top1": train_acc,
        "n_train_views": int(feats.features.shape[0]),
        "n_train_areas": train.n_areas,
        "n_classes": train.n_classes,
        "feature_source": effective["feature_source"],
        "holdout_fraction": effective["holdout_fraction"],
        "split_seed": effective["split_seed"],
    }
    (out / "probe_summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(f"probe train top-1 {train_acc:.4f} on {feats.features.shape[0]} views")


def cmd_eval(effective: dict[str, Any], out: pathlib.Path, parser: _Parser) -> None:
    _require_present(effective, ["checkpoint", "probe", "manifest"], parser)
    _choice(effective, "granularity", ("single", "temporal"))
    _choice(effective, "rule", ("mean", "max_confidence"))
    ckpt = load_checkpoint(_require_file(effective["checkpoint"], "checkpoint"))
    probe = eval_mod.LinearProbe.load(_require_file(effective["probe"], "probe"))
    _, part = _load_split(
        effective["manifest"], effective["holdout_fraction"], effective["split_seed"]
    )
    reports = eval_mod.evaluate_probe(
        ckpt, probe, part, granularity=effective["granularity"], rule=effective["rule"]
    )
    eval_mod.write_report_json(reports, out / "report.json")
    eval_mod.write_per_class_csv(reports["single"], reports["temporal"], out / "per_class.csv")
    single = reports["single"]
    tail = "" if reports["temporal"] is None else f", temporal top-1 {reports['temporal'].top1:.4f}"
    print(f"single top-1 {single.top1:.4f}{tail} on {part.n_areas} areas")


def cmd_finetune(effective: dict[str, Any], out: pathlib.Path, parser: _Parser) -> None:
    _require_present(effective, ["checkpoint", "manifest"], parser)
    _choice(effective, "feature_source", eval_mod.FEATURE_SOURCES)
    ckpt = load_checkpoint(_require_file(effective["checkpoint"], "checkpoint"))
    train, part = _load_split(
        effective["manifest"], effective["holdout_fraction"], effective["split_seed"]
    )
    cfg = eval_mod.FinetuneConfig(
        epochs=effective["epochs"],
        batch_size=effective["batch_size"],
        lr=effective["lr"],
        optimizer_momentum=effective["optimizer_momentum"],
        weight_decay=effective["weight_decay"],
        clip_norm=effective["clip_norm"],
        keep_best=effective["keep_best"],
        seed=effective["seed"],
        feature_source=effective["feature_source"],
        probe=eval_mod.ProbeConfig(
            max_iters=effective["max_iters"], tol=effective["tol"],
            l2=effective["l2"], standardize=effective["standardize"],
        ),
    )
    result = eval_mod.finetune(ckpt, train, part, cfg)
    zeros_q = {k: np.zeros_like(v) for k, v in result.state.query.arrays.items()}
    zeros_h = {"weight": np.zeros_like(result.state.head.weight),
               "bias": np.zeros_like(result.state.head.bias)}
    save_checkpoint(
        Checkpoint(
            variant="finetune", epochs_completed=cfg.epochs, config=ckpt.config,
            state=result.state, velocity_query=zeros_q, velocity_head=zeros_h,
            geo_model_path=None, n_classes=train.n_classes,
        ),
        out / "finetuned.npz",
    )
    reports = {"single": result.report_single, "temporal": result.report_temporal}
    eval_mod.write_report_json(reports, out / "report.json")
    eval_mod.write_per_class_csv(result.report_single, result.report_temporal, out / "per_class.csv")
    write_trace_csv(result.trace, out / "loss.csv")
    print(
        f"finetuned {cfg.epochs} epochs: single top-1 {result.report_single.top1:.4f}"
        f" (probe init {result.probe_train_accuracy:.4f})"
    )


def cmd_report(effective: dict[str, Any], out: pathlib.Path, parser: _Parser) -> None:
    inputs = [k for k in ("trace", "manifest", "geo_model", "report") if effective[k] is not None]
    if not inputs:
        parser.error("report needs at least one of --trace, --manifest, --geo-model, --report")
    written: list[pathlib.Path] = []
    manifest = None
    if effective["manifest"] is not None:
        manifest = load_manifest(_require_file(effective["manifest"], "manifest"))
        written.append(plots.plot_views_histogram(manifest, out / "views_histogram.png"))
    if effective["trace"] is not None:
        trace = read_trace_csv(_require_file(effective["trace"], "trace CSV"))
        written.append(plots.plot_loss_curves(trace, out / "loss_curves.png"))
    if effective["geo_model"] is not None:
        if manifest is None:
            parser.error("--geo-model requires --manifest for coordinates")
        model = GeoClusterModel.load(_require_file(effective["geo_model"], "geo model"))
        written.append(plots.plot_cluster_map(manifest, model, out / "cluster_map.png"))
        if manifest.labeled:
            stats = cluster_stats(manifest, model)
            written.append(plots.plot_cluster_stats(stats, out / "cluster_stats.png"))
    if effective["report"] is not None:
        doc = json.loads(_require_file(effective["report"], "report JSON").read_text())
        single = doc.get("single")
        if not single:
            raise ValidationError("report JSON has no 'single' section")
        per_single = {int(k): float(v) for k, v in single["per_class"].items()}
        per_temporal = None
        if doc.get("temporal"):
            per_temporal = {int(k): float(v) for k, v in doc["temporal"]["per_class"].items()}
        written.append(plots.plot_per_class(per_single, per_temporal, out / "per_class.png"))
    print(f"wrote {len(written)} plot(s) to {out}")


# ---------------------------------------------------------------------------

def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.error("a command is required")
    try:
        effective = merge_options(args.command, args)
        out = _prepare_out(effective, parser)
        write_effective_config(out, args.command, effective)
        if args.command == "gen-data":
            cmd_gen_data(effective, out)
        elif args.command == "cluster":
            cmd_cluster(effective, out, parser)
        elif args.command == "pretrain":
            cmd_pretrain(effective, out, parser)
        elif args.command == "probe":
            cmd_probe(effective, out, parser)
        elif args.command == "eval":
            cmd_eval(effective, out, parser)
        elif args.command == "finetune":
            cmd_finetune(effective, out, parser)
        elif args.command == "report":
            cmd_report(effective, out, parser)
        return 0
    except (ConfigurationError, ValidationError, ManifestParseError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except GeoSSLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"unexpected error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
