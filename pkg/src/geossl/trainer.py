"""Pretraining loop for the contrastive variants and the two baselines.

Variants:
  moco          one real view, two augmentations, InfoNCE vs the queue
  moco+tp       positive comes from a second real view of the same area
  moco+geo      moco plus a geo-cluster cross-entropy on the query embedding
  moco+geo+tp   both extensions
  geo-only      encoder + head trained by cross-entropy on geo clusters
  supervised    encoder + head trained by cross-entropy on class labels

Each contrastive iteration: sample a batch of areas, draw (t1, t2) per the
variant, augment both views independently, embed the query view with the
query encoder and the key view with the key encoder (no gradient), compute
the combined loss against a queue snapshot, take one SGD step on the query
encoder and head, EMA-update the key encoder, then enqueue the key batch.

Determinism: every random draw comes from a stream keyed by
(seed, purpose, epoch, iteration, slot, view), so traces are reproducible
for a seed regardless of pipeline concurrency, and resuming from a
checkpoint at an epoch boundary is bit-identical to an uninterrupted run.
"""

from __future__ import annotations

import dataclasses
import json
import math
import pathlib
from typing import Callable

import numpy as np

from .data import AugmentConfig, DatasetManifest, augment, sample_temporal_pair
from .errors import ConfigurationError, ValidationError
from .geocluster import GeoClusterModel, assign_many
from .loss import LossBatch, LossConfig, loss_gradients
from . import model as model_mod
from .model import EncoderConfig, EncoderParams, GeoHeadParams, MoCoState
from .negqueue import NegativeQueue
from .rng import stream_rng

VARIANTS = ("moco", "moco+geo", "moco+tp", "moco+geo+tp", "geo-only", "supervised")
SCHEDULES = ("cosine", "constant")

CHECKPOINT_FORMAT_VERSION = 1


def uses_contrastive(variant: str) -> bool:
    return variant in ("moco", "moco+geo", "moco+tp", "moco+geo+tp")


def uses_geo(variant: str) -> bool:
    return variant in ("moco+geo", "moco+geo+tp", "geo-only")


def uses_temporal_positive(variant: str) -> bool:
    return variant in ("moco+tp", "moco+geo+tp")


@dataclasses.dataclass
class TrainConfig:
    """Desk-scale defaults; `full_scale` holds the reference recipe."""

    variant: str = "moco"
    epochs: int = 20
    batch_size: int = 64
    lr: float = 0.05
    lr_floor: float = 0.0
    schedule: str = "cosine"
    optimizer_momentum: float = 0.9
    weight_decay: float = 1e-4
    temperature: float = 0.2
    alpha: float = 1.0
    beta: float = 1.0
    ema_momentum: float = 0.999
    queue_size: int = 1024
    k_clusters: int | None = None        # None: take K from the geo model
    seed: int = 0
    head_input: str = "projection"       # or "backbone"
    encoder: EncoderConfig | None = None  # None: default sized from the manifest
    augment: AugmentConfig = dataclasses.field(default_factory=AugmentConfig)

    @classmethod
    def full_scale(cls) -> "TrainConfig":
        """Reference hyperparameters for full-size backbone runs."""
        return cls(
            epochs=200, batch_size=256, lr=1e-3, queue_size=65536,
            temperature=0.2, alpha=1.0, beta=1.0, ema_momentum=0.999,
            k_clusters=100,
        )

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not (self.lr > 0.0):
            raise ConfigurationError("lr must be positive")
        if self.lr_floor < 0.0 or self.lr_floor > self.lr:
            raise ConfigurationError("lr_floor must satisfy 0 <= lr_floor <= lr")
        if self.schedule not in SCHEDULES:
            raise ConfigurationError(f"schedule must be one of {SCHEDULES}")
        if not (0.0 <= self.optimizer_momentum < 1.0):
            raise ConfigurationError("optimizer_momentum must be within [0, 1)")
        if self.weight_decay < 0.0:
            raise ConfigurationError("weight_decay must be non-negative")
        if not (self.temperature > 0.0):
            raise ConfigurationError("temperature must be positive")
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ConfigurationError("alpha and beta must be non-negative")
        if uses_contrastive(self.variant) and self.alpha == 0.0 and self.beta == 0.0:
            raise ConfigurationError("alpha and beta cannot both be zero")
        if not (0.0 <= self.ema_momentum <= 1.0):
            raise ConfigurationError("ema_momentum must be within [0, 1]")
        if self.queue_size < 1:
            raise ConfigurationError("queue_size must be >= 1")
        if uses_contrastive(self.variant) and self.queue_size < self.batch_size:
            raise ConfigurationError("queue_size must be >= batch_size")
        if self.k_clusters is not None and self.k_clusters < 2:
            raise ConfigurationError("k_clusters must be >= 2")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")
        if self.head_input not in ("projection", "backbone"):
            raise ConfigurationError("head_input must be 'projection' or 'backbone'")
        if self.encoder is not None:
            self.encoder.validate()
        self.augment.validate()

    def loss_config(self, k_clusters: int | None = None) -> LossConfig:
        return LossConfig(
            temperature=self.temperature, alpha=self.alpha, beta=self.beta,
            k_clusters=k_clusters if k_clusters is not None else (self.k_clusters or 100),
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["encoder"] = None if self.encoder is None else self.encoder.to_dict()
        d["augment"] = dataclasses.asdict(self.augment)
        d["augment"]["crop_scale"] = list(self.augment.crop_scale)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if d.get("encoder") is not None:
            d["encoder"] = EncoderConfig.from_dict(d["encoder"])
        aug = dict(d["augment"])
        aug["crop_scale"] = tuple(aug["crop_scale"])
        d["augment"] = AugmentConfig(**aug)
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclasses.dataclass
class TraceRow:
    epoch: int
    iteration: int
    loss_contrastive: float
    loss_geo: float
    loss_total: float
    lr: float


TRACE_HEADER = "epoch,iteration,loss_contrastive,loss_geo,loss_total,lr"


def write_trace_csv(rows: list[TraceRow], path: str | pathlib.Path) -> pathlib.Path:
    path = pathlib.Path(path)
    lines = [TRACE_HEADER]
    for r in rows:
        lines.append(
            f"{r.epoch},{r.iteration},{repr(float(r.loss_contrastive))},"
            f"{repr(float(r.loss_geo))},{repr(float(r.loss_total))},{repr(float(r.lr))}"
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def read_trace_csv(path: str | pathlib.Path) -> list[TraceRow]:
    lines = pathlib.Path(path).read_text().splitlines()
    if not lines or lines[0] != TRACE_HEADER:
        raise ValidationError(f"{path}: not a loss trace file")
    rows = []
    for line in lines[1:]:
        e, i, lc, lg, lt, lr = line.split(",")
        rows.append(TraceRow(int(e), int(i), float(lc), float(lg), float(lt), float(lr)))
    return rows


# ---------------------------------------------------------------------------
# Optimizer and schedule
# ---------------------------------------------------------------------------

def sgd_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float,
    momentum: float,
    weight_decay: float,
    velocity: dict[str, np.ndarray],
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """One SGD step with classic momentum and coupled weight decay.

    velocity <- momentum * velocity + grad + weight_decay * param
    param    <- param - lr * velocity

    Pure: returns new dicts, never mutates inputs."""
    if set(params) != set(grads) or set(params) != set(velocity):
        raise ValidationError("params, grads and velocity must share the same keys")
    new_params: dict[str, np.ndarray] = {}
    new_velocity: dict[str, np.ndarray] = {}
    for name, p in params.items():
        v = momentum * velocity[name] + grads[name] + weight_decay * p
        new_velocity[name] = v
        new_params[name] = p - lr * v
    return new_params, new_velocity


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """Per-epoch learning rate. Cosine: starts at lr, ends at lr_floor at
    the final epoch, monotone non-increasing. Constant: always lr."""
    if not (0 <= epoch < cfg.epochs):
        raise ConfigurationError(f"epoch {epoch} outside [0, {cfg.epochs})")
    if cfg.schedule == "constant":
        return float(cfg.lr)
    if cfg.epochs == 1:
        return float(cfg.lr)
    frac = epoch / (cfg.epochs - 1)
    return float(cfg.lr_floor + (cfg.lr - cfg.lr_floor) * 0.5 * (1.0 + math.cos(math.pi * frac)))


# ---------------------------------------------------------------------------
# State construction
# ---------------------------------------------------------------------------

def resolve_encoder_config(cfg: TrainConfig, manifest: DatasetManifest) -> EncoderConfig:
    if cfg.encoder is None:
        enc = EncoderConfig(height=manifest.h, width=manifest.w, channels=manifest.ch)
    else:
        enc = cfg.encoder
        if (enc.height, enc.width, enc.channels) != (manifest.h, manifest.w, manifest.ch):
            raise ConfigurationError(
                f"encoder geometry ({enc.height}, {enc.width}, {enc.channels}) does not match "
                f"manifest images ({manifest.h}, {manifest.w}, {manifest.ch})"
            )
    enc.validate()
    return enc


def _head_classes(cfg: TrainConfig, manifest: DatasetManifest, geo_model: GeoClusterModel | None) -> int | None:
    if uses_geo(cfg.variant):
        assert geo_model is not None
        return geo_model.k
    if cfg.variant == "supervised":
        if manifest.n_classes is None:
            raise ConfigurationError("supervised training requires n_classes in the manifest header")
        return manifest.n_classes
    return None


def build_initial_state(
    cfg: TrainConfig, manifest: DatasetManifest, geo_model: GeoClusterModel | None
) -> tuple[MoCoState, dict[str, np.ndarray], dict[str, np.ndarray] | None]:
    """Initial (state, query velocity, head velocity) for a fresh run.

    The query encoder draws from the documented "params" stream of the
    config seed; the key encoder starts as an exact copy; heads start at
    zero (uniform initial predictions)."""
    enc_cfg = resolve_encoder_config(cfg, manifest)
    query = model_mod.init_encoder_params(enc_cfg, stream_rng(cfg.seed, "params"))
    contrastive = uses_contrastive(cfg.variant)
    key = query.copy() if contrastive else None
    queue = NegativeQueue(cfg.queue_size, enc_cfg.embed_dim) if contrastive else None
    n_out = _head_classes(cfg, manifest, geo_model)
    head = None
    if n_out is not None:
        dim = enc_cfg.embed_dim if cfg.head_input == "projection" else enc_cfg.backbone_dim
        head = model_mod.init_head(dim, n_out)
    state = MoCoState(query=query, key=key, head=head, queue=queue, step=0,
                      head_input=cfg.head_input)
    vel_q = {k: np.zeros_like(v) for k, v in query.arrays.items()}
    vel_h = None
    if head is not None:
        vel_h = {"weight": np.zeros_like(head.weight), "bias": np.zeros_like(head.bias)}
    return state, vel_q, vel_h


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

@dataclasses.dataclass(eq=False)
class Checkpoint:
    variant: str
    epochs_completed: int
    config: TrainConfig
    state: MoCoState
    velocity_query: dict[str, np.ndarray]
    velocity_head: dict[str, np.ndarray] | None
    geo_model_path: str | None
    n_classes: int | None


def save_checkpoint(ckpt: Checkpoint, path: str | pathlib.Path) -> pathlib.Path:
    path = pathlib.Path(path)
    state = ckpt.state
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "variant": ckpt.variant,
        "epochs_completed": int(ckpt.epochs_completed),
        "train_config": ckpt.config.to_dict(),
        "rng_state": {
            "scheme": "stream-counter",
            "seed": int(ckpt.config.seed),
            "epochs_completed": int(ckpt.epochs_completed),
        },
        "geo_cluster_model_path": ckpt.geo_model_path,
        "n_classes": ckpt.n_classes,
        "head_input": state.head_input,
        "step": int(state.step),
        "has_key": state.key is not None,
        "has_head": state.head is not None,
        "queue": None if state.queue is None else {
            "capacity": state.queue.capacity, "fill": state.queue.fill, "dim": state.queue.dim,
        },
    }
    arrays: dict[str, np.ndarray] = {"meta": np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )}
    for name, arr in state.query.arrays.items():
        arrays[f"q.{name}"] = arr
    if state.key is not None:
        for name, arr in state.key.arrays.items():
            arrays[f"k.{name}"] = arr
    if state.head is not None:
        arrays["head.weight"] = state.head.weight
        arrays["head.bias"] = state.head.bias
    if state.queue is not None:
        fill = state.queue.fill
        arrays["queue.entries"] = (
            state.queue.snapshot() if fill else np.zeros((0, state.queue.dim))
        )
    for name, arr in ckpt.velocity_query.items():
        arrays[f"vq.{name}"] = arr
    if ckpt.velocity_head is not None:
        arrays["vh.weight"] = ckpt.velocity_head["weight"]
        arrays["vh.bias"] = ckpt.velocity_head["bias"]
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path: str | pathlib.Path) -> Checkpoint:
    path = pathlib.Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValidationError(
                f"checkpoint {path}: unsupported format version {meta.get('format_version')}"
            )
        cfg = TrainConfig.from_dict(meta["train_config"])
        if cfg.encoder is None:
            raise ValidationError(f"checkpoint {path}: missing resolved encoder config")
        query = EncoderParams(
            cfg.encoder,
            {name: data[f"q.{name}"].astype(np.float64) for name in model_mod.param_shapes(cfg.encoder)},
        )
        key = None
        if meta["has_key"]:
            key = EncoderParams(
                cfg.encoder,
                {name: data[f"k.{name}"].astype(np.float64) for name in model_mod.param_shapes(cfg.encoder)},
            )
        head = None
        vel_head = None
        if meta["has_head"]:
            head = GeoHeadParams(weight=data["head.weight"].astype(np.float64),
                                 bias=data["head.bias"].astype(np.float64))
            vel_head = {"weight": data["vh.weight"].astype(np.float64),
                        "bias": data["vh.bias"].astype(np.float64)}
        queue = None
        if meta["queue"] is not None:
            queue = NegativeQueue.from_entries(data["queue.entries"], meta["queue"]["capacity"])
        state = MoCoState(query=query, key=key, head=head, queue=queue,
                          step=meta["step"], head_input=meta["head_input"])
        vel_q = {name: data[f"vq.{name}"].astype(np.float64)
                 for name in model_mod.param_shapes(cfg.encoder)}
    return Checkpoint(
        variant=meta["variant"],
        epochs_completed=meta["epochs_completed"],
        config=cfg,
        state=state,
        velocity_query=vel_q,
        velocity_head=vel_head,
        geo_model_path=meta["geo_cluster_model_path"],
        n_classes=meta["n_classes"],
    )


def _copy_state(state: MoCoState) -> MoCoState:
    queue = None
    if state.queue is not None:
        entries = state.queue.snapshot() if state.queue.fill else np.zeros((0, state.queue.dim))
        queue = NegativeQueue.from_entries(entries, state.queue.capacity)
    return MoCoState(
        query=state.query.copy(),
        key=None if state.key is None else state.key.copy(),
        head=None if state.head is None else state.head.copy(),
        queue=queue,
        step=state.step,
        head_input=state.head_input,
    )


# ---------------------------------------------------------------------------
# Pretraining
# ---------------------------------------------------------------------------

def pretrain(
    manifest: DatasetManifest,
    geo_model: GeoClusterModel | None,
    cfg: TrainConfig,
    start_state: Checkpoint | None = None,
    stop_after_epochs: int | None = None,
    geo_model_path: str | None = None,
    iteration_callback: Callable[[MoCoState, TraceRow], None] | None = None,
) -> tuple[Checkpoint, list[TraceRow]]:
    """Run (or resume) pretraining; returns the checkpoint and loss trace.

    stop_after_epochs pauses the schedule early (for checkpoint/resume);
    the returned checkpoint resumes bit-identically under the same config.
    The callback sees the live state after each completed iteration."""
    cfg.validate()
    if uses_geo(cfg.variant):
        if geo_model is None:
            raise ConfigurationError(
                f"variant {cfg.variant!r} requires a geo-cluster model (missing input: geo model)"
            )
        if cfg.k_clusters is not None and cfg.k_clusters != geo_model.k:
            raise ConfigurationError(
                f"k_clusters {cfg.k_clusters} does not match the geo model's K {geo_model.k}"
            )
    elif geo_model is not None:
        raise ConfigurationError(f"variant {cfg.variant!r} does not take a geo-cluster model")
    if cfg.variant == "supervised" and not manifest.labeled:
        raise ConfigurationError("supervised training requires a fully labeled manifest")

    n_areas = manifest.n_areas
    n_batches = n_areas // cfg.batch_size
    if n_batches < 1:
        raise ConfigurationError(
            f"batch_size {cfg.batch_size} exceeds the number of areas ({n_areas})"
        )

    enc_cfg = resolve_encoder_config(cfg, manifest)
    run_cfg = dataclasses.replace(cfg, encoder=enc_cfg)

    if start_state is None:
        state, vel_q, vel_h = build_initial_state(run_cfg, manifest, geo_model)
        start_epoch = 0
    else:
        if start_state.config.to_dict() != run_cfg.to_dict():
            raise ConfigurationError("resume config does not match the checkpoint config")
        state = _copy_state(start_state.state)
        vel_q = {k: v.copy() for k, v in start_state.velocity_query.items()}
        vel_h = None if start_state.velocity_head is None else {
            k: v.copy() for k, v in start_state.velocity_head.items()
        }
        start_epoch = start_state.epochs_completed
        if start_epoch >= cfg.epochs:
            raise ConfigurationError(
                f"checkpoint already covers {start_epoch} epochs of a {cfg.epochs}-epoch schedule"
            )

    end_epoch = cfg.epochs if stop_after_epochs is None else min(cfg.epochs, stop_after_epochs)
    if end_epoch <= start_epoch:
        raise ConfigurationError("stop_after_epochs must exceed the completed epoch count")

    contrastive = uses_contrastive(cfg.variant)
    pair_mode = "temporal" if uses_temporal_positive(cfg.variant) else "same-view"

    geo_labels: np.ndarray | None = None
    if uses_geo(cfg.variant):
        coords = np.array([[a.lat, a.lon] for a in manifest.areas])
        geo_labels = assign_many(geo_model, coords)
    class_labels: np.ndarray | None = None
    if cfg.variant == "supervised":
        class_labels = np.array([a.label + 1 for a in manifest.areas], dtype=np.int64)

    k_for_loss = state.head.n_outputs if state.head is not None else None
    loss_cfg = run_cfg.loss_config(k_for_loss)

    trace: list[TraceRow] = []
    for epoch in range(start_epoch, end_epoch):
        lr = learning_rate(cfg, epoch)
        order = stream_rng(cfg.seed, "order", epoch).permutation(n_areas)
        for it in range(n_batches):
            idx = order[it * cfg.batch_size:(it + 1) * cfg.batch_size]
            view1 = np.empty((cfg.batch_size, manifest.h, manifest.w, manifest.ch))
            view2 = np.empty_like(view1) if contrastive else None
            labels = np.empty(cfg.batch_size, dtype=np.int64) if state.head is not None else None
            for slot, ai in enumerate(idx):
                area = manifest.areas[int(ai)]
                pair_rng = stream_rng(cfg.seed, "pair", epoch, it, slot)
                t1, t2 = sample_temporal_pair(area, pair_rng, pair_mode)
                view1[slot] = augment(
                    area.views[t1 - 1].image, cfg.augment,
                    stream_rng(cfg.seed, "aug", epoch, it, slot, 0),
                )
                if contrastive:
                    view2[slot] = augment(
                        area.views[t2 - 1].image, cfg.augment,
                        stream_rng(cfg.seed, "aug", epoch, it, slot, 1),
                    )
                if labels is not None:
                    labels[slot] = (
                        geo_labels[int(ai)] if geo_labels is not None else class_labels[int(ai)]
                    )

            batch = LossBatch(view1=view1, view2=view2, ce_labels=labels)
            lg = loss_gradients(state, batch, loss_cfg)

            new_q, vel_q = sgd_step(
                state.query.arrays, lg.grads_query, lr,
                cfg.optimizer_momentum, cfg.weight_decay, vel_q,
            )
            state.query = EncoderParams(enc_cfg, new_q)
            if lg.grads_head is not None:
                head_arrays = {"weight": state.head.weight, "bias": state.head.bias}
                new_h, vel_h = sgd_step(
                    head_arrays, lg.grads_head, lr,
                    cfg.optimizer_momentum, cfg.weight_decay, vel_h,
                )
                state.head = GeoHeadParams(weight=new_h["weight"], bias=new_h["bias"])
            if contrastive:
                state.key = model_mod.momentum_update(state.key, state.query, cfg.ema_momentum)
                state.queue.enqueue_batch(lg.key_embeddings)
            state.step += 1

            row = TraceRow(
                epoch=epoch, iteration=it,
                loss_contrastive=lg.loss_contrastive,
                loss_geo=lg.loss_ce,
                loss_total=lg.loss_total,
                lr=lr,
            )
            trace.append(row)
            if iteration_callback is not None:
                iteration_callback(state, row)

    ckpt = Checkpoint(
        variant=cfg.variant,
        epochs_completed=end_epoch,
        config=run_cfg,
        state=state,
        velocity_query=vel_q,
        velocity_head=vel_h,
        geo_model_path=geo_model_path,
        n_classes=manifest.n_classes,
    )
    return ckpt, trace
