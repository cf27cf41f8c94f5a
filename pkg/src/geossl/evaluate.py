"""Frozen-feature probing, end-to-end finetuning, temporal aggregation and
classification metrics.

Features for evaluation are extracted from the query encoder on the raw
(unaugmented) views; the pre-projection pooled feature is the default, the
normalized projection output is available via feature_source="projection".
"""

from __future__ import annotations

import dataclasses
import json
import pathlib

import numpy as np

from .data import DatasetManifest
from .errors import ConfigurationError, NumericError, ValidationError
from .loss import LossBatch, LossConfig, loss_gradients
from . import model as model_mod
from .model import GeoHeadParams, MoCoState
from .rng import stream_rng
from .trainer import Checkpoint, TraceRow, sgd_step

FEATURE_SOURCES = ("backbone", "projection")


@dataclasses.dataclass
class FeatureSet:
    features: np.ndarray      # (total views, D)
    labels: np.ndarray        # (total views,) class ids, 0-based
    area_index: np.ndarray    # (total views,) position of the view's area
    area_ids: list[str]
    area_labels: np.ndarray   # (n_areas,)
    source: str


def _batched_forward(params, images: np.ndarray, source: str, batch_size: int = 256) -> np.ndarray:
    outs = []
    for start in range(0, images.shape[0], batch_size):
        chunk = images[start:start + batch_size]
        if source == "projection":
            outs.append(model_mod.encode(params, chunk))
        else:
            outs.append(model_mod.backbone_features(params, chunk))
    return np.concatenate(outs, axis=0)


def extract_features(
    ckpt: Checkpoint, manifest: DatasetManifest, source: str = "backbone",
    batch_size: int = 256,
) -> FeatureSet:
    """Deterministic per-view features from the checkpoint's query encoder."""
    if source not in FEATURE_SOURCES:
        raise ConfigurationError(f"feature source must be one of {FEATURE_SOURCES}")
    if not manifest.labeled:
        raise ValidationError("feature extraction requires a fully labeled manifest")
    if manifest.total_samples == 0:
        raise ValidationError("manifest has no views")
    images = np.stack([v.image for _, v in manifest.iter_samples()])
    area_index = np.array([i for i, _ in manifest.iter_samples()], dtype=np.int64)
    labels = np.array([v.label for _, v in manifest.iter_samples()], dtype=np.int64)
    feats = _batched_forward(ckpt.state.query, images, source, batch_size)
    return FeatureSet(
        features=feats,
        labels=labels,
        area_index=area_index,
        area_ids=[a.area_id for a in manifest.areas],
        area_labels=np.array([a.label for a in manifest.areas], dtype=np.int64),
        source=source,
    )


# ---------------------------------------------------------------------------
# Linear probe: multinomial logistic regression by full-batch GD
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class ProbeConfig:
    max_iters: int = 500
    tol: float = 1e-8        # stop when the gradient sup-norm falls below this
    l2: float = 1e-4         # ridge penalty on the weights (not the bias)
    standardize: bool = True

    def validate(self) -> None:
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if self.tol < 0 or self.l2 < 0:
            raise ConfigurationError("tol and l2 must be non-negative")


@dataclasses.dataclass(eq=False)
class LinearProbe:
    weight: np.ndarray       # (D, C) on standardized features
    bias: np.ndarray         # (C,)
    mean: np.ndarray         # (D,) standardization offsets
    scale: np.ndarray        # (D,) standardization divisors
    n_classes: int
    feature_source: str

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.scale

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        logits = self.transform(features) @ self.weight + self.bias
        m = logits.max(axis=1, keepdims=True)
        e = np.exp(logits - m)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(features), axis=1)

    def save(self, path: str | pathlib.Path) -> pathlib.Path:
        path = pathlib.Path(path)
        meta = {"n_classes": int(self.n_classes), "feature_source": self.feature_source}
        with open(path, "wb") as fh:
            np.savez(
                fh,
                meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8),
                weight=self.weight, bias=self.bias, mean=self.mean, scale=self.scale,
            )
        return path

    @classmethod
    def load(cls, path: str | pathlib.Path) -> "LinearProbe":
        path = pathlib.Path(path)
        if not path.exists():
            raise FileNotFoundError(f"probe file not found: {path}")
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(bytes(data["meta"]).decode("utf-8"))
            return cls(
                weight=data["weight"].astype(np.float64),
                bias=data["bias"].astype(np.float64),
                mean=data["mean"].astype(np.float64),
                scale=data["scale"].astype(np.float64),
                n_classes=int(meta["n_classes"]),
                feature_source=meta["feature_source"],
            )


def probe_objective(
    weight: np.ndarray, bias: np.ndarray, x: np.ndarray, labels: np.ndarray, l2: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """(loss, grad_w, grad_b) of mean cross-entropy + 0.5*l2*||W||^2."""
    n = x.shape[0]
    logits = x @ weight + bias
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    denom = e.sum(axis=1)
    loss = float(np.mean(m[:, 0] + np.log(denom) - logits[np.arange(n), labels]))
    loss += 0.5 * l2 * float(np.sum(weight * weight))
    p = e / denom[:, None]
    p[np.arange(n), labels] -= 1.0
    grad_w = x.T @ p / n + l2 * weight
    grad_b = p.mean(axis=0)
    return loss, grad_w, grad_b


def train_linear_probe(
    features: np.ndarray, labels: np.ndarray, n_classes: int,
    cfg: ProbeConfig | None = None, feature_source: str = "backbone",
) -> tuple[LinearProbe, float]:
    """Fit multinomial logistic regression by full-batch gradient descent.

    The problem is convex and the start point is fixed at zero, so the
    result is deterministic. The step size is 1/L for the curvature bound
    L = 0.5 * smax^2 / n + l2, smax the top singular value of the
    (standardized, bias-augmented) design matrix. Returns the probe and its
    training accuracy."""
    cfg = cfg or ProbeConfig()
    cfg.validate()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.ndim != 2 or labels.shape != (features.shape[0],):
        raise ValidationError("features must be (n, D) with one label per row")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValidationError("labels must be integers")
    if n_classes < 2:
        raise ConfigurationError("n_classes must be >= 2")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValidationError(f"labels must lie within [0, {n_classes})")
    if np.unique(labels).size < 2:
        raise ConfigurationError("probe training needs at least two distinct classes present")

    if cfg.standardize:
        mean = features.mean(axis=0)
        scale = features.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
    else:
        mean = np.zeros(features.shape[1])
        scale = np.ones(features.shape[1])
    x = (features - mean) / scale

    design = np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)
    smax = float(np.linalg.norm(design, 2))
    lipschitz = 0.5 * smax * smax / x.shape[0] + cfg.l2
    step = 1.0 / lipschitz

    weight = np.zeros((features.shape[1], n_classes))
    bias = np.zeros(n_classes)
    labels64 = labels.astype(np.int64)
    for _ in range(cfg.max_iters):
        _, grad_w, grad_b = probe_objective(weight, bias, x, labels64, cfg.l2)
        gmax = max(float(np.max(np.abs(grad_w))) if grad_w.size else 0.0,
                   float(np.max(np.abs(grad_b))))
        if gmax < cfg.tol:
            break
        weight = weight - step * grad_w
        bias = bias - step * grad_b

    probe = LinearProbe(weight=weight, bias=bias, mean=mean, scale=scale,
                        n_classes=n_classes, feature_source=feature_source)
    train_acc = float(np.mean(probe.predict(features) == labels64))
    return probe, train_acc


def fold_probe_into_head(probe: LinearProbe) -> GeoHeadParams:
    """Rewrite the probe as a linear head on raw (unstandardized) features."""
    w = probe.weight / probe.scale[:, None]
    b = probe.bias - probe.mean @ w
    return GeoHeadParams(weight=w, bias=b)


# ---------------------------------------------------------------------------
# Temporal aggregation and metrics
# ---------------------------------------------------------------------------

def classify_temporal(
    proba: np.ndarray, area_index: np.ndarray, rule: str = "mean"
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Aggregate per-view class distributions into one prediction per area.

    rule="mean": average the distributions, then argmax (ties take the
    lowest class index). rule="max_confidence": take the distribution of
    the single most confident view. Returns (area order, per-area
    distributions, per-area predictions)."""
    proba = np.asarray(proba, dtype=np.float64)
    area_index = np.asarray(area_index)
    if proba.ndim != 2 or area_index.shape != (proba.shape[0],):
        raise ValidationError("proba must be (n, C) with one area index per row")
    if proba.shape[0] == 0:
        raise ValidationError("no rows to aggregate")
    if not np.all(np.isfinite(proba)):
        raise NumericError("probabilities contain non-finite values")
    if np.any(proba < 0) or np.any(np.abs(proba.sum(axis=1) - 1.0) > 1e-6):
        raise ValidationError("rows must be probability distributions (non-negative, sum 1)")
    if rule not in ("mean", "max_confidence"):
        raise ConfigurationError(f"unknown aggregation rule {rule!r}")

    order = []
    seen = set()
    for a in area_index.tolist():
        if a not in seen:
            seen.add(a)
            order.append(a)
    order = np.array(order)
    agg = np.empty((order.size, proba.shape[1]))
    for row, a in enumerate(order):
        rows = proba[area_index == a]
        if rule == "mean":
            agg[row] = rows.mean(axis=0)
        else:
            best = int(np.argmax(rows.max(axis=1)))
            agg[row] = rows[best]
    preds = np.argmax(agg, axis=1)
    return order, agg, preds


@dataclasses.dataclass
class MetricsResult:
    top1: float
    top5: float
    macro_f1: float
    per_class: dict[int, float]   # recall for every class present in labels
    n_samples: int


def compute_metrics(proba: np.ndarray, labels: np.ndarray, n_classes: int) -> MetricsResult:
    """Top-1/top-5 accuracy, macro-F1 and per-class recall.

    Ties in the class ranking resolve to the lowest class index. Macro-F1
    averages F1 over classes present in labels or predictions; a class with
    zero precision and recall contributes 0."""
    proba = np.asarray(proba, dtype=np.float64)
    labels = np.asarray(labels)
    if proba.ndim != 2 or proba.shape[1] != n_classes:
        raise ValidationError(f"proba must be (n, {n_classes}), got {proba.shape}")
    if labels.shape != (proba.shape[0],):
        raise ValidationError("labels length must match proba rows")
    if proba.shape[0] == 0:
        raise ValidationError("cannot compute metrics on zero samples")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValidationError(f"labels must lie within [0, {n_classes})")

    preds = np.argmax(proba, axis=1)
    labels = labels.astype(np.int64)
    top1 = float(np.mean(preds == labels))

    k = min(5, n_classes)
    ranked = np.argsort(-proba, axis=1, kind="stable")[:, :k]
    top5 = float(np.mean(np.any(ranked == labels[:, None], axis=1)))

    present = sorted(set(labels.tolist()) | set(preds.tolist()))
    f1s = []
    for c in present:
        tp = float(np.sum((preds == c) & (labels == c)))
        fp = float(np.sum((preds == c) & (labels != c)))
        fn = float(np.sum((preds != c) & (labels == c)))
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom > 0 else 0.0)
    macro_f1 = float(np.mean(f1s))

    per_class: dict[int, float] = {}
    for c in sorted(set(labels.tolist())):
        mask = labels == c
        per_class[int(c)] = float(np.mean(preds[mask] == c))

    return MetricsResult(top1=top1, top5=top5, macro_f1=macro_f1,
                         per_class=per_class, n_samples=int(labels.size))


@dataclasses.dataclass
class EvalReport:
    protocol: str               # "frozen-probe", "finetune", "head"
    granularity: str            # "single" or "temporal"
    top1: float
    top5: float | None          # None when n_classes <= 5
    macro_f1: float
    per_class: dict[int, float]
    n_samples: int
    n_classes: int

    @classmethod
    def from_metrics(cls, protocol: str, granularity: str, metrics: MetricsResult,
                     n_classes: int) -> "EvalReport":
        return cls(
            protocol=protocol,
            granularity=granularity,
            top1=metrics.top1,
            top5=metrics.top5 if n_classes > 5 else None,
            macro_f1=metrics.macro_f1,
            per_class=metrics.per_class,
            n_samples=metrics.n_samples,
            n_classes=n_classes,
        )

    def to_json_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "granularity": self.granularity,
            "top1": self.top1,
            "top5": self.top5,
            "macro_f1": self.macro_f1,
            "per_class": {str(k): v for k, v in sorted(self.per_class.items())},
            "n_samples": self.n_samples,
            "n_classes": self.n_classes,
        }


def evaluate_probe(
    ckpt: Checkpoint, probe: LinearProbe, manifest: DatasetManifest,
    granularity: str = "temporal", rule: str = "mean", protocol: str = "frozen-probe",
) -> dict[str, EvalReport | None]:
    """Apply a trained probe to a labeled manifest.

    Returns {"single": report, "temporal": report or None}; the temporal
    report aggregates per-view distributions per area."""
    if granularity not in ("single", "temporal"):
        raise ConfigurationError("granularity must be 'single' or 'temporal'")
    if manifest.n_classes is None:
        raise ConfigurationError("evaluation requires n_classes in the manifest header")
    if manifest.n_classes != probe.n_classes:
        raise ConfigurationError(
            f"probe was trained for {probe.n_classes} classes, manifest declares {manifest.n_classes}"
        )
    feats = extract_features(ckpt, manifest, source=probe.feature_source)
    proba = probe.predict_proba(feats.features)
    single = EvalReport.from_metrics(
        protocol, "single",
        compute_metrics(proba, feats.labels, manifest.n_classes),
        manifest.n_classes,
    )
    temporal = None
    if granularity == "temporal":
        order, agg, _ = classify_temporal(proba, feats.area_index, rule=rule)
        area_labels = feats.area_labels[order]
        temporal = EvalReport.from_metrics(
            protocol, "temporal",
            compute_metrics(agg, area_labels, manifest.n_classes),
            manifest.n_classes,
        )
    return {"single": single, "temporal": temporal}


def predict_with_head(ckpt: Checkpoint, manifest: DatasetManifest) -> tuple[np.ndarray, np.ndarray]:
    """Per-view softmax distributions from the checkpoint's own head.

    Returns (proba (n, K), area_index). Used to evaluate the geo-only and
    supervised baselines directly."""
    if ckpt.state.head is None:
        raise ConfigurationError("checkpoint has no classification head")
    images = np.stack([v.image for _, v in manifest.iter_samples()])
    area_index = np.array([i for i, _ in manifest.iter_samples()], dtype=np.int64)
    source = "projection" if ckpt.state.head_input == "projection" else "backbone"
    feats = _batched_forward(ckpt.state.query, images, source)
    logits = model_mod.geo_logits(ckpt.state.head, feats)
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=1, keepdims=True), area_index


# ---------------------------------------------------------------------------
# Finetuning
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class FinetuneConfig:
    epochs: int = 5
    batch_size: int = 64
    lr: float = 0.003
    optimizer_momentum: float = 0.9
    weight_decay: float = 1e-4
    clip_norm: float | None = 10.0   # global gradient-norm ceiling; None disables
    keep_best: bool = True           # return the best epoch-end model by train top-1
    seed: int = 0
    feature_source: str = "backbone"
    probe: ProbeConfig = dataclasses.field(default_factory=ProbeConfig)

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not (self.lr > 0):
            raise ConfigurationError("lr must be positive")
        if not (0.0 <= self.optimizer_momentum < 1.0):
            raise ConfigurationError("optimizer_momentum must be within [0, 1)")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be non-negative")
        if self.clip_norm is not None and not (self.clip_norm > 0):
            raise ConfigurationError("clip_norm must be positive (or None)")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")
        if self.feature_source not in FEATURE_SOURCES:
            raise ConfigurationError(f"feature_source must be one of {FEATURE_SOURCES}")
        self.probe.validate()


@dataclasses.dataclass(eq=False)
class FinetuneResult:
    state: MoCoState            # finetuned query encoder + class head
    report_single: EvalReport
    report_temporal: EvalReport | None
    trace: list[TraceRow]
    probe_train_accuracy: float
    train_accuracy: float       # train-split single-view top-1 of the returned model
    selected_epoch: int         # 0: the probe-equivalent init


def _clip_gradients(grad_sets: list[dict[str, np.ndarray]], clip_norm: float | None) -> None:
    if clip_norm is None:
        return
    total = 0.0
    for grads in grad_sets:
        for g in grads.values():
            total += float(np.sum(g * g))
    norm = np.sqrt(total)
    if norm > clip_norm:
        factor = clip_norm / norm
        for grads in grad_sets:
            for k in grads:
                grads[k] = grads[k] * factor


def _head_accuracy(state: MoCoState, images: np.ndarray, labels0: np.ndarray) -> float:
    source = "projection" if state.head_input == "projection" else "backbone"
    feats = _batched_forward(state.query, images, source)
    logits = model_mod.geo_logits(state.head, feats)
    return float(np.mean(np.argmax(logits, axis=1) == labels0))


def finetune(
    ckpt: Checkpoint,
    train_manifest: DatasetManifest,
    eval_manifest: DatasetManifest,
    cfg: FinetuneConfig | None = None,
) -> FinetuneResult:
    """Jointly train the backbone and a class head from a checkpoint.

    The head starts from a frozen-feature linear probe fit on the training
    split (so zero epochs reproduces the frozen probe exactly); further
    epochs run SGD over single views (no augmentation) with cross-entropy
    and a global gradient-norm ceiling. With keep_best the returned model
    is the epoch-end iterate with the highest training top-1, the init
    included, so finetuning never reports below the frozen probe on its
    own training split.
    """
    cfg = cfg or FinetuneConfig()
    cfg.validate()
    for m, tag in ((train_manifest, "train"), (eval_manifest, "eval")):
        if not m.labeled:
            raise ValidationError(f"finetune {tag} manifest must be fully labeled")
    if train_manifest.n_classes is None:
        raise ConfigurationError("finetune requires n_classes in the manifest header")
    n_classes = train_manifest.n_classes

    feats = extract_features(ckpt, train_manifest, source=cfg.feature_source)
    probe, probe_acc = train_linear_probe(
        feats.features, feats.labels, n_classes, cfg.probe, feature_source=cfg.feature_source
    )
    head = fold_probe_into_head(probe)

    query = ckpt.state.query.copy()
    state = MoCoState(
        query=query, key=None, head=head, queue=None, step=0,
        head_input="projection" if cfg.feature_source == "projection" else "backbone",
    )
    vel_q = {k: np.zeros_like(v) for k, v in query.arrays.items()}
    vel_h = {"weight": np.zeros_like(head.weight), "bias": np.zeros_like(head.bias)}

    images = np.stack([v.image for _, v in train_manifest.iter_samples()])
    labels = np.array([v.label + 1 for _, v in train_manifest.iter_samples()], dtype=np.int64)
    n = images.shape[0]
    n_batches = max(1, n // cfg.batch_size)
    loss_cfg = LossConfig(temperature=1.0, alpha=0.0, beta=1.0, k_clusters=max(2, n_classes))

    def snapshot() -> tuple:
        return (state.query.copy(),
                GeoHeadParams(weight=state.head.weight.copy(), bias=state.head.bias.copy()))

    best_acc = _head_accuracy(state, images, labels - 1)
    best_epoch = 0
    best = snapshot()

    trace: list[TraceRow] = []
    for epoch in range(cfg.epochs):
        order = stream_rng(cfg.seed, "order", epoch).permutation(n)
        for it in range(n_batches):
            idx = order[it * cfg.batch_size:(it + 1) * cfg.batch_size]
            if idx.size == 0:
                continue
            batch = LossBatch(view1=images[idx], view2=None, ce_labels=labels[idx])
            lg = loss_gradients(state, batch, loss_cfg)
            _clip_gradients([lg.grads_query, lg.grads_head], cfg.clip_norm)
            new_q, vel_q = sgd_step(state.query.arrays, lg.grads_query, cfg.lr,
                                    cfg.optimizer_momentum, cfg.weight_decay, vel_q)
            state.query = model_mod.EncoderParams(query.config, new_q)
            head_arrays = {"weight": state.head.weight, "bias": state.head.bias}
            new_h, vel_h = sgd_step(head_arrays, lg.grads_head, cfg.lr,
                                    cfg.optimizer_momentum, cfg.weight_decay, vel_h)
            state.head = GeoHeadParams(weight=new_h["weight"], bias=new_h["bias"])
            state.step += 1
            trace.append(TraceRow(epoch, it, 0.0, lg.loss_ce, lg.loss_total, cfg.lr))
        if cfg.keep_best:
            acc = _head_accuracy(state, images, labels - 1)
            if acc > best_acc:
                best_acc, best_epoch, best = acc, epoch + 1, snapshot()

    if cfg.keep_best:
        state = MoCoState(query=best[0], key=None, head=best[1], queue=None,
                          step=state.step, head_input=state.head_input)
    else:
        best_acc = _head_accuracy(state, images, labels - 1)
        best_epoch = cfg.epochs

    eval_feats = extract_features(
        Checkpoint(
            variant=ckpt.variant, epochs_completed=ckpt.epochs_completed,
            config=ckpt.config, state=state, velocity_query=vel_q, velocity_head=vel_h,
            geo_model_path=ckpt.geo_model_path, n_classes=n_classes,
        ),
        eval_manifest, source=cfg.feature_source,
    )
    logits = model_mod.geo_logits(state.head, eval_feats.features)
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    proba = e / e.sum(axis=1, keepdims=True)
    single = EvalReport.from_metrics(
        "finetune", "single",
        compute_metrics(proba, eval_feats.labels, n_classes), n_classes,
    )
    order, agg, _ = classify_temporal(proba, eval_feats.area_index)
    temporal = EvalReport.from_metrics(
        "finetune", "temporal",
        compute_metrics(agg, eval_feats.area_labels[order], n_classes), n_classes,
    )
    return FinetuneResult(
        state=state, report_single=single, report_temporal=temporal,
        trace=trace, probe_train_accuracy=probe_acc,
        train_accuracy=best_acc, selected_epoch=best_epoch,
    )


# ---------------------------------------------------------------------------
# Report serialization
# ---------------------------------------------------------------------------

def write_report_json(
    reports: dict[str, EvalReport | None], path: str | pathlib.Path
) -> pathlib.Path:
    path = pathlib.Path(path)
    doc = {
        "single": None if reports.get("single") is None else reports["single"].to_json_dict(),
        "temporal": None if reports.get("temporal") is None else reports["temporal"].to_json_dict(),
    }
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return path


def write_per_class_csv(
    single: EvalReport, temporal: EvalReport | None, path: str | pathlib.Path
) -> pathlib.Path:
    """CSV with one row per class present in the eval split."""
    path = pathlib.Path(path)
    lines = ["class,single_accuracy,temporal_accuracy"]
    classes = sorted(single.per_class)
    if temporal is not None:
        classes = sorted(set(classes) | set(temporal.per_class))
    for c in classes:
        s = single.per_class.get(c)
        t = None if temporal is None else temporal.per_class.get(c)
        s_txt = "" if s is None else f"{s:.6f}"
        t_txt = "" if t is None else f"{t:.6f}"
        lines.append(f"{c},{s_txt},{t_txt}")
    path.write_text("\n".join(lines) + "\n")
    return path
