"""Contrastive and classification losses with exact analytic gradients.

All losses are means over the batch and are computed with max-subtracted
(stable) log-sum-exp. `loss_gradients` differentiates the combined training
objective through the query encoder and the classification head; the key
encoder is a constant target and never receives gradient.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ConfigurationError, NumericError, ValidationError
from . import model as model_mod
from .model import MoCoState

_UNIT_TOL = 1e-6


@dataclasses.dataclass
class LossConfig:
    temperature: float = 0.2   # similarity scaling; must be positive
    alpha: float = 1.0         # contrastive weight
    beta: float = 1.0          # geo cross-entropy weight
    k_clusters: int = 100      # geo label space size {1..K}

    def validate(self) -> None:
        if not (self.temperature > 0.0) or not np.isfinite(self.temperature):
            raise ConfigurationError("temperature must be a positive finite number")
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ConfigurationError("loss weights must be non-negative")
        if self.alpha == 0.0 and self.beta == 0.0:
            raise ConfigurationError("alpha and beta cannot both be zero")
        if self.k_clusters < 2:
            raise ConfigurationError("k_clusters must be >= 2")


def _require_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values")


def _require_unit_rows(name: str, arr: np.ndarray) -> None:
    norms = np.linalg.norm(arr, axis=1)
    if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise ValidationError(f"{name} rows must be unit-norm within {_UNIT_TOL}; worst {worst:.3e}")


def _info_nce_core(
    z: np.ndarray, z_pos: np.ndarray, negatives: np.ndarray, temperature: float,
    want_grad: bool,
):
    if not (temperature > 0.0):
        raise ConfigurationError("temperature must be positive")
    z = np.asarray(z, dtype=np.float64)
    z_pos = np.asarray(z_pos, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.float64)
    if z.ndim != 2 or z_pos.shape != z.shape:
        raise ValidationError(f"z {z.shape} and z_pos {z_pos.shape} must be matching (n, d) arrays")
    if negatives.ndim != 2 or negatives.shape[1] != z.shape[1] or negatives.shape[0] < 1:
        raise ValidationError(
            f"negatives must be (J >= 1, {z.shape[1]}), got {negatives.shape}"
        )
    for name, arr in (("z", z), ("z_pos", z_pos), ("negatives", negatives)):
        _require_finite(name, arr)
        _require_unit_rows(name, arr)

    pos = np.sum(z * z_pos, axis=1) / temperature              # (n,)
    neg = (z @ negatives.T) / temperature                      # (n, J)
    logits = np.concatenate([pos[:, None], neg], axis=1)       # (n, 1+J)
    m = logits.max(axis=1, keepdims=True)
    shifted = np.exp(logits - m)
    denom = shifted.sum(axis=1)
    per_sample = (m[:, 0] + np.log(denom)) - pos
    mean = float(per_sample.mean())
    if not want_grad:
        return per_sample, mean, None
    softmax = shifted / denom[:, None]
    n = z.shape[0]
    # dL_i/dz_i = ((p_i0 - 1) * z_pos_i + sum_j p_ij * k_j) / temperature, then / n
    dz = ((softmax[:, :1] - 1.0) * z_pos + softmax[:, 1:] @ negatives) / (temperature * n)
    return per_sample, mean, dz


def info_nce(
    z: np.ndarray, z_pos: np.ndarray, negatives: np.ndarray, temperature: float
) -> tuple[np.ndarray, float]:
    """Contrastive loss of each query against its positive key and J negatives.

    Returns (per-sample losses (n,), batch mean). All embedding rows must be
    unit-norm. With an empty candidate set the loss would be identically
    zero; callers pass J >= 1 (the trainer skips the term while the queue is
    still empty)."""
    per_sample, mean, _ = _info_nce_core(z, z_pos, negatives, temperature, want_grad=False)
    return per_sample, mean


def geo_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, float]:
    """Cross-entropy over 1-based labels in {1..K} for (n, K) logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    per_sample, mean, _ = _cross_entropy_core(logits, labels, want_grad=False)
    return per_sample, mean


def _cross_entropy_core(logits: np.ndarray, labels: np.ndarray, want_grad: bool):
    if logits.ndim != 2:
        raise ValidationError(f"logits must be (n, K), got {logits.shape}")
    _require_finite("logits", logits)
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValidationError(f"labels must be shape ({n},), got {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValidationError("labels must be integers")
    if labels.min(initial=1) < 1 or labels.max(initial=1) > k:
        raise ValidationError(f"labels must lie within 1..{k}")
    idx = labels.astype(np.int64) - 1
    m = logits.max(axis=1, keepdims=True)
    shifted = np.exp(logits - m)
    denom = shifted.sum(axis=1)
    per_sample = (m[:, 0] + np.log(denom)) - logits[np.arange(n), idx]
    mean = float(per_sample.mean())
    if not want_grad:
        return per_sample, mean, None
    softmax = shifted / denom[:, None]
    softmax[np.arange(n), idx] -= 1.0
    return per_sample, mean, softmax / n


def combined_loss(loss_contrastive: float, loss_geo: float, alpha: float, beta: float) -> float:
    """Weighted sum of the two objectives."""
    total = alpha * loss_contrastive + beta * loss_geo
    if not np.isfinite(total):
        raise NumericError("combined loss is non-finite")
    return float(total)


@dataclasses.dataclass
class LossBatch:
    """Inputs to one gradient computation.

    view1 feeds the query encoder. view2 (contrastive variants) feeds the
    key encoder. ce_labels are 1-based head targets (geo clusters, or class
    labels shifted by +1 for the supervised baseline)."""

    view1: np.ndarray
    view2: np.ndarray | None = None
    ce_labels: np.ndarray | None = None


@dataclasses.dataclass
class LossGradients:
    loss_contrastive: float
    loss_ce: float
    loss_total: float
    grads_query: dict[str, np.ndarray]
    grads_head: dict[str, np.ndarray] | None
    embeddings: np.ndarray
    key_embeddings: np.ndarray | None


def loss_gradients(state: MoCoState, batch: LossBatch, cfg: LossConfig) -> LossGradients:
    """Mean combined loss and its exact gradients w.r.t. the query encoder
    and head parameters.

    Contrastive variants: total = alpha * contrastive + beta * cross-entropy
    (the latter only when a head and labels are present). Head-only
    baselines (no queue): total = cross-entropy, unweighted. The key
    embedding and the queue snapshot are constants: no gradient flows into
    the key encoder. While the queue is empty the contrastive term is 0.0
    with zero gradient (the no-negatives limit)."""
    cfg.validate()
    contrastive_mode = state.queue is not None
    if contrastive_mode and (state.key is None or batch.view2 is None):
        raise ConfigurationError("contrastive gradients need a key encoder and a second view")
    if not contrastive_mode and (state.head is None or batch.ce_labels is None):
        raise ConfigurationError("head-only gradients need a head and labels")
    if state.head_input not in ("projection", "backbone"):
        raise ConfigurationError(f"unknown head_input {state.head_input!r}")

    z, pooled, cache = model_mod.encode_with_cache(state.query, batch.view1)

    loss_c = 0.0
    dz_contrastive = None
    z_key = None
    if contrastive_mode:
        z_key = model_mod.encode(state.key, batch.view2)
        if state.queue.fill > 0:
            negatives = state.queue.snapshot()
            _, loss_c, dz_contrastive = _info_nce_core(
                z, z_key, negatives, cfg.temperature, want_grad=True
            )

    loss_ce = 0.0
    grads_head = None
    d_head_in = None
    if state.head is not None and batch.ce_labels is not None:
        head_in = z if state.head_input == "projection" else pooled
        logits = model_mod.geo_logits(state.head, head_in)
        _, loss_ce, dlogits = _cross_entropy_core(logits, batch.ce_labels, want_grad=True)
        ce_weight = cfg.beta if contrastive_mode else 1.0
        grads_head = {
            "weight": ce_weight * (head_in.T @ dlogits),
            "bias": ce_weight * dlogits.sum(axis=0),
        }
        d_head_in = ce_weight * (dlogits @ state.head.weight.T)

    if contrastive_mode:
        loss_total = combined_loss(loss_c, loss_ce, cfg.alpha, cfg.beta)
        dz = None
        if dz_contrastive is not None:
            dz = cfg.alpha * dz_contrastive
        d_backbone = None
        if d_head_in is not None:
            if state.head_input == "projection":
                dz = d_head_in if dz is None else dz + d_head_in
            else:
                d_backbone = d_head_in
        if dz is None and d_backbone is None:
            # empty queue, no head: zero loss, zero gradient
            grads_query = {k: np.zeros_like(v) for k, v in state.query.arrays.items()}
        else:
            grads_query = model_mod.encode_backward(cache, d_embedding=dz, d_backbone=d_backbone)
    else:
        loss_total = float(loss_ce)
        if state.head_input == "projection":
            grads_query = model_mod.encode_backward(cache, d_embedding=d_head_in)
        else:
            grads_query = model_mod.encode_backward(cache, d_backbone=d_head_in)

    return LossGradients(
        loss_contrastive=float(loss_c),
        loss_ce=float(loss_ce),
        loss_total=float(loss_total),
        grads_query=grads_query,
        grads_head=grads_head,
        embeddings=z,
        key_embeddings=z_key,
    )
