"""Small convolutional encoder with an MLP projection head, written as pure
functions over named float64 parameter arrays.

Forward pass: per-image mean centering, stride-2 conv blocks with a
pointwise nonlinearity, global average pooling (the pre-projection
"backbone" feature used by frozen evaluation), then a projection MLP whose
output is row-wise L2-normalized. Rows are processed independently: there
is no batch-coupled normalization, so each embedding depends only on its
own input.

The centering step subtracts each image's own scalar mean (over pixels and
channels) before the first convolution. Without it, the shared DC level of
the inputs dominates every pooled feature and the embeddings of distinct
images start out nearly parallel, which starves gradient-based training of
signal; centering removes that common component while leaving per-channel
color structure intact.

`encode_backward` implements the exact analytic gradient of any scalar
functional routed through the embedding and/or the backbone feature. The
training losses consume it; finite-difference tests verify it.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ConfigurationError, NumericError, ValidationError
from .negqueue import NegativeQueue

_NORM_EPS = 1e-12

ACTIVATIONS = ("tanh", "relu")


@dataclasses.dataclass
class EncoderConfig:
    height: int = 32
    width: int = 32
    channels: int = 3
    widths: tuple[int, ...] = (32, 64)   # conv filters per block; last = backbone dim
    embed_dim: int = 64
    proj_depth: int = 2                  # >=1 linear layers after pooling
    activation: str = "tanh"
    kernel: int = 3
    stride: int = 2

    def validate(self) -> None:
        if min(self.height, self.width, self.channels) < 1:
            raise ConfigurationError("input geometry must be positive")
        if not self.widths or any(f < 1 for f in self.widths):
            raise ConfigurationError("widths must be a non-empty tuple of positive ints")
        if self.embed_dim < 2:
            raise ConfigurationError("embed_dim must be >= 2")
        if self.proj_depth < 1:
            raise ConfigurationError("proj_depth must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"activation must be one of {ACTIVATIONS}")
        if self.kernel < 1 or self.stride < 1:
            raise ConfigurationError("kernel and stride must be >= 1")
        if self.kernel % 2 != 1:
            raise ConfigurationError("kernel must be odd (same-padding blocks)")

    @property
    def backbone_dim(self) -> int:
        return self.widths[-1]

    def spatial_sizes(self) -> list[tuple[int, int]]:
        """(h, w) after each conv block."""
        pad = self.kernel // 2
        sizes = []
        h, w = self.height, self.width
        for _ in self.widths:
            h = (h + 2 * pad - self.kernel) // self.stride + 1
            w = (w + 2 * pad - self.kernel) // self.stride + 1
            if h < 1 or w < 1:
                raise ConfigurationError("conv stack collapses the spatial extent below 1")
            sizes.append((h, w))
        return sizes

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        d = dict(d)
        d["widths"] = tuple(d["widths"])
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclasses.dataclass(eq=False)
class EncoderParams:
    """Named parameter arrays plus the architecture they instantiate."""

    config: EncoderConfig
    arrays: dict[str, np.ndarray]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def validate(self) -> None:
        expected = param_shapes(self.config)
        if list(self.arrays) != list(expected):
            raise ValidationError(
                f"parameter names {list(self.arrays)} do not match config {list(expected)}"
            )
        for name, shape in expected.items():
            arr = self.arrays[name]
            if arr.shape != shape:
                raise ValidationError(f"parameter {name!r} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"parameter {name!r} contains non-finite values")


def param_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    cfg.validate()
    shapes: dict[str, tuple[int, ...]] = {}
    c_in = cfg.channels
    for i, c_out in enumerate(cfg.widths, start=1):
        shapes[f"conv{i}_w"] = (cfg.kernel, cfg.kernel, c_in, c_out)
        shapes[f"conv{i}_b"] = (c_out,)
        c_in = c_out
    dim = cfg.backbone_dim
    for j in range(1, cfg.proj_depth + 1):
        out = cfg.embed_dim if j == cfg.proj_depth else cfg.backbone_dim
        shapes[f"proj{j}_w"] = (dim, out)
        shapes[f"proj{j}_b"] = (out,)
        dim = out
    return shapes


def init_encoder_params(cfg: EncoderConfig, rng: np.random.Generator) -> EncoderParams:
    """Uniform fan-in init for weights, zero biases. Deterministic per rng."""
    arrays: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("_b"):
            arrays[name] = np.zeros(shape, dtype=np.float64)
        else:
            fan_in = int(np.prod(shape[:-1]))
            bound = 1.0 / np.sqrt(fan_in)
            arrays[name] = rng.uniform(-bound, bound, size=shape)
    return EncoderParams(cfg, arrays)


def _act(cfg: EncoderConfig, pre: np.ndarray) -> np.ndarray:
    if cfg.activation == "tanh":
        return np.tanh(pre)
    return np.maximum(pre, 0.0)


def _act_deriv_from_post(cfg: EncoderConfig, post: np.ndarray) -> np.ndarray:
    if cfg.activation == "tanh":
        return 1.0 - post * post
    return (post > 0.0).astype(np.float64)


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"layer {name!r} produced non-finite values")


def _im2col(x: np.ndarray, kernel: int, stride: int) -> tuple[np.ndarray, int, int]:
    """Flatten kernel windows of a padded NHWC batch into rows.

    Returns (cols (n*oh*ow, k*k*c), oh, ow)."""
    n, h, w, c = x.shape
    pad = kernel // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    oh = (h + 2 * pad - kernel) // stride + 1
    ow = (w + 2 * pad - kernel) // stride + 1
    s0, s1, s2, s3 = xp.strides
    windows = as_strided(
        xp,
        shape=(n, oh, ow, kernel, kernel, c),
        strides=(s0, s1 * stride, s2 * stride, s1, s2, s3),
        writeable=False,
    )
    return windows.reshape(n * oh * ow, kernel * kernel * c), oh, ow


def _col2im(
    dcols: np.ndarray, x_shape: tuple[int, int, int, int], kernel: int, stride: int
) -> np.ndarray:
    """Scatter-add the gradient of `_im2col` back onto the input batch."""
    n, h, w, c = x_shape
    pad = kernel // 2
    oh = (h + 2 * pad - kernel) // stride + 1
    ow = (w + 2 * pad - kernel) // stride + 1
    dwin = dcols.reshape(n, oh, ow, kernel, kernel, c)
    dxp = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=np.float64)
    for i in range(kernel):
        for j in range(kernel):
            dxp[:, i:i + stride * oh:stride, j:j + stride * ow:stride, :] += dwin[:, :, :, i, j, :]
    return dxp[:, pad:pad + h, pad:pad + w, :]


def _forward(params: EncoderParams, batch: np.ndarray, want_cache: bool):
    cfg = params.config
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 4 or x.shape[1:] != (cfg.height, cfg.width, cfg.channels):
        raise ValidationError(
            f"encoder expects input of shape (n, {cfg.height}, {cfg.width}, {cfg.channels}), "
            f"got {x.shape}"
        )
    _check_finite("input", x)
    x = x - x.mean(axis=(1, 2, 3), keepdims=True)

    cache: dict = {"x_shapes": [], "cols": [], "conv_post": []} if want_cache else None
    out = x
    for i in range(1, len(cfg.widths) + 1):
        w2 = params.arrays[f"conv{i}_w"]
        b = params.arrays[f"conv{i}_b"]
        cols, oh, ow = _im2col(out, cfg.kernel, cfg.stride)
        pre = cols @ w2.reshape(-1, w2.shape[-1]) + b
        post = _act(cfg, pre).reshape(out.shape[0], oh, ow, w2.shape[-1])
        _check_finite(f"conv_block_{i}", post)
        if want_cache:
            cache["x_shapes"].append(out.shape)
            cache["cols"].append(cols)
            cache["conv_post"].append(post)
        out = post

    n, oh, ow, feat = out.shape
    gap = out.mean(axis=(1, 2))
    _check_finite("global_pool", gap)
    # row-wise standardization across channels: keeps the projection input
    # at norm sqrt(dim) so the later 1/|p| factor in the normalization
    # Jacobian cannot explode the first gradient steps
    cen = gap - gap.mean(axis=1, keepdims=True)
    feat_sd = np.sqrt((cen * cen).mean(axis=1, keepdims=True) + _FEAT_EPS)
    pooled = cen / feat_sd
    if want_cache:
        cache["gap_shape"] = (n, oh, ow, feat)
        cache["feat_sd"] = feat_sd

    a = pooled
    proj_inputs = []
    proj_post = []
    for j in range(1, cfg.proj_depth + 1):
        wj = params.arrays[f"proj{j}_w"]
        bj = params.arrays[f"proj{j}_b"]
        proj_inputs.append(a)
        pre = a @ wj + bj
        if j < cfg.proj_depth:
            a = _act(cfg, pre)
            proj_post.append(a)
        else:
            a = pre
        _check_finite(f"projection_{j}", a)
    p = a
    norms = np.sqrt(np.sum(p * p, axis=1))
    z = p / np.maximum(norms, _NORM_EPS)[:, None]
    _check_finite("embedding_norm", z)
    if want_cache:
        cache["proj_inputs"] = proj_inputs
        cache["proj_post"] = proj_post
        cache["p"] = p
        cache["norms"] = norms
        cache["z"] = z
        cache["pooled"] = pooled
        cache["params"] = params
    return z, pooled, cache


def encode(params: EncoderParams, batch: np.ndarray) -> np.ndarray:
    """Unit-norm embeddings, one row per input row."""
    z, _, _ = _forward(params, batch, want_cache=False)
    return z


def encode_with_cache(params: EncoderParams, batch: np.ndarray):
    """(embeddings, backbone features, cache) for a later backward pass."""
    return _forward(params, batch, want_cache=True)


def backbone_features(params: EncoderParams, batch: np.ndarray) -> np.ndarray:
    """Pre-projection pooled features (frozen-evaluation default)."""
    _, pooled, _ = _forward(params, batch, want_cache=False)
    return pooled


def encode_backward(
    cache: dict,
    d_embedding: np.ndarray | None = None,
    d_backbone: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Exact gradients w.r.t. every parameter array.

    d_embedding is dL/dz (post-normalization); d_backbone is dL/d(pooled)
    for losses attached to the pre-projection feature. Either may be None.
    """
    params: EncoderParams = cache["params"]
    cfg = params.config
    if d_embedding is None and d_backbone is None:
        raise ValidationError("encode_backward needs at least one upstream gradient")

    grads: dict[str, np.ndarray] = {}
    n = cache["pooled"].shape[0]

    if d_embedding is not None:
        z = cache["z"]
        norms = np.maximum(cache["norms"], _NORM_EPS)[:, None]
        zdz = np.sum(z * d_embedding, axis=1, keepdims=True)
        da = (d_embedding - z * zdz) / norms
        for j in range(cfg.proj_depth, 0, -1):
            wj = params.arrays[f"proj{j}_w"]
            if j < cfg.proj_depth:
                da = da * _act_deriv_from_post(cfg, cache["proj_post"][j - 1])
            a_in = cache["proj_inputs"][j - 1]
            grads[f"proj{j}_w"] = a_in.T @ da
            grads[f"proj{j}_b"] = da.sum(axis=0)
            da = da @ wj.T
        d_pooled = da
    else:
        for j in range(1, cfg.proj_depth + 1):
            grads[f"proj{j}_w"] = np.zeros_like(params.arrays[f"proj{j}_w"])
            grads[f"proj{j}_b"] = np.zeros_like(params.arrays[f"proj{j}_b"])
        d_pooled = np.zeros((n, cfg.backbone_dim), dtype=np.float64)

    if d_backbone is not None:
        d_pooled = d_pooled + d_backbone

    # through the row-wise standardization: f = cen / sd with
    # mean(f) = 0, so dL/dgap = (g - mean(g) - f * mean(g * f)) / sd
    f = cache["pooled"]
    sd = cache["feat_sd"]
    d_gap = (
        d_pooled
        - d_pooled.mean(axis=1, keepdims=True)
        - f * np.mean(d_pooled * f, axis=1, keepdims=True)
    ) / sd

    _, oh, ow, feat = cache["gap_shape"]
    dout = np.broadcast_to(
        d_gap[:, None, None, :] / (oh * ow), (n, oh, ow, feat)
    )
    for i in range(len(cfg.widths), 0, -1):
        post = cache["conv_post"][i - 1]
        dpre = (dout * _act_deriv_from_post(cfg, post)).reshape(-1, post.shape[-1])
        cols = cache["cols"][i - 1]
        w2 = params.arrays[f"conv{i}_w"]
        grads[f"conv{i}_w"] = (cols.T @ dpre).reshape(w2.shape)
        grads[f"conv{i}_b"] = dpre.sum(axis=0)
        if i > 1:
            dcols = dpre @ w2.reshape(-1, w2.shape[-1]).T
            dout = _col2im(dcols, cache["x_shapes"][i - 1], cfg.kernel, cfg.stride)
    return {name: grads[name] for name in params.arrays}


# ---------------------------------------------------------------------------
# Classification head (geo clusters or class labels)
# ---------------------------------------------------------------------------

@dataclasses.dataclass(eq=False)
class GeoHeadParams:
    weight: np.ndarray   # (feature dim, n_outputs)
    bias: np.ndarray     # (n_outputs,)

    def copy(self) -> "GeoHeadParams":
        return GeoHeadParams(self.weight.copy(), self.bias.copy())

    @property
    def n_outputs(self) -> int:
        return self.weight.shape[1]

    def validate(self) -> None:
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValidationError(
                f"head shapes inconsistent: weight {self.weight.shape}, bias {self.bias.shape}"
            )
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise NumericError("head parameters contain non-finite values")


def init_head(dim: int, n_outputs: int) -> GeoHeadParams:
    """Zero init: the head starts with a uniform predictive distribution."""
    if dim < 1 or n_outputs < 2:
        raise ConfigurationError("head needs dim >= 1 and n_outputs >= 2")
    return GeoHeadParams(
        weight=np.zeros((dim, n_outputs), dtype=np.float64),
        bias=np.zeros(n_outputs, dtype=np.float64),
    )


def geo_logits(head: GeoHeadParams, features: np.ndarray) -> np.ndarray:
    """Linear logits over cluster/class ids for a batch of feature rows."""
    head.validate()
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != head.weight.shape[0]:
        raise ValidationError(
            f"features of shape {features.shape} do not match head input dim {head.weight.shape[0]}"
        )
    if not np.all(np.isfinite(features)):
        raise NumericError("head input contains non-finite values")
    return features @ head.weight + head.bias


# ---------------------------------------------------------------------------
# Momentum (EMA) update and training state
# ---------------------------------------------------------------------------

def momentum_update(theta_k: EncoderParams, theta_q: EncoderParams, m: float) -> EncoderParams:
    """theta_k <- m * theta_k + (1 - m) * theta_q, as a pure function."""
    if not (0.0 <= m <= 1.0):
        raise ConfigurationError("momentum coefficient m must be within [0, 1]")
    if list(theta_k.arrays) != list(theta_q.arrays):
        raise ValidationError("encoder parameter sets do not match")
    out: dict[str, np.ndarray] = {}
    for name, k_arr in theta_k.arrays.items():
        q_arr = theta_q.arrays[name]
        if k_arr.shape != q_arr.shape:
            raise ValidationError(f"parameter {name!r} shape mismatch between encoders")
        out[name] = m * k_arr + (1.0 - m) * q_arr
    return EncoderParams(theta_k.config, out)


@dataclasses.dataclass(eq=False)
class MoCoState:
    """Everything the training step mutates.

    key/queue are None for the geo-only and supervised baselines; head is
    None for the purely contrastive variants. head_input selects what the
    head consumes: the normalized embedding ("projection", default) or the
    pre-projection pooled feature ("backbone").
    """

    query: EncoderParams
    key: EncoderParams | None
    head: GeoHeadParams | None
    queue: NegativeQueue | None
    step: int = 0
    head_input: str = "projection"


# ---------------------------------------------------------------------------
# Flatten/unflatten helpers (finite-difference checks, probes)
# ---------------------------------------------------------------------------

def flatten_arrays(arrays: dict[str, np.ndarray]) -> tuple[np.ndarray, list[tuple[str, tuple[int, ...]]]]:
    spec = [(name, arr.shape) for name, arr in arrays.items()]
    if not spec:
        return np.zeros(0), spec
    vec = np.concatenate([arr.ravel() for arr in arrays.values()])
    return vec, spec


def unflatten_arrays(vec: np.ndarray, spec: list[tuple[str, tuple[int, ...]]]) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    pos = 0
    for name, shape in spec:
        size = int(np.prod(shape)) if shape else 1
        out[name] = vec[pos:pos + size].reshape(shape).copy()
        pos += size
    if pos != vec.size:
        raise ValidationError("vector length does not match the parameter spec")
    return out
