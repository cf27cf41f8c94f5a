"""Dataset model, JSONL manifest I/O, synthetic geo-temporal data, sampling
and augmentation.

A dataset is a set of *areas*. Each area has fixed (lat, lon) coordinates,
an optional class label shared by all of its views, and T_i >= 1 views:
images of the same place taken at different timestamps. Images are float64
arrays of shape (h, w, ch) with values in [0, 1].

On disk a dataset is a JSON-lines manifest plus one lossless .npy file per
view. The first line is a header object; every following line is one view
record. See `write_manifest` / `load_manifest` for the exact schema.
"""

from __future__ import annotations

import dataclasses
import json
import math
import pathlib
from typing import Iterator

import numpy as np

from .errors import ConfigurationError, ManifestParseError, ValidationError
from .rng import stream_rng

MANIFEST_NAME = "manifest.jsonl"

_HEADER_REQUIRED = {"h", "w", "ch", "n_classes"}
_HEADER_OPTIONAL = {"image_format", "provenance"}
_RECORD_KEYS = {"area_id", "view_index", "timestamp", "lat", "lon", "image_path", "label"}


@dataclasses.dataclass(eq=False)
class GeoSample:
    """One view of one area. Equality ignores image_path (storage detail)."""

    area_id: str
    view_index: int                # 1-based, contiguous within the area
    timestamp: str                 # ISO-8601; ordering follows view_index
    image: np.ndarray              # (h, w, ch) float64 in [0, 1]
    lat: float
    lon: float
    label: int | None = None
    image_path: str | None = None  # relative to the manifest directory

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GeoSample):
            return NotImplemented
        return (
            self.area_id == other.area_id
            and self.view_index == other.view_index
            and self.timestamp == other.timestamp
            and self.lat == other.lat
            and self.lon == other.lon
            and self.label == other.label
            and np.array_equal(self.image, other.image)
        )


@dataclasses.dataclass(eq=False)
class AreaRecord:
    """All views of one area, ordered by view_index."""

    area_id: str
    lat: float
    lon: float
    label: int | None
    views: list[GeoSample]

    @property
    def n_views(self) -> int:
        return len(self.views)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AreaRecord):
            return NotImplemented
        return (
            self.area_id == other.area_id
            and self.lat == other.lat
            and self.lon == other.lon
            and self.label == other.label
            and self.views == other.views
        )


@dataclasses.dataclass(eq=False)
class DatasetManifest:
    h: int
    w: int
    ch: int
    n_classes: int | None
    areas: list[AreaRecord]
    provenance: dict = dataclasses.field(default_factory=dict)
    image_format: str = "npy"

    @property
    def n_areas(self) -> int:
        return len(self.areas)

    @property
    def total_samples(self) -> int:
        return sum(a.n_views for a in self.areas)

    @property
    def labeled(self) -> bool:
        return all(a.label is not None for a in self.areas)

    def iter_samples(self) -> Iterator[tuple[int, GeoSample]]:
        """Yield (area position, view) over all views in manifest order."""
        for i, area in enumerate(self.areas):
            for view in area.views:
                yield i, view

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DatasetManifest):
            return NotImplemented
        return (
            self.h == other.h
            and self.w == other.w
            and self.ch == other.ch
            and self.n_classes == other.n_classes
            and self.image_format == other.image_format
            and self.provenance == other.provenance
            and self.areas == other.areas
        )


def validate_manifest(manifest: DatasetManifest) -> None:
    """Check every documented dataset invariant; raise ValidationError."""
    seen: set[str] = set()
    for area in manifest.areas:
        aid = area.area_id
        if aid in seen:
            raise ValidationError(f"area {aid!r}: duplicate area_id")
        seen.add(aid)
        if not area.views:
            raise ValidationError(f"area {aid!r}: has no views")
        if not (-90.0 <= area.lat <= 90.0) or not (-180.0 <= area.lon <= 180.0):
            raise ValidationError(f"area {aid!r}: coordinates out of range")
        if area.label is not None:
            if area.label < 0:
                raise ValidationError(f"area {aid!r}: negative label")
            if manifest.n_classes is not None and area.label >= manifest.n_classes:
                raise ValidationError(
                    f"area {aid!r}: label {area.label} >= n_classes {manifest.n_classes}"
                )
        indices = [v.view_index for v in area.views]
        if indices != list(range(1, len(indices) + 1)):
            raise ValidationError(
                f"area {aid!r}: view_index values must be contiguous from 1, got {indices}"
            )
        for v in area.views:
            if (v.lat, v.lon, v.label) != (area.lat, area.lon, area.label):
                raise ValidationError(
                    f"area {aid!r}: views disagree on lat/lon/label"
                )
            if v.image.shape != (manifest.h, manifest.w, manifest.ch):
                raise ValidationError(
                    f"area {aid!r}: image shape {v.image.shape} does not match header "
                    f"({manifest.h}, {manifest.w}, {manifest.ch})"
                )
            if not np.all((v.image >= 0.0) & (v.image <= 1.0)):
                raise ValidationError(f"area {aid!r}: image values outside [0, 1]")


# ---------------------------------------------------------------------------
# Manifest I/O
# ---------------------------------------------------------------------------

def write_manifest(manifest: DatasetManifest, out_dir: str | pathlib.Path) -> pathlib.Path:
    """Write manifest.jsonl plus images/<area>_v<k>.npy under out_dir.

    Deterministic: identical manifests produce byte-identical trees. The
    input manifest is not mutated. Returns the manifest path.
    """
    out = pathlib.Path(out_dir)
    images = out / "images"
    images.mkdir(parents=True, exist_ok=True)
    header = {
        "h": int(manifest.h),
        "w": int(manifest.w),
        "ch": int(manifest.ch),
        "n_classes": None if manifest.n_classes is None else int(manifest.n_classes),
        "image_format": manifest.image_format,
        "provenance": manifest.provenance,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for area in manifest.areas:
        for view in area.views:
            rel = f"images/{area.area_id}_v{view.view_index:02d}.npy"
            np.save(images / f"{area.area_id}_v{view.view_index:02d}.npy",
                    np.asarray(view.image, dtype=np.float64), allow_pickle=False)
            record = {
                "area_id": area.area_id,
                "view_index": int(view.view_index),
                "timestamp": view.timestamp,
                "lat": float(area.lat),
                "lon": float(area.lon),
                "image_path": rel,
                "label": None if area.label is None else int(area.label),
            }
            lines.append(json.dumps(record, sort_keys=True))
    path = out / MANIFEST_NAME
    path.write_text("\n".join(lines) + "\n")
    return path


def _parse_header(obj: dict, line_no: int) -> tuple[int, int, int, int | None, str, dict]:
    keys = set(obj)
    if not _HEADER_REQUIRED <= keys:
        raise ManifestParseError(
            f"manifest line {line_no}: header missing keys {sorted(_HEADER_REQUIRED - keys)}"
        )
    unknown = keys - _HEADER_REQUIRED - _HEADER_OPTIONAL
    if unknown:
        raise ManifestParseError(f"manifest line {line_no}: unknown header keys {sorted(unknown)}")
    for k in ("h", "w", "ch"):
        if not isinstance(obj[k], int) or isinstance(obj[k], bool) or obj[k] < 1:
            raise ManifestParseError(f"manifest line {line_no}: header {k!r} must be a positive integer")
    n_classes = obj["n_classes"]
    if n_classes is not None and (not isinstance(n_classes, int) or isinstance(n_classes, bool) or n_classes < 2):
        raise ManifestParseError(f"manifest line {line_no}: n_classes must be null or an integer >= 2")
    fmt = obj.get("image_format", "npy")
    if fmt != "npy":
        raise ManifestParseError(f"manifest line {line_no}: unsupported image_format {fmt!r}")
    prov = obj.get("provenance", {})
    if not isinstance(prov, dict):
        raise ManifestParseError(f"manifest line {line_no}: provenance must be an object")
    return obj["h"], obj["w"], obj["ch"], n_classes, fmt, prov


def _parse_record(obj: dict, line_no: int) -> dict:
    keys = set(obj)
    if keys != _RECORD_KEYS:
        missing = sorted(_RECORD_KEYS - keys)
        extra = sorted(keys - _RECORD_KEYS)
        detail = []
        if missing:
            detail.append(f"missing {missing}")
        if extra:
            detail.append(f"unknown {extra}")
        raise ManifestParseError(f"manifest line {line_no}: bad record keys: {', '.join(detail)}")
    if not isinstance(obj["area_id"], str) or not obj["area_id"]:
        raise ManifestParseError(f"manifest line {line_no}: area_id must be a non-empty string")
    if not isinstance(obj["view_index"], int) or isinstance(obj["view_index"], bool) or obj["view_index"] < 1:
        raise ManifestParseError(f"manifest line {line_no}: view_index must be an integer >= 1")
    if not isinstance(obj["timestamp"], str):
        raise ManifestParseError(f"manifest line {line_no}: timestamp must be a string")
    for k in ("lat", "lon"):
        if not isinstance(obj[k], (int, float)) or isinstance(obj[k], bool):
            raise ManifestParseError(f"manifest line {line_no}: {k} must be a number")
    if not isinstance(obj["image_path"], str) or not obj["image_path"]:
        raise ManifestParseError(f"manifest line {line_no}: image_path must be a non-empty string")
    label = obj["label"]
    if label is not None and (not isinstance(label, int) or isinstance(label, bool)):
        raise ManifestParseError(f"manifest line {line_no}: label must be null or an integer")
    return obj


def load_manifest(path: str | pathlib.Path) -> DatasetManifest:
    """Load and fully validate a manifest written by `write_manifest`.

    Raises ManifestParseError (naming the line number) for structural
    problems, ValidationError (naming the area) for invariant violations,
    and FileNotFoundError naming the path for missing image files.
    """
    path = pathlib.Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest file not found: {path}")
    base = path.parent
    lines = path.read_text().splitlines()
    if not lines:
        raise ManifestParseError("manifest line 1: empty manifest file")

    def parse_json(text: str, line_no: int) -> dict:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ManifestParseError(f"manifest line {line_no}: invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise ManifestParseError(f"manifest line {line_no}: expected a JSON object")
        return obj

    h, w, ch, n_classes, fmt, prov = _parse_header(parse_json(lines[0], 1), 1)

    order: list[str] = []
    grouped: dict[str, list[tuple[dict, int]]] = {}
    for offset, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        rec = _parse_record(parse_json(text, offset), offset)
        aid = rec["area_id"]
        if aid not in grouped:
            grouped[aid] = []
            order.append(aid)
        grouped[aid].append((rec, offset))

    areas: list[AreaRecord] = []
    for aid in order:
        recs = sorted(grouped[aid], key=lambda pair: pair[0]["view_index"])
        views: list[GeoSample] = []
        for rec, line_no in recs:
            img_path = base / rec["image_path"]
            if not img_path.exists():
                raise FileNotFoundError(f"image file not found: {img_path}")
            image = np.load(img_path, allow_pickle=False)
            if not np.issubdtype(image.dtype, np.floating):
                raise ValidationError(f"area {aid!r}: image {img_path} has non-float dtype {image.dtype}")
            views.append(
                GeoSample(
                    area_id=aid,
                    view_index=rec["view_index"],
                    timestamp=rec["timestamp"],
                    image=np.asarray(image, dtype=np.float64),
                    lat=float(rec["lat"]),
                    lon=float(rec["lon"]),
                    label=rec["label"],
                    image_path=rec["image_path"],
                )
            )
        first = recs[0][0]
        areas.append(
            AreaRecord(
                area_id=aid,
                lat=float(first["lat"]),
                lon=float(first["lon"]),
                label=first["label"],
                views=views,
            )
        )
    manifest = DatasetManifest(
        h=h, w=w, ch=ch, n_classes=n_classes, areas=areas,
        provenance=prov, image_format=fmt,
    )
    validate_manifest(manifest)
    return manifest


def split_manifest(
    manifest: DatasetManifest, holdout_fraction: float, seed: int = 0
) -> tuple[DatasetManifest, DatasetManifest]:
    """Split areas into (train, holdout) deterministically.

    round(n_areas * holdout_fraction) areas are held out; both halves keep
    the original area order. Views are never split across halves.
    """
    if not (0.0 <= holdout_fraction < 1.0):
        raise ConfigurationError("holdout_fraction must be in [0, 1)")
    n = manifest.n_areas
    n_hold = int(round(n * holdout_fraction))
    perm = stream_rng(seed, "split").permutation(n)
    hold_idx = set(int(i) for i in perm[:n_hold])

    def subset(indices: list[int], tag: str) -> DatasetManifest:
        prov = dict(manifest.provenance)
        prov["split"] = {"part": tag, "seed": int(seed), "holdout_fraction": float(holdout_fraction)}
        return DatasetManifest(
            h=manifest.h, w=manifest.w, ch=manifest.ch, n_classes=manifest.n_classes,
            areas=[manifest.areas[i] for i in indices],
            provenance=prov, image_format=manifest.image_format,
        )

    train_ids = [i for i in range(n) if i not in hold_idx]
    hold_ids = [i for i in range(n) if i in hold_idx]
    return subset(train_ids, "train"), subset(hold_ids, "holdout")


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class SyntheticSpec:
    """Generative settings for the synthetic geo-temporal dataset.

    Areas draw a latent geo-center; coordinates are the center plus Gaussian
    noise. With probability rho the class label is a fixed function of the
    center (center g -> g mod n_classes), otherwise uniform. The base image
    is the class template plus an area-specific offset, made of a constant
    color shift and a smooth texture field; the texture is the area's
    persistent appearance identity, the signal that makes instance-level
    contrastive learning possible. Each view adds a brightness shift, a
    small integer translation and pixel noise, all scaled by temporal_noise.
    """

    n_areas: int = 200
    n_classes: int = 4
    min_views: int = 1
    max_views: int = 3
    h: int = 32
    w: int = 32
    ch: int = 3
    n_geo: int | None = None            # default: 2 * n_classes
    rho: float = 0.9                    # geo-class correlation
    temporal_noise: float = 0.5         # view nuisance strength
    area_offset: float = 0.06           # per-area constant color shift bound
    area_texture: float = 0.06          # RMS amplitude of the per-area texture field
    coord_noise: float = 1.0            # degrees, around the geo-center
    template_contrast: float = 0.16     # RMS contrast of class templates
    lat_range: tuple[float, float] = (-55.0, 65.0)
    lon_range: tuple[float, float] = (-170.0, 170.0)
    min_center_separation: float = 18.0  # degrees between geo-centers

    def resolved_n_geo(self) -> int:
        return 2 * self.n_classes if self.n_geo is None else self.n_geo

    def validate(self) -> None:
        if self.n_areas < 1:
            raise ConfigurationError("n_areas must be >= 1")
        if self.n_classes < 2:
            raise ConfigurationError("n_classes must be >= 2")
        if not (1 <= self.min_views <= self.max_views):
            raise ConfigurationError("need 1 <= min_views <= max_views")
        if min(self.h, self.w, self.ch) < 1:
            raise ConfigurationError("image geometry must be positive")
        if self.resolved_n_geo() < 1:
            raise ConfigurationError("n_geo must be >= 1")
        if not (0.0 <= self.rho <= 1.0):
            raise ConfigurationError("rho must be within [0, 1]")
        if (self.temporal_noise < 0 or self.area_offset < 0
                or self.area_texture < 0 or self.coord_noise < 0):
            raise ConfigurationError("noise scales must be non-negative")
        if self.template_contrast <= 0:
            raise ConfigurationError("template_contrast must be positive")
        for lo, hi in (self.lat_range, self.lon_range):
            if lo >= hi:
                raise ConfigurationError("coordinate ranges must satisfy lo < hi")


def _place_centers(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Sample well-separated geo-centers by rejection; deterministic."""
    n_geo = spec.resolved_n_geo()
    sep = float(spec.min_center_separation)
    centers: list[np.ndarray] = []
    rejects = 0
    while len(centers) < n_geo:
        cand = np.array([
            rng.uniform(*spec.lat_range),
            rng.uniform(*spec.lon_range),
        ])
        if all(np.linalg.norm(cand - c) >= sep for c in centers):
            centers.append(cand)
            rejects = 0
        else:
            rejects += 1
            if rejects >= 2000:      # overly tight separation: relax, stay deterministic
                sep *= 0.8
                rejects = 0
    return np.stack(centers)


def _class_templates(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Smooth per-class image templates with fixed RMS contrast around 0.5."""
    ys = (np.arange(spec.h, dtype=np.float64) / spec.h)[:, None]
    xs = (np.arange(spec.w, dtype=np.float64) / spec.w)[None, :]
    templates = np.empty((spec.n_classes, spec.h, spec.w, spec.ch))
    for c in range(spec.n_classes):
        for k in range(spec.ch):
            field = np.zeros((spec.h, spec.w))
            for _ in range(3):
                amp = rng.uniform(0.5, 1.0)
                theta = rng.uniform(0.0, 2.0 * math.pi)
                freq = rng.uniform(0.7, 2.3)
                phase = rng.uniform(0.0, 2.0 * math.pi)
                field += amp * np.cos(
                    2.0 * math.pi * freq * (math.cos(theta) * xs + math.sin(theta) * ys) + phase
                )
            field -= field.mean()
            rms = float(np.sqrt(np.mean(field ** 2)))
            if rms > 0:
                field *= spec.template_contrast / rms
            templates[c, :, :, k] = 0.5 + field
    return templates


def _area_texture(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Smooth per-area luminance field at fixed RMS amplitude.

    Two random plane-wave components in the same frequency band as the class
    templates: distinguishing areas takes real pattern features, not a shortcut
    statistic."""
    if spec.area_texture == 0.0:
        return np.zeros((spec.h, spec.w))
    ys = (np.arange(spec.h, dtype=np.float64) / spec.h)[:, None]
    xs = (np.arange(spec.w, dtype=np.float64) / spec.w)[None, :]
    field = np.zeros((spec.h, spec.w))
    for _ in range(2):
        amp = rng.uniform(0.5, 1.0)
        theta = rng.uniform(0.0, 2.0 * math.pi)
        freq = rng.uniform(0.7, 2.3)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        field += amp * np.cos(
            2.0 * math.pi * freq * (math.cos(theta) * xs + math.sin(theta) * ys) + phase
        )
    field -= field.mean()
    rms = float(np.sqrt(np.mean(field ** 2)))
    if rms > 0:
        field *= spec.area_texture / rms
    return field


def generate_synthetic(spec: SyntheticSpec, seed: int = 0) -> DatasetManifest:
    """Generate an in-memory synthetic dataset; byte-deterministic per (spec, seed)."""
    spec.validate()
    n_geo = spec.resolved_n_geo()
    centers = _place_centers(spec, stream_rng(seed, "synth", 0))
    templates = _class_templates(spec, stream_rng(seed, "synth", 1))
    center_class = np.arange(n_geo) % spec.n_classes

    rng_area = stream_rng(seed, "synth", 2)
    rng_view = stream_rng(seed, "synth", 3)
    max_shift = int(round(2.0 * spec.temporal_noise))
    brightness_scale = 0.1 * spec.temporal_noise
    noise_sigma = 0.05 * spec.temporal_noise

    areas: list[AreaRecord] = []
    for i in range(spec.n_areas):
        g = int(rng_area.integers(n_geo))
        lat = float(np.clip(centers[g, 0] + rng_area.normal(0.0, spec.coord_noise), -90.0, 90.0))
        lon = float(np.clip(centers[g, 1] + rng_area.normal(0.0, spec.coord_noise), -180.0, 180.0))
        if rng_area.random() < spec.rho:
            label = int(center_class[g])
        else:
            label = int(rng_area.integers(spec.n_classes))
        n_views = int(rng_area.integers(spec.min_views, spec.max_views + 1))
        offset = rng_area.uniform(-spec.area_offset, spec.area_offset, size=spec.ch)
        texture = _area_texture(spec, rng_area)
        base = templates[label] + offset[None, None, :] + texture[:, :, None]

        area_id = f"area_{i:05d}"
        views: list[GeoSample] = []
        for t in range(1, n_views + 1):
            brightness = rng_view.uniform(-brightness_scale, brightness_scale)
            dy = int(rng_view.integers(-max_shift, max_shift + 1))
            dx = int(rng_view.integers(-max_shift, max_shift + 1))
            noise = rng_view.normal(0.0, noise_sigma, size=base.shape) if noise_sigma > 0 else 0.0
            img = np.clip(np.roll(base, (dy, dx), axis=(0, 1)) + brightness + noise, 0.0, 1.0)
            views.append(
                GeoSample(
                    area_id=area_id,
                    view_index=t,
                    timestamp=f"{2014 + t - 1:04d}-06-15T00:00:00",
                    image=img,
                    lat=lat,
                    lon=lon,
                    label=label,
                )
            )
        areas.append(AreaRecord(area_id=area_id, lat=lat, lon=lon, label=label, views=views))

    provenance = {
        "generator": "synthetic",
        "seed": int(seed),
        "spec": dataclasses.asdict(spec),
        "geo_centers": centers.tolist(),
        "center_class": center_class.tolist(),
    }
    # normalize through JSON so round-trips compare equal (tuples -> lists)
    provenance = json.loads(json.dumps(provenance))
    manifest = DatasetManifest(
        h=spec.h, w=spec.w, ch=spec.ch, n_classes=spec.n_classes,
        areas=areas, provenance=provenance,
    )
    validate_manifest(manifest)
    return manifest


# ---------------------------------------------------------------------------
# Temporal pair sampling
# ---------------------------------------------------------------------------

PAIR_MODES = ("temporal", "same-view")


def sample_temporal_pair(area: AreaRecord, rng: np.random.Generator, mode: str = "temporal") -> tuple[int, int]:
    """Draw (t1, t2) view indices, 1-based.

    mode="temporal": t1 and t2 are uniform over [1, T] and independent;
    t1 == t2 is allowed (and certain when T == 1).
    mode="same-view": t2 = t1 always.
    """
    if mode not in PAIR_MODES:
        raise ConfigurationError(f"unknown pair sampling mode {mode!r}; expected one of {PAIR_MODES}")
    t = area.n_views
    if t < 1:
        raise ValidationError(f"area {area.area_id!r} has no views")
    t1 = int(rng.integers(1, t + 1))
    if mode == "same-view":
        return t1, t1
    t2 = int(rng.integers(1, t + 1))
    return t1, t2


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class AugmentConfig:
    """Stochastic view augmentation settings. Each op toggles independently:
    crop_scale (1.0, 1.0), probability 0.0 or strength 0.0 disables an op
    exactly (the output equals the input byte for byte when all are off).
    """

    crop_scale: tuple[float, float] = (0.6, 1.0)  # crop side as fraction of image side
    flip_prob: float = 0.5
    brightness: float = 0.2      # additive delta bound
    contrast: float = 0.2        # multiplicative delta bound around the image mean
    saturation: float = 0.2      # blend delta bound toward per-pixel luminance
    grayscale_prob: float = 0.1

    def validate(self) -> None:
        lo, hi = self.crop_scale
        if not (0.0 < lo <= hi <= 1.0):
            raise ConfigurationError("crop_scale must satisfy 0 < lo <= hi <= 1")
        for name in ("flip_prob", "grayscale_prob"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigurationError(f"{name} must be within [0, 1]")
        for name in ("brightness", "contrast", "saturation"):
            if getattr(self, name) < 0.0:
                raise ConfigurationError(f"{name} must be non-negative")

    @classmethod
    def identity(cls) -> "AugmentConfig":
        return cls(crop_scale=(1.0, 1.0), flip_prob=0.0, brightness=0.0,
                   contrast=0.0, saturation=0.0, grayscale_prob=0.0)


def _luminance(img: np.ndarray) -> np.ndarray:
    """Per-pixel gray level, keepdims. ITU-R 601 weights for 3 channels."""
    if img.shape[2] == 3:
        weights = np.array([0.299, 0.587, 0.114])
        return (img * weights[None, None, :]).sum(axis=2, keepdims=True)
    return img.mean(axis=2, keepdims=True)


def _resize_bilinear(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    sh, sw = src.shape[:2]
    y = np.clip((np.arange(out_h) + 0.5) * sh / out_h - 0.5, 0.0, sh - 1.0)
    x = np.clip((np.arange(out_w) + 0.5) * sw / out_w - 0.5, 0.0, sw - 1.0)
    y0 = np.floor(y).astype(np.intp)
    x0 = np.floor(x).astype(np.intp)
    y1 = np.minimum(y0 + 1, sh - 1)
    x1 = np.minimum(x0 + 1, sw - 1)
    wy = (y - y0)[:, None, None]
    wx = (x - x0)[None, :, None]
    top = src[y0][:, x0] * (1 - wx) + src[y0][:, x1] * wx
    bot = src[y1][:, x0] * (1 - wx) + src[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def augment(image: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Apply the stochastic view pipeline; returns a new array, never mutates.

    The random draws always happen in one fixed order regardless of which
    ops are enabled, so a generator state maps to exactly one outcome:
      1. crop side fraction, uniform over crop_scale
      2. crop top offset, 3. crop left offset (integers)
      4. brightness delta, 5. contrast delta, 6. saturation delta
         (each uniform over [-strength, +strength])
      7. grayscale uniform, 8. flip uniform
    Ops apply in the order crop+resize, brightness, contrast, saturation,
    grayscale, horizontal flip; the result is clipped to [0, 1].
    """
    cfg.validate()
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3:
        raise ValidationError(f"augment expects an (h, w, ch) image, got shape {img.shape}")
    h, w = img.shape[:2]

    frac = rng.uniform(cfg.crop_scale[0], cfg.crop_scale[1])
    crop_h = max(1, int(round(frac * h)))
    crop_w = max(1, int(round(frac * w)))
    top = int(rng.integers(0, h - crop_h + 1))
    left = int(rng.integers(0, w - crop_w + 1))
    d_bright = rng.uniform(-cfg.brightness, cfg.brightness)
    d_contrast = rng.uniform(-cfg.contrast, cfg.contrast)
    d_sat = rng.uniform(-cfg.saturation, cfg.saturation)
    u_gray = rng.random()
    u_flip = rng.random()

    out = img
    if (crop_h, crop_w) != (h, w):
        out = _resize_bilinear(out[top:top + crop_h, left:left + crop_w], h, w)
    if d_bright != 0.0:
        out = out + d_bright
    if d_contrast != 0.0:
        mean = out.mean()
        out = mean + (out - mean) * (1.0 + d_contrast)
    if d_sat != 0.0:
        gray = _luminance(out)
        out = gray + (out - gray) * (1.0 + d_sat)
    if u_gray < cfg.grayscale_prob:
        out = np.broadcast_to(_luminance(out), out.shape)
    if u_flip < cfg.flip_prob:
        out = out[:, ::-1, :]
    out = np.clip(out, 0.0, 1.0)
    if out is img or out.base is not None:
        out = np.array(out, dtype=np.float64)
    return out
