"""K-means clustering of area coordinates into pseudo-label regions.

Clusters are fit with Lloyd's algorithm from a k-means++ initialization on
raw (lat, lon) degrees under squared Euclidean distance, followed by a
single-point reassignment polish at convergence. Cluster labels are 1-based:
`assign` returns values in {1..K}. Fitting is deterministic per seed; the
per-iteration inertia trace is monotone non-increasing.
"""

from __future__ import annotations

import dataclasses
import json
import pathlib

import numpy as np

from .errors import ConfigurationError, ValidationError
from .data import DatasetManifest


@dataclasses.dataclass
class GeoClusterModel:
    k: int
    centroids: np.ndarray          # (K, 2) float64, row i is cluster i+1
    inertia: float                 # sum of squared distances at convergence
    iterations: int
    seed: int
    inertia_trace: list[float] = dataclasses.field(default_factory=list, repr=False)

    def save(self, path: str | pathlib.Path) -> pathlib.Path:
        path = pathlib.Path(path)
        doc = {
            "K": int(self.k),
            "centroids": [[float(a), float(b)] for a, b in self.centroids],
            "inertia": float(self.inertia),
            "seed": int(self.seed),
            "iterations": int(self.iterations),
        }
        path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
        return path

    @classmethod
    def load(cls, path: str | pathlib.Path) -> "GeoClusterModel":
        path = pathlib.Path(path)
        if not path.exists():
            raise FileNotFoundError(f"geo-cluster model not found: {path}")
        doc = json.loads(path.read_text())
        centroids = np.asarray(doc["centroids"], dtype=np.float64)
        if centroids.ndim != 2 or centroids.shape != (doc["K"], 2):
            raise ValidationError(f"geo-cluster model {path}: centroid shape does not match K")
        return cls(
            k=int(doc["K"]),
            centroids=centroids,
            inertia=float(doc["inertia"]),
            iterations=int(doc.get("iterations", 0)),
            seed=int(doc["seed"]),
        )


_MAX_POLISH_MOVES = 200


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, K) squared Euclidean distances."""
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, 2))
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))   # all remaining mass at chosen points
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centroids[j]) ** 2, axis=1))
    return centroids


def _best_single_point_move(
    points: np.ndarray, centroids: np.ndarray, k: int
) -> tuple[int, int, float] | None:
    """Most inertia-reducing reassignment of one point, or None if none helps.

    Uses the exact size-weighted deltas: removing x from cluster a of size
    n_a recovers n_a/(n_a-1)*|x-c_a|^2, adding it to b of size n_b costs
    n_b/(n_b+1)*|x-c_b|^2. Moves that would empty a cluster are forbidden.
    """
    n = points.shape[0]
    d2 = _squared_distances(points, centroids)
    labels = np.argmin(d2, axis=1)
    counts = np.bincount(labels, minlength=k)
    if k == 1 or np.any(counts == 0):
        return None
    own = d2[np.arange(n), labels]
    sizes = counts[labels].astype(np.float64)
    removal_gain = np.full(n, -np.inf)           # -inf makes the delta +inf
    movable = sizes > 1.0
    removal_gain[movable] = sizes[movable] / (sizes[movable] - 1.0) * own[movable]
    target_sizes = counts.astype(np.float64)[None, :]
    delta = target_sizes / (target_sizes + 1.0) * d2 - removal_gain[:, None]
    delta[np.arange(n), labels] = np.inf
    i, b = np.unravel_index(int(np.argmin(delta)), delta.shape)
    threshold = -1e-12 * max(1.0, float(own.sum()))
    if delta[i, b] >= threshold:
        return None
    return int(i), int(b), float(delta[i, b])


def fit_kmeans(
    points: np.ndarray | list,
    k: int,
    seed: int = 0,
    max_iter: int = 200,
    tol: float = 1e-9,
) -> GeoClusterModel:
    """Fit K centroids to (n, 2) coordinate rows. Deterministic per seed.

    Empty clusters are reseeded at the point currently farthest from its
    centroid. Once Lloyd converges, single-point reassignments that strictly
    lower inertia are applied one at a time (Lloyd resumes after each);
    plain Lloyd stalls in such states routinely on small instances. The
    stored inertia is recomputed from the final assignment, so re-assigning
    the training points reproduces it exactly.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ConfigurationError(f"points must be (n, 2), got {points.shape}")
    n = points.shape[0]
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    if n < k:
        raise ConfigurationError(f"cannot fit {k} clusters to {n} points")
    if not np.all(np.isfinite(points)):
        raise ValidationError("coordinate rows must be finite")

    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    centroids = _kmeans_pp_init(points, k, rng)
    trace: list[float] = []
    iterations = 0
    moves = 0
    while True:
        while iterations < max_iter:
            iterations += 1
            d2 = _squared_distances(points, centroids)
            labels = np.argmin(d2, axis=1)      # ties resolve to the lowest index
            mins = d2[np.arange(n), labels]
            trace.append(float(mins.sum()))

            new_centroids = centroids.copy()
            counts = np.bincount(labels, minlength=k)
            for j in range(k):
                if counts[j] > 0:
                    new_centroids[j] = points[labels == j].mean(axis=0)
            # reseed empties at the farthest point; zero it so two empties
            # cannot grab the same point
            if np.any(counts == 0):
                mins = mins.copy()
                for j in np.flatnonzero(counts == 0):
                    far = int(np.argmax(mins))
                    new_centroids[j] = points[far]
                    mins[far] = 0.0
            movement = float(np.max(np.sqrt(np.sum((new_centroids - centroids) ** 2, axis=1))))
            centroids = new_centroids
            if movement <= tol:
                break
        if iterations >= max_iter or moves >= _MAX_POLISH_MOVES:
            break
        move = _best_single_point_move(points, centroids, k)
        if move is None:
            break
        i, b, _ = move
        d2 = _squared_distances(points, centroids)
        labels = np.argmin(d2, axis=1)
        labels[i] = b
        for j in range(k):
            centroids[j] = points[labels == j].mean(axis=0)
        d2 = _squared_distances(points, centroids)
        trace.append(float(d2[np.arange(n), labels].sum()))
        moves += 1

    d2 = _squared_distances(points, centroids)
    final_inertia = float(np.min(d2, axis=1).sum())
    trace.append(final_inertia)
    return GeoClusterModel(
        k=k,
        centroids=centroids,
        inertia=final_inertia,
        iterations=iterations,
        seed=int(seed),
        inertia_trace=trace,
    )


def fit_kmeans_restarts(
    points: np.ndarray | list,
    k: int,
    seed: int = 0,
    n_restarts: int = 10,
    max_iter: int = 200,
    tol: float = 1e-9,
) -> GeoClusterModel:
    """Best of n_restarts independently seeded fits (lowest inertia wins).

    Restart r runs under the derived seed SeedSequence([seed, r]); the
    winning model records that derived seed, so refitting with it alone
    reproduces the result."""
    if n_restarts < 1:
        raise ConfigurationError("n_restarts must be >= 1")
    best: GeoClusterModel | None = None
    for r in range(n_restarts):
        sub = int(np.random.SeedSequence([int(seed), r]).generate_state(1)[0])
        model = fit_kmeans(points, k, seed=sub, max_iter=max_iter, tol=tol)
        if best is None or model.inertia < best.inertia:
            best = model
    return best


def assign(model: GeoClusterModel, lat: float, lon: float) -> int:
    """Nearest-centroid label in {1..K}; ties break to the lowest index."""
    return int(assign_many(model, np.array([[lat, lon]]))[0])


def assign_many(model: GeoClusterModel, coords: np.ndarray) -> np.ndarray:
    """Vectorized `assign` over (n, 2) rows; returns 1-based labels."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValidationError(f"coords must be (n, 2), got {coords.shape}")
    if not np.all(np.isfinite(coords)):
        raise ValidationError("coordinates must be finite")
    d2 = _squared_distances(coords, model.centroids)
    return np.argmin(d2, axis=1).astype(np.int64) + 1


@dataclasses.dataclass
class ClusterStats:
    clusters_per_label: dict[int, int]   # label -> number of distinct clusters holding it
    labels_per_cluster: dict[int, int]   # cluster -> number of distinct labels inside
    areas_per_cluster: dict[int, int]    # cluster -> area count

    def to_json_dict(self) -> dict:
        return {
            "clusters_per_label": {str(k): v for k, v in sorted(self.clusters_per_label.items())},
            "labels_per_cluster": {str(k): v for k, v in sorted(self.labels_per_cluster.items())},
            "areas_per_cluster": {str(k): v for k, v in sorted(self.areas_per_cluster.items())},
        }


def cluster_stats(manifest: DatasetManifest, model: GeoClusterModel) -> ClusterStats:
    """Cross-tabulate class labels against assigned clusters, one point per area."""
    if not manifest.labeled:
        raise ValidationError("cluster_stats requires a fully labeled manifest")
    if manifest.n_areas == 0:
        raise ValidationError("cluster_stats requires at least one area")
    coords = np.array([[a.lat, a.lon] for a in manifest.areas])
    clusters = assign_many(model, coords)
    label_to_clusters: dict[int, set[int]] = {}
    cluster_to_labels: dict[int, set[int]] = {}
    areas_per: dict[int, int] = {}
    for area, c in zip(manifest.areas, clusters):
        c = int(c)
        label_to_clusters.setdefault(area.label, set()).add(c)
        cluster_to_labels.setdefault(c, set()).add(area.label)
        areas_per[c] = areas_per.get(c, 0) + 1
    return ClusterStats(
        clusters_per_label={lbl: len(s) for lbl, s in label_to_clusters.items()},
        labels_per_cluster={c: len(s) for c, s in cluster_to_labels.items()},
        areas_per_cluster=areas_per,
    )
