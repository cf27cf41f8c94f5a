import subprocess
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import geossl

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def make_manifest(
    n_areas=24, n_classes=3, min_views=1, max_views=3, seed=0,
    h=16, w=16, rho=0.9, temporal_noise=0.5, n_geo=None,
) -> geossl.DatasetManifest:
    spec = geossl.SyntheticSpec(
        n_areas=n_areas, n_classes=n_classes, min_views=min_views,
        max_views=max_views, h=h, w=w, rho=rho,
        temporal_noise=temporal_noise, n_geo=n_geo,
    )
    return geossl.generate_synthetic(spec, seed=seed)


def unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def run_cli(args, cwd) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "geossl", *[str(a) for a in args]],
        cwd=cwd, capture_output=True, text=True, timeout=600,
    )


@pytest.fixture
def small_manifest():
    return make_manifest()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
