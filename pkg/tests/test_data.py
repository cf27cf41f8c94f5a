import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import geossl
from geossl.data import (
    AreaRecord,
    AugmentConfig,
    DatasetManifest,
    GeoSample,
    SyntheticSpec,
    augment,
    generate_synthetic,
    load_manifest,
    sample_temporal_pair,
    split_manifest,
    validate_manifest,
    write_manifest,
)
from geossl.errors import ConfigurationError, ManifestParseError, ValidationError
from geossl.rng import stream_rng

from conftest import make_manifest


def one_area_manifest(lat=10.0, lon=20.0, n_views=1, label=0, h=4, w=4):
    views = [
        GeoSample(
            area_id="a0", view_index=t, timestamp=f"201{t}-01-01T00:00:00",
            image=np.full((h, w, 3), 0.5), lat=lat, lon=lon, label=label,
        )
        for t in range(1, n_views + 1)
    ]
    area = AreaRecord(area_id="a0", lat=lat, lon=lon, label=label, views=views)
    return DatasetManifest(h=h, w=w, ch=3, n_classes=2, areas=[area])


class TestManifestValidation:
    def test_minimal_manifest_valid(self):
        m = one_area_manifest()
        validate_manifest(m)
        assert m.total_samples == 1
        assert m.n_areas == 1

    def test_views_disagreeing_on_lat_name_the_area(self):
        m = one_area_manifest(n_views=2)
        m.areas[0].views[1].lat = 11.0
        with pytest.raises(ValidationError, match="a0"):
            validate_manifest(m)

    def test_duplicate_area_id(self):
        m = one_area_manifest()
        m.areas.append(m.areas[0])
        with pytest.raises(ValidationError, match="duplicate"):
            validate_manifest(m)

    def test_view_index_gap(self):
        m = one_area_manifest(n_views=2)
        m.areas[0].views[1].view_index = 3
        with pytest.raises(ValidationError, match="contiguous"):
            validate_manifest(m)

    def test_label_exceeds_n_classes(self):
        m = one_area_manifest(label=5)
        m.areas[0].label = 5
        with pytest.raises(ValidationError, match="n_classes"):
            validate_manifest(m)

    def test_out_of_range_values(self):
        m = one_area_manifest()
        m.areas[0].views[0].image = np.full((4, 4, 3), 1.5)
        with pytest.raises(ValidationError, match=r"\[0, 1\]"):
            validate_manifest(m)

    def test_coordinates_out_of_range(self):
        m = one_area_manifest(lat=95.0)
        with pytest.raises(ValidationError, match="coordinates"):
            validate_manifest(m)


class TestManifestIO:
    def test_round_trip_equals_in_memory(self, tmp_path):
        m = generate_synthetic(SyntheticSpec(n_areas=6, n_classes=2, h=8, w=8), seed=7)
        path = write_manifest(m, tmp_path)
        loaded = load_manifest(path)
        assert loaded.h == m.h and loaded.w == m.w and loaded.ch == m.ch
        assert loaded.n_classes == m.n_classes
        assert loaded.provenance == m.provenance
        assert len(loaded.areas) == len(m.areas)
        for a, b in zip(m.areas, loaded.areas):
            assert a.area_id == b.area_id
            assert (a.lat, a.lon, a.label) == (b.lat, b.lon, b.label)
            assert len(a.views) == len(b.views)
            for va, vb in zip(a.views, b.views):
                assert va == vb
                np.testing.assert_array_equal(va.image, vb.image)

    def test_write_is_deterministic(self, tmp_path):
        m = generate_synthetic(SyntheticSpec(n_areas=4, n_classes=2, h=8, w=8), seed=3)
        p1 = write_manifest(m, tmp_path / "one")
        p2 = write_manifest(m, tmp_path / "two")
        assert p1.read_bytes() == p2.read_bytes()
        for img in sorted((tmp_path / "one" / "images").iterdir()):
            other = tmp_path / "two" / "images" / img.name
            assert img.read_bytes() == other.read_bytes()

    def test_malformed_line_names_line_number(self, tmp_path):
        m = generate_synthetic(SyntheticSpec(n_areas=2, n_classes=2, h=8, w=8), seed=0)
        path = write_manifest(m, tmp_path)
        lines = path.read_text().splitlines()
        lines[2] = "{not json"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ManifestParseError, match="line 3"):
            load_manifest(path)

    def test_unknown_record_key_rejected(self, tmp_path):
        m = generate_synthetic(SyntheticSpec(n_areas=1, n_classes=2, min_views=1, max_views=1, h=8, w=8), seed=0)
        path = write_manifest(m, tmp_path)
        lines = path.read_text().splitlines()
        rec = json.loads(lines[1])
        rec["surprise"] = 1
        lines[1] = json.dumps(rec)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ManifestParseError, match="surprise"):
            load_manifest(path)

    def test_missing_image_file_names_path(self, tmp_path):
        m = generate_synthetic(SyntheticSpec(n_areas=2, n_classes=2, min_views=1, max_views=1, h=8, w=8), seed=0)
        path = write_manifest(m, tmp_path)
        victim = next((tmp_path / "images").iterdir())
        victim.unlink()
        with pytest.raises(FileNotFoundError, match=victim.name):
            load_manifest(path)

    def test_missing_manifest_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_manifest(tmp_path / "nope.jsonl")

    def test_differing_lat_within_area_rejected_on_load(self, tmp_path):
        m = generate_synthetic(SyntheticSpec(n_areas=1, n_classes=2, min_views=2, max_views=2, h=8, w=8), seed=0)
        path = write_manifest(m, tmp_path)
        lines = path.read_text().splitlines()
        rec = json.loads(lines[2])
        rec["lat"] = rec["lat"] + 1.0
        lines[2] = json.dumps(rec)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValidationError, match=rec["area_id"]):
            load_manifest(path)


class TestSynthetic:
    def test_fixed_single_view(self):
        m = generate_synthetic(
            SyntheticSpec(n_areas=10, n_classes=2, min_views=1, max_views=1, h=8, w=8), seed=1
        )
        assert all(len(a.views) == 1 for a in m.areas)
        assert m.total_samples == 10

    def test_deterministic_per_seed(self):
        spec = SyntheticSpec(n_areas=5, n_classes=3, h=8, w=8)
        m1 = generate_synthetic(spec, seed=9)
        m2 = generate_synthetic(spec, seed=9)
        for a, b in zip(m1.areas, m2.areas):
            assert (a.area_id, a.lat, a.lon, a.label) == (b.area_id, b.lat, b.lon, b.label)
            for va, vb in zip(a.views, b.views):
                np.testing.assert_array_equal(va.image, vb.image)
        m3 = generate_synthetic(spec, seed=10)
        assert any(a.lat != b.lat for a, b in zip(m1.areas, m3.areas))

    def test_rho_one_maps_each_center_to_one_class(self):
        m = generate_synthetic(
            SyntheticSpec(n_areas=120, n_classes=4, n_geo=4, rho=1.0, h=8, w=8), seed=2
        )
        centers = np.asarray(m.provenance["geo_centers"])
        by_center: dict[int, set[int]] = {}
        for a in m.areas:
            d = np.sum((centers - np.array([a.lat, a.lon])) ** 2, axis=1)
            by_center.setdefault(int(np.argmin(d)), set()).add(a.label)
        assert all(len(classes) == 1 for classes in by_center.values())

    def test_total_samples_equals_emitted_files(self, tmp_path):
        m = generate_synthetic(SyntheticSpec(n_areas=7, n_classes=2, h=8, w=8), seed=4)
        write_manifest(m, tmp_path)
        n_files = len(list((tmp_path / "images").iterdir()))
        assert n_files == m.total_samples == sum(len(a.views) for a in m.areas)

    def test_bad_spec_rejected(self):
        with pytest.raises(ConfigurationError):
            generate_synthetic(SyntheticSpec(min_views=3, max_views=2))
        with pytest.raises(ConfigurationError):
            generate_synthetic(SyntheticSpec(rho=1.5))
        with pytest.raises(ConfigurationError):
            generate_synthetic(SyntheticSpec(n_classes=1))


class TestSplit:
    def test_split_partitions_areas(self):
        m = make_manifest(n_areas=20)
        train, hold = split_manifest(m, 0.25, seed=3)
        assert train.n_areas == 15 and hold.n_areas == 5
        ids = {a.area_id for a in train.areas} | {a.area_id for a in hold.areas}
        assert ids == {a.area_id for a in m.areas}
        assert train.provenance["split"]["part"] == "train"
        assert hold.provenance["split"]["part"] == "holdout"

    def test_split_deterministic(self):
        m = make_manifest(n_areas=20)
        h1 = {a.area_id for a in split_manifest(m, 0.3, seed=5)[1].areas}
        h2 = {a.area_id for a in split_manifest(m, 0.3, seed=5)[1].areas}
        h3 = {a.area_id for a in split_manifest(m, 0.3, seed=6)[1].areas}
        assert h1 == h2
        assert h1 != h3

    def test_bad_fraction(self):
        m = make_manifest(n_areas=4)
        with pytest.raises(ConfigurationError):
            split_manifest(m, 1.0)
        with pytest.raises(ConfigurationError):
            split_manifest(m, -0.1)


class TestPairSampling:
    def _area(self, t):
        m = one_area_manifest(n_views=t)
        return m.areas[0]

    def test_single_view_temporal(self):
        area = self._area(1)
        rng = np.random.default_rng(0)
        assert all(sample_temporal_pair(area, rng, "temporal") == (1, 1) for _ in range(20))

    def test_same_view_mode(self):
        area = self._area(3)
        rng = np.random.default_rng(0)
        for _ in range(50):
            t1, t2 = sample_temporal_pair(area, rng, "same-view")
            assert t1 == t2

    def test_unknown_mode(self):
        with pytest.raises(ConfigurationError):
            sample_temporal_pair(self._area(2), np.random.default_rng(0), "nope")

    def test_t2_counts_within_three_sigma(self):
        area = self._area(2)
        rng = np.random.default_rng(123)
        draws = [sample_temporal_pair(area, rng, "temporal")[1] for _ in range(10000)]
        ones = draws.count(1)
        sigma = np.sqrt(10000 * 0.25)
        assert abs(ones - 5000) <= 3 * sigma

    @pytest.mark.parametrize("t", [2, 3, 5])
    def test_chi_square_uniformity(self, t):
        # both marginals jointly, >= 10*T^2 draws, significance 0.01
        from scipy import stats

        area = self._area(t)
        rng = np.random.default_rng(77)
        n = max(10 * t * t, 2000)
        pairs = [sample_temporal_pair(area, rng, "temporal") for _ in range(n)]
        for slot in (0, 1):
            counts = np.bincount([p[slot] - 1 for p in pairs], minlength=t)
            chi2 = float(((counts - n / t) ** 2 / (n / t)).sum())
            assert chi2 < stats.chi2.ppf(0.99, df=t - 1)


class TestAugment:
    def test_identity_config_is_identity(self, rng):
        img = rng.uniform(size=(8, 8, 3))
        out = augment(img, AugmentConfig.identity(), np.random.default_rng(0))
        np.testing.assert_array_equal(out, img)
        assert out is not img

    def test_flip_only_is_involution(self, rng):
        img = rng.uniform(size=(8, 8, 3))
        cfg = dataclasses.replace(AugmentConfig.identity(), flip_prob=1.0)
        once = augment(img, cfg, np.random.default_rng(1))
        np.testing.assert_array_equal(once, img[:, ::-1, :])
        twice = augment(once, cfg, np.random.default_rng(2))
        np.testing.assert_array_equal(twice, img)

    def test_brightness_shift_matches_seeded_draw(self):
        img = np.random.default_rng(5).uniform(0.3, 0.6, size=(8, 8, 3))
        cfg = dataclasses.replace(AugmentConfig.identity(), brightness=0.2)
        out = augment(img, cfg, np.random.default_rng(42))
        # replay the documented draw order on an identically seeded generator
        probe = np.random.default_rng(42)
        probe.uniform(1.0, 1.0)          # crop fraction
        probe.integers(0, 1)             # top
        probe.integers(0, 1)             # left
        delta = probe.uniform(-0.2, 0.2)
        assert abs((out.mean() - img.mean()) - delta) < 1e-12

    def test_deterministic_given_rng_state(self, rng):
        img = rng.uniform(size=(10, 10, 3))
        cfg = AugmentConfig()
        a = augment(img, cfg, np.random.default_rng(9))
        b = augment(img, cfg, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)

    def test_never_mutates_input(self, rng):
        img = rng.uniform(size=(8, 8, 3))
        keep = img.copy()
        augment(img, AugmentConfig(), np.random.default_rng(3))
        np.testing.assert_array_equal(img, keep)

    @given(
        seed=st.integers(0, 2**32 - 1),
        crop_lo=st.floats(0.3, 1.0),
        flip=st.floats(0, 1),
        strength=st.floats(0, 0.5),
        gray=st.floats(0, 1),
    )
    @settings(max_examples=40)
    def test_output_in_range_and_shape(self, seed, crop_lo, flip, strength, gray):
        img = np.random.default_rng(seed).uniform(size=(9, 7, 3))
        cfg = AugmentConfig(
            crop_scale=(crop_lo, 1.0), flip_prob=flip, brightness=strength,
            contrast=strength, saturation=strength, grayscale_prob=gray,
        )
        out = augment(img, cfg, np.random.default_rng(seed + 1))
        assert out.shape == img.shape
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_bad_config_rejected(self):
        with pytest.raises(ConfigurationError):
            augment(np.zeros((4, 4, 3)), AugmentConfig(crop_scale=(0.0, 1.0)), np.random.default_rng(0))
        with pytest.raises(ConfigurationError):
            augment(np.zeros((4, 4, 3)), AugmentConfig(flip_prob=1.5), np.random.default_rng(0))


class TestStreamIndependence:
    def test_pair_draws_do_not_disturb_augment_draws(self):
        # keyed streams: augmentation for (epoch, it, slot, view) is the same
        # whether or not pair sampling consumed randomness elsewhere
        a = stream_rng(0, "aug", 0, 1, 2, 0).uniform(size=4)
        _ = stream_rng(0, "pair", 0, 1, 2).integers(1, 10, size=100)
        b = stream_rng(0, "aug", 0, 1, 2, 0).uniform(size=4)
        np.testing.assert_array_equal(a, b)
