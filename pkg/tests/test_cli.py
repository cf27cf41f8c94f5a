import hashlib
import json
import pathlib

import numpy as np
import pytest

from geossl.data import load_manifest
from geossl.geocluster import GeoClusterModel

from conftest import run_cli


GEN_ARGS = ["gen-data", "--areas", "10", "--classes", "3", "--views", "3",
            "--height", "16", "--width", "16", "--seed", "7"]
TINY_PRETRAIN = ["--epochs", "2", "--batch-size", "4", "--queue-size", "16",
                 "--widths", "4", "--embed-dim", "8", "--k-clusters", "3"]


def tree_digest(root: pathlib.Path) -> dict[str, str]:
    # effective_config.txt echoes the --out path, so it is excluded
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name != "effective_config.txt"
    }


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full CLI pass; individual tests inspect the artifacts."""
    root = tmp_path_factory.mktemp("pipeline")
    data, clus = root / "data", root / "cluster"
    pre, prob, ev, fin, rep = (root / n for n in ("pre", "probe", "eval", "fine", "report"))

    steps = [
        GEN_ARGS + ["--out", data],
        ["cluster", "--manifest", data / "manifest.jsonl", "--k", "3", "--out", clus],
        ["pretrain", "--variant", "moco+geo", "--manifest", data / "manifest.jsonl",
         "--geo-model", clus / "geo_model.json", *TINY_PRETRAIN, "--out", pre],
        ["probe", "--checkpoint", pre / "checkpoint.npz",
         "--manifest", data / "manifest.jsonl", "--out", prob],
        ["eval", "--checkpoint", pre / "checkpoint.npz", "--probe", prob / "probe.npz",
         "--manifest", data / "manifest.jsonl", "--granularity", "temporal", "--out", ev],
        ["finetune", "--checkpoint", pre / "checkpoint.npz", "--manifest", data / "manifest.jsonl",
         "--epochs", "1", "--batch-size", "8", "--out", fin],
        ["report", "--trace", pre / "loss.csv", "--manifest", data / "manifest.jsonl",
         "--geo-model", clus / "geo_model.json", "--report", ev / "report.json", "--out", rep],
    ]
    for args in steps:
        proc = run_cli(args, cwd=root)
        assert proc.returncode == 0, f"{args[0]} failed:\n{proc.stderr}\n{proc.stdout}"
    return root


class TestGenData:
    def test_emits_requested_corpus(self, pipeline):
        manifest = load_manifest(pipeline / "data" / "manifest.jsonl")
        assert manifest.n_areas == 10
        assert manifest.total_samples == 30
        assert manifest.n_classes == 3
        assert (pipeline / "data" / "effective_config.txt").exists()

    def test_effective_config_echoes_merge(self, pipeline):
        text = (pipeline / "data" / "effective_config.txt").read_text()
        lines = dict(line.split("=", 1) for line in text.splitlines())
        assert lines["command"] == "gen-data"
        assert lines["areas"] == "10"
        assert lines["seed"] == "7"
        assert lines["rho"] == "0.9"

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli(GEN_ARGS + ["--out", a], cwd=tmp_path).returncode == 0
        assert run_cli(GEN_ARGS + ["--out", b], cwd=tmp_path).returncode == 0
        assert tree_digest(a) == tree_digest(b)

    def test_missing_out_is_usage_error(self, tmp_path):
        proc = run_cli(["gen-data", "--areas", "4"], cwd=tmp_path)
        assert proc.returncode == 1
        assert "--out" in proc.stderr


class TestCluster:
    def test_single_cluster_centroid_is_coordinate_mean(self, pipeline, tmp_path):
        data = pipeline / "data"
        out = tmp_path / "k1"
        proc = run_cli(["cluster", "--manifest", data / "manifest.jsonl",
                        "--k", "1", "--out", out], cwd=tmp_path)
        assert proc.returncode == 0
        model = GeoClusterModel.load(out / "geo_model.json")
        manifest = load_manifest(data / "manifest.jsonl")
        coords = np.array([(a.views[0].lat, a.views[0].lon) for a in manifest.areas])
        np.testing.assert_allclose(model.centroids[0], coords.mean(axis=0), atol=1e-9)

    def test_saved_inertia_matches_saved_centroids(self, pipeline):
        model = GeoClusterModel.load(pipeline / "cluster" / "geo_model.json")
        manifest = load_manifest(pipeline / "data" / "manifest.jsonl")
        coords = np.array([(a.views[0].lat, a.views[0].lon) for a in manifest.areas])
        d2 = ((coords[:, None, :] - model.centroids[None, :, :]) ** 2).sum(axis=2)
        assert model.inertia == pytest.approx(d2.min(axis=1).sum(), abs=1e-9)

    def test_more_clusters_than_areas_fails_clearly(self, pipeline, tmp_path):
        proc = run_cli(["cluster", "--manifest", pipeline / "data" / "manifest.jsonl",
                        "--k", "99", "--out", tmp_path / "bad"], cwd=tmp_path)
        assert proc.returncode == 1
        assert "error:" in proc.stderr


class TestPretrain:
    def test_geo_variant_without_model_names_missing_input(self, pipeline, tmp_path):
        proc = run_cli(["pretrain", "--variant", "moco+geo",
                        "--manifest", pipeline / "data" / "manifest.jsonl",
                        *TINY_PRETRAIN, "--out", tmp_path / "nope"], cwd=tmp_path)
        assert proc.returncode == 1
        assert "geo model" in proc.stderr

    def test_artifacts_written(self, pipeline):
        pre = pipeline / "pre"
        assert (pre / "checkpoint.npz").exists()
        trace = (pre / "loss.csv").read_text().splitlines()
        assert trace[0] == "epoch,iteration,loss_contrastive,loss_geo,loss_total,lr"
        assert len(trace) == 1 + 2 * 2  # 2 epochs, 10 areas // batch 4, partial batch dropped

    def test_unknown_variant_rejected(self, pipeline, tmp_path):
        proc = run_cli(["pretrain", "--variant", "simclr",
                        "--manifest", pipeline / "data" / "manifest.jsonl",
                        "--out", tmp_path / "bad"], cwd=tmp_path)
        assert proc.returncode == 1
        assert "variant" in proc.stderr


class TestEval:
    def test_report_has_both_granularities(self, pipeline):
        doc = json.loads((pipeline / "eval" / "report.json").read_text())
        assert doc["single"]["granularity"] == "single"
        assert doc["temporal"]["granularity"] == "temporal"
        assert doc["temporal"]["n_samples"] == 10
        assert 0.0 <= doc["single"]["top1"] <= 1.0

    def test_rerun_reports_byte_identical(self, pipeline, tmp_path):
        out = tmp_path / "eval2"
        proc = run_cli(["eval", "--checkpoint", pipeline / "pre" / "checkpoint.npz",
                        "--probe", pipeline / "probe" / "probe.npz",
                        "--manifest", pipeline / "data" / "manifest.jsonl",
                        "--granularity", "temporal", "--out", out], cwd=tmp_path)
        assert proc.returncode == 0
        for name in ("report.json", "per_class.csv"):
            assert (out / name).read_bytes() == (pipeline / "eval" / name).read_bytes()

    def test_corrupt_checkpoint_is_input_error(self, pipeline, tmp_path):
        fake = tmp_path / "ckpt.npz"
        fake.write_text("not a checkpoint")
        proc = run_cli(["eval", "--checkpoint", fake,
                        "--probe", pipeline / "probe" / "probe.npz",
                        "--manifest", pipeline / "data" / "manifest.jsonl",
                        "--out", tmp_path / "bad"], cwd=tmp_path)
        assert proc.returncode == 1
        assert "error:" in proc.stderr

    def test_non_finite_checkpoint_is_numeric_error(self, pipeline, tmp_path):
        from geossl.trainer import load_checkpoint, save_checkpoint

        ckpt = load_checkpoint(pipeline / "pre" / "checkpoint.npz")
        ckpt.state.query.arrays["conv1_w"][0] = np.nan
        poisoned = tmp_path / "poisoned.npz"
        save_checkpoint(ckpt, poisoned)
        proc = run_cli(["eval", "--checkpoint", poisoned,
                        "--probe", pipeline / "probe" / "probe.npz",
                        "--manifest", pipeline / "data" / "manifest.jsonl",
                        "--out", tmp_path / "bad"], cwd=tmp_path)
        assert proc.returncode == 2
        assert "numeric" in proc.stderr.lower()


class TestProbeAndFinetune:
    def test_probe_summary_fields(self, pipeline):
        doc = json.loads((pipeline / "probe" / "probe_summary.json").read_text())
        assert doc["n_train_views"] == 30
        assert doc["n_classes"] == 3
        assert doc["feature_source"] == "backbone"
        assert 0.0 <= doc["train_top1"] <= 1.0

    def test_finetune_artifacts(self, pipeline):
        fin = pipeline / "fine"
        assert (fin / "finetuned.npz").exists()
        doc = json.loads((fin / "report.json").read_text())
        assert doc["single"]["protocol"] == "finetune"
        lines = (fin / "per_class.csv").read_text().splitlines()
        assert lines[0] == "class,single_accuracy,temporal_accuracy"


class TestReport:
    def test_all_plots_written(self, pipeline):
        rep = pipeline / "report"
        for name in ("loss_curves.png", "views_histogram.png",
                     "cluster_map.png", "cluster_stats.png", "per_class.png"):
            assert (rep / name).exists(), name

    def test_no_inputs_is_usage_error(self, tmp_path):
        proc = run_cli(["report", "--out", tmp_path / "r"], cwd=tmp_path)
        assert proc.returncode == 1


class TestConfigFile:
    def test_flags_override_file_values(self, tmp_path):
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("areas=7\nclasses=2\nviews=2\nheight=16\nwidth=16\n")
        out = tmp_path / "out"
        proc = run_cli(["gen-data", "--config", cfg, "--areas", "5", "--out", out], cwd=tmp_path)
        assert proc.returncode == 0
        manifest = load_manifest(out / "manifest.jsonl")
        assert manifest.n_areas == 5        # flag wins
        assert manifest.n_classes == 2      # file fills the gap
        assert manifest.total_samples == 10

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("areas=4\nbogus_key=1\n")
        proc = run_cli(["gen-data", "--config", cfg, "--out", tmp_path / "x"], cwd=tmp_path)
        assert proc.returncode == 1
        assert "bogus_key" in proc.stderr

    def test_effective_config_is_reusable_as_config(self, tmp_path):
        first = tmp_path / "first"
        assert run_cli(GEN_ARGS + ["--out", first], cwd=tmp_path).returncode == 0
        second = tmp_path / "second"
        proc = run_cli(["gen-data", "--config", first / "effective_config.txt",
                        "--out", second], cwd=tmp_path)
        assert proc.returncode == 0
        assert tree_digest(first / "images") == tree_digest(second / "images")
