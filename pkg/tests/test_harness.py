import json

import numpy as np
import pytest

from unifi.errors import ConfigError
from unifi.grids import Band, FrameType
from unifi.harness import (ExperimentConfig, load_experiment, parse_experiment,
                           parse_synth, run_experiment, run_sweep,
                           stratified_split, stream_metrics, sweep_rows_to_csv,
                           synth_dataset)
from unifi.streamio import load_stream
from unifi.synth import (Bursty, ImpairmentConfig, Periodic, Poisson, SceneConfig,
                         StaticPath, TrafficCluster, TrafficConfig, emit_stream)


def synth_json(duration_s=30.0, streams_per_class=1, doppler=(2.0, 8.0)):
    return {
        "classes": [
            {"scene": {"static_paths": [{"delay_ns": 0, "gain": 1.0},
                                        {"delay_ns": 50, "gain": 0.5}],
                       "mover": {"doppler_hz": d, "path_gain": 0.7,
                                 "reflect_delay_ns": 30}}}
            for d in doppler
        ],
        "traffic": {
            "duration_s": duration_s,
            "clusters": [
                {"id": 0, "band": "5g", "ft": "mgmt", "bw": 20,
                 "arrival": {"kind": "periodic", "rate_hz": 10}},
                {"id": 1, "band": "5g", "ft": "data", "bw": 80,
                 "arrival": {"kind": "poisson", "rate_hz": 40}},
            ],
        },
        "impairments": {"gain": {"lo": 0.5, "hi": 2.0}, "error_sigma": 0.01},
        "streams_per_class": streams_per_class,
        "grid": {"5g": {"bw80": list(range(-12, 13, 2)), "bw20": [-4, -2, 0, 2, 4]}},
    }


def experiment_json(**kw):
    obj = {
        "dataset": {"synth": synth_json()},
        "window": {"win_us": 4_000_000, "stride_us": 2_000_000},
        "train": {"epochs": 2, "seeds": [0, 1], "batch": 16,
                  "dtype": "float32"},
        "model": {"d_r": 8, "d_h": 8, "d_k": 8, "d_v": 8, "q_refs": 8,
                  "gru_hidden": 8},
    }
    obj.update(kw)
    return obj


class TestConfigParsing:
    def test_full_parse(self):
        cfg = parse_experiment(experiment_json())
        assert cfg.synth is not None
        assert cfg.train.split == 0.8 and cfg.train.seeds == (0, 1)
        assert cfg.sanitize.tau_d == 0.6

    def test_defaults_match_protocol(self):
        cfg = parse_experiment(experiment_json())
        assert cfg.train.lr == 0.001
        assert cfg.win_us == 4_000_000

    def test_invalid_band_reports_path(self):
        obj = experiment_json()
        obj["dataset"]["synth"]["traffic"]["clusters"][1]["band"] = "6g"
        with pytest.raises(ConfigError) as err:
            parse_experiment(obj)
        assert "clusters[1].band" in str(err.value)

    def test_missing_dataset_rejected(self):
        with pytest.raises(ConfigError):
            parse_experiment({"train": {"epochs": 1}})

    def test_bad_split_rejected(self):
        obj = experiment_json()
        obj["train"]["split"] = 1.5
        with pytest.raises(ConfigError):
            parse_experiment(obj)

    def test_unknown_model_key_rejected(self):
        with pytest.raises(ConfigError) as err:
            parse_experiment(experiment_json(model={"bogus": 3}))
        assert "model" in str(err.value)

    def test_noncontiguous_labels_rejected(self):
        obj = experiment_json()
        obj["dataset"]["synth"]["classes"][1]["label"] = 5
        with pytest.raises(ConfigError):
            parse_experiment(obj)

    def test_load_experiment_from_file(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(experiment_json()))
        cfg = load_experiment(path)
        assert isinstance(cfg, ExperimentConfig)

    def test_sweep_grids_parsed(self):
        obj = experiment_json(sweep={"mr_grid": [0.0, 0.5], "scv_grid": [0.0]})
        cfg = parse_experiment(obj)
        assert cfg.sweep_mr == (0.0, 0.5) and cfg.sweep_scv == (0.0,)


class TestStratifiedSplit:
    def test_800_200_on_1000(self):
        labels = [i % 2 for i in range(1000)]
        train, test = stratified_split(labels, 0.8, seed=0)
        assert train.size == 800 and test.size == 200
        assert set(train) | set(test) == set(range(1000))
        assert set(train) & set(test) == set()

    def test_stratification_per_class(self):
        labels = [0] * 30 + [1] * 70
        train, test = stratified_split(labels, 0.8, seed=1)
        train_labels = [labels[i] for i in train]
        assert train_labels.count(0) == 24 and train_labels.count(1) == 56

    def test_deterministic_per_seed(self):
        labels = [i % 3 for i in range(90)]
        a = stratified_split(labels, 0.8, seed=5)
        b = stratified_split(labels, 0.8, seed=5)
        assert np.array_equal(a[0], b[0])
        c = stratified_split(labels, 0.8, seed=6)
        assert not np.array_equal(a[0], c[0])


class TestSynthDataset:
    def test_manifest_and_files(self, tmp_path):
        spec = parse_synth(synth_json(duration_s=10.0, streams_per_class=2), "")
        manifest = synth_dataset(spec, tmp_path, seed=0)
        assert len(manifest["streams"]) == 4
        assert manifest["labels"] == [0, 0, 1, 1]
        s = load_stream(tmp_path / manifest["streams"][0])
        assert s.label == 0 and len(s) > 0
        assert (tmp_path / "manifest.json").exists()

    def test_seed_repeat_identical_bytes(self, tmp_path):
        spec = parse_synth(synth_json(duration_s=5.0), "")
        d1, d2 = tmp_path / "a", tmp_path / "b"
        synth_dataset(spec, d1, seed=3)
        synth_dataset(spec, d2, seed=3)
        for name in ("class0_run0.jsonl", "class1_run0.jsonl"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()


class TestStreamMetrics:
    @pytest.fixture
    def mixed(self, small_grid):
        scene = SceneConfig(static_paths=(StaticPath(0.0, 1.0),))
        traffic = TrafficConfig((
            TrafficCluster(0, Band.BAND_5G, FrameType.MGMT, 20, Periodic(10.0)),
            TrafficCluster(1, Band.BAND_5G, FrameType.DATA, 80, Poisson(50.0)),
            TrafficCluster(2, Band.BAND_5G, FrameType.CTRL, 20, Bursty(500.0, 6, 70.0)),
        ), 30.0)
        return emit_stream(scene, traffic, ImpairmentConfig(), 1, grid=small_grid)

    def test_merged_mr_at_most_min_cluster(self, mixed):
        out = stream_metrics(mixed)
        merged = out["merged"]["mr"]
        assert all(merged <= c["mr"] + 1e-12 for c in out["clusters"])

    def test_merged_scv_not_above_burstiest(self, mixed):
        out = stream_metrics(mixed)
        assert out["merged"]["scv"] <= max(c["scv"] for c in out["clusters"])

    def test_periodic_cluster_scv_zero(self, mixed):
        out = stream_metrics(mixed)
        beacon = next(c for c in out["clusters"] if "mgmt" in c["cluster"])
        assert beacon["scv"] == pytest.approx(0.0, abs=1e-12)

    def test_static_flag_adds_acv(self, mixed):
        out = stream_metrics(mixed, static=True)
        assert all("acv" in c for c in out["clusters"])
        assert "acv" in out["merged"]


class TestRunExperiment:
    def test_small_experiment_report(self):
        cfg = parse_experiment(experiment_json())
        report = run_experiment(cfg, dataset_seed=0)
        assert len(report["per_seed"]) == 2
        assert 0.0 <= report["accuracy_mean"] <= 1.0
        assert report["model_size"] > 0
        assert np.array(report["confusion"]).sum() == \
            sum(r["n_test"] for r in report["per_seed"])
        assert "wall_clock_s" in report and report["config"]

    def test_identical_config_identical_report(self):
        cfg = parse_experiment(experiment_json())
        r1 = run_experiment(cfg, dataset_seed=0)
        r2 = run_experiment(cfg, dataset_seed=0)
        r1.pop("wall_clock_s")
        r2.pop("wall_clock_s")
        assert json.dumps(r1, sort_keys=True) == json.dumps(r2, sort_keys=True)


class TestIssInExperiment:
    def test_selection_fitted_per_seed_on_train_split(self):
        obj = experiment_json()
        obj["sanitize"] = {"k_sel": 3}
        obj["train"]["seeds"] = [0]
        cfg = parse_experiment(obj)
        report = run_experiment(cfg, dataset_seed=0)
        assert 0.0 <= report["accuracy_mean"] <= 1.0
        # ISS reduces the wideband cluster to 3 tones: merged windows carry
        # fewer observed tones than the full 13 + 5 grid rows would
        cfg_off = parse_experiment(experiment_json())
        base = run_experiment(cfg_off, dataset_seed=0)
        assert report["model_size"] == base["model_size"]  # same grid columns


class TestWorkerPool:
    def test_parallel_seeds_match_serial(self, monkeypatch):
        cfg = parse_experiment(experiment_json())
        serial = run_experiment(cfg, dataset_seed=0)
        monkeypatch.setenv("UNIFI_THREADS", "2")
        parallel = run_experiment(cfg, dataset_seed=0)
        assert [r["accuracy"] for r in parallel["per_seed"]] == \
            [r["accuracy"] for r in serial["per_seed"]]
        assert [r["history"] for r in parallel["per_seed"]] == \
            [r["history"] for r in serial["per_seed"]]


class TestSweep:
    def test_single_zero_cell_matches_baseline(self):
        obj = experiment_json(sweep={"mr_grid": [0.0], "scv_grid": [0.0]})
        obj["dataset"]["synth"]["traffic"]["clusters"] = [
            {"id": 0, "band": "5g", "ft": "data", "bw": 20,
             "arrival": {"kind": "periodic", "rate_hz": 100}}]
        cfg = parse_experiment(obj)
        base = run_experiment(cfg, dataset_seed=0)
        sweep = run_sweep(cfg, dataset_seed=0)
        assert len(sweep["rows"]) == 1
        row = sweep["rows"][0]
        assert row["achieved_mr"] == pytest.approx(0.0, abs=1e-9)
        assert row["mean_acc"] == pytest.approx(base["accuracy_mean"], abs=1e-9)

    def test_grid_shape_and_csv(self):
        rows = [{"target_mr": 0.0, "target_scv": 0.0, "achieved_mr": 0.0,
                 "achieved_scv": 0.0, "mean_acc": 0.5, "std_acc": 0.1},
                {"target_mr": 0.5, "target_scv": 1.0, "achieved_mr": float("nan"),
                 "achieved_scv": float("nan"), "mean_acc": float("nan"),
                 "std_acc": float("nan")}]
        csv = sweep_rows_to_csv(rows)
        lines = csv.strip().split("\n")
        assert lines[0] == "target_mr,target_scv,achieved_mr,achieved_scv,mean_acc,std_acc"
        assert len(lines) == 3
        assert "nan" in lines[2]
