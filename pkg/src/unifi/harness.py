"""Experiment harness: dataset assembly, splits, multi-seed runs, sweeps.

An experiment config is a single JSON document naming the dataset (stream
files or an inline synthesis spec), the sanitization settings, model
overrides, and the training protocol. Reports embed the resolved config so a
result can always be traced back to its exact inputs.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgError, ConfigError, InfeasibleError
from .grids import Band, FrameType, GridSpec, default_grid
from .metrics import DEFAULT_BIN_US, compute_mr, compute_scv, masked_acv
from .model import ModelConfig, TrainConfig, evaluate, train
from .sanitize import (SanitizeConfig, SanitizeReport, assemble_windows,
                       clean_clusters, cluster_by_meta, extract_series,
                       select_for_clusters)
from .streamio import load_stream, save_stream
from .synth import (Bursty, GainModel, ImpairmentConfig, Mover, Periodic,
                    Poisson, SceneConfig, StaticPath, TrafficCluster,
                    TrafficConfig, emit_stream, subsample_to_target)
from .types import CsiStream, QualityMetrics, SanitizedWindow
from .windowing import DEFAULT_WIN_US

_BANDS = {b.value: b for b in Band}
_FRAME_TYPES = {f.value: f for f in FrameType}


# ---------------------------------------------------------------------------
# Config parsing (JSON -> dataclasses, with error paths)


def _req(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"missing key {key!r}", path)
    return obj[key]


def _num(value, path: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError("expected a number", path)
    return float(value)


def _int(value, path: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError("expected an integer", path)
    return value


def parse_scene(obj: dict, path: str) -> SceneConfig:
    paths_json = _req(obj, "static_paths", path)
    if not isinstance(paths_json, list) or not paths_json:
        raise ConfigError("static_paths must be a non-empty list", f"{path}.static_paths")
    statics = tuple(StaticPath(_num(_req(p, "delay_ns", f"{path}.static_paths[{i}]"),
                                    f"{path}.static_paths[{i}].delay_ns"),
                               _num(_req(p, "gain", f"{path}.static_paths[{i}]"),
                                    f"{path}.static_paths[{i}].gain"))
                    for i, p in enumerate(paths_json))
    mover = None
    if obj.get("mover") is not None:
        m = obj["mover"]
        mover = Mover(_num(_req(m, "doppler_hz", f"{path}.mover"), f"{path}.mover.doppler_hz"),
                      _num(_req(m, "path_gain", f"{path}.mover"), f"{path}.mover.path_gain"),
                      _num(_req(m, "reflect_delay_ns", f"{path}.mover"),
                           f"{path}.mover.reflect_delay_ns"))
    try:
        return SceneConfig(static_paths=statics, mover=mover,
                           motion_class=_int(obj.get("motion_class", 0), f"{path}.motion_class"),
                           noise_sigma=_num(obj.get("noise_sigma", 0.0), f"{path}.noise_sigma"))
    except ArgError as e:
        raise ConfigError(str(e), path) from None


def parse_traffic(obj: dict, path: str) -> TrafficConfig:
    clusters_json = _req(obj, "clusters", path)
    if not isinstance(clusters_json, list) or not clusters_json:
        raise ConfigError("clusters must be a non-empty list", f"{path}.clusters")
    clusters = []
    for i, c in enumerate(clusters_json):
        cpath = f"{path}.clusters[{i}]"
        band_name = _req(c, "band", cpath)
        if band_name not in _BANDS:
            raise ConfigError(f"unknown band {band_name!r}", f"{cpath}.band")
        ft_name = _req(c, "ft", cpath)
        if ft_name not in _FRAME_TYPES:
            raise ConfigError(f"unknown frame type {ft_name!r}", f"{cpath}.ft")
        arr = _req(c, "arrival", cpath)
        kind = _req(arr, "kind", f"{cpath}.arrival")
        if kind == "periodic":
            arrival = Periodic(_num(_req(arr, "rate_hz", f"{cpath}.arrival"),
                                    f"{cpath}.arrival.rate_hz"))
        elif kind == "poisson":
            arrival = Poisson(_num(_req(arr, "rate_hz", f"{cpath}.arrival"),
                                   f"{cpath}.arrival.rate_hz"))
        elif kind == "bursty":
            arrival = Bursty(_num(_req(arr, "burst_rate_hz", f"{cpath}.arrival"),
                                  f"{cpath}.arrival.burst_rate_hz"),
                             _int(_req(arr, "burst_len", f"{cpath}.arrival"),
                                  f"{cpath}.arrival.burst_len"),
                             _num(_req(arr, "gap_ms", f"{cpath}.arrival"),
                                  f"{cpath}.arrival.gap_ms"))
        else:
            raise ConfigError(f"unknown arrival kind {kind!r}", f"{cpath}.arrival.kind")
        sc = c.get("sc")
        try:
            clusters.append(TrafficCluster(_int(_req(c, "id", cpath), f"{cpath}.id"),
                                           _BANDS[band_name], _FRAME_TYPES[ft_name],
                                           _int(_req(c, "bw", cpath), f"{cpath}.bw"),
                                           arrival,
                                           tuple(sc) if sc is not None else None))
        except ArgError as e:
            raise ConfigError(str(e), cpath) from None
    try:
        return TrafficConfig(tuple(clusters),
                             _num(_req(obj, "duration_s", path), f"{path}.duration_s"))
    except ArgError as e:
        raise ConfigError(str(e), path) from None


def parse_impairments(obj: dict | None, path: str) -> ImpairmentConfig:
    if obj is None:
        return ImpairmentConfig()
    gain = GainModel()
    if obj.get("gain") is not None:
        g = obj["gain"]
        gain = GainModel(alpha_lo=_num(g.get("lo", 1.0), f"{path}.gain.lo"),
                         alpha_hi=_num(g.get("hi", 1.0), f"{path}.gain.hi"),
                         ar1_rho=None if g.get("ar1_rho") is None
                         else _num(g["ar1_rho"], f"{path}.gain.ar1_rho"))
    shaping = {}
    for cid, vec in (obj.get("shaping") or {}).items():
        key = int(cid)
        if isinstance(vec, (int, float)):
            shaping[key] = (float(vec),)  # resolved to full width at emit time
        elif isinstance(vec, list):
            shaping[key] = tuple(float(v) for v in vec)
        else:
            raise ConfigError("shaping entries must be a number or list",
                              f"{path}.shaping.{cid}")
    by_cluster = {int(cid): _num(v, f"{path}.error_sigma_by_cluster.{cid}")
                  for cid, v in (obj.get("error_sigma_by_cluster") or {}).items()}
    try:
        return ImpairmentConfig(gain=gain, shaping=shaping,
                                error_sigma=_num(obj.get("error_sigma", 0.0),
                                                 f"{path}.error_sigma"),
                                error_sigma_by_cluster=by_cluster)
    except ArgError as e:
        raise ConfigError(str(e), path) from None


@dataclass(frozen=True)
class SynthSpec:
    scenes: tuple[SceneConfig, ...]      # one per class, label = position
    traffic: TrafficConfig
    impairments: ImpairmentConfig
    streams_per_class: int = 1
    grid: GridSpec = field(default_factory=default_grid)


def parse_synth(obj: dict, path: str = "dataset.synth") -> SynthSpec:
    classes = _req(obj, "classes", path)
    if not isinstance(classes, list) or not classes:
        raise ConfigError("classes must be a non-empty list", f"{path}.classes")
    scenes = []
    for i, c in enumerate(classes):
        scene = parse_scene(_req(c, "scene", f"{path}.classes[{i}]"),
                            f"{path}.classes[{i}].scene")
        label = _int(c.get("label", i), f"{path}.classes[{i}].label")
        if label != i:
            raise ConfigError(f"labels must be contiguous from 0; class {i} has {label}",
                              f"{path}.classes[{i}].label")
        scenes.append(SceneConfig(scene.static_paths, scene.mover, label, scene.noise_sigma))
    grid = default_grid()
    if obj.get("grid") is not None:
        grid = GridSpec.from_json(obj["grid"])
    return SynthSpec(scenes=tuple(scenes),
                     traffic=parse_traffic(_req(obj, "traffic", path), f"{path}.traffic"),
                     impairments=parse_impairments(obj.get("impairments"),
                                                   f"{path}.impairments"),
                     streams_per_class=_int(obj.get("streams_per_class", 1),
                                            f"{path}.streams_per_class"),
                     grid=grid)


@dataclass(frozen=True)
class TrainSpec:
    epochs: int
    lr: float = 0.001
    batch: int = 64
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    split: float = 0.8
    dtype: str = "float64"

    def __post_init__(self):
        if not (0.0 < self.split < 1.0):
            raise ConfigError("split must be in (0, 1)", "train.split")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty", "train.seeds")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64", "train.dtype")


@dataclass(frozen=True)
class ExperimentConfig:
    stream_paths: tuple[str, ...] | None
    synth: SynthSpec | None
    sanitize: SanitizeConfig
    model: dict                      # ModelConfig overrides (dims, flags)
    train: TrainSpec
    win_us: int = DEFAULT_WIN_US
    stride_us: int | None = None
    sweep_mr: tuple[float, ...] | None = None
    sweep_scv: tuple[float, ...] | None = None
    raw: dict = field(default_factory=dict, compare=False)


def parse_experiment(obj: dict) -> ExperimentConfig:
    dataset = _req(obj, "dataset", "")
    stream_paths = None
    synth = None
    if "streams" in dataset:
        paths = dataset["streams"]
        if not isinstance(paths, list) or not paths:
            raise ConfigError("streams must be a non-empty list", "dataset.streams")
        stream_paths = tuple(str(p) for p in paths)
    elif "synth" in dataset:
        synth = parse_synth(dataset["synth"])
    else:
        raise ConfigError("dataset needs either 'streams' or 'synth'", "dataset")

    s = obj.get("sanitize", {})
    try:
        sanitize = SanitizeConfig(
            tau_d=_num(s.get("tau_d", 0.6), "sanitize.tau_d"),
            t_b_us=_int(s.get("t_b_us", 10_000), "sanitize.t_b_us"),
            t_c_us=_int(s.get("t_c_us", 1_000), "sanitize.t_c_us"),
            k_sel=None if s.get("k_sel") is None else _int(s["k_sel"], "sanitize.k_sel"),
            enable_burst_filter=bool(s.get("enable_burst_filter", True)),
            enable_alignment=bool(s.get("enable_alignment", True)))
    except ArgError as e:
        raise ConfigError(str(e), "sanitize") from None

    t = _req(obj, "train", "")
    tspec = TrainSpec(epochs=_int(_req(t, "epochs", "train"), "train.epochs"),
                      lr=_num(t.get("lr", 0.001), "train.lr"),
                      batch=_int(t.get("batch", 64), "train.batch"),
                      seeds=tuple(t.get("seeds", [0, 1, 2, 3, 4])),
                      split=_num(t.get("split", 0.8), "train.split"),
                      dtype=str(t.get("dtype", "float64")))

    w = obj.get("window", {})
    win_us = _int(w.get("win_us", DEFAULT_WIN_US), "window.win_us")
    stride_us = None if w.get("stride_us") is None else _int(w["stride_us"], "window.stride_us")

    sweep_mr = sweep_scv = None
    if obj.get("sweep") is not None:
        sw = obj["sweep"]
        sweep_mr = tuple(float(v) for v in _req(sw, "mr_grid", "sweep"))
        sweep_scv = tuple(float(v) for v in _req(sw, "scv_grid", "sweep"))

    model = obj.get("model", {})
    if not isinstance(model, dict):
        raise ConfigError("model must be an object", "model")
    bad = set(model) - _MODEL_OVERRIDE_KEYS
    if bad:
        raise ConfigError(f"unknown model keys {sorted(bad)}", "model")
    return ExperimentConfig(stream_paths=stream_paths, synth=synth, sanitize=sanitize,
                            model=dict(model), train=tspec, win_us=win_us,
                            stride_us=stride_us, sweep_mr=sweep_mr, sweep_scv=sweep_scv,
                            raw=obj)


def load_experiment(path) -> ExperimentConfig:
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    return parse_experiment(obj)


# ---------------------------------------------------------------------------
# Dataset assembly


def _resolve_shaping(spec: SynthSpec) -> ImpairmentConfig:
    """Expand scalar shaping shorthands to the cluster's tone count."""
    imp = spec.impairments
    if not imp.shaping:
        return imp
    shaping = {}
    for c in spec.traffic.clusters:
        vec = imp.shaping.get(c.cluster_id)
        if vec is None:
            continue
        tones = c.sc_idx if c.sc_idx is not None else spec.grid.layout(c.band, c.bw_mhz)
        if len(vec) == 1 and len(tones) != 1:
            vec = vec * len(tones)
        shaping[c.cluster_id] = vec
    return ImpairmentConfig(gain=imp.gain, shaping=shaping, error_sigma=imp.error_sigma,
                            error_sigma_by_cluster=imp.error_sigma_by_cluster)


def synth_streams(spec: SynthSpec, seed: int) -> list[CsiStream]:
    """streams_per_class streams per scene, seeded deterministically."""
    imp = _resolve_shaping(spec)
    out = []
    for ci, scene in enumerate(spec.scenes):
        for k in range(spec.streams_per_class):
            stream_seed = seed * 10_000 + ci * 100 + k
            out.append(emit_stream(scene, spec.traffic, imp, stream_seed, grid=spec.grid))
    return out


def synth_dataset(spec: SynthSpec, out_dir, seed: int) -> dict:
    """Write per-class stream files plus a manifest; returns the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    streams = synth_streams(spec, seed)
    manifest = {"streams": [], "labels": [], "seed": seed}
    counters: dict[int, int] = {}
    for s in streams:
        idx = counters.get(s.label, 0)
        counters[s.label] = idx + 1
        name = f"class{s.label}_run{idx}.jsonl"
        save_stream(s, out_dir / name)
        manifest["streams"].append(name)
        manifest["labels"].append(s.label)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def load_dataset(cfg: ExperimentConfig, base_dir=None, seed: int = 0) -> list[CsiStream]:
    if cfg.synth is not None:
        return synth_streams(cfg.synth, seed)
    base = Path(base_dir) if base_dir is not None else Path(".")
    out = []
    for p in cfg.stream_paths:
        path = Path(p)
        out.append(load_stream(path if path.is_absolute() else base / path))
    return out


# ---------------------------------------------------------------------------
# Window preparation (ISS selection is computed on the training split only)


@dataclass
class PreparedStream:
    stream: CsiStream
    clean: list                      # ClusterSeries after stages (i)-(iv)
    report: SanitizeReport
    windows: list[SanitizedWindow]   # without ISS applied
    window_slice: slice = slice(0, 0)  # position within the concatenated list


def prepare_streams(streams: list[CsiStream], san: SanitizeConfig,
                    win_us: int, stride_us: int) -> tuple[list[PreparedStream], list[SanitizedWindow]]:
    prepared = []
    all_windows: list[SanitizedWindow] = []
    for s in streams:
        clean, report = clean_clusters(s, san)
        windows = assemble_windows(clean, s.grid, s.t0_us, s.duration_us,
                                   win_us, stride_us, s.label, None, report)
        ps = PreparedStream(s, clean, report, windows)
        ps.window_slice = slice(len(all_windows), len(all_windows) + len(windows))
        all_windows.extend(windows)
        prepared.append(ps)
    return prepared, all_windows


def stratified_split(labels: list[int], frac: float, seed: int
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Per-class random split; returns (train_idx, test_idx)."""
    rng = np.random.default_rng([seed, 0x5917])
    by_class: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)
    train, test = [], []
    for lab in sorted(by_class):
        idx = np.array(by_class[lab])
        order = rng.permutation(idx.size)
        n_train = int(round(frac * idx.size))
        train.extend(idx[order[:n_train]])
        test.extend(idx[order[n_train:]])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(test, dtype=np.int64))


def _windows_with_iss(prepared: list[PreparedStream], san: SanitizeConfig,
                      win_us: int, stride_us: int,
                      train_idx: np.ndarray) -> list[SanitizedWindow]:
    """Re-assemble windows with per-cluster tone selections fitted on train only."""
    train_set = set(train_idx.tolist())
    out: list[SanitizedWindow] = []
    offset = 0
    for ps in prepared:
        n = len(ps.windows)
        train_local = [i for i in range(n) if offset + i in train_set]
        spans = []
        for i in train_local:
            w = ps.windows[i]
            spans.append((w.t0_us, w.t0_us + w.win_us))
        clean_train = []
        for cs in ps.clean:
            rows = np.zeros(len(cs), dtype=bool)
            for lo, hi in spans:
                rows |= (cs.t_us >= lo) & (cs.t_us < hi)
            clean_train.append(cs.take(np.nonzero(rows)[0]))
        selections = select_for_clusters(clean_train, san)
        out.extend(assemble_windows(ps.clean, ps.stream.grid, ps.stream.t0_us,
                                    ps.stream.duration_us, win_us, stride_us,
                                    ps.stream.label, selections, None))
        offset += n
    return out


# ---------------------------------------------------------------------------
# Experiment runner


_MODEL_OVERRIDE_KEYS = {"d_r", "d_h", "d_k", "d_v", "q_refs", "n_heads",
                        "gru_hidden", "use_mask_features", "content_aware_keys"}


def _model_config(overrides: dict, grid_size: int, n_classes: int) -> ModelConfig:
    bad = set(overrides) - _MODEL_OVERRIDE_KEYS
    if bad:
        raise ConfigError(f"unknown model keys {sorted(bad)}", "model")
    return ModelConfig(grid_size=grid_size, n_classes=n_classes, **overrides)


def _run_one_seed(args):
    (windows, labels, mcfg, tspec, seed, ckpt_dir) = args
    train_idx, test_idx = stratified_split(labels, tspec.split, seed)
    train_set = [windows[i] for i in train_idx]
    test_set = [windows[i] for i in test_idx]
    tcfg = TrainConfig(epochs=tspec.epochs, lr=tspec.lr, batch_size=tspec.batch,
                       seed=seed, dtype=tspec.dtype)
    params, history = train(train_set, None, mcfg, tcfg)
    acc, conf = evaluate(test_set, params, mcfg)
    if ckpt_dir is not None:
        from .model import save_checkpoint
        save_checkpoint(Path(ckpt_dir) / f"model_seed{seed}.unfi", params, mcfg)
    return {"seed": seed, "accuracy": acc, "n_train": len(train_set),
            "n_test": len(test_set), "confusion": conf.tolist(),
            "history": [h.to_json() for h in history]}


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("UNIFI_THREADS", "1")))
    except ValueError:
        return 1


def run_prepared(windows: list[SanitizedWindow], cfg: ExperimentConfig,
                 prepared: list[PreparedStream] | None = None,
                 ckpt_dir=None) -> dict:
    """Multi-seed train/eval over already-sanitized windows."""
    if not windows:
        raise ArgError("no windows to run on")
    labels = [w.label for w in windows]
    if any(lab is None for lab in labels):
        raise ArgError("windows must be labeled")
    n_classes = len(set(labels))
    if sorted(set(labels)) != list(range(n_classes)):
        raise ArgError("labels must be contiguous integers starting at 0")
    grid_size = windows[0].grid_size
    mcfg = _model_config(cfg.model, grid_size, n_classes)
    stride = cfg.stride_us if cfg.stride_us is not None else cfg.win_us

    jobs = []
    for seed in cfg.train.seeds:
        seed_windows = windows
        if cfg.sanitize.k_sel is not None and prepared is not None:
            train_idx, _ = stratified_split(labels, cfg.train.split, seed)
            seed_windows = _windows_with_iss(prepared, cfg.sanitize, cfg.win_us,
                                             stride, train_idx)
        jobs.append((seed_windows, labels, mcfg, cfg.train, seed, ckpt_dir))

    workers = _worker_count()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_seed = list(pool.map(_run_one_seed, jobs))
    else:
        per_seed = [_run_one_seed(j) for j in jobs]

    accs = np.array([r["accuracy"] for r in per_seed])
    conf = np.sum([np.array(r["confusion"]) for r in per_seed], axis=0)
    from .model import init_params
    report = {
        "n_windows": len(windows),
        "n_classes": n_classes,
        "grid_size": grid_size,
        "seeds": list(cfg.train.seeds),
        "per_seed": per_seed,
        "accuracy_mean": float(accs.mean()),
        "accuracy_std": float(accs.std()),
        "confusion": conf.tolist(),
        "model_size": init_params(mcfg, 0).n_parameters(),
    }
    return report


def run_experiment(cfg: ExperimentConfig, base_dir=None, dataset_seed: int = 0,
                   ckpt_dir=None) -> dict:
    """sanitize -> window -> stratified split -> train per seed -> report."""
    t_start = time.perf_counter()
    streams = load_dataset(cfg, base_dir, seed=dataset_seed)
    grids = {id(s.grid): s.grid for s in streams}
    if len({tuple(g.columns) for g in grids.values()}) != 1:
        raise ConfigError("all dataset streams must declare the same grid", "dataset")
    stride = cfg.stride_us if cfg.stride_us is not None else cfg.win_us
    prepared, windows = prepare_streams(streams, cfg.sanitize, cfg.win_us, stride)
    report = run_prepared(windows, cfg, prepared, ckpt_dir=ckpt_dir)
    report["config"] = cfg.raw
    report["sanitize_reports"] = [p.report.to_json() for p in prepared]
    report["wall_clock_s"] = time.perf_counter() - t_start
    return report


# ---------------------------------------------------------------------------
# Robustness sweep


def run_sweep(cfg: ExperimentConfig, base_dir=None, dataset_seed: int = 0) -> dict:
    """Per (MR, SCV) cell: subsample every stream, then a full experiment run."""
    if cfg.sweep_mr is None or cfg.sweep_scv is None:
        raise ConfigError("sweep grids missing", "sweep")
    base_streams = load_dataset(cfg, base_dir, seed=dataset_seed)
    stride = cfg.stride_us if cfg.stride_us is not None else cfg.win_us
    rows = []
    for i, mr in enumerate(cfg.sweep_mr):
        for j, scv in enumerate(cfg.sweep_scv):
            cell_seed = 7_000 + 97 * i + j
            try:
                sub, ach_mr, ach_scv = [], [], []
                for k, s in enumerate(base_streams):
                    ss = subsample_to_target(s, mr, scv, seed=cell_seed + 13 * k)
                    rel = ss.timestamps() - ss.t0_us
                    ach_mr.append(compute_mr(rel[rel < ss.duration_us], ss.duration_us))
                    ach_scv.append(compute_scv(np.unique(rel)))
                    sub.append(ss)
                prepared, windows = prepare_streams(sub, cfg.sanitize, cfg.win_us, stride)
                report = run_prepared(windows, cfg, prepared)
                rows.append({"target_mr": mr, "target_scv": scv,
                             "achieved_mr": float(np.mean(ach_mr)),
                             "achieved_scv": float(np.mean(ach_scv)),
                             "mean_acc": report["accuracy_mean"],
                             "std_acc": report["accuracy_std"]})
            except InfeasibleError:
                rows.append({"target_mr": mr, "target_scv": scv,
                             "achieved_mr": float("nan"), "achieved_scv": float("nan"),
                             "mean_acc": float("nan"), "std_acc": float("nan")})
    return {"config": cfg.raw, "rows": rows}


def sweep_rows_to_csv(rows: list[dict]) -> str:
    header = "target_mr,target_scv,achieved_mr,achieved_scv,mean_acc,std_acc"
    lines = [header]
    for r in rows:
        lines.append(",".join(f"{r[k]:.6g}" for k in header.split(",")))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Stream metrics (per cluster and merged)


def quality_of(timestamps_rel: np.ndarray, duration_us: int, bin_us: int,
               acv: float | None = None) -> QualityMetrics:
    mr = compute_mr(timestamps_rel, duration_us, bin_us)
    scv = compute_scv(timestamps_rel) if timestamps_rel.size >= 3 else 0.0
    return QualityMetrics(mr=mr, scv=scv, acv=acv)


def stream_metrics(stream: CsiStream, static: bool = False,
                   bin_us: int = DEFAULT_BIN_US) -> dict:
    """MR/SCV per cluster and for the merged union (ACV only when static)."""
    t0, duration = stream.t0_us, stream.duration_us
    if duration < bin_us:
        raise ArgError("stream shorter than one metric bin")
    out: dict = {"clusters": [], "duration_us": duration}
    for cluster in cluster_by_meta(stream):
        cs = extract_series(stream, cluster)
        rel = np.unique(cs.t_us - t0)
        rel = rel[(rel >= 0) & (rel < duration)]
        acv = masked_acv(cs.amp, cs.mask) if static and len(cs) >= 2 else None
        q = quality_of(rel, duration, bin_us, acv)
        out["clusters"].append(
            {"cluster": f"{cs.key[0].value}/{cs.key[1].value}/bw{cs.key[2]}",
             "n_packets": len(cs), **q.to_json()})
    merged = np.unique(stream.timestamps() - t0)
    merged = merged[(merged >= 0) & (merged < duration)]
    acv = None
    if static and len(stream) >= 2:
        g = stream.grid
        vals = np.zeros((len(stream), g.size))
        mask = np.zeros((len(stream), g.size), dtype=bool)
        for r, p in enumerate(stream.packets):
            cols = [g.column_of(p.band, i) for i in p.sc_idx]
            vals[r, cols] = p.amp
            mask[r, cols] = True
        acv = masked_acv(vals, mask)
    q = quality_of(merged, duration, bin_us, acv)
    out["merged"] = {"n_packets": len(stream), **q.to_json()}
    return out
