"""Command-line interface: synth | sanitize | metrics | train | eval | sweep.

Exit codes: 0 success, 2 configuration error, 3 runtime error. The env var
UNIFI_THREADS caps the per-seed worker pool.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .errors import ConfigError, UnifiError
from .model import evaluate, load_checkpoint
from .sanitize import SanitizeConfig, sanitize_pipeline
from .streamio import load_stream
from .windows_io import load_windows, save_windows


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="unifi",
                                 description="Wi-Fi CSI sensing from irregular traffic")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic per-class streams")
    p.add_argument("--config", required=True, help="synthesis spec (JSON)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sanitize", help="run the sanitization pipeline on one stream")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True, help="output windows file (.npz)")
    p.add_argument("--tau-d", type=float, default=0.6)
    p.add_argument("--t-b-ms", type=float, default=10.0)
    p.add_argument("--t-c-ms", type=float, default=1.0)
    p.add_argument("--iss", type=int, default=None, metavar="K")
    p.add_argument("--no-burst-filter", action="store_true")
    p.add_argument("--win-s", type=float, default=4.0)
    p.add_argument("--stride-s", type=float, default=None)
    p.add_argument("--static", action="store_true",
                   help="scene is static: include amplitude-stability metrics")
    p.add_argument("--report", default=None, help="write the stage report here (JSON)")

    p = sub.add_parser("metrics", help="timestamp/amplitude quality of a stream")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--static", action="store_true")
    p.add_argument("--bin-ms", type=float, default=10.0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("train", help="multi-seed experiment from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--base-dir", default=None,
                   help="directory stream paths are relative to (default: config dir)")
    p.add_argument("--seed", type=int, default=0, help="dataset synthesis seed")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a windows file")
    p.add_argument("--model", required=True)
    p.add_argument("--windows", required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("sweep", help="MR x SCV robustness sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--base-dir", default=None)
    p.add_argument("--seed", type=int, default=0)
    return ap


def _cmd_synth(args) -> int:
    try:
        obj = json.loads(Path(args.config).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    spec = harness.parse_synth(obj, "")
    manifest = harness.synth_dataset(spec, args.out_dir, args.seed)
    print(json.dumps(manifest, indent=2))
    return 0


def _cmd_sanitize(args) -> int:
    stream = load_stream(args.infile)
    cfg = SanitizeConfig(tau_d=args.tau_d, t_b_us=int(args.t_b_ms * 1000),
                         t_c_us=int(args.t_c_ms * 1000), k_sel=args.iss,
                         enable_burst_filter=not args.no_burst_filter)
    win_us = int(args.win_s * 1e6)
    stride_us = None if args.stride_s is None else int(args.stride_s * 1e6)
    result = sanitize_pipeline(stream, cfg, win_us=win_us, stride_us=stride_us,
                               static_scene=args.static)
    if not result.windows:
        print("no windows produced", file=sys.stderr)
        return 3
    save_windows(result.windows, args.out)
    if args.report:
        Path(args.report).write_text(json.dumps(result.report.to_json(), indent=2))
    print(f"wrote {len(result.windows)} windows to {args.out}")
    return 0


def _cmd_metrics(args) -> int:
    stream = load_stream(args.infile)
    out = harness.stream_metrics(stream, static=args.static,
                                 bin_us=int(args.bin_ms * 1000))
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def _cmd_train(args) -> int:
    cfg = harness.load_experiment(args.config)
    base = args.base_dir if args.base_dir is not None else Path(args.config).parent
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = harness.run_experiment(cfg, base_dir=base, dataset_seed=args.seed,
                                    ckpt_dir=out_dir)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2))
    print(f"accuracy {report['accuracy_mean']:.4f} +- {report['accuracy_std']:.4f} "
          f"over seeds {report['seeds']}")
    print(f"report written to {out_dir / 'report.json'}")
    return 0


def _cmd_eval(args) -> int:
    params, mcfg = load_checkpoint(args.model)
    windows = load_windows(args.windows)
    acc, conf = evaluate(windows, params, mcfg)
    out = {"accuracy": acc, "confusion": conf.tolist(), "n_windows": len(windows)}
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def _cmd_sweep(args) -> int:
    cfg = harness.load_experiment(args.config)
    base = args.base_dir if args.base_dir is not None else Path(args.config).parent
    result = harness.run_sweep(cfg, base_dir=base, dataset_seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sweep.csv").write_text(harness.sweep_rows_to_csv(result["rows"]))
    (out_dir / "sweep.json").write_text(json.dumps(result, indent=2))
    print(f"wrote {len(result['rows'])} cells to {out_dir / 'sweep.csv'}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "sanitize": _cmd_sanitize,
    "metrics": _cmd_metrics,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (UnifiError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
