"""Compact .npz container for lists of sanitized windows."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import IoError, SchemaError
from .types import SanitizedWindow


def save_windows(windows: list[SanitizedWindow], path) -> None:
    if not windows:
        raise SchemaError(0, "refusing to save an empty window list")
    lengths = np.array([w.n_obs for w in windows], dtype=np.int64)
    labels = np.array([-1 if w.label is None else w.label for w in windows],
                      dtype=np.int64)
    try:
        np.savez_compressed(
            Path(path),
            lengths=lengths,
            labels=labels,
            t0_us=np.array([w.t0_us for w in windows], dtype=np.int64),
            win_us=np.array([w.win_us for w in windows], dtype=np.int64),
            values=np.concatenate([w.values for w in windows], axis=0),
            masks=np.concatenate([w.masks for w in windows], axis=0),
            ts=np.concatenate([w.ts for w in windows]),
        )
    except OSError as e:
        raise IoError(f"cannot write windows to {path}: {e}") from e


def load_windows(path) -> list[SanitizedWindow]:
    try:
        data = np.load(Path(path))
    except OSError as e:
        raise IoError(f"cannot read windows from {path}: {e}") from e
    for key in ("lengths", "labels", "t0_us", "win_us", "values", "masks", "ts"):
        if key not in data:
            raise SchemaError(0, f"windows file missing array {key!r}")
    lengths = data["lengths"]
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    out = []
    for i, n in enumerate(lengths):
        lo, hi = offsets[i], offsets[i + 1]
        label = int(data["labels"][i])
        out.append(SanitizedWindow(int(data["t0_us"][i]), int(data["win_us"][i]),
                                   data["values"][lo:hi], data["masks"][lo:hi],
                                   data["ts"][lo:hi],
                                   None if label < 0 else label))
    return out
