"""Core domain types: packets, streams, sanitized windows, quality metrics.

All types are immutable values after construction; operations on them are
pure functions, safe to call from any number of concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgError, GridError, OrderError
from .grids import ALLOWED_BW_MHZ, Band, FrameType, GridSpec

ClusterKey = tuple[Band, FrameType, int]


def _frozen_f64(a) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class PacketRecord:
    """One CSI observation: a timestamp, PHY metadata and an amplitude vector."""

    t_us: int
    band: Band
    frame_type: FrameType
    bw_mhz: int
    sc_idx: tuple[int, ...]
    amp: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sc_idx", tuple(int(i) for i in self.sc_idx))
        object.__setattr__(self, "amp", _frozen_f64(self.amp))
        if self.bw_mhz not in ALLOWED_BW_MHZ:
            raise ArgError(f"bw_mhz must be one of {ALLOWED_BW_MHZ}, got {self.bw_mhz}")
        if len(self.sc_idx) == 0:
            raise ArgError("packet carries no subcarriers")
        if self.amp.ndim != 1 or len(self.amp) != len(self.sc_idx):
            raise ArgError("len(amp) must equal len(sc_idx)")
        if any(b <= a for a, b in zip(self.sc_idx, self.sc_idx[1:])):
            raise ArgError("sc_idx must be strictly increasing")
        if not np.all(np.isfinite(self.amp)) or np.any(self.amp < 0):
            raise ArgError("amplitudes must be finite and >= 0")

    @property
    def cluster_key(self) -> ClusterKey:
        return (self.band, self.frame_type, self.bw_mhz)

    @property
    def sort_key(self):
        return (self.t_us, self.band.value, self.frame_type.value, self.bw_mhz)

    def with_amp(self, amp) -> "PacketRecord":
        return PacketRecord(self.t_us, self.band, self.frame_type, self.bw_mhz, self.sc_idx, amp)


@dataclass(frozen=True, eq=False)
class CsiStream:
    """Time-ordered packet sequence plus the grid declared in its file header."""

    epoch_us: int
    grid: GridSpec
    packets: tuple[PacketRecord, ...]
    label: int | None = None
    subject_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "packets", tuple(self.packets))
        keys = [p.sort_key for p in self.packets]
        if any(b < a for a, b in zip(keys, keys[1:])):
            raise OrderError("packets not sorted by (t_us, band, frame_type, bw_mhz)")
        for p in self.packets:
            if not self.grid.has_layout(p.band, p.bw_mhz):
                raise GridError(f"packet uses undeclared layout ({p.band.value}, bw{p.bw_mhz})")
            if not self.grid.contains(p.band, p.bw_mhz, p.sc_idx):
                raise GridError(f"packet at t={p.t_us} has subcarriers off the "
                                f"({p.band.value}, bw{p.bw_mhz}) grid")

    def __len__(self) -> int:
        return len(self.packets)

    @property
    def duration_us(self) -> int:
        if not self.packets:
            return 0
        return self.packets[-1].t_us - self.packets[0].t_us

    @property
    def t0_us(self) -> int:
        return self.packets[0].t_us if self.packets else 0

    def timestamps(self) -> np.ndarray:
        return np.array([p.t_us for p in self.packets], dtype=np.int64)


def sort_packets(packets) -> tuple[PacketRecord, ...]:
    return tuple(sorted(packets, key=lambda p: p.sort_key))


@dataclass(frozen=True, eq=False)
class SanitizedWindow:
    """Fixed-duration window of sanitized observations on the canonical grid.

    ``values`` is T' x G with zeros wherever ``masks`` is 0; ``ts`` holds the
    within-window timestamps normalized to [0, 1], strictly increasing.
    ``provenance`` maps each row to the originating packet index in the source
    stream (diagnostics only).
    """

    t0_us: int
    win_us: int
    values: np.ndarray
    masks: np.ndarray
    ts: np.ndarray
    label: int | None = None
    provenance: tuple[int, ...] | None = None

    def __post_init__(self):
        values = _frozen_f64(self.values)
        masks = np.ascontiguousarray(self.masks, dtype=np.uint8)
        masks.setflags(write=False)
        ts = _frozen_f64(self.ts)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "ts", ts)
        if self.win_us <= 0:
            raise ArgError("win_us must be positive")
        if values.ndim != 2 or masks.shape != values.shape:
            raise ArgError("values and masks must be matching T' x G matrices")
        if ts.shape != (values.shape[0],):
            raise ArgError("ts length must equal the number of rows")
        if values.shape[0] == 0:
            raise ArgError("window has no rows")
        if np.any(values[masks == 0] != 0.0):
            raise ArgError("masked-out entries must be zero")
        if np.any(masks.sum(axis=1) < 1):
            raise ArgError("every row needs at least one unmasked entry")
        if np.any(ts < 0.0) or np.any(ts > 1.0):
            raise ArgError("ts must lie in [0, 1]")
        if np.any(np.diff(ts) <= 0.0):
            raise ArgError("ts must be strictly increasing")

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def grid_size(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class QualityMetrics:
    """Timestamp sparsity (mr), irregularity (scv), amplitude stability (acv)."""

    mr: float
    scv: float
    acv: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.mr <= 1.0):
            raise ArgError(f"mr must be in [0, 1], got {self.mr}")
        if not np.isfinite(self.scv) or self.scv < 0:
            raise ArgError(f"scv must be finite and >= 0, got {self.scv}")
        if self.acv is not None and (not np.isfinite(self.acv) or self.acv < 0):
            raise ArgError(f"acv must be finite and >= 0, got {self.acv}")

    def to_json(self) -> dict:
        out = {"mr": self.mr, "scv": self.scv}
        if self.acv is not None:
            out["acv"] = self.acv
        return out
