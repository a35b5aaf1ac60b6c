"""Canonical subcarrier grids.

A stream header declares one subcarrier layout per (band, bandwidth). The
global grid used by sanitized windows is the union of all declared layouts;
bands never share columns, so a column is identified by (band, index).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

from .errors import GridError, SchemaError


class Band(enum.Enum):
    BAND_2G4 = "2g4"
    BAND_5G = "5g"


class FrameType(enum.Enum):
    DATA = "data"
    MGMT = "mgmt"
    CTRL = "ctrl"


ALLOWED_BW_MHZ = (20, 40, 80)

# OFDM subcarrier spacing shared by 802.11n/ac layouts (Hz).
SUBCARRIER_SPACING_HZ = 312_500.0

BAND_CENTER_HZ = {
    Band.BAND_2G4: 2.437e9,
    Band.BAND_5G: 5.210e9,
}


def subcarrier_freq_hz(band: Band, sc_idx: int) -> float:
    """Absolute frequency of one canonical subcarrier index."""
    return BAND_CENTER_HZ[band] + sc_idx * SUBCARRIER_SPACING_HZ


@dataclass(frozen=True)
class GridSpec:
    """Declared (band, bandwidth) -> strictly increasing subcarrier indices."""

    layouts: Mapping[tuple[Band, int], tuple[int, ...]]
    _columns: tuple[tuple[Band, int], ...] = field(init=False, repr=False, compare=False)
    _column_of: dict = field(init=False, repr=False, compare=False)
    _layout_sets: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.layouts:
            raise GridError("grid declares no layouts")
        for (band, bw), idxs in self.layouts.items():
            if bw not in ALLOWED_BW_MHZ:
                raise GridError(f"unsupported bandwidth {bw} MHz for {band.value}")
            if len(idxs) == 0:
                raise GridError(f"empty layout for ({band.value}, bw{bw})")
            if any(b <= a for a, b in zip(idxs, idxs[1:])):
                raise GridError(f"layout for ({band.value}, bw{bw}) not strictly increasing")
        cols = sorted({(band, i) for (band, _bw), idxs in self.layouts.items() for i in idxs},
                      key=lambda c: (c[0].value, c[1]))
        object.__setattr__(self, "_columns", tuple(cols))
        object.__setattr__(self, "_column_of", {c: j for j, c in enumerate(cols)})
        object.__setattr__(self, "_layout_sets",
                           {k: frozenset(v) for k, v in self.layouts.items()})

    @property
    def size(self) -> int:
        return len(self._columns)

    @property
    def columns(self) -> tuple[tuple[Band, int], ...]:
        return self._columns

    def layout(self, band: Band, bw_mhz: int) -> tuple[int, ...]:
        try:
            return self.layouts[(band, bw_mhz)]
        except KeyError:
            raise GridError(f"no declared layout for ({band.value}, bw{bw_mhz})") from None

    def has_layout(self, band: Band, bw_mhz: int) -> bool:
        return (band, bw_mhz) in self.layouts

    def column_of(self, band: Band, sc_idx: int) -> int:
        try:
            return self._column_of[(band, sc_idx)]
        except KeyError:
            raise GridError(f"subcarrier ({band.value}, {sc_idx}) not on any declared grid") from None

    def contains(self, band: Band, bw_mhz: int, sc_idx) -> bool:
        layout = self._layout_sets.get((band, bw_mhz))
        if layout is None:
            raise GridError(f"no declared layout for ({band.value}, bw{bw_mhz})")
        return all(i in layout for i in sc_idx)

    def to_json(self) -> dict:
        out: dict = {}
        for (band, bw), idxs in sorted(self.layouts.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
            out.setdefault(band.value, {})[f"bw{bw}"] = list(idxs)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "GridSpec":
        if not isinstance(obj, dict):
            raise SchemaError(1, "grids must be an object")
        layouts = {}
        bands = {b.value: b for b in Band}
        for band_name, bws in obj.items():
            if band_name not in bands:
                raise SchemaError(1, f"unknown band {band_name!r} in grids")
            if not isinstance(bws, dict):
                raise SchemaError(1, f"grids[{band_name!r}] must be an object")
            for bw_name, idxs in bws.items():
                if not bw_name.startswith("bw"):
                    raise SchemaError(1, f"bad bandwidth key {bw_name!r} in grids")
                try:
                    bw = int(bw_name[2:])
                except ValueError:
                    raise SchemaError(1, f"bad bandwidth key {bw_name!r} in grids") from None
                if not isinstance(idxs, list) or not all(isinstance(i, int) for i in idxs):
                    raise SchemaError(1, f"grids[{band_name!r}][{bw_name!r}] must be a list of ints")
                layouts[(bands[band_name], bw)] = tuple(idxs)
        try:
            return cls(layouts)
        except GridError as e:
            raise SchemaError(1, str(e)) from None


def default_grid() -> GridSpec:
    """Compact default layouts; the 20 MHz sets are center subsets of 80 MHz."""
    idx_5g_80 = tuple(range(-116, 117, 8))          # 30 tones
    idx_5g_20 = tuple(range(-28, 29, 8))            # 8 tones, subset of the above
    idx_2g4_20 = tuple(range(-26, 27, 4))           # 14 tones
    return GridSpec({
        (Band.BAND_5G, 80): idx_5g_80,
        (Band.BAND_5G, 20): idx_5g_20,
        (Band.BAND_2G4, 20): idx_2g4_20,
    })
