import numpy as np
import pytest

from unifi.grids import Band, FrameType, GridSpec
from unifi.types import CsiStream, PacketRecord, SanitizedWindow, sort_packets


@pytest.fixture
def small_grid() -> GridSpec:
    return GridSpec({
        (Band.BAND_5G, 80): tuple(range(-12, 13, 2)),   # 13 tones
        (Band.BAND_5G, 20): (-4, -2, 0, 2, 4),
        (Band.BAND_2G4, 20): (-6, -3, 0, 3, 6),
    })


def make_packet(t_us, band=Band.BAND_5G, ft=FrameType.DATA, bw=20,
                sc=(-4, -2, 0, 2, 4), amp=None):
    if amp is None:
        amp = np.ones(len(sc))
    return PacketRecord(t_us, band, ft, bw, tuple(sc), amp)


def make_stream(packets, grid, epoch_us=0, label=None, subject=None) -> CsiStream:
    return CsiStream(epoch_us=epoch_us, grid=grid, packets=sort_packets(packets),
                     label=label, subject_id=subject)


def make_window(n, g=6, label=0, rng=None, t0_us=0, win_us=1_000_000,
                full_mask=False):
    rng = rng or np.random.default_rng(0)
    ts = np.sort(rng.uniform(0.0, 1.0, n))
    while n > 1 and np.any(np.diff(ts) <= 0):
        ts = np.sort(rng.uniform(0.0, 1.0, n))
    if full_mask:
        masks = np.ones((n, g), dtype=np.uint8)
    else:
        masks = (rng.uniform(size=(n, g)) > 0.3).astype(np.uint8)
        for r in range(n):
            if masks[r].sum() == 0:
                masks[r, int(rng.integers(g))] = 1
    values = rng.uniform(0.1, 1.0, (n, g)) * masks
    return SanitizedWindow(t0_us, win_us, values, masks, ts, label)
