"""Slicing a stream into fixed-duration windows (default 4 s)."""

from __future__ import annotations

import bisect

from .errors import ArgError
from .types import CsiStream, PacketRecord

DEFAULT_WIN_US = 4_000_000


def window_stream(stream: CsiStream, win_us: int, stride_us: int
                  ) -> list[tuple[list[PacketRecord], int]]:
    """Half-open windows [t0, t0 + win_us) anchored at the first packet.

    Only windows lying entirely within the stream span are emitted, and
    windows containing zero packets are dropped.
    """
    if win_us <= 0 or stride_us <= 0:
        raise ArgError("win_us and stride_us must be positive")
    if not stream.packets:
        return []
    ts = [p.t_us for p in stream.packets]
    start, end = ts[0], ts[-1]
    out = []
    t0 = start
    while t0 + win_us <= end:
        lo = bisect.bisect_left(ts, t0)
        hi = bisect.bisect_left(ts, t0 + win_us)
        if hi > lo:
            out.append((list(stream.packets[lo:hi]), t0))
        t0 += stride_us
    return out
