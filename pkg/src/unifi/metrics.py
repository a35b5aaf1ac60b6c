"""Timestamp and amplitude quality metrics: MR, SCV, ACV.

MR is the fraction of fixed-duration time bins containing no packet (default
bin 10 ms, i.e. a 100 Hz grid). SCV is the population std over mean of the
inter-packet intervals. ACV averages the per-subcarrier coefficient of
variation of an amplitude matrix captured in a static scene.
"""

from __future__ import annotations

import numpy as np

from .errors import ArgError, DegenerateError

DEFAULT_BIN_US = 10_000


def compute_mr(timestamps_us, duration_us: int, bin_us: int = DEFAULT_BIN_US) -> float:
    """Fraction of empty bins; the tail remainder shorter than a bin is ignored."""
    if bin_us <= 0:
        raise ArgError("bin_us must be positive")
    if duration_us < bin_us:
        raise ArgError(f"duration {duration_us} us is shorter than one bin ({bin_us} us)")
    ts = np.asarray(timestamps_us, dtype=np.int64)
    if ts.size and (ts.min() < 0 or ts.max() >= duration_us):
        raise ArgError("timestamps must lie within [0, duration_us)")
    n_bins = duration_us // bin_us
    in_range = ts[ts < n_bins * bin_us]
    occupied = np.unique(in_range // bin_us).size
    return float(n_bins - occupied) / float(n_bins)


def compute_scv(timestamps_us) -> float:
    """Population std / mean of inter-packet intervals; needs >= 3 timestamps."""
    ts = np.asarray(timestamps_us, dtype=np.float64)
    if ts.size < 3:
        raise ArgError(f"need at least 3 timestamps, got {ts.size}")
    dt = np.diff(ts)
    if np.any(dt <= 0):
        raise ArgError("timestamps must be strictly increasing")
    mean = dt.mean()
    if mean == 0.0:
        raise DegenerateError("mean inter-packet interval is zero")
    return float(dt.std() / mean)


def compute_acv(amplitudes) -> float:
    """Mean per-column coefficient of variation; zero-mean columns excluded.

    The caller asserts the scene is static; this is not checkable here.
    """
    a = np.asarray(amplitudes, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 2:
        raise ArgError("need a T x K matrix with T >= 2")
    if not np.all(np.isfinite(a)):
        raise ArgError("amplitudes must be finite")
    means = a.mean(axis=0)
    keep = means != 0.0
    if not np.any(keep):
        raise DegenerateError("every column has zero mean")
    cv = a[:, keep].std(axis=0) / means[keep]
    return float(cv.mean())


def masked_acv(values: np.ndarray, masks: np.ndarray) -> float:
    """ACV over a partially observed matrix; column stats use observed rows only.

    Columns with fewer than 2 observations or zero mean are excluded.
    """
    v = np.asarray(values, dtype=np.float64)
    m = np.asarray(masks, dtype=bool)
    if v.shape != m.shape or v.ndim != 2:
        raise ArgError("values and masks must be matching 2-D matrices")
    counts = m.sum(axis=0)
    cvs = []
    for k in np.nonzero(counts >= 2)[0]:
        col = v[m[:, k], k]
        mean = col.mean()
        if mean != 0.0:
            cvs.append(col.std() / mean)
    if not cvs:
        raise DegenerateError("no column has 2+ observations with nonzero mean")
    return float(np.mean(cvs))
