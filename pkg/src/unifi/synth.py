"""Synthetic CSI streams: multipath channel, packet arrivals, impairments.

The channel is a single-antenna sum of static paths plus an optional moving
reflector with a Doppler shift. Each emitted packet applies a per-packet gain,
a per-cluster shaping vector and additive amplitude noise, mimicking what AGC,
preamble differences and estimation error do to real captures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgError, GridError, InfeasibleError
from .grids import Band, FrameType, GridSpec, default_grid, subcarrier_freq_hz
from .metrics import DEFAULT_BIN_US, compute_mr, compute_scv
from .types import CsiStream, PacketRecord, sort_packets


# ---------------------------------------------------------------------------
# Configs


@dataclass(frozen=True)
class StaticPath:
    delay_ns: float
    gain: float


@dataclass(frozen=True)
class Mover:
    doppler_hz: float
    path_gain: float
    reflect_delay_ns: float


@dataclass(frozen=True)
class SceneConfig:
    """One physical scene; motion_class is the ground-truth sensing label."""

    static_paths: tuple[StaticPath, ...]
    mover: Mover | None = None
    motion_class: int = 0
    noise_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "static_paths", tuple(self.static_paths))
        if not self.static_paths:
            raise ArgError("scene needs at least one static path")
        for p in self.static_paths:
            if not (math.isfinite(p.gain) and math.isfinite(p.delay_ns)):
                raise ArgError("path gains and delays must be finite")
        if self.mover is not None and self.mover.doppler_hz < 0:
            raise ArgError("doppler_hz must be >= 0")
        if self.noise_sigma < 0:
            raise ArgError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class Periodic:
    rate_hz: float


@dataclass(frozen=True)
class Poisson:
    rate_hz: float


@dataclass(frozen=True)
class Bursty:
    burst_rate_hz: float
    burst_len: int
    gap_ms: float


Arrival = Periodic | Poisson | Bursty


@dataclass(frozen=True)
class TrafficCluster:
    cluster_id: int
    band: Band
    frame_type: FrameType
    bw_mhz: int
    arrival: Arrival
    # optional subset of the (band, bw) layout; None means the full layout
    sc_idx: tuple[int, ...] | None = None

    def __post_init__(self):
        if isinstance(self.arrival, (Periodic, Poisson)) and self.arrival.rate_hz <= 0:
            raise ArgError("arrival rate must be positive")
        if isinstance(self.arrival, Bursty):
            if self.arrival.burst_rate_hz <= 0 or self.arrival.burst_len < 1 or self.arrival.gap_ms < 0:
                raise ArgError("bursty arrival needs positive rate, len >= 1, gap >= 0")


@dataclass(frozen=True)
class TrafficConfig:
    clusters: tuple[TrafficCluster, ...]
    duration_s: float

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        if self.duration_s <= 0:
            raise ArgError("duration_s must be positive")
        if not self.clusters:
            raise ArgError("traffic needs at least one cluster")
        ids = [c.cluster_id for c in self.clusters]
        if len(set(ids)) != len(ids):
            raise ArgError("cluster_id values must be unique")


@dataclass(frozen=True)
class GainModel:
    """Per-packet amplitude gain: log-uniform draws, optionally AR(1)-smoothed."""

    alpha_lo: float = 1.0
    alpha_hi: float = 1.0
    ar1_rho: float | None = None  # None -> independent draws

    def __post_init__(self):
        if self.alpha_lo <= 0 or self.alpha_hi < self.alpha_lo:
            raise ArgError("need 0 < alpha_lo <= alpha_hi")
        if self.ar1_rho is not None and not (0.0 <= self.ar1_rho < 1.0):
            raise ArgError("ar1_rho must be in [0, 1)")


@dataclass(frozen=True)
class ImpairmentConfig:
    gain: GainModel = field(default_factory=GainModel)
    # cluster_id -> per-subcarrier shaping over that cluster's subcarriers
    shaping: dict[int, tuple[float, ...]] = field(default_factory=dict)
    error_sigma: float = 0.0
    # per-cluster override of error_sigma (e.g. a noisier bursty data cluster)
    error_sigma_by_cluster: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        for cid, vec in self.shaping.items():
            if any(v <= 0 for v in vec):
                raise ArgError(f"shaping entries for cluster {cid} must be > 0")
        if self.error_sigma < 0 or any(v < 0 for v in self.error_sigma_by_cluster.values()):
            raise ArgError("error_sigma must be >= 0")


# ---------------------------------------------------------------------------
# Channel model


def synth_channel(scene: SceneConfig, t_us: int, subcarrier_freqs_hz) -> np.ndarray:
    """Amplitude of the channel at time t on the given subcarrier frequencies.

    Deterministic: the sum of static-path phasors plus, if present, one
    Doppler-rotated reflected path.
    """
    freqs = np.asarray(subcarrier_freqs_hz, dtype=np.float64)
    if not np.all(np.isfinite(freqs)):
        raise ArgError("subcarrier frequencies must be finite")
    return _channel_amplitudes(scene, np.array([t_us], dtype=np.float64), freqs)[0]


def _channel_amplitudes(scene: SceneConfig, t_us: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """(T, K) amplitudes for packet times t_us (vectorized over packets)."""
    h_static = np.zeros(freqs.shape, dtype=np.complex128)
    for p in scene.static_paths:
        h_static += p.gain * np.exp(-2j * np.pi * freqs * (p.delay_ns * 1e-9))
    h = np.broadcast_to(h_static, (t_us.size, freqs.size)).copy()
    m = scene.mover
    if m is not None:
        rot = np.exp(2j * np.pi * m.doppler_hz * (t_us * 1e-6))
        steer = m.path_gain * np.exp(-2j * np.pi * freqs * (m.reflect_delay_ns * 1e-9))
        h += rot[:, None] * steer[None, :]
    return np.abs(h)


# ---------------------------------------------------------------------------
# Arrival processes


def _arrival_times_us(arrival: Arrival, duration_s: float, rng: np.random.Generator) -> list[int]:
    dur_us = int(round(duration_s * 1e6))
    out: list[int] = []
    if isinstance(arrival, Periodic):
        n = math.ceil(duration_s * arrival.rate_hz)
        for k in range(n):
            t = int(round(k * 1e6 / arrival.rate_hz))
            if t < dur_us:
                out.append(t)
    elif isinstance(arrival, Poisson):
        t = 0.0
        scale = 1e6 / arrival.rate_hz
        while True:
            t += rng.exponential(scale)
            if t >= dur_us:
                break
            out.append(int(round(t)))
    else:  # Bursty: burst_len packets at burst_rate, then gap_ms of silence
        intra_us = 1e6 / arrival.burst_rate_hz
        t = 0.0
        while t < dur_us:
            for i in range(arrival.burst_len):
                ti = t + i * intra_us
                if ti >= dur_us:
                    break
                out.append(int(round(ti)))
            t += (arrival.burst_len - 1) * intra_us + arrival.gap_ms * 1e3
    return out


def sample_traffic(cfg: TrafficConfig, seed: int) -> list[tuple[int, int]]:
    """Merged, sorted (t_us, cluster_id) arrivals; deterministic per seed."""
    rng = np.random.default_rng(seed)
    merged: list[tuple[int, int]] = []
    for c in sorted(cfg.clusters, key=lambda c: c.cluster_id):
        for t in _arrival_times_us(c.arrival, cfg.duration_s, rng):
            merged.append((t, c.cluster_id))
    merged.sort()
    return merged


# ---------------------------------------------------------------------------
# Stream emission


def _draw_gains(n: int, gm: GainModel, rng: np.random.Generator) -> np.ndarray:
    if gm.alpha_lo == gm.alpha_hi:
        return np.full(n, gm.alpha_lo)
    lo, hi = math.log(gm.alpha_lo), math.log(gm.alpha_hi)
    if gm.ar1_rho is None:
        return np.exp(rng.uniform(lo, hi, size=n))
    # AR(1) on log-gain around the log-midpoint, clipped to the declared range
    mid = 0.5 * (lo + hi)
    sigma = (hi - lo) / 4.0
    x = np.empty(n)
    prev = mid
    innov = rng.normal(0.0, sigma * math.sqrt(1 - gm.ar1_rho ** 2), size=n)
    for i in range(n):
        prev = mid + gm.ar1_rho * (prev - mid) + innov[i]
        x[i] = prev
    return np.exp(np.clip(x, lo, hi))


def emit_stream(scene: SceneConfig, traffic: TrafficConfig,
                impairments: ImpairmentConfig, seed: int,
                grid: GridSpec | None = None, epoch_us: int = 0,
                subject_id: str | None = None) -> CsiStream:
    """Ground-truth stream: per arrival, amp = gain * (shaping * |H(t)|) + |noise|.

    Bit-reproducible for fixed (configs, seed). Every packet carries the scene's
    motion_class as the stream label.
    """
    grid = grid if grid is not None else default_grid()
    # arrivals consume default_rng(seed) inside sample_traffic; draw gains and
    # noise from an independent child stream so the two are not correlated
    rng = np.random.default_rng([seed, 0xA5])
    by_cluster = {c.cluster_id: c for c in traffic.clusters}

    # resolve per-cluster subcarriers up front so errors surface before drawing
    tones: dict[int, tuple[int, ...]] = {}
    freqs: dict[int, np.ndarray] = {}
    for cid, c in sorted(by_cluster.items()):
        layout = grid.layout(c.band, c.bw_mhz)
        sc = c.sc_idx if c.sc_idx is not None else layout
        if not grid.contains(c.band, c.bw_mhz, sc):
            raise GridError(f"cluster {cid} subcarriers not on the ({c.band.value}, "
                            f"bw{c.bw_mhz}) grid")
        shaping = impairments.shaping.get(cid)
        if shaping is not None and len(shaping) != len(sc):
            raise GridError(f"cluster {cid} shaping length {len(shaping)} != {len(sc)} tones")
        tones[cid] = tuple(sc)
        freqs[cid] = np.array([subcarrier_freq_hz(c.band, i) for i in sc])

    arrivals = sample_traffic(traffic, seed)
    packets: list[PacketRecord] = []
    for cid, c in sorted(by_cluster.items()):
        t_us = np.array([t for t, i in arrivals if i == cid], dtype=np.float64)
        if t_us.size == 0:
            continue
        amp = _channel_amplitudes(scene, t_us, freqs[cid])
        shaping = impairments.shaping.get(cid)
        if shaping is not None:
            amp = amp * np.asarray(shaping, dtype=np.float64)[None, :]
        alpha = _draw_gains(t_us.size, impairments.gain, rng)
        amp = alpha[:, None] * amp
        sigma = math.hypot(scene.noise_sigma,
                           impairments.error_sigma_by_cluster.get(cid, impairments.error_sigma))
        if sigma > 0:
            amp = amp + np.abs(rng.normal(0.0, sigma, size=amp.shape))
        amp = np.maximum(amp, 0.0)
        for row, t in enumerate(t_us):
            packets.append(PacketRecord(int(t), c.band, c.frame_type, c.bw_mhz,
                                        tones[cid], amp[row]))
    return CsiStream(epoch_us=epoch_us, grid=grid, packets=sort_packets(packets),
                     label=scene.motion_class, subject_id=subject_id)


# ---------------------------------------------------------------------------
# MR/SCV-targeted subsampling


def _snap_to_packets(candidate_us: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Snap candidates (sorted) to the nearest still-available input packet.

    A packet is consumed once taken, so a run of near-coincident candidates
    claims consecutive packets instead of collapsing onto one; candidates that
    run off the end of the input are dropped.
    """
    pos = np.searchsorted(ts, candidate_us)
    pos = np.clip(pos, 1, ts.size - 1)
    left, right = ts[pos - 1], ts[pos]
    nearest = np.where(candidate_us - left <= right - candidate_us, pos - 1, pos)
    n = nearest.size
    offs = np.arange(n)
    taken = np.maximum.accumulate(nearest - offs) + offs
    return np.unique(taken[taken < ts.size])


def _draw_candidates(ts: np.ndarray, mean_us: float, shape: float | None,
                     rng: np.random.Generator) -> np.ndarray:
    span = float(ts[-1] - ts[0])
    n_max = int(span / mean_us * 3) + 16
    if shape is None:  # SCV target 0: deterministic renewal
        gaps = np.full(n_max, mean_us)
    else:
        gaps = rng.gamma(shape, mean_us / shape, size=n_max)
    t = ts[0] + np.cumsum(gaps)
    return t[t <= ts[-1]]


def subsample_to_target(stream: CsiStream, target_mr: float, target_scv: float,
                        seed: int, bin_us: int = DEFAULT_BIN_US) -> CsiStream:
    """Thin a fixed-rate stream to hit (MR, SCV) targets, best effort.

    Candidate inter-arrivals are Gamma-distributed with mean
    base_interval / (1 - target_mr) and shape 1 / target_scv**2, snapped to
    the nearest input packets with duplicates dropped. Because snapping and
    deduplication shift the achieved metrics, the Gamma parameters are
    calibrated against the measured MR/SCV over a few rounds; callers should
    anchor experiments to measured, not requested, values.
    """
    if not (0.0 <= target_mr <= 0.95):
        raise ArgError("target_mr must be in [0, 0.95]")
    if not (0.0 <= target_scv <= 3.0):
        raise ArgError("target_scv must be in [0, 3]")
    if len(stream.packets) < 4:
        raise InfeasibleError("input stream too short to subsample")
    ts = stream.timestamps().astype(np.float64)
    rel = ts - ts[0]
    duration = float(rel[-1])
    if duration < bin_us:
        raise InfeasibleError("input stream shorter than one bin")
    input_mr = compute_mr(rel[:-1].astype(np.int64), int(duration), bin_us)
    if target_mr < input_mr - 0.02 and target_mr > 0:
        raise InfeasibleError(f"target MR {target_mr} below input MR {input_mr:.3f}")
    if target_mr == 0.0 and target_scv == 0.0:
        return stream

    rng = np.random.default_rng(seed)
    base = duration / (ts.size - 1)
    mean = base / max(1.0 - target_mr, 1e-6)
    shape: float | None = None if target_scv == 0 else 1.0 / target_scv ** 2

    best_idx, best_err = None, math.inf
    for _ in range(18):
        cand = _draw_candidates(ts, mean, shape, rng)
        idx = _snap_to_packets(cand, ts)
        if idx.size < 3:
            mean *= 0.7
            continue
        kept = rel[idx]
        ach_mr = compute_mr(kept[kept < duration].astype(np.int64), int(duration), bin_us)
        ach_scv = compute_scv(kept)
        err = max(abs(ach_mr - target_mr) / 0.05, abs(ach_scv - target_scv) / 0.15)
        if err < best_err:
            best_err, best_idx = err, idx
        if err <= 0.5:  # comfortably inside the +-0.05 / +-0.15 contract
            break
        # re-anchor: occupancy drives the mean, measured SCV drives the shape
        occ_a, occ_t = max(1.0 - ach_mr, 0.02), max(1.0 - target_mr, 0.02)
        mean *= occ_a / occ_t
        if shape is not None and ach_scv > 0:
            shape = float(np.clip(shape * (ach_scv / target_scv) ** 2, 1 / 500.0, 1e6))
    if best_idx is None:
        raise InfeasibleError("could not draw a feasible subsample")
    kept_packets = tuple(stream.packets[i] for i in best_idx)
    return CsiStream(epoch_us=stream.epoch_us, grid=stream.grid, packets=kept_packets,
                     label=stream.label, subject_id=stream.subject_id)
