"""Five-stage CSI sanitization: cluster, normalize+prune, align, thin, select.

Clusters are defined by PHY metadata (band, frame type, bandwidth). Each
cluster's packets are L2-normalized, outliers are pruned against the cluster
mean, compatible clusters within a band are amplitude-aligned via matched
packet pairs, micro-bursts are thinned, and (optionally) the most
motion-responsive subcarrier per sub-band is kept. Surviving packets from all
clusters are merged onto the canonical grid and cut into windows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (ArgError, DegenerateError, DivByZeroError, EmptyClusterError,
                     NoPairsError)
from .grids import Band, FrameType, GridSpec
from .metrics import DEFAULT_BIN_US, compute_mr, compute_scv, masked_acv
from .types import ClusterKey, CsiStream, SanitizedWindow
from .windowing import DEFAULT_WIN_US


# ---------------------------------------------------------------------------
# Config and working types


@dataclass(frozen=True)
class SanitizeConfig:
    tau_d: float = 0.6
    t_b_us: int = 10_000
    t_c_us: int = 1_000
    k_sel: int | None = None
    enable_burst_filter: bool = True
    enable_alignment: bool = True
    # frame-type pairs allowed to align (preamble compatibility); None = all pairs
    align_compat: frozenset[tuple[FrameType, FrameType]] | None = None

    def __post_init__(self):
        if self.tau_d <= 0:
            raise ArgError("tau_d must be > 0")
        if self.t_b_us < 0:
            raise ArgError("t_b_us must be >= 0")
        if self.t_c_us <= 0:
            raise ArgError("t_c_us must be > 0")
        if self.k_sel is not None and self.k_sel < 1:
            raise ArgError("k_sel must be >= 1 when present")

    def may_align(self, a: FrameType, b: FrameType) -> bool:
        if self.align_compat is None:
            return True
        return (a, b) in self.align_compat or (b, a) in self.align_compat


@dataclass(frozen=True)
class Cluster:
    """Packet indices of one (band, frame_type, bw) group, time-ordered."""

    key: ClusterKey
    members: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class ClusterSeries:
    """Per-cluster working buffer: times, tone axis, amplitude matrix, mask.

    Rows whose packets do not carry a tone have mask 0 there; src_rows maps
    rows back to packet indices in the originating stream.
    """

    key: ClusterKey
    t_us: np.ndarray                 # (n,)
    sc_idx: tuple[int, ...]          # union of tones seen in this cluster
    amp: np.ndarray                  # (n, k)
    mask: np.ndarray                 # (n, k) bool
    src_rows: tuple[int, ...]

    def __len__(self) -> int:
        return int(self.t_us.size)

    def take(self, rows) -> "ClusterSeries":
        rows = np.asarray(rows, dtype=np.int64)
        return ClusterSeries(self.key, self.t_us[rows], self.sc_idx,
                             self.amp[rows], self.mask[rows],
                             tuple(self.src_rows[i] for i in rows))


@dataclass(frozen=True)
class AlignmentMap:
    src_key: ClusterKey
    ref_key: ClusterKey
    sc_idx: tuple[int, ...]          # shared tones the ratios were estimated on
    gamma: np.ndarray                # (len(sc_idx),) positive scales
    n_pairs: int


# ---------------------------------------------------------------------------
# Stage (i): clustering


def cluster_by_meta(stream: CsiStream) -> list[Cluster]:
    """Exact partition of packets by (band, frame_type, bw), ordered by key."""
    groups: dict[ClusterKey, list[int]] = {}
    for i, p in enumerate(stream.packets):
        groups.setdefault(p.cluster_key, []).append(i)
    keys = sorted(groups, key=lambda k: (k[0].value, k[1].value, k[2]))
    return [Cluster(k, tuple(groups[k])) for k in keys]


def extract_series(stream: CsiStream, cluster: Cluster) -> ClusterSeries:
    """Materialize a cluster's packets on the union of its tone sets."""
    if not cluster.members:
        raise EmptyClusterError(f"cluster {cluster.key} is empty")
    packets = [stream.packets[i] for i in cluster.members]
    t_us = np.array([p.t_us for p in packets], dtype=np.int64)
    first_sc = packets[0].sc_idx
    if all(p.sc_idx == first_sc for p in packets):
        amp = np.stack([p.amp for p in packets])
        mask = np.ones(amp.shape, dtype=bool)
        return ClusterSeries(cluster.key, t_us, first_sc, amp, mask,
                             tuple(cluster.members))
    tones = sorted({i for p in packets for i in p.sc_idx})
    col = {t: j for j, t in enumerate(tones)}
    n, k = len(packets), len(tones)
    amp = np.zeros((n, k))
    mask = np.zeros((n, k), dtype=bool)
    for r, p in enumerate(packets):
        cols = [col[i] for i in p.sc_idx]
        amp[r, cols] = p.amp
        mask[r, cols] = True
    return ClusterSeries(cluster.key, t_us, tuple(tones), amp, mask,
                         tuple(cluster.members))


# ---------------------------------------------------------------------------
# Stage (ii): normalization and outlier pruning


def normalize_l2(amp) -> np.ndarray:
    """Unit-L2 copy of one amplitude vector."""
    a = np.asarray(amp, dtype=np.float64)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        raise DegenerateError("cannot L2-normalize an all-zero vector")
    return a / norm


def normalize_series(cs: ClusterSeries) -> tuple[ClusterSeries, int]:
    """L2-normalize every row; all-zero rows are dropped and counted."""
    norms = np.linalg.norm(cs.amp, axis=1)
    keep = norms > 0.0
    dropped = int((~keep).sum())
    cs = cs.take(np.nonzero(keep)[0]) if dropped else cs
    amp = cs.amp / np.linalg.norm(cs.amp, axis=1, keepdims=True)
    amp[~cs.mask] = 0.0
    return ClusterSeries(cs.key, cs.t_us, cs.sc_idx, amp, cs.mask, cs.src_rows), dropped


def prune_outliers(cs: ClusterSeries, tau_d: float) -> tuple[ClusterSeries, ClusterSeries]:
    """Single pass: distance of each row to the cluster mean, threshold tau_d.

    The mean is taken per tone over the rows observing it; a row's distance
    uses only its own observed tones.
    """
    if len(cs) == 0:
        raise EmptyClusterError(f"cluster {cs.key} is empty")
    counts = cs.mask.sum(axis=0)
    mu = np.zeros(len(cs.sc_idx))
    seen = counts > 0
    mu[seen] = cs.amp.sum(axis=0)[seen] / counts[seen]
    diff = (cs.amp - mu[None, :]) * cs.mask
    d = np.sqrt((diff ** 2).sum(axis=1))
    kept = np.nonzero(d <= tau_d)[0]
    discarded = np.nonzero(d > tau_d)[0]
    return cs.take(kept), cs.take(discarded)


# ---------------------------------------------------------------------------
# Stage (iii): cross-cluster alignment


def _match_pairs(t_src: np.ndarray, t_ref: np.ndarray, t_c_us: int) -> list[tuple[int, int]]:
    """All (src_row, ref_row) with |t_src - t_ref| <= t_c_us (two-pointer scan)."""
    pairs = []
    j0 = 0
    for i, t in enumerate(t_src):
        while j0 < t_ref.size and t_ref[j0] < t - t_c_us:
            j0 += 1
        j = j0
        while j < t_ref.size and t_ref[j] <= t + t_c_us:
            pairs.append((i, j))
            j += 1
    return pairs


def align_clusters(src: ClusterSeries, ref: ClusterSeries, t_c_us: int
                   ) -> tuple[AlignmentMap, ClusterSeries]:
    """Estimate per-tone ratios over time-matched pairs and rescale src.

    Pairs containing a zero reference amplitude are skipped. Tones outside the
    overlap are left unscaled.
    """
    shared = sorted(set(src.sc_idx) & set(ref.sc_idx))
    if not shared:
        raise NoPairsError(f"{src.key} and {ref.key} share no subcarriers")
    pairs = _match_pairs(src.t_us, ref.t_us, t_c_us)
    if not pairs:
        raise NoPairsError(f"no packet pairs within {t_c_us} us between "
                           f"{src.key} and {ref.key}")
    s_cols = np.array([src.sc_idx.index(i) for i in shared])
    r_cols = np.array([ref.sc_idx.index(i) for i in shared])
    ratios = []
    for i, j in pairs:
        if not (src.mask[i, s_cols].all() and ref.mask[j, r_cols].all()):
            continue
        denom = ref.amp[j, r_cols]
        if np.any(denom == 0.0):
            continue
        ratios.append(src.amp[i, s_cols] / denom)
    if not ratios:
        raise DivByZeroError(f"every pair between {src.key} and {ref.key} had a "
                             "zero reference amplitude or missing tones")
    gamma = np.mean(ratios, axis=0)
    amap = AlignmentMap(src.key, ref.key, tuple(shared), gamma, len(ratios))
    amp = src.amp.copy()
    amp[:, s_cols] = amp[:, s_cols] / gamma[None, :]
    amp[~src.mask] = 0.0
    rescaled = ClusterSeries(src.key, src.t_us, src.sc_idx, amp, src.mask, src.src_rows)
    return amap, rescaled


# ---------------------------------------------------------------------------
# Stage (iv): burst filtering


def filter_bursts(cs: ClusterSeries, t_b_us: int) -> ClusterSeries:
    """Greedy thinning: keep a packet iff its gap to the last KEPT one >= t_b."""
    if len(cs) == 0:
        return cs
    keep = [0]
    last = cs.t_us[0]
    for i in range(1, len(cs)):
        if cs.t_us[i] - last >= t_b_us:
            keep.append(i)
            last = cs.t_us[i]
    return cs.take(keep)


# ---------------------------------------------------------------------------
# Stage (v): individual subcarrier selection


def motion_statistic(power) -> float:
    """Lag-1 Pearson autocorrelation of one tone's power series (0 if flat)."""
    p = np.asarray(power, dtype=np.float64)
    if p.size < 3:
        raise ArgError(f"need at least 3 samples, got {p.size}")
    x, y = p[:-1] - p[:-1].mean(), p[1:] - p[1:].mean()
    sx, sy = np.sqrt((x ** 2).sum()), np.sqrt((y ** 2).sum())
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float((x * y).sum() / (sx * sy))


def _sub_bands(n_tones: int, k_sel: int) -> list[tuple[int, int]]:
    """k_sel contiguous (start, stop) spans; remainder spread over leading bands."""
    base, rem = divmod(n_tones, k_sel)
    spans, start = [], 0
    for b in range(k_sel):
        size = base + (1 if b < rem else 0)
        spans.append((start, start + size))
        start += size
    return spans


def select_subcarriers(amp: np.ndarray, sc_idx, k_sel: int,
                       mask: np.ndarray | None = None) -> tuple[int, ...]:
    """Per contiguous sub-band, the tone with maximal motion statistic.

    Ties break toward the lowest index. Tones with fewer than 3 observations
    score 0.
    """
    amp = np.asarray(amp, dtype=np.float64)
    sc_idx = tuple(sc_idx)
    if k_sel > len(sc_idx):
        raise ArgError(f"k_sel {k_sel} exceeds grid size {len(sc_idx)}")
    if amp.shape[0] < 3:
        raise ArgError("need at least 3 packets to score subcarriers")
    power = amp ** 2
    ms = np.empty(len(sc_idx))
    for k in range(len(sc_idx)):
        series = power[:, k] if mask is None else power[mask[:, k], k]
        ms[k] = motion_statistic(series) if series.size >= 3 else 0.0
    out = []
    for start, stop in _sub_bands(len(sc_idx), k_sel):
        best = start + int(np.argmax(ms[start:stop]))
        out.append(sc_idx[best])
    return tuple(out)


def apply_selection(cs: ClusterSeries, selected) -> ClusterSeries:
    cols = np.array([cs.sc_idx.index(i) for i in selected])
    return ClusterSeries(cs.key, cs.t_us, tuple(selected), cs.amp[:, cols],
                         cs.mask[:, cols], cs.src_rows)


# ---------------------------------------------------------------------------
# Report


def _key_name(key: ClusterKey) -> str:
    return f"{key[0].value}/{key[1].value}/bw{key[2]}"


@dataclass
class ClusterReport:
    key: ClusterKey
    n_in: int = 0
    n_dropped_zero: int = 0
    n_dropped_outlier: int = 0
    n_dropped_burst: int = 0
    n_out: int = 0
    mr_before: float | None = None
    scv_before: float | None = None
    mr_after: float | None = None
    scv_after: float | None = None
    acv_raw: float | None = None
    acv_normalized: float | None = None
    iss_selected: tuple[int, ...] | None = None

    def to_json(self) -> dict:
        out = {"cluster": _key_name(self.key), "n_in": self.n_in,
               "dropped_zero_norm": self.n_dropped_zero,
               "dropped_outlier": self.n_dropped_outlier,
               "dropped_burst": self.n_dropped_burst, "n_out": self.n_out,
               "mr_before": self.mr_before, "scv_before": self.scv_before,
               "mr_after": self.mr_after, "scv_after": self.scv_after}
        if self.acv_raw is not None:
            out["acv_raw"] = self.acv_raw
        if self.acv_normalized is not None:
            out["acv_normalized"] = self.acv_normalized
        if self.iss_selected is not None:
            out["iss_selected"] = list(self.iss_selected)
        return out


@dataclass
class SanitizeReport:
    clusters: list[ClusterReport] = field(default_factory=list)
    alignments: list[dict] = field(default_factory=list)
    merged_mr: float | None = None
    merged_scv: float | None = None
    n_windows: int = 0
    n_windows_dropped_empty: int = 0
    n_dropped_duplicate_ts: int = 0

    def to_json(self) -> dict:
        return {"clusters": [c.to_json() for c in self.clusters],
                "alignments": self.alignments,
                "merged_mr": self.merged_mr, "merged_scv": self.merged_scv,
                "n_windows": self.n_windows,
                "n_windows_dropped_empty": self.n_windows_dropped_empty,
                "n_dropped_duplicate_ts": self.n_dropped_duplicate_ts}


@dataclass
class SanitizeResult:
    windows: list[SanitizedWindow]
    report: SanitizeReport
    # surviving per-cluster series after stages (i)-(iv), before ISS/merge
    clean: list[ClusterSeries] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Pipeline


def _metrics_of(t_us: np.ndarray, t0: int, duration: int, bin_us: int
                ) -> tuple[float | None, float | None]:
    rel = t_us - t0
    rel = np.unique(rel[(rel >= 0) & (rel < duration)])
    mr = compute_mr(rel, duration, bin_us) if duration >= bin_us else None
    scv = compute_scv(rel) if rel.size >= 3 else None
    return mr, scv


def clean_clusters(stream: CsiStream, cfg: SanitizeConfig,
                   static_scene: bool = False,
                   bin_us: int = DEFAULT_BIN_US) -> tuple[list[ClusterSeries], SanitizeReport]:
    """Stages (i)-(iv): cluster, normalize, prune, align, burst-filter."""
    report = SanitizeReport()
    duration = stream.duration_us
    t0 = stream.t0_us
    series: list[ClusterSeries] = []
    for cluster in cluster_by_meta(stream):
        cs = extract_series(stream, cluster)
        rep = ClusterReport(cs.key, n_in=len(cs))
        rep.mr_before, rep.scv_before = _metrics_of(cs.t_us, t0, duration, bin_us)
        if static_scene and len(cs) >= 2:
            rep.acv_raw = masked_acv(cs.amp, cs.mask)
        cs, rep.n_dropped_zero = normalize_series(cs)
        if len(cs):
            cs, discarded = prune_outliers(cs, cfg.tau_d)
            rep.n_dropped_outlier = len(discarded)
        if static_scene and len(cs) >= 2:
            rep.acv_normalized = masked_acv(cs.amp, cs.mask)
        if len(cs):
            series.append(cs)
        report.clusters.append(rep)

    if cfg.enable_alignment and len(series) > 1:
        series = _align_band_groups(series, cfg, report)

    out: list[ClusterSeries] = []
    for cs in series:
        rep = next(r for r in report.clusters if r.key == cs.key)
        if cfg.enable_burst_filter:
            filtered = filter_bursts(cs, cfg.t_b_us)
            rep.n_dropped_burst = len(cs) - len(filtered)
            cs = filtered
        rep.n_out = len(cs)
        rep.mr_after, rep.scv_after = _metrics_of(cs.t_us, t0, duration, bin_us)
        out.append(cs)
    return out, report


def _align_band_groups(series: list[ClusterSeries], cfg: SanitizeConfig,
                       report: SanitizeReport) -> list[ClusterSeries]:
    """Align clusters to the lowest-MR compatible cluster within each band."""
    by_band: dict[Band, list[int]] = {}
    for i, cs in enumerate(series):
        by_band.setdefault(cs.key[0], []).append(i)
    out = list(series)
    for band, idxs in sorted(by_band.items(), key=lambda kv: kv[0].value):
        if len(idxs) < 2:
            continue
        # the most temporally stable cluster (lowest MR) anchors the band
        def rank(i: int) -> tuple:
            rep = next(r for r in report.clusters if r.key == series[i].key)
            mr = rep.mr_before if rep.mr_before is not None else 1.0
            return (mr, _key_name(series[i].key))
        ref_i = min(idxs, key=rank)
        ref = out[ref_i]
        for i in idxs:
            if i == ref_i:
                continue
            src = out[i]
            if not cfg.may_align(src.key[1], ref.key[1]):
                continue
            try:
                amap, rescaled = align_clusters(src, ref, cfg.t_c_us)
            except (NoPairsError, DivByZeroError) as e:
                report.alignments.append({"src": _key_name(src.key),
                                          "ref": _key_name(ref.key),
                                          "status": type(e).__name__})
                continue
            out[i] = rescaled
            report.alignments.append({"src": _key_name(amap.src_key),
                                      "ref": _key_name(amap.ref_key),
                                      "status": "aligned", "n_pairs": amap.n_pairs,
                                      "n_tones": len(amap.sc_idx)})
    return out


def select_for_clusters(series: list[ClusterSeries], cfg: SanitizeConfig
                        ) -> dict[ClusterKey, tuple[int, ...]]:
    """ISS selections for eligible clusters (bw > 20 MHz, enough packets)."""
    selections: dict[ClusterKey, tuple[int, ...]] = {}
    if cfg.k_sel is None:
        return selections
    for cs in series:
        if cs.key[2] <= 20:  # narrowband: ISS would discard useful tones
            continue
        if len(cs) < 3 or cfg.k_sel > len(cs.sc_idx):
            continue
        selections[cs.key] = select_subcarriers(cs.amp, cs.sc_idx, cfg.k_sel, cs.mask)
    return selections


def assemble_windows(series: list[ClusterSeries], grid: GridSpec, t0_us: int,
                     duration_us: int, win_us: int, stride_us: int,
                     label: int | None,
                     selections: dict[ClusterKey, tuple[int, ...]] | None = None,
                     report: SanitizeReport | None = None) -> list[SanitizedWindow]:
    """Merge surviving packets onto the canonical grid and cut windows.

    Rows tied at the same microsecond keep only the first in canonical cluster
    order (counted in the report); timestamps are normalized to [0, 1] within
    each window.
    """
    if win_us <= 0 or stride_us <= 0:
        raise ArgError("win_us and stride_us must be positive")
    rows = []  # (t_us, key_rank, columns, values, src_row)
    for cs in sorted(series, key=lambda c: _key_name(c.key)):
        use = cs
        if selections and cs.key in selections:
            use = apply_selection(cs, selections[cs.key])
        band = use.key[0]
        cols = np.array([grid.column_of(band, i) for i in use.sc_idx], dtype=np.int64)
        for r in range(len(use)):
            m = use.mask[r]
            if not m.any():
                continue
            rows.append((int(use.t_us[r]), _key_name(use.key), cols[m],
                         use.amp[r][m], use.src_rows[r]))
    rows.sort(key=lambda x: (x[0], x[1]))

    kept_rows = []
    seen_t = None
    n_dup = 0
    for row in rows:
        if seen_t is not None and row[0] == seen_t:
            n_dup += 1
            continue
        kept_rows.append(row)
        seen_t = row[0]
    if report is not None:
        report.n_dropped_duplicate_ts = n_dup

    windows: list[SanitizedWindow] = []
    n_empty = 0
    g = grid.size
    all_t = np.array([r[0] for r in kept_rows], dtype=np.int64)
    w0 = t0_us
    while w0 + win_us <= t0_us + duration_us:
        lo, hi = np.searchsorted(all_t, w0), np.searchsorted(all_t, w0 + win_us)
        if hi <= lo:
            n_empty += 1
            w0 += stride_us
            continue
        t_rows = kept_rows[lo:hi]
        values = np.zeros((len(t_rows), g))
        masks = np.zeros((len(t_rows), g), dtype=np.uint8)
        ts = np.empty(len(t_rows))
        prov = []
        for r, (t, _rank, cols, vals, src) in enumerate(t_rows):
            values[r, cols] = vals
            masks[r, cols] = 1
            ts[r] = (t - w0) / win_us
            prov.append(src)
        windows.append(SanitizedWindow(w0, win_us, values, masks, ts, label, tuple(prov)))
        w0 += stride_us
    if report is not None:
        report.n_windows = len(windows)
        report.n_windows_dropped_empty = n_empty
    return windows


def sanitize_pipeline(stream: CsiStream, cfg: SanitizeConfig,
                      win_us: int = DEFAULT_WIN_US, stride_us: int | None = None,
                      static_scene: bool = False,
                      bin_us: int = DEFAULT_BIN_US) -> SanitizeResult:
    """Full pipeline (i)-(v) over one stream; emits windows plus a report."""
    stride = stride_us if stride_us is not None else win_us
    clean, report = clean_clusters(stream, cfg, static_scene=static_scene, bin_us=bin_us)
    selections = select_for_clusters(clean, cfg)
    for key, sel in selections.items():
        rep = next(r for r in report.clusters if r.key == key)
        rep.iss_selected = sel
    windows = assemble_windows(clean, stream.grid, stream.t0_us, stream.duration_us,
                               win_us, stride, stream.label, selections, report)
    if clean:
        merged_t = np.sort(np.concatenate([cs.t_us for cs in clean]))
        merged_t = np.unique(merged_t)
        report.merged_mr, report.merged_scv = _metrics_of(
            merged_t, stream.t0_us, stream.duration_us, bin_us)
    return SanitizeResult(windows=windows, report=report, clean=clean)
