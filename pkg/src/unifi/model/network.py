"""Time-aware attention network: forward pass and hand-derived gradients.

Continuous timestamps are embedded with a learnable linear-plus-sinusoid bank.
Each observation's value features and time features are fused into
content-aware attention keys; a fixed grid of reference times queries the
irregular sequence, so the output length never depends on how many packets
arrived. A GRU aggregates the grid readout and an affine head emits class
logits; a parallel affine head maps readouts back to the subcarrier grid for
reconstruction.

Everything here is pure numpy with explicit reverse-mode gradients; the
finite-difference suite in the tests pins their correctness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ArgError, EmptyWindowError, NonFiniteError
from ..types import SanitizedWindow
from .config import ModelConfig
from .params import ModelParams

_NEG = -1e30  # additive mask for padded packets; exp() underflows to exactly 0


# ---------------------------------------------------------------------------
# Batching


@dataclass
class PaddedBatch:
    values: np.ndarray   # (B, T, G)
    masks: np.ndarray    # (B, T, G) float 0/1
    ts: np.ndarray       # (B, T)
    valid: np.ndarray    # (B, T) bool
    labels: np.ndarray | None   # (B,) int
    lengths: np.ndarray  # (B,)

    @classmethod
    def from_windows(cls, windows, require_labels: bool = False,
                     dtype=np.float64) -> "PaddedBatch":
        if not windows:
            raise ArgError("batch must contain at least one window")
        for w in windows:
            if w.n_obs < 1:
                raise EmptyWindowError("window has no observations")
        b = len(windows)
        t_max = max(w.n_obs for w in windows)
        g = windows[0].grid_size
        if any(w.grid_size != g for w in windows):
            raise ArgError("windows in one batch must share the grid size")
        values = np.zeros((b, t_max, g), dtype=dtype)
        masks = np.zeros((b, t_max, g), dtype=dtype)
        ts = np.zeros((b, t_max), dtype=dtype)
        valid = np.zeros((b, t_max), dtype=bool)
        lengths = np.empty(b, dtype=np.int64)
        labels = np.empty(b, dtype=np.int64)
        have_labels = True
        for i, w in enumerate(windows):
            n = w.n_obs
            values[i, :n] = w.values
            masks[i, :n] = w.masks
            ts[i, :n] = w.ts
            valid[i, :n] = True
            lengths[i] = n
            if w.label is None:
                have_labels = False
            else:
                labels[i] = w.label
        if require_labels and not have_labels:
            raise ArgError("every window in a training batch needs a label")
        return cls(values, masks, ts, valid, labels if have_labels else None, lengths)


# ---------------------------------------------------------------------------
# Time embedding


def _time_embed_raw(t: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(...,) times -> (..., d_r); element 0 is linear, the rest sinusoidal."""
    arg = t[..., None] * w + b
    out = np.sin(arg)
    out[..., 0] = arg[..., 0]
    return out


def _time_embed_backward(t: np.ndarray, w: np.ndarray, b: np.ndarray,
                         d_out: np.ndarray, grads: ModelParams) -> None:
    gate = np.cos(t[..., None] * w + b)
    gate[..., 0] = 1.0
    gd = d_out * gate
    axes = tuple(range(gd.ndim - 1))
    grads.time_w += (gd * t[..., None]).sum(axis=axes)
    grads.time_b += gd.sum(axis=axes)


def time_embed(t: float, params: ModelParams) -> np.ndarray:
    """Embedding of a single (window-normalized) timestamp."""
    if not np.isfinite(t):
        raise ArgError("t must be finite")
    return _time_embed_raw(np.asarray(float(t)), params.time_w, params.time_b)


def time_embed_grad(t: float, params: ModelParams
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-element derivatives of time_embed wrt (w, b, t); jacobian is diagonal."""
    arg = float(t) * params.time_w + params.time_b
    gate = np.cos(arg)
    gate[0] = 1.0
    return gate * float(t), gate, gate * params.time_w


# ---------------------------------------------------------------------------
# Value embedding


def _encoder_input(values: np.ndarray, masks: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    if cfg.use_mask_features:
        return np.concatenate([values, masks], axis=-1)
    return values


def value_embed(x, m, params: ModelParams, cfg: ModelConfig) -> np.ndarray:
    """Feature vector of one observation; masks join only in ablation mode."""
    x = np.asarray(x, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if x.shape != (cfg.grid_size,) or m.shape != x.shape:
        raise ArgError("x and m must be length-grid_size vectors")
    if np.any(x[m == 0] != 0.0):
        raise ArgError("masked entries of x must be zero")
    xin = _encoder_input(x[None, :], m[None, :], cfg)
    return np.tanh(xin @ params.enc_w + params.enc_b)[0]


# ---------------------------------------------------------------------------
# Attention over a query grid


def _attend_forward(batch: PaddedBatch, query_t: np.ndarray,
                    params: ModelParams, cfg: ModelConfig):
    """Readout (B, R, d_v) plus a cache for the backward pass.

    query_t is either (R,) -- one grid shared by the whole batch -- or (B, R)
    with per-window query times.
    """
    b, t_max, _ = batch.values.shape
    nh = cfg.n_heads
    hk, hv = cfg.d_k // nh, cfg.d_v // nh
    shared_q = query_t.ndim == 1
    r = query_t.shape[-1]

    xin = _encoder_input(batch.values, batch.masks, cfg)
    phi_p = _time_embed_raw(batch.ts, params.time_w, params.time_b)
    phi_q = _time_embed_raw(query_t, params.time_w, params.time_b)
    h = np.tanh(xin @ params.enc_w + params.enc_b)
    eh = h @ params.w_h
    et = phi_p @ params.u_t
    c = eh + et if cfg.content_aware_keys else et
    k = c @ params.w_k
    v = eh @ params.w_v
    q = phi_q @ params.w_q    # (R, d_k) or (B, R, d_k)

    # head-major (B, nh, ., .) so the contractions hit batched BLAS matmul
    kh = np.ascontiguousarray(k.reshape(b, t_max, nh, hk).transpose(0, 2, 1, 3))
    vh = np.ascontiguousarray(v.reshape(b, t_max, nh, hv).transpose(0, 2, 1, 3))
    if shared_q:
        qh = np.ascontiguousarray(q.reshape(r, nh, hk).transpose(1, 0, 2))[None]
    else:
        qh = np.ascontiguousarray(q.reshape(b, r, nh, hk).transpose(0, 2, 1, 3))
    scale = 1.0 / np.sqrt(hk)
    scores = qh @ kh.transpose(0, 1, 3, 2)                # (B, nh, R, T)
    scores *= scale
    scores += np.where(batch.valid, 0.0, _NEG)[:, None, None, :]
    scores -= scores.max(axis=-1, keepdims=True)
    att = np.exp(scores)
    att /= att.sum(axis=-1, keepdims=True)                # (B, nh, R, T)
    u = (att @ vh).transpose(0, 2, 1, 3).reshape(b, r, cfg.d_v)

    cache = (batch, query_t, xin, phi_p, phi_q, h, eh, c, kh, vh, qh, att, scale)
    return u, cache


def _attend_backward(d_u: np.ndarray, cache, params: ModelParams,
                     cfg: ModelConfig, grads: ModelParams) -> None:
    batch, query_t, xin, phi_p, phi_q, h, eh, c, kh, vh, qh, att, scale = cache
    b, t_max, _ = batch.values.shape
    shared_q = query_t.ndim == 1
    r = query_t.shape[-1]
    nh = cfg.n_heads
    hk, hv = cfg.d_k // nh, cfg.d_v // nh
    d_r, d_h, d_k, d_v = cfg.d_r, cfg.d_h, cfg.d_k, cfg.d_v

    duo = d_u.reshape(b, r, nh, hv).transpose(0, 2, 1, 3)  # (B, nh, R, hv)
    datt = duo @ vh.transpose(0, 1, 3, 2)                  # (B, nh, R, T)
    dvh = att.transpose(0, 1, 3, 2) @ duo                  # (B, nh, T, hv)
    ds = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
    ds *= scale
    dqh = ds @ kh                                          # (B, nh, R, hk)
    dkh = ds.transpose(0, 1, 3, 2) @ qh                    # (B, nh, T, hk)

    dk = dkh.transpose(0, 2, 1, 3).reshape(b, t_max, d_k)
    dv = dvh.transpose(0, 2, 1, 3).reshape(b, t_max, d_v)
    if shared_q:
        dq = dqh.sum(axis=0).transpose(1, 0, 2).reshape(r, d_k)
        grads.w_q += phi_q.T @ dq
    else:
        dq = dqh.transpose(0, 2, 1, 3).reshape(b, r, d_k)
        grads.w_q += phi_q.reshape(-1, d_r).T @ dq.reshape(-1, d_k)
    dphi_q = dq @ params.w_q.T

    grads.w_k += c.reshape(-1, d_h).T @ dk.reshape(-1, d_k)
    dc = dk @ params.w_k.T
    grads.w_v += eh.reshape(-1, d_h).T @ dv.reshape(-1, d_v)
    deh = dv @ params.w_v.T
    if cfg.content_aware_keys:
        deh = deh + dc
    det = dc
    grads.w_h += h.reshape(-1, d_h).T @ deh.reshape(-1, d_h)
    dh = deh @ params.w_h.T
    grads.u_t += phi_p.reshape(-1, d_r).T @ det.reshape(-1, d_h)
    dphi_p = det @ params.u_t.T
    dz = dh * (1.0 - h * h)
    grads.enc_w += xin.reshape(-1, xin.shape[-1]).T @ dz.reshape(-1, d_h)
    grads.enc_b += dz.sum(axis=(0, 1))
    _time_embed_backward(batch.ts, params.time_w, params.time_b, dphi_p, grads)
    _time_embed_backward(query_t, params.time_w, params.time_b, dphi_q, grads)


def attend(window: SanitizedWindow, params: ModelParams, cfg: ModelConfig) -> np.ndarray:
    """Fixed-length readout (q_refs, d_v) of one window, any T' >= 1."""
    dtype = params.time_w.dtype
    batch = PaddedBatch.from_windows([window], dtype=dtype)
    u, _ = _attend_forward(batch, cfg.ref_times().astype(dtype), params, cfg)
    return u[0]


# ---------------------------------------------------------------------------
# GRU aggregation and heads


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _gru_forward(u: np.ndarray, params: ModelParams):
    """Consume (B, Q, d_v) in grid order; returns final state and step cache."""
    b, q_refs, _ = u.shape
    hid = params.gru_w_hh.shape[0]
    g = np.zeros((b, hid), dtype=u.dtype)
    steps = []
    for qi in range(q_refs):
        x = u[:, qi, :]
        gi = x @ params.gru_w_ih + params.gru_b_ih
        gh = g @ params.gru_w_hh + params.gru_b_hh
        r = _sigmoid(gi[:, :hid] + gh[:, :hid])
        z = _sigmoid(gi[:, hid:2 * hid] + gh[:, hid:2 * hid])
        n = np.tanh(gi[:, 2 * hid:] + r * gh[:, 2 * hid:])
        steps.append((g, r, z, n, gh[:, 2 * hid:]))
        g = (1.0 - z) * n + z * g
    return g, steps


def _gru_backward(dg: np.ndarray, u: np.ndarray, steps, params: ModelParams,
                  grads: ModelParams) -> np.ndarray:
    b, q_refs, _ = u.shape
    du = np.zeros_like(u)
    for qi in range(q_refs - 1, -1, -1):
        g_prev, r, z, n, ghn = steps[qi]
        x = u[:, qi, :]
        dz = dg * (g_prev - n)
        dn = dg * (1.0 - z)
        dg_prev = dg * z
        dan = dn * (1.0 - n * n)
        dr = dan * ghn
        dghn = dan * r
        dar = dr * r * (1.0 - r)
        daz = dz * z * (1.0 - z)
        dgi = np.concatenate([dar, daz, dan], axis=1)
        dgh = np.concatenate([dar, daz, dghn], axis=1)
        grads.gru_w_ih += x.T @ dgi
        grads.gru_b_ih += dgi.sum(axis=0)
        grads.gru_w_hh += g_prev.T @ dgh
        grads.gru_b_hh += dgh.sum(axis=0)
        du[:, qi, :] = dgi @ params.gru_w_ih.T
        dg = dg_prev + dgh @ params.gru_w_hh.T
    return du


def forward_batch(windows, params: ModelParams, cfg: ModelConfig) -> np.ndarray:
    """Class logits (B, n_classes) for a list of windows."""
    dtype = params.time_w.dtype
    batch = PaddedBatch.from_windows(windows, dtype=dtype)
    u, _ = _attend_forward(batch, cfg.ref_times().astype(dtype), params, cfg)
    g, _ = _gru_forward(u, params)
    return g @ params.head_w + params.head_b


def forward(window: SanitizedWindow, params: ModelParams, cfg: ModelConfig) -> np.ndarray:
    """Logits for one window."""
    return forward_batch([window], params, cfg)[0]


# ---------------------------------------------------------------------------
# Losses with gradients


def loss_and_grad(windows, params: ModelParams, cfg: ModelConfig
                  ) -> tuple[float, ModelParams]:
    """Mean cross-entropy over the batch plus gradients for every parameter."""
    dtype = params.time_w.dtype
    batch = PaddedBatch.from_windows(windows, require_labels=True, dtype=dtype)
    b = len(windows)
    u, att_cache = _attend_forward(batch, cfg.ref_times().astype(dtype), params, cfg)
    g, gru_cache = _gru_forward(u, params)
    logits = g @ params.head_w + params.head_b

    m = logits.max(axis=1, keepdims=True)
    ex = np.exp(logits - m)
    z = ex.sum(axis=1, keepdims=True)
    labels = batch.labels
    loss = float(-(logits[np.arange(b), labels] - m[:, 0] - np.log(z[:, 0])).mean())
    dlogits = ex / z
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b

    grads = params.zeros_like()
    grads.head_w += g.T @ dlogits
    grads.head_b += dlogits.sum(axis=0)
    dg = dlogits @ params.head_w.T
    du = _gru_backward(dg, u, gru_cache, params, grads)
    _attend_backward(du, att_cache, params, cfg, grads)

    if not np.isfinite(loss) or not grads.all_finite():
        raise NonFiniteError("loss or gradients are non-finite")
    return loss, grads


@dataclass
class ReconTarget:
    """Held-out rows of a window: times plus the values/masks to regress onto."""

    times: np.ndarray    # (R,)
    values: np.ndarray   # (R, G)
    masks: np.ndarray    # (R, G) 0/1


def reconstruct(window: SanitizedWindow, params: ModelParams, cfg: ModelConfig,
                target_times) -> np.ndarray:
    """Predicted amplitudes (R, G) at arbitrary within-window times."""
    dtype = params.time_w.dtype
    tt = np.atleast_1d(np.asarray(target_times, dtype=dtype))
    if tt.size < 1:
        raise ArgError("need at least one target time")
    batch = PaddedBatch.from_windows([window], dtype=dtype)
    u, _ = _attend_forward(batch, tt[None, :], params, cfg)
    return u[0] @ params.recon_w + params.recon_b


def recon_loss_and_grad(samples: list[tuple[SanitizedWindow, ReconTarget]],
                        params: ModelParams, cfg: ModelConfig
                        ) -> tuple[float, ModelParams]:
    """Masked MSE over held-out entries plus gradients (attention path + head)."""
    if not samples:
        raise ArgError("batch must contain at least one sample")
    dtype = params.time_w.dtype
    windows = [w for w, _ in samples]
    batch = PaddedBatch.from_windows(windows, dtype=dtype)
    b = len(samples)
    r_max = max(t.times.size for _, t in samples)
    g_size = cfg.grid_size
    query_t = np.zeros((b, r_max), dtype=dtype)
    target = np.zeros((b, r_max, g_size), dtype=dtype)
    weight = np.zeros((b, r_max, g_size), dtype=dtype)
    for i, (_, tgt) in enumerate(samples):
        n = tgt.times.size
        query_t[i, :n] = tgt.times
        target[i, :n] = tgt.values
        weight[i, :n] = tgt.masks
    total = weight.sum()
    if total == 0:
        raise ArgError("no target entries to regress onto")

    u, att_cache = _attend_forward(batch, query_t, params, cfg)
    pred = u @ params.recon_w + params.recon_b
    err = (pred - target) * weight
    loss = float((err ** 2).sum() / total)

    dpred = 2.0 * err / total
    grads = params.zeros_like()
    grads.recon_w += u.reshape(-1, cfg.d_v).T @ dpred.reshape(-1, g_size)
    grads.recon_b += dpred.sum(axis=(0, 1))
    du = dpred @ params.recon_w.T
    _attend_backward(du, att_cache, params, cfg, grads)

    if not np.isfinite(loss) or not grads.all_finite():
        raise NonFiniteError("loss or gradients are non-finite")
    return loss, grads
