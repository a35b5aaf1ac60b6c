"""Seeded training loops for the classifier and the reconstruction head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ArgError, NonFiniteError
from ..types import SanitizedWindow
from .adam import Adam
from .config import ModelConfig
from .network import (ReconTarget, forward_batch, loss_and_grad,
                      recon_loss_and_grad)
from .params import ModelParams, init_params

_EVAL_CHUNK = 256


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    lr: float = 0.001
    batch_size: int = 64
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ArgError("epochs >= 0, batch_size >= 1, lr > 0 required")
        if self.dtype not in ("float32", "float64"):
            raise ArgError("dtype must be float32 or float64")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_acc: float | None = None

    def to_json(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss,
                "val_acc": self.val_acc}


def evaluate(windows, params: ModelParams, cfg: ModelConfig
             ) -> tuple[float, np.ndarray]:
    """Accuracy and a (C, C) confusion matrix (rows: truth, cols: prediction)."""
    if not windows:
        raise ArgError("nothing to evaluate")
    conf = np.zeros((cfg.n_classes, cfg.n_classes), dtype=np.int64)
    for lo in range(0, len(windows), _EVAL_CHUNK):
        chunk = windows[lo:lo + _EVAL_CHUNK]
        logits = forward_batch(chunk, params, cfg)
        pred = logits.argmax(axis=1)
        for w, p in zip(chunk, pred):
            conf[w.label, p] += 1
    acc = float(np.trace(conf)) / float(conf.sum())
    return acc, conf


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for lo in range(0, n, batch_size):
        yield order[lo:lo + batch_size]


def train(train_windows: list[SanitizedWindow], val_windows: list[SanitizedWindow] | None,
          cfg: ModelConfig, tcfg: TrainConfig,
          init: ModelParams | None = None) -> tuple[ModelParams, list[EpochStats]]:
    """Adam over shuffled mini-batches; deterministic for a fixed seed.

    A non-finite loss or gradient aborts with NonFiniteError carrying the last
    finite parameter state.
    """
    if not train_windows:
        raise ArgError("training set is empty")
    params = init.copy() if init is not None else init_params(cfg, tcfg.seed,
                                                              dtype=tcfg.np_dtype)
    rng = np.random.default_rng(tcfg.seed)
    opt = Adam(params, lr=tcfg.lr)
    history: list[EpochStats] = []
    last_good: ModelParams | None = None
    for epoch in range(tcfg.epochs):
        losses = []
        for idx in _batches(len(train_windows), tcfg.batch_size, rng):
            chunk = [train_windows[i] for i in idx]
            try:
                loss, grads = loss_and_grad(chunk, params, cfg)
            except NonFiniteError as e:
                raise NonFiniteError(str(e), last_good=last_good, history=history) from None
            opt.step(params, grads)
            if not params.all_finite():
                raise NonFiniteError("parameters became non-finite after a step",
                                     last_good=last_good, history=history)
            losses.append(loss)
            last_good = params.copy()
        val_acc = evaluate(val_windows, params, cfg)[0] if val_windows else None
        history.append(EpochStats(epoch, float(np.mean(losses)), val_acc))
    return params, history


# ---------------------------------------------------------------------------
# Reconstruction training


@dataclass
class ReconSample:
    context: SanitizedWindow
    target: ReconTarget


def split_for_reconstruction(window: SanitizedWindow, holdout_frac: float,
                             rng: np.random.Generator) -> ReconSample | None:
    """Hold out a random subset of rows as regression targets.

    Returns None when the window is too small to split.
    """
    n = window.n_obs
    n_hold = int(round(n * holdout_frac))
    if n_hold < 1 or n - n_hold < 1:
        return None
    hold = np.sort(rng.choice(n, size=n_hold, replace=False))
    keep = np.setdiff1d(np.arange(n), hold)
    context = SanitizedWindow(window.t0_us, window.win_us,
                              window.values[keep], window.masks[keep],
                              window.ts[keep], window.label)
    target = ReconTarget(window.ts[hold], window.values[hold],
                         window.masks[hold].astype(np.float64))
    return ReconSample(context, target)


def train_reconstruction(samples: list[ReconSample], cfg: ModelConfig,
                         tcfg: TrainConfig, init: ModelParams | None = None
                         ) -> tuple[ModelParams, list[EpochStats]]:
    """Masked-MSE training of the attention backbone plus reconstruction head."""
    if not samples:
        raise ArgError("no reconstruction samples")
    params = init.copy() if init is not None else init_params(cfg, tcfg.seed,
                                                              dtype=tcfg.np_dtype)
    rng = np.random.default_rng(tcfg.seed)
    opt = Adam(params, lr=tcfg.lr)
    history: list[EpochStats] = []
    last_good: ModelParams | None = None
    for epoch in range(tcfg.epochs):
        losses = []
        for idx in _batches(len(samples), tcfg.batch_size, rng):
            chunk = [(samples[i].context, samples[i].target) for i in idx]
            try:
                loss, grads = recon_loss_and_grad(chunk, params, cfg)
            except NonFiniteError as e:
                raise NonFiniteError(str(e), last_good=last_good, history=history) from None
            opt.step(params, grads)
            if not params.all_finite():
                raise NonFiniteError("parameters became non-finite after a step",
                                     last_good=last_good, history=history)
            losses.append(loss)
            last_good = params.copy()
        history.append(EpochStats(epoch, float(np.mean(losses))))
    return params, history


def linear_interp_baseline(context: SanitizedWindow, target_times: np.ndarray
                           ) -> np.ndarray:
    """Per-tone linear interpolation through the context observations.

    Tones never observed in the context predict 0; single observations
    extrapolate as constants (np.interp edge behavior).
    """
    tt = np.atleast_1d(np.asarray(target_times, dtype=np.float64))
    g = context.grid_size
    out = np.zeros((tt.size, g))
    for k in range(g):
        rows = context.masks[:, k] == 1
        if not rows.any():
            continue
        out[:, k] = np.interp(tt, context.ts[rows], context.values[rows, k])
    return out
