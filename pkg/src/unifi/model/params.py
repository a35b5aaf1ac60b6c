"""Learnable tensors, their initialization, and the binary checkpoint format.

Checkpoint layout (little-endian): magic ``UNFI``, version u32, the
ModelConfig integer fields in declared order, two bool bytes, then every
parameter tensor as float32 in ModelParams field order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from ..errors import ArgError, IoError, SchemaError
from .config import ModelConfig

_MAGIC = b"UNFI"
_VERSION = 1
_CFG_INTS = ("d_r", "d_h", "d_k", "d_v", "q_refs", "n_heads", "gru_hidden",
             "n_classes", "grid_size")
_CFG_BOOLS = ("use_mask_features", "content_aware_keys")


@dataclass
class ModelParams:
    """All learnable tensors; gate blocks are ordered (reset, update, candidate)."""

    time_w: np.ndarray    # (d_r,) frequencies; element 0 is the linear term
    time_b: np.ndarray    # (d_r,) phases
    enc_w: np.ndarray     # (enc_in, d_h) value encoder
    enc_b: np.ndarray     # (d_h,)
    w_h: np.ndarray       # (d_h, d_h) value-feature projection
    u_t: np.ndarray       # (d_r, d_h) time-to-key projection
    w_k: np.ndarray       # (d_h, d_k)
    w_v: np.ndarray       # (d_h, d_v)
    w_q: np.ndarray       # (d_r, d_k)
    gru_w_ih: np.ndarray  # (d_v, 3*gru_hidden)
    gru_w_hh: np.ndarray  # (gru_hidden, 3*gru_hidden)
    gru_b_ih: np.ndarray  # (3*gru_hidden,)
    gru_b_hh: np.ndarray  # (3*gru_hidden,)
    head_w: np.ndarray    # (gru_hidden, n_classes)
    head_b: np.ndarray    # (n_classes,)
    recon_w: np.ndarray   # (d_v, grid_size)
    recon_b: np.ndarray   # (grid_size,)

    def field_names(self) -> list[str]:
        return [f.name for f in fields(self)]

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.arrays().items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(**{k: v.astype(dtype) for k, v in self.arrays().items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams(**{k: np.zeros_like(v) for k, v in self.arrays().items()})

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.arrays().values()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays().values())


def _affine(rng: np.random.Generator, n_in: int, n_out: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(n_in)
    return rng.uniform(-bound, bound, size=(n_in, n_out)).astype(dtype)


def _bias(rng: np.random.Generator, n_in: int, n: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(n_in)
    return rng.uniform(-bound, bound, size=n).astype(dtype)


def init_params(cfg: ModelConfig, seed: int, dtype=np.float64) -> ModelParams:
    """Uniform +-1/sqrt(fan_in) affine init; log-spaced time frequencies."""
    rng = np.random.default_rng(seed)
    # 0.1 .. 100 cycles per (normalized) window gives the sinusoid bank
    # frequency diversity from the start; phases start at zero
    time_w = 2.0 * np.pi * np.logspace(-1.0, 2.0, cfg.d_r).astype(dtype)
    time_b = np.zeros(cfg.d_r, dtype=dtype)
    h = cfg.gru_hidden
    return ModelParams(
        time_w=time_w,
        time_b=time_b,
        enc_w=_affine(rng, cfg.enc_in, cfg.d_h, dtype),
        enc_b=_bias(rng, cfg.enc_in, cfg.d_h, dtype),
        w_h=_affine(rng, cfg.d_h, cfg.d_h, dtype),
        u_t=_affine(rng, cfg.d_r, cfg.d_h, dtype),
        w_k=_affine(rng, cfg.d_h, cfg.d_k, dtype),
        w_v=_affine(rng, cfg.d_h, cfg.d_v, dtype),
        w_q=_affine(rng, cfg.d_r, cfg.d_k, dtype),
        gru_w_ih=_affine(rng, cfg.d_v, 3 * h, dtype),
        gru_w_hh=_affine(rng, h, 3 * h, dtype),
        gru_b_ih=_bias(rng, h, 3 * h, dtype),
        gru_b_hh=_bias(rng, h, 3 * h, dtype),
        head_w=_affine(rng, h, cfg.n_classes, dtype),
        head_b=np.zeros(cfg.n_classes, dtype=dtype),
        recon_w=_affine(rng, cfg.d_v, cfg.grid_size, dtype),
        recon_b=np.zeros(cfg.grid_size, dtype=dtype),
    )


def expected_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    h = cfg.gru_hidden
    return {
        "time_w": (cfg.d_r,), "time_b": (cfg.d_r,),
        "enc_w": (cfg.enc_in, cfg.d_h), "enc_b": (cfg.d_h,),
        "w_h": (cfg.d_h, cfg.d_h), "u_t": (cfg.d_r, cfg.d_h),
        "w_k": (cfg.d_h, cfg.d_k), "w_v": (cfg.d_h, cfg.d_v),
        "w_q": (cfg.d_r, cfg.d_k),
        "gru_w_ih": (cfg.d_v, 3 * h), "gru_w_hh": (h, 3 * h),
        "gru_b_ih": (3 * h,), "gru_b_hh": (3 * h,),
        "head_w": (h, cfg.n_classes), "head_b": (cfg.n_classes,),
        "recon_w": (cfg.d_v, cfg.grid_size), "recon_b": (cfg.grid_size,),
    }


def validate_shapes(params: ModelParams, cfg: ModelConfig) -> None:
    for name, shape in expected_shapes(cfg).items():
        got = getattr(params, name).shape
        if got != shape:
            raise ArgError(f"{name} has shape {got}, expected {shape}")


def save_checkpoint(path, params: ModelParams, cfg: ModelConfig) -> None:
    validate_shapes(params, cfg)
    header = _MAGIC + struct.pack("<I", _VERSION)
    header += struct.pack("<9I", *(getattr(cfg, n) for n in _CFG_INTS))
    header += struct.pack("<2B", *(int(getattr(cfg, n)) for n in _CFG_BOOLS))
    try:
        with Path(path).open("wb") as fh:
            fh.write(header)
            for name in params.field_names():
                fh.write(np.ascontiguousarray(getattr(params, name),
                                              dtype="<f4").tobytes())
    except OSError as e:
        raise IoError(f"cannot write checkpoint to {path}: {e}") from e


def load_checkpoint(path) -> tuple[ModelParams, ModelConfig]:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read checkpoint from {path}: {e}") from e
    if blob[:4] != _MAGIC:
        raise SchemaError(1, "not a model checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _VERSION:
        raise SchemaError(1, f"unsupported checkpoint version {version}")
    ints = struct.unpack_from("<9I", blob, 8)
    bools = struct.unpack_from("<2B", blob, 8 + 36)
    cfg = ModelConfig(**dict(zip(_CFG_INTS, ints)),
                      **{n: bool(v) for n, v in zip(_CFG_BOOLS, bools)})
    off = 8 + 36 + 2
    arrays = {}
    for name, shape in expected_shapes(cfg).items():
        n = int(np.prod(shape))
        try:
            arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off)
        except ValueError:
            raise SchemaError(1, f"checkpoint truncated in tensor {name}") from None
        arrays[name] = arr.reshape(shape).astype(np.float64)
        off += 4 * n
    if off != len(blob):
        raise SchemaError(1, "checkpoint has trailing bytes")
    return ModelParams(**arrays), cfg
