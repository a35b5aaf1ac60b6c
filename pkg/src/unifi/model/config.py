"""Architecture hyperparameters for the time-aware attention classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ArgError


@dataclass(frozen=True, kw_only=True)
class ModelConfig:
    d_r: int = 64            # time-embedding width
    d_h: int = 64            # value-embedding width
    d_k: int = 64            # attention key width
    d_v: int = 64            # attention value width
    q_refs: int = 64         # number of fixed reference times
    n_heads: int = 1
    gru_hidden: int = 64
    n_classes: int
    grid_size: int
    use_mask_features: bool = False   # ablation: feed masks as extra inputs
    content_aware_keys: bool = True   # ablation off: keys from time alone

    def __post_init__(self):
        for name in ("d_r", "d_h", "d_k", "d_v", "n_heads", "gru_hidden",
                     "n_classes", "grid_size"):
            if getattr(self, name) < 1:
                raise ArgError(f"{name} must be >= 1")
        if self.q_refs < 2:
            raise ArgError("q_refs must be >= 2")
        if self.d_k % self.n_heads or self.d_v % self.n_heads:
            raise ArgError("d_k and d_v must be divisible by n_heads")

    @property
    def enc_in(self) -> int:
        return self.grid_size * (2 if self.use_mask_features else 1)

    def ref_times(self) -> np.ndarray:
        """Uniform query grid over the normalized window span."""
        return np.linspace(0.0, 1.0, self.q_refs)
