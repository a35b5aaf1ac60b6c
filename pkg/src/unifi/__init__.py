"""Wi-Fi CSI sensing from irregularly sampled communication traffic.

Subpackages and modules:

- ``types``, ``grids``, ``streamio``, ``windowing``, ``metrics``: domain types,
  the on-disk stream format, windowing, and MR/SCV/ACV quality metrics.
- ``synth``: ground-truth channel/traffic/impairment simulation and the
  MR/SCV-targeted subsampler.
- ``sanitize``: the five-stage sanitization pipeline.
- ``model``: the time-aware attention classifier with hand-derived gradients.
- ``harness``: experiment configs, multi-seed runs, sweeps, reports.
"""

from .errors import (ArgError, ConfigError, DegenerateError, DivByZeroError,
                     EmptyClusterError, EmptyWindowError, GridError,
                     InfeasibleError, IoError, NonFiniteError, NoPairsError,
                     OrderError, SchemaError, UnifiError)
from .grids import Band, FrameType, GridSpec, default_grid
from .metrics import compute_acv, compute_mr, compute_scv
from .streamio import load_stream, save_stream
from .types import CsiStream, PacketRecord, QualityMetrics, SanitizedWindow
from .windowing import window_stream

__version__ = "0.1.0"
