"""Regional earthquake forecasting from catalog-derived monthly series.

The package turns a raw earthquake catalog into per-region monthly
time series, trains neural forecasters on sliding windows of those
series, and evaluates them with standard regression metrics.  The
numeric core is a small reverse-mode autodiff engine over float64
numpy arrays with hot kernels swappable between a compiled extension
and a pure-numpy fallback (see ``quakecast.kernels``).
"""

from .errors import (
    CheckpointError,
    ConfigError,
    DomainError,
    QuakecastError,
    ShapeError,
    TrainingError,
)

__version__ = "0.1.0"

__all__ = [
    "QuakecastError",
    "ShapeError",
    "DomainError",
    "ConfigError",
    "TrainingError",
    "CheckpointError",
    "__version__",
]
