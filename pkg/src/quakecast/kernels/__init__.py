"""Backend selection for the numeric kernels.

Two interchangeable implementations exist: a compiled Cython extension
(``quakecast.kernels._native``) and a pure-numpy fallback
(``quakecast.kernels.reference``).  The active one is chosen once at
import time from the ``QUAKECAST_KERNELS`` environment variable:

* unset      -- use the compiled backend if it imports, else fall back
* ``native``    -- require the compiled backend, raise if missing
* ``reference`` -- force the numpy fallback

Both backends expose the same six functions with identical semantics;
``ACTIVE_BACKEND`` records which one won.
"""

from __future__ import annotations

import os

from . import reference

_REQUESTED = os.environ.get("QUAKECAST_KERNELS", "").strip().lower()

if _REQUESTED == "reference":
    _impl = reference
    ACTIVE_BACKEND = "reference"
elif _REQUESTED in ("", "native"):
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        ACTIVE_BACKEND = "native"
    except ImportError:
        if _REQUESTED == "native":
            raise ImportError(
                "QUAKECAST_KERNELS=native but the compiled extension is not "
                "built; reinstall the package or unset the variable"
            ) from None
        _impl = reference
        ACTIVE_BACKEND = "reference"
else:
    raise ValueError(
        f"QUAKECAST_KERNELS must be 'native' or 'reference', got {_REQUESTED!r}"
    )

same_padding = reference.same_padding
conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
maxpool1d_forward = _impl.maxpool1d_forward
maxpool1d_backward = _impl.maxpool1d_backward
lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward


def get_backend(name: str):
    """Return a backend module by name, for benchmarks and parity tests."""
    if name == "reference":
        return reference
    if name == "native":
        from . import _native

        return _native
    raise ValueError(f"unknown kernel backend {name!r}")


def use_backend(name: str) -> str:
    """Rebind the active kernel functions to the named backend.

    Layers dispatch through module attributes, so the swap takes effect
    immediately; returns the previously active backend name so callers
    can restore it.
    """
    global ACTIVE_BACKEND
    global conv1d_forward, conv1d_backward
    global maxpool1d_forward, maxpool1d_backward
    global lstm_forward, lstm_backward
    backend = get_backend(name)
    previous = ACTIVE_BACKEND
    conv1d_forward = backend.conv1d_forward
    conv1d_backward = backend.conv1d_backward
    maxpool1d_forward = backend.maxpool1d_forward
    maxpool1d_backward = backend.maxpool1d_backward
    lstm_forward = backend.lstm_forward
    lstm_backward = backend.lstm_backward
    ACTIVE_BACKEND = name
    return previous
