"""Shared test helpers: finite-difference gradient checking and a
synthetic catalog builder used by the CLI and acceptance tests."""

from __future__ import annotations

import csv

import numpy as np

from quakecast.autodiff import Tensor


def numeric_grad(loss_fn, array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar loss with respect to one
    array, perturbing the array in place."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        high = loss_fn()
        flat[i] = original - h
        low = loss_fn()
        flat[i] = original
        grad_flat[i] = (high - low) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-4)
    return float(np.max(np.abs(analytic - numeric) / scale))


def check_gradients(build_loss, arrays, tol: float = 1e-4, h: float = 1e-5):
    """Compare backprop gradients against central differences.

    ``build_loss`` runs the forward pass and returns the scalar loss
    Tensor; ``arrays`` maps names to (raw numpy array, Tensor or
    parameter whose .grad to inspect).  The raw arrays must be the live
    storage read by build_loss so in-place perturbation is visible.
    """
    loss = build_loss()
    loss.backward()
    analytic = {}
    # Snapshot every gradient before finite differencing: build_loss
    # re-runs zero_grad, wiping grads of tensors not yet compared.
    for name, (_, tensor) in arrays.items():
        assert tensor.grad is not None, f"no gradient reached {name}"
        analytic[name] = tensor.grad.copy()
    for name, (array, _) in arrays.items():
        numeric = numeric_grad(lambda: float(build_loss().data), array, h=h)
        err = relative_error(analytic[name], numeric)
        assert err <= tol, f"gradient mismatch for {name}: relative error {err:.3e}"


def fixed_projection(rng: np.random.Generator, shape) -> Tensor:
    """Frozen random direction for projection losses, so gradient
    errors cannot cancel the way they can under a plain sum.  Draw it
    once and close over it: the loss must be deterministic across the
    repeated evaluations finite differencing performs."""
    return Tensor(rng.standard_normal(shape))


def write_catalog(path, rows, header=("time", "latitude", "longitude", "depth", "mag")):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


# Cell centers of the default 3x3 grid, row-major from the northwest.
REGION_CENTERS = [
    (lat, lon)
    for lat in (41.333, 34.0, 26.667)
    for lon in (82.333, 97.0, 111.667)
]


def synthetic_catalog_rows(seed: int = 0, years=(1970, 1975)):
    """Events over a small year range with guaranteed per-region
    variation: every region's monthly count cycles 0/1/2 plus random
    background, so no split of any region is constant."""
    rng = np.random.default_rng(seed)
    rows = []
    index = 0
    for year in range(years[0], years[1]):
        for month in range(1, 13):
            for region, (lat, lon) in enumerate(REGION_CENTERS):
                for burst in range((index + region) % 3):
                    mag = float(np.round(rng.uniform(3.5, 7.0), 1))
                    day = int(rng.integers(1, 28))
                    rows.append(
                        (
                            f"{year:04d}-{month:02d}-{day:02d}T12:00:00Z",
                            round(lat + float(rng.uniform(-1.0, 1.0)), 3),
                            round(lon + float(rng.uniform(-2.0, 2.0)), 3),
                            round(float(rng.uniform(5.0, 50.0)), 1),
                            mag,
                        )
                    )
            for _ in range(int(rng.integers(1, 4))):
                lat = float(rng.uniform(23.0, 45.0))
                lon = float(rng.uniform(75.0, 119.0))
                mag = float(np.round(rng.uniform(3.5, 7.0), 1))
                day = int(rng.integers(1, 28))
                rows.append(
                    (
                        f"{year:04d}-{month:02d}-{day:02d}T12:00:00Z",
                        round(lat, 3),
                        round(lon, 3),
                        round(float(rng.uniform(5.0, 50.0)), 1),
                        mag,
                    )
                )
            index += 1
    return rows
