"""Timing comparison between the compiled and reference kernel backends.

Runs the fused kernels on model-sized inputs (forward plus backward)
and one full optimizer step of the default network, reporting median
wall times per backend and the resulting speedup.
"""

from __future__ import annotations

import time
from statistics import median

import numpy as np

from . import kernels
from .autodiff import Tensor
from .model import ModelSpec, build
from .train import Adam, mse_loss

BACKENDS = ("reference", "native")


def _median_time(fn, repeats: int) -> float:
    fn()
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return median(samples)


def _kernel_cases(batch: int, window: int):
    rng = np.random.default_rng(0)
    cases = []

    for c_in, c_out, k in ((1, 16, 5), (16, 32, 3), (64, 128, 3)):
        x = rng.normal(size=(batch, c_in, window))
        w = rng.normal(size=(c_out, c_in, k))
        b = rng.normal(size=c_out)
        gy = rng.normal(size=(batch, c_out, window))

        def conv_case(backend, x=x, w=w, b=b, gy=gy):
            backend.conv1d_forward(x, w, b, 1)
            backend.conv1d_backward(x, w, 1, gy)

        cases.append((f"conv1d {c_in}->{c_out} k={k}", conv_case))

    xp = rng.normal(size=(batch, 128, window))
    gyp = rng.normal(size=(batch, 128, window))

    def pool_case(backend, x=xp, gy=gyp):
        _, src = backend.maxpool1d_forward(x, 2, 1)
        backend.maxpool1d_backward(src, x.shape[2], gy)

    cases.append(("maxpool1d c=128 size=2", pool_case))

    for features, hidden in ((128, 128), (128, 64)):
        x = rng.normal(size=(batch, window, features))
        w = rng.normal(size=(4 * hidden, hidden + features)) * 0.1
        b = rng.normal(size=4 * hidden) * 0.1
        gh = rng.normal(size=(batch, window, hidden))

        def lstm_case(backend, x=x, w=w, b=b, gh=gh):
            _, cache = backend.lstm_forward(x, w, b)
            backend.lstm_backward(x, w, cache, gh)

        cases.append((f"lstm f={features} h={hidden}", lstm_case))

    return cases


def bench_kernels(batch: int = 32, window: int = 12, repeats: int = 20) -> list[dict]:
    """Median forward+backward time of each kernel per backend."""
    rows = []
    for name, case in _kernel_cases(batch, window):
        row: dict = {"case": name}
        for backend_name in BACKENDS:
            try:
                backend = kernels.get_backend(backend_name)
            except ImportError:
                row[backend_name] = None
                continue
            row[backend_name] = _median_time(lambda: case(backend), repeats)
        if row.get("reference") and row.get("native"):
            row["speedup"] = row["reference"] / row["native"]
        rows.append(row)
    return rows


def bench_train_step(batch: int = 32, repeats: int = 5) -> dict:
    """Median time of one forward/backward/Adam step of the default model."""
    rng = np.random.default_rng(0)
    x = rng.random((batch, 12))
    y = rng.random((batch, 1))
    row: dict = {"case": "train step cnn-bilstm-am"}
    for backend_name in BACKENDS:
        try:
            kernels.get_backend(backend_name)
        except ImportError:
            row[backend_name] = None
            continue
        previous = kernels.use_backend(backend_name)
        try:
            model = build(ModelSpec(), 0).train()
            optimizer = Adam(model.parameters())

            def step():
                loss = mse_loss(model.forward(Tensor(x)), Tensor(y))
                model.zero_grad()
                loss.backward()
                optimizer.step(1e-3)

            row[backend_name] = _median_time(step, repeats)
        finally:
            kernels.use_backend(previous)
    if row.get("reference") and row.get("native"):
        row["speedup"] = row["reference"] / row["native"]
    return row


def run(batch: int = 32, window: int = 12, repeats: int = 20) -> dict:
    """Full benchmark; returns kernel rows plus the train-step row."""
    return {
        "batch": batch,
        "window": window,
        "kernels": bench_kernels(batch, window, repeats),
        "train_step": bench_train_step(batch, max(3, repeats // 4)),
    }


def format_report(results: dict) -> str:
    """Plain-text table of the benchmark results."""
    lines = [
        f"kernel benchmark (batch={results['batch']}, window={results['window']})",
        f"{'case':<28} {'reference':>12} {'native':>12} {'speedup':>9}",
    ]

    def fmt(seconds):
        return "unavailable" if seconds is None else f"{seconds * 1e3:.3f} ms"

    rows = results["kernels"] + [results["train_step"]]
    for row in rows:
        speedup = row.get("speedup")
        lines.append(
            f"{row['case']:<28} {fmt(row.get('reference')):>12} "
            f"{fmt(row.get('native')):>12} "
            f"{'' if speedup is None else f'{speedup:8.2f}x'}"
        )
    return "\n".join(lines)
