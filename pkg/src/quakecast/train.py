"""Training loop: MSE loss, Adam, linear learning-rate decay,
mini-batching, and the repeated-run protocol.

A single run is fully determined by (model seed, shuffle seed, data);
the protocol trains ``repeats`` independent models with run seeds
``seed + i`` and aggregates their test metrics.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import series
from .autodiff import Tensor, no_grad
from .errors import ConfigError, DomainError, ShapeError, TrainingError
from .metrics import EvalReport, evaluate
from .model import Model, ModelSpec, build
from .series import WindowedDataset


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run."""

    epochs: int = 150
    batch_size: int = 32
    lr_start: float = 1e-3
    lr_end: float = 1e-4
    repeats: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if not self.lr_start >= self.lr_end > 0.0:
            raise ConfigError(
                f"need lr_start >= lr_end > 0, got {self.lr_start}, {self.lr_end}"
            )
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("beta1 and beta2 must be in [0, 1)")
        if self.eps <= 0.0:
            raise ConfigError("eps must be > 0")


@dataclass(frozen=True)
class SplitDataset:
    """Windowed train and test samples for one region and case."""

    train: WindowedDataset
    test: WindowedDataset


@dataclass
class RunResult:
    """Outcome of one training run."""

    run_index: int
    run_seed: int
    final_train_loss: float
    metrics: EvalReport
    predictions: np.ndarray
    wall_time: float
    log: list[tuple[int, float, float]] = field(default_factory=list)


@dataclass
class ProtocolReport:
    """All runs for one (region, case) plus per-metric mean and std."""

    region: int
    case: str
    spec: ModelSpec
    config: TrainConfig
    runs: list[RunResult]

    def aggregate(self) -> dict[str, float]:
        out = {}
        for name in ("rmse", "mae", "r2"):
            values = np.array([getattr(r.metrics, name) for r in self.runs])
            out[f"{name}_mean"] = float(values.mean())
            out[f"{name}_std"] = float(values.std())
        return out


def mse_loss(pred, target) -> Tensor:
    """Mean squared error, differentiable through the tape."""
    pred = pred if isinstance(pred, Tensor) else Tensor(pred)
    target = target if isinstance(target, Tensor) else Tensor(target)
    if pred.size == 0:
        raise DomainError("mse_loss needs at least one element")
    if pred.shape != target.shape:
        raise ShapeError(
            f"mse_loss shape mismatch: {pred.shape} vs {target.shape}"
        )
    diff = pred - target
    return (diff * diff).mean()


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    """Linear decay from lr_start (epoch 0) to lr_end (final epoch).

    Computed as a convex combination so both endpoints are exact.
    """
    if not 0 <= epoch < config.epochs:
        raise DomainError(f"epoch {epoch} outside [0, {config.epochs})")
    if config.epochs == 1:
        return config.lr_start
    frac = epoch / (config.epochs - 1)
    return config.lr_start * (1.0 - frac) + config.lr_end * frac


class Adam:
    """Adam over a named parameter collection.

    Keeps first/second moment estimates per parameter and applies the
    bias-corrected update in place.
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            grad = p.grad
            if grad is None:
                continue
            if not np.all(np.isfinite(grad)):
                raise TrainingError(f"non-finite gradient in parameter {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            m_hat = m / correction1
            v_hat = v / correction2
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def batch_slices(n: int, batch_size: int) -> list[tuple[int, int]]:
    """Contiguous batch bounds; a final batch of one folds into the previous."""
    bounds = []
    start = 0
    while start < n:
        end = min(start + batch_size, n)
        bounds.append([start, end])
        start = end
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] < 2:
        bounds[-2][1] = bounds[-1][1]
        bounds.pop()
    return [tuple(b) for b in bounds]


def train_once(
    model: Model,
    data: SplitDataset,
    config: TrainConfig,
    run_seed: int,
    run_index: int = 0,
) -> RunResult:
    """Train one model to completion and evaluate it on the test split.

    Every epoch shuffles the training windows with a run_seed-derived
    RNG, then steps Adam once per mini-batch at that epoch's learning
    rate.  After the final epoch the model is switched to eval mode and
    scored on the test windows.
    """
    inputs, targets = data.train.inputs, data.train.targets
    n = len(targets)
    if n < 2:
        raise ConfigError(f"training needs at least 2 samples, got {n}")
    if inputs.shape[1] != model.spec.window:
        raise ConfigError(
            f"dataset window {inputs.shape[1]} does not match model window "
            f"{model.spec.window}"
        )
    start = time.perf_counter()
    shuffle_rng = np.random.default_rng([int(run_seed), 2])
    optimizer = Adam(model.parameters(), config.beta1, config.beta2, config.eps)
    bounds = batch_slices(n, config.batch_size)
    log: list[tuple[int, float, float]] = []
    final_loss = math.nan
    for epoch in range(config.epochs):
        lr = lr_schedule(epoch, config)
        order = shuffle_rng.permutation(n)
        model.train()
        epoch_loss = 0.0
        for lo, hi in bounds:
            idx = order[lo:hi]
            pred = model.forward(Tensor(inputs[idx]))
            loss = mse_loss(pred, Tensor(targets[idx].reshape(-1, 1)))
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(
                    f"non-finite loss {value} at epoch {epoch}, batch [{lo}:{hi})"
                )
            model.zero_grad()
            loss.backward()
            optimizer.step(lr)
            epoch_loss += value * (hi - lo)
        final_loss = epoch_loss / n
        log.append((epoch, lr, final_loss))
    model.eval()
    with no_grad():
        predictions = model.forward(Tensor(data.test.inputs)).data.reshape(-1).copy()
    report = evaluate(data.test.targets, predictions)
    return RunResult(
        run_index=run_index,
        run_seed=int(run_seed),
        final_train_loss=final_loss,
        metrics=report,
        predictions=predictions,
        wall_time=time.perf_counter() - start,
        log=log,
    )


def run_repeats(spec: ModelSpec, data: SplitDataset, config: TrainConfig):
    """Train ``config.repeats`` independent models with seeds seed + i.

    Yields (RunResult, trained Model) pairs in run order.
    """
    for i in range(config.repeats):
        run_seed = config.seed + i
        model = build(spec, run_seed)
        yield train_once(model, data, config, run_seed, run_index=i), model


def train_protocol(
    data_dir,
    region: int,
    case: str,
    config: TrainConfig,
    spec: ModelSpec | None = None,
) -> tuple[ProtocolReport, Model]:
    """Load a prepared dataset, run all repeats, aggregate the metrics.

    Returns the report and the final repeat's trained model (the one
    the CLI checkpoints).  Missing dataset files raise FileNotFoundError
    naming the expected path.
    """
    prepared = series.load_prepared(data_dir, region, case)
    if spec is None:
        spec = ModelSpec(window=prepared.window)
    elif spec.window != prepared.window:
        raise ConfigError(
            f"model window {spec.window} does not match prepared dataset "
            f"window {prepared.window}"
        )
    data = SplitDataset(prepared.train_windows(), prepared.test_windows())
    runs: list[RunResult] = []
    last_model: Model | None = None
    for result, model in run_repeats(spec, data, config):
        runs.append(result)
        last_model = model
    report = ProtocolReport(
        region=region, case=case, spec=spec, config=config, runs=runs
    )
    return report, last_model
