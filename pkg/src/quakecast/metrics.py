"""Regression evaluation criteria: RMSE, MAE, and R².

All three are pure functions of (actual, predicted) pairs.  Metrics are
reported in scaled [0, 1] space by default; raw-space values come from
inverting the scaler first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class EvalReport:
    """One evaluation: the three criteria, sample count, value space."""

    rmse: float
    mae: float
    r2: float
    n: int
    space: str = "scaled"


def _paired(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if y.size == 0:
        raise DomainError("metrics need at least one sample")
    if y.size != y_hat.size:
        raise DomainError(
            f"metrics length mismatch: {y.size} actual vs {y_hat.size} predicted"
        )
    return y, y_hat


def rmse(y, y_hat) -> float:
    """Root mean squared error."""
    y, y_hat = _paired(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def mae(y, y_hat) -> float:
    """Mean absolute error."""
    y, y_hat = _paired(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def r_squared(y, y_hat) -> float:
    """Coefficient of determination; negative when worse than the mean.

    1 - sum((y_hat - y)^2) / sum((mean(y) - y)^2).
    """
    y, y_hat = _paired(y, y_hat)
    if y.size < 2:
        raise DomainError("r_squared needs at least two samples")
    total = float(np.sum((y - y.mean()) ** 2))
    if total == 0.0:
        raise DomainError("r_squared undefined for constant targets")
    residual = float(np.sum((y_hat - y) ** 2))
    return 1.0 - residual / total


def evaluate(y, y_hat, space: str = "scaled") -> EvalReport:
    """All three criteria over one (actual, predicted) pair."""
    y, y_hat = _paired(y, y_hat)
    return EvalReport(
        rmse=rmse(y, y_hat),
        mae=mae(y, y_hat),
        r2=r_squared(y, y_hat),
        n=int(y.size),
        space=space,
    )
