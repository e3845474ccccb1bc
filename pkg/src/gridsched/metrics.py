"""Forecast error metrics: MASE, MAE, signed bias split, residual moments.

All functions take plain 1-D arrays (or anything ``np.asarray`` accepts) and
expect fully-present, finite data. Residuals follow the ``forecast - actual``
convention, so a forecast that underestimates a peaky series produces
negatively skewed residuals.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

# default seasonal lag: 28 days of 15-minute periods
DEFAULT_SEASON = 2688


def _pair(actual, forecast) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(actual, dtype=float)
    f = np.asarray(forecast, dtype=float)
    if y.shape != f.shape or y.ndim != 1:
        raise ValueError("actual and forecast must be 1-D and equally long")
    if y.size == 0:
        raise ValueError("empty series")
    return y, f


def mae(actual, forecast) -> float:
    y, f = _pair(actual, forecast)
    return float(np.mean(np.abs(y - f)))


def mase(actual, forecast, train, season: int = DEFAULT_SEASON) -> float:
    """Mean absolute error scaled by the in-sample seasonal-naive error.

    ``train`` is the history the seasonal-naive baseline walks over; the
    (actual, forecast) pair is the out-of-sample window being scored.
    """
    y, f = _pair(actual, forecast)
    hist = np.asarray(train, dtype=float)
    if hist.ndim != 1:
        raise ValueError("train must be 1-D")
    if season < 1:
        raise ValueError("season must be >= 1")
    n = hist.size
    if n <= season:
        raise ValueError(f"train length {n} must exceed season {season}")
    denom = float(np.sum(np.abs(hist[season:] - hist[:-season])))
    if denom == 0.0:
        raise ValueError("seasonal-naive error on train is zero")
    h = y.size
    return float((n - season) / h * np.sum(np.abs(y - f)) / denom)


def bias_decomposition(actual, forecast) -> tuple[float, float]:
    """(mean under-forecast, mean over-forecast); the two sum to the MAE."""
    y, f = _pair(actual, forecast)
    under = float(np.mean(np.maximum(y - f, 0.0)))
    over = float(np.mean(np.maximum(f - y, 0.0)))
    return under, over


def residual_moments(residuals) -> dict:
    """Mean, sample std, skewness and excess kurtosis of a residual sample.

    Skewness is m3/m2^1.5 and kurtosis m4/m2^2 - 3 with n-denominator central
    moments; std uses the n-1 denominator. Zero variance is an error.
    """
    r = np.asarray(residuals, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("need at least 2 residuals")
    mean = float(np.mean(r))
    d = r - mean
    m2 = float(np.mean(d ** 2))
    if m2 == 0.0:
        raise ValueError("residuals have zero variance")
    m3 = float(np.mean(d ** 3))
    m4 = float(np.mean(d ** 4))
    return {
        "mean": mean,
        "std": float(np.std(r, ddof=1)),
        "skewness": m3 / m2 ** 1.5,
        "kurtosis": m4 / m2 ** 2 - 3.0,
    }


def pearson(x, y) -> float:
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("need two 1-D arrays of equal length >= 2")
    da = a - a.mean()
    db = b - b.mean()
    denom = float(np.sqrt(np.sum(da ** 2) * np.sum(db ** 2)))
    if denom == 0.0:
        raise ValueError("correlation undefined for constant input")
    return float(np.sum(da * db) / denom)


@dataclass(frozen=True)
class ErrorReport:
    """One forecast's error profile against the actuals."""

    mae: float
    mean_under: float
    mean_over: float
    residual_mean: float
    residual_std: float
    residual_skewness: float
    residual_kurtosis: float
    mase: float | None = None
    season: int | None = None

    def as_dict(self) -> dict:
        # Fields that were not computed (no training series) are omitted
        # rather than serialized as nulls.
        return {k: v for k, v in asdict(self).items() if v is not None}


def error_report(actual, forecast, train=None, season: int = DEFAULT_SEASON) -> ErrorReport:
    """Bundle the standard metrics; MASE only when a train history is given.

    Constant residuals (e.g. forecast == actual) report skewness/kurtosis 0.
    """
    y, f = _pair(actual, forecast)
    under, over = bias_decomposition(y, f)
    residuals = f - y
    try:
        moments = residual_moments(residuals)
    except ValueError:
        moments = {"mean": float(np.mean(residuals)), "std": 0.0,
                   "skewness": 0.0, "kurtosis": 0.0}
    scaled = mase(y, f, train, season) if train is not None else None
    return ErrorReport(
        mae=mae(y, f),
        mean_under=under,
        mean_over=over,
        residual_mean=moments["mean"],
        residual_std=moments["std"],
        residual_skewness=moments["skewness"],
        residual_kurtosis=moments["kurtosis"],
        mase=scaled,
        season=season if train is not None else None,
    )
