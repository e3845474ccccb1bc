"""Asymmetric forecast-error costing and linear forecast correction.

Underforecasts are costlier than overforecasts of the same size, so a
symmetric score misranks forecasts. ``v_cost`` adds odd-order residual
terms (weights gamma, epsilon) to half the squared error;
``fit_gamma_epsilon`` picks the weights whose scores correlate best with
observed scheduling costs, and ``linear_correction`` finds the slope/bias
transform of a forecast minimizing that score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize as sciopt

from .metrics import mae, pearson

GRID_LIMIT = 5.0
GRID_STEP = 0.05
GRADIENT_TOL = 1e-8


@dataclass(frozen=True)
class PerturbationSpec:
    """Relative perturbation; magnitudes above the cap are refused."""

    factor: float
    max_abs_factor: float = 0.5

    def __post_init__(self):
        if not math.isfinite(self.factor):
            raise ValueError("factor must be finite")
        if abs(self.factor) > self.max_abs_factor:
            raise ValueError(f"|factor| must be <= {self.max_abs_factor}")


@dataclass(frozen=True)
class CostModelParams:
    """Weights of the linear (gamma) and cubic (epsilon) residual terms."""

    gamma: float
    epsilon: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and math.isfinite(self.epsilon)):
            raise ValueError("gamma and epsilon must be finite")


@dataclass(frozen=True)
class LinearCorrection:
    """Forecast transform p -> beta + alpha * p."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("alpha and beta must be finite")


def _series(x) -> np.ndarray:
    arr = np.asarray(getattr(x, "values", x), dtype=float)
    if arr.ndim != 1:
        raise ValueError("expected a one-dimensional series")
    if not np.isfinite(arr).all():
        raise ValueError("series contains non-finite values")
    return arr


def _pair(actual, predicted) -> tuple[np.ndarray, np.ndarray]:
    y = _series(actual)
    p = _series(predicted)
    if y.size != p.size or y.size == 0:
        raise ValueError("actual and predicted must be equally long and non-empty")
    return y, p


def perturb(actual, factor) -> np.ndarray:
    """Synthetic forecast actual * (1 + factor); positive factor overforecasts.

    Accepts a plain float or a PerturbationSpec.
    """
    f = factor.factor if isinstance(factor, PerturbationSpec) else float(factor)
    if not math.isfinite(f):
        raise ValueError("factor must be finite")
    return _series(actual) * (1.0 + f)


def u_cost(actual, predicted) -> float:
    """Symmetric score: half the mean absolute error."""
    y, p = _pair(actual, predicted)
    return 0.5 * mae(y, p)


def v_cost(actual, predicted, params: CostModelParams) -> float:
    """Half mean squared residual plus gamma and epsilon odd-order terms.

    Residual is actual minus predicted, so positive gamma makes
    underforecasts (positive residuals) more expensive.
    """
    y, p = _pair(actual, predicted)
    r = y - p
    n = r.size
    return float(0.5 * np.sum(r ** 2) / n
                 + params.gamma * np.sum(r) / n
                 + params.epsilon * np.sum(r ** 3) / (3.0 * n))


def apply_correction(predicted, corr: LinearCorrection) -> np.ndarray:
    return corr.beta + corr.alpha * _series(predicted)


def _normalize_pair(y: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Both series share the actual's scale. Normalizing each by its own
    # stats would collapse scaled forecasts onto the actual and zero the
    # residuals, making every perturbation look perfect.
    m = float(y.mean())
    s = float(y.std())
    if s == 0.0:
        raise ValueError("actual series is constant; cannot normalize")
    return (y - m) / s, (p - m) / s


def fit_gamma_epsilon(pairs, *, refine: bool = True) -> tuple[CostModelParams, float]:
    """Weights in [-5, 5]^2 maximizing Pearson correlation with observed costs.

    Each pair is (actual, predicted, observed_cost). Series are normalized
    to the actual's mean/std before scoring. Coarse 0.05-step grid search,
    then Nelder-Mead refinement; ties break toward the smallest (gamma,
    epsilon).
    """
    if len(pairs) < 3:
        raise ValueError("need at least 3 (actual, predicted, cost) pairs")
    costs = np.array([float(c) for _, _, c in pairs])
    if not np.isfinite(costs).all():
        raise ValueError("observed costs must be finite")
    if np.ptp(costs) == 0.0:
        raise ValueError("observed costs are all equal; correlation undefined")

    # v_cost is affine in (gamma, epsilon): per pair, base + gamma*lin + eps*cub
    base = np.empty(len(pairs))
    lin = np.empty(len(pairs))
    cub = np.empty(len(pairs))
    for i, (actual, predicted, _) in enumerate(pairs):
        y, p = _pair(actual, predicted)
        yn, pn = _normalize_pair(y, p)
        r = yn - pn
        n = r.size
        base[i] = 0.5 * np.sum(r ** 2) / n
        lin[i] = np.sum(r) / n
        cub[i] = np.sum(r ** 3) / (3.0 * n)

    cc = costs - costs.mean()
    cost_norm = float(np.sqrt(np.sum(cc ** 2)))

    def correlation(gamma: float, epsilon: float) -> float:
        v = base + gamma * lin + epsilon * cub
        vc = v - v.mean()
        den = float(np.sqrt(np.sum(vc ** 2))) * cost_norm
        if den == 0.0:
            return -np.inf
        return float(np.dot(vc, cc) / den)

    ticks = int(round(2 * GRID_LIMIT / GRID_STEP)) + 1
    axis = np.linspace(-GRID_LIMIT, GRID_LIMIT, ticks)
    g = axis[:, None, None]
    e = axis[None, :, None]
    scores = base[None, None, :] + g * lin[None, None, :] + e * cub[None, None, :]
    centered = scores - scores.mean(axis=2, keepdims=True)
    den = np.sqrt(np.sum(centered ** 2, axis=2)) * cost_norm
    num = centered @ cc
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(den > 0.0, num / den, -np.inf)
    if not np.isfinite(corr).any():
        raise ValueError("scores are constant for every gamma/epsilon; "
                         "the pair set cannot be ranked")
    flat = int(np.argmax(corr))          # first max = smallest (gamma, epsilon)
    gi, ei = divmod(flat, ticks)
    best_g, best_e = float(axis[gi]), float(axis[ei])
    best_corr = float(corr[gi, ei])

    if refine:
        res = sciopt.minimize(lambda x: -correlation(x[0], x[1]),
                              x0=[best_g, best_e], method="Nelder-Mead",
                              options={"xatol": 1e-6, "fatol": 1e-10})
        cand = correlation(float(res.x[0]), float(res.x[1]))
        if np.isfinite(cand) and cand > best_corr:
            best_g, best_e = float(res.x[0]), float(res.x[1])
            best_corr = cand
    return CostModelParams(best_g, best_e), best_corr


def _v_gradient(y: np.ndarray, p: np.ndarray, params: CostModelParams,
                alpha: float, beta: float) -> np.ndarray:
    r = y - beta - alpha * p
    n = y.size
    da = -(np.sum(r * p) + params.gamma * np.sum(p)
           + params.epsilon * np.sum(r ** 2 * p)) / n
    db = -(np.sum(r) / n + params.gamma + params.epsilon * np.sum(r ** 2) / n)
    return np.array([da, db])


def _v_hessian_pd(y: np.ndarray, p: np.ndarray, params: CostModelParams,
                  alpha: float, beta: float) -> bool:
    r = y - beta - alpha * p
    n = y.size
    e2 = 2.0 * params.epsilon
    h_aa = (np.sum(p ** 2) + e2 * np.sum(r * p ** 2)) / n
    h_ab = (np.sum(p) + e2 * np.sum(r * p)) / n
    h_bb = 1.0 + e2 * np.sum(r) / n
    return h_aa > 0.0 and h_aa * h_bb - h_ab ** 2 > 0.0


def _ols(y: np.ndarray, p: np.ndarray) -> tuple[float, float]:
    var = float(np.var(p))
    if var == 0.0:
        raise ValueError("predicted series is constant; slope undefined")
    alpha = float(np.cov(p, y, bias=True)[0, 1] / var)
    return alpha, float(y.mean() - alpha * p.mean())


def linear_correction(actual, predicted, params: CostModelParams) -> LinearCorrection:
    """(alpha, beta) minimizing v_cost(actual, beta + alpha * predicted).

    Exact for epsilon = 0 (shifted least squares); otherwise multi-start
    quasi-Newton descent with a stationarity and curvature check. Raises
    when no finite minimum exists (possible for epsilon < 0).
    """
    y, p = _pair(actual, predicted)
    a0, b0 = _ols(y, p)
    if params.epsilon == 0.0:
        # stationarity shifts the mean residual to -gamma; slope is untouched
        return LinearCorrection(a0, b0 + params.gamma)

    def objective(x):
        return v_cost(y, x[1] + x[0] * p, params)

    def gradient(x):
        return _v_gradient(y, p, params, x[0], x[1])

    starts = [(a0, b0 + params.gamma), (1.0, 0.0), (a0, b0),
              (a0 * 0.5, b0), (a0 * 1.5, b0 + 2.0 * params.gamma)]
    best: tuple[float, float, float] | None = None
    for x0 in starts:
        res = sciopt.minimize(objective, x0=np.array(x0), jac=gradient,
                              method="BFGS", options={"gtol": 1e-12, "maxiter": 500})
        alpha, beta = float(res.x[0]), float(res.x[1])
        if not (math.isfinite(alpha) and math.isfinite(beta)):
            continue
        grad = _v_gradient(y, p, params, alpha, beta)
        if float(np.abs(grad).max()) >= GRADIENT_TOL:
            continue
        if not _v_hessian_pd(y, p, params, alpha, beta):
            continue
        value = objective((alpha, beta))
        if best is None or value < best[0]:
            best = (value, alpha, beta)
    if best is None:
        raise ValueError("no finite minimum found; the cubic term makes the "
                         "objective unbounded or degenerate")
    return LinearCorrection(best[1], best[2])


def fit_correction_run(actual, forecasts, costs) -> dict:
    """Fit gamma/epsilon across forecasts, then one raw-unit correction.

    The correction is fitted on the pooled normalized pairs and mapped back
    to the actual's units, so `beta + alpha * forecast` applies directly to
    raw series.
    """
    y = _series(actual)
    if len(forecasts) != len(costs):
        raise ValueError("need one observed cost per forecast")
    pairs = [(y, _series(f), c) for f, c in zip(forecasts, costs)]
    params, corr = fit_gamma_epsilon(pairs)

    m = float(y.mean())
    s = float(y.std())
    if s == 0.0:
        raise ValueError("actual series is constant; cannot normalize")
    yn = (y - m) / s
    pooled_y = np.concatenate([yn] * len(pairs))
    pooled_p = np.concatenate([(_series(f) - m) / s for f, _ in zip(forecasts, costs)])
    norm_corr = linear_correction(pooled_y, pooled_p, params)
    alpha = norm_corr.alpha
    beta = m + s * norm_corr.beta - alpha * m
    return {
        "gamma": params.gamma,
        "epsilon": params.epsilon,
        "correlation": corr,
        "alpha": alpha,
        "beta": beta,
    }
