"""Two-parameter Weibull fitting and inclusion probabilities."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

TAIL_EPS = 1e-12


class DegenerateSample(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class WeibullParams:
    shape: float
    scale: float

    def __post_init__(self):
        for name in ("shape", "scale"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"Weibull {name} must be finite and > 0, got {v}")

    def log_likelihood(self, x) -> float:
        return weibull_loglik(np.asarray(x, dtype=np.float64), self.shape, self.scale)


def weibull_loglik(x: np.ndarray, shape, scale):
    """Log-likelihood; broadcasts over array-valued ``shape``/``scale``."""
    k = np.asarray(shape, dtype=np.float64)[..., None]
    lam = np.asarray(scale, dtype=np.float64)[..., None]
    z = x / lam
    ll = np.log(k) - np.log(lam) + (k - 1) * np.log(z) - z ** k
    return ll.sum(axis=-1)


def _profile(k: float, logx: np.ndarray) -> tuple[float, float]:
    """Profile-likelihood equation for the shape and its derivative.

    f(k) = sum(x^k ln x)/sum(x^k) - 1/k - mean(ln x), increasing in k.
    """
    a = k * logx
    w = np.exp(a - a.max())
    s0 = w.sum()
    m1 = (w * logx).sum() / s0
    m2 = (w * logx * logx).sum() / s0
    f = m1 - 1.0 / k - logx.mean()
    df = (m2 - m1 * m1) + 1.0 / (k * k)
    return f, df


def weibull_fit_mle(samples, tol: float = 1e-10, max_iter: int = 200) -> WeibullParams:
    """Maximum-likelihood (shape, scale).

    The shape solves the profile equation by bracketed bisection with Newton
    refinement; the scale then follows in closed form. Samples are divided by
    their geometric mean first, so the shape is exactly invariant to rescaling.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise DegenerateSample("need at least two samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    if np.any(x <= 0):
        raise ValueError("samples must be > 0")
    logx_raw = np.log(x)
    g = logx_raw.mean()
    logx = logx_raw - g
    if np.ptp(logx) <= 1e-12:
        raise DegenerateSample("all samples are equal")

    lo, hi = 1e-3, 1.0
    flo, _ = _profile(lo, logx)
    while flo > 0:
        lo /= 10
        if lo < 1e-12:
            raise ConvergenceError("could not bracket the shape from below")
        flo, _ = _profile(lo, logx)
    fhi, _ = _profile(hi, logx)
    while fhi < 0:
        lo, hi = hi, hi * 2
        if hi > 1e8:
            raise ConvergenceError("could not bracket the shape from above")
        fhi, _ = _profile(hi, logx)

    k = 0.5 * (lo + hi)
    for _ in range(max_iter):
        f, df = _profile(k, logx)
        if abs(f) <= tol:
            break
        if f < 0:
            lo = k
        else:
            hi = k
        step = k - f / df if df > 0 else None
        k = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
    else:
        raise ConvergenceError(f"shape equation not solved in {max_iter} iterations")

    a = k * logx
    amax = a.max()
    scale_norm = math.exp((amax + math.log(np.exp(a - amax).mean())) / k)
    return WeibullParams(float(k), float(scale_norm * math.exp(g)))


def fit_tail(tail, fallback: bool = True) -> WeibullParams:
    """Fit a distance tail, clamping zeros to ``TAIL_EPS``.

    Tails that cannot support a fit (one value, or all equal) fall back to an
    exponential (shape 1) with the tail mean as scale when ``fallback`` is set.
    """
    t = np.maximum(np.asarray(tail, dtype=np.float64), TAIL_EPS)
    if np.any(np.asarray(tail) <= 0):
        logger.debug("clamped %d zero tail values", int(np.sum(np.asarray(tail) <= 0)))
    try:
        return weibull_fit_mle(t)
    except DegenerateSample:
        if not fallback:
            raise
        logger.debug("degenerate tail of size %d; exponential fallback", t.size)
        return WeibullParams(1.0, float(t.mean()))


def weibull_inclusion(d, params: WeibullParams):
    """Survival form exp(-(d/scale)^shape); underflows to exactly 0.0."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("distance must be >= 0")
    with np.errstate(over="ignore", under="ignore"):
        out = np.exp(-((d / params.scale) ** params.shape))
    return float(out) if out.ndim == 0 else out


def weibull_cdf(x, params: WeibullParams):
    x = np.maximum(np.asarray(x, dtype=np.float64), 0.0)
    with np.errstate(over="ignore", under="ignore"):
        out = -np.expm1(-((x / params.scale) ** params.shape))
    return float(out) if out.ndim == 0 else out
