"""Gaussian kernels and heat smoothing of nondecreasing functions.

Provides the Gaussian distribution primitives, CDF/quantile of a Gaussian
mixture over an atomic measure, and the heat-kernel convolution F * gamma_s
(with spatial derivative) for monotone functions, exact for step functions
and Gauss-Hermite elsewhere.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import ndtr, ndtri

from .measures import GridMeasure

DEFAULT_GH_NODES = 64


def gauss_pdf(x, s: float = 1.0):
    if s <= 0:
        raise ValueError(f"variance must be positive, got {s}")
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x / (2.0 * s)) / np.sqrt(2.0 * np.pi * s)


def gauss_cdf(x, s: float = 1.0):
    if s <= 0:
        raise ValueError(f"variance must be positive, got {s}")
    return ndtr(np.asarray(x, dtype=float) / np.sqrt(s))


def gauss_quantile(u, s: float = 1.0):
    if s <= 0:
        raise ValueError(f"variance must be positive, got {s}")
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("quantile level must lie strictly inside (0, 1)")
    return ndtri(u) * np.sqrt(s)


@lru_cache(maxsize=32)
def gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and probability weights integrating against the standard Gaussian."""
    nodes, weights = hermegauss(n)
    weights = weights / weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def smoothed_cdf(alpha: GridMeasure, s: float, x):
    """CDF at x of alpha convolved with a centred Gaussian of variance s."""
    if s <= 0:
        raise ValueError(f"variance must be positive, got {s}")
    x = np.asarray(x, dtype=float)
    z = (np.atleast_1d(x)[:, None] - alpha.atoms[None, :]) / np.sqrt(s)
    out = ndtr(z) @ alpha.weights
    return float(out[0]) if x.ndim == 0 else out


def smoothed_sf(alpha: GridMeasure, s: float, x):
    """Survival function of the same mixture, accurate deep in the upper tail."""
    if s <= 0:
        raise ValueError(f"variance must be positive, got {s}")
    x = np.asarray(x, dtype=float)
    z = (alpha.atoms[None, :] - np.atleast_1d(x)[:, None]) / np.sqrt(s)
    out = ndtr(z) @ alpha.weights
    return float(out[0]) if x.ndim == 0 else out


def _mixture_pdf(alpha: GridMeasure, s: float, x: np.ndarray) -> np.ndarray:
    z = (x[:, None] - alpha.atoms[None, :]) / np.sqrt(s)
    return (np.exp(-z * z / 2.0) / np.sqrt(2.0 * np.pi * s)) @ alpha.weights


def invert_increasing(f, fprime, targets, lo, hi, tol: float, max_iter: int = 200,
                      x0=None):
    """Solve f(x) = target componentwise for a smooth increasing vectorized f.

    Newton steps guarded by a maintained bracket; falls back to bisection
    whenever the step leaves the bracket or the derivative degenerates.
    Brackets must be valid on entry: f(lo) <= target <= f(hi). A warm start
    x0 (clipped into the bracket) makes repeated nearby solves near-free.
    """
    targets = np.asarray(targets, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), targets.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), targets.shape).copy()
    if x0 is None:
        x = 0.5 * (lo + hi)
    else:
        x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    err = None
    for _ in range(max_iter):
        fx = f(x)
        err = fx - targets
        if np.all(np.abs(err) <= tol):
            return x
        hi = np.where(err >= 0, x, hi)
        lo = np.where(err <= 0, x, lo)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = err / fprime(x)
            cand = x - step
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        x = np.where(bad, 0.5 * (lo + hi), cand)
    worst = float(np.max(np.abs(err)))
    if worst > max(tol, 1e-9):
        raise RuntimeError(f"monotone inversion stalled, residual {worst:.3e}")
    return x


def smoothed_quantile(alpha: GridMeasure, s: float, u):
    """Inverse of smoothed_cdf; |smoothed_cdf(result) - u| < 1e-12.

    Upper-tail levels are solved through the survival function so precision
    does not collapse near one.
    """
    u = np.asarray(u, dtype=float)
    uu = np.atleast_1d(u).astype(float)
    if np.any((uu <= 0) | (uu >= 1)):
        raise ValueError("quantile level must lie strictly inside (0, 1)")
    out = np.empty_like(uu)
    lower = uu <= 0.5
    if lower.any():
        out[lower] = _smoothed_quantile_lower(alpha, s, uu[lower])
    if (~lower).any():
        out[~lower] = smoothed_isf(alpha, s, 1.0 - uu[~lower])
    return float(out[0]) if u.ndim == 0 else out


def _moment_matched_guess(alpha: GridMeasure, s: float, z: np.ndarray) -> np.ndarray:
    var = float(alpha.weights @ (alpha.atoms - alpha.mean) ** 2)
    return alpha.mean + np.sqrt(s + var) * z


def _smoothed_quantile_lower(alpha: GridMeasure, s: float, u: np.ndarray,
                             x0=None) -> np.ndarray:
    root = np.sqrt(s)
    z = ndtri(u)
    lo = alpha.atoms[0] + root * z
    hi = alpha.atoms[-1] + root * z
    if x0 is None:
        x0 = _moment_matched_guess(alpha, s, z)
    return invert_increasing(
        lambda x: smoothed_cdf(alpha, s, x),
        lambda x: _mixture_pdf(alpha, s, x),
        u, lo, hi, tol=1e-13, x0=x0)


def smoothed_isf(alpha: GridMeasure, s: float, tail, x0=None):
    """Point x with mixture survival mass equal to tail (tail in (0, 1))."""
    tail = np.asarray(tail, dtype=float)
    tt = np.atleast_1d(tail).astype(float)
    if np.any((tt <= 0) | (tt >= 1)):
        raise ValueError("tail mass must lie strictly inside (0, 1)")
    root = np.sqrt(s)
    z = ndtri(tt)  # survival tail t at atom a sits at a - sqrt(s)*ndtri(t)
    lo = alpha.atoms[0] - root * z
    hi = alpha.atoms[-1] - root * z
    if x0 is None:
        x0 = _moment_matched_guess(alpha, s, -z)
    out = invert_increasing(
        lambda x: -smoothed_sf(alpha, s, x),
        lambda x: _mixture_pdf(alpha, s, x),
        -tt, lo, hi, tol=1e-13, x0=x0)
    return float(out[0]) if tail.ndim == 0 else out


class MonotoneFn:
    """Nondecreasing real function with declared image bounds.

    Subclasses implement __call__ on arrays. Heat convolution defaults to
    Gauss-Hermite quadrature; subclasses override when an exact form exists.
    """

    lower: float = -np.inf
    upper: float = np.inf

    def __call__(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    def heat_convolve(self, s: float, x, n_nodes: int = DEFAULT_GH_NODES):
        if s < 0:
            raise ValueError(f"variance must be nonnegative, got {s}")
        x = np.asarray(x, dtype=float)
        if s == 0:
            return self(x)
        nodes, weights = gauss_hermite(n_nodes)
        vals = self(np.atleast_1d(x)[:, None] + np.sqrt(s) * nodes[None, :])
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("heat convolution diverged: non-finite integrand value")
        out = vals @ weights
        return float(out[0]) if x.ndim == 0 else out

    def heat_convolve_deriv(self, s: float, x, n_nodes: int = DEFAULT_GH_NODES):
        # integration by parts against the Gaussian puts the derivative on the
        # kernel, so step discontinuities are handled too
        if s <= 0:
            raise ValueError(f"variance must be positive, got {s}")
        x = np.asarray(x, dtype=float)
        nodes, weights = gauss_hermite(n_nodes)
        vals = self(np.atleast_1d(x)[:, None] + np.sqrt(s) * nodes[None, :])
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("heat convolution diverged: non-finite integrand value")
        out = (vals * nodes[None, :]) @ weights / np.sqrt(s)
        return float(out[0]) if x.ndim == 0 else out


class StepFn(MonotoneFn):
    """Right-increasing step function: levels[j] on (thresholds[j-1], thresholds[j]].

    The native solver representation; heat convolution and its derivative are
    exact sums of Gaussian CDF/PDF increments.
    """

    def __init__(self, thresholds, levels):
        t = np.asarray(thresholds, dtype=float)
        y = np.asarray(levels, dtype=float)
        if y.size != t.size + 1:
            raise ValueError("need exactly one more level than thresholds")
        if t.size and np.any(np.diff(t) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        if np.any(np.diff(y) < 0):
            raise ValueError("levels must be nondecreasing")
        self.thresholds = t
        self.levels = y
        self.jumps = np.diff(y)
        self.lower = float(y[0])
        self.upper = float(y[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.thresholds, x, side="left")
        out = self.levels[idx]
        return float(out) if out.ndim == 0 else out

    def heat_convolve(self, s: float, x, n_nodes: int = DEFAULT_GH_NODES,
                      chunk: int = 4096):
        if s < 0:
            raise ValueError(f"variance must be nonnegative, got {s}")
        x = np.asarray(x, dtype=float)
        if s == 0 or self.thresholds.size == 0:
            return self(x)
        xs = np.atleast_1d(x).ravel()
        out = np.empty_like(xs)
        root = np.sqrt(s)
        for i in range(0, xs.size, chunk):
            block = xs[i:i + chunk]
            z = (block[:, None] - self.thresholds[None, :]) / root
            out[i:i + chunk] = self.levels[0] + ndtr(z) @ self.jumps
        out = out.reshape(np.atleast_1d(x).shape)
        return float(out[0]) if x.ndim == 0 else out

    def heat_convolve_deriv(self, s: float, x, n_nodes: int = DEFAULT_GH_NODES,
                            chunk: int = 4096):
        if s <= 0:
            raise ValueError(f"variance must be positive, got {s}")
        x = np.asarray(x, dtype=float)
        xs = np.atleast_1d(x).ravel()
        if self.thresholds.size == 0:
            out = np.zeros_like(xs)
        else:
            out = np.empty_like(xs)
            root = np.sqrt(s)
            for i in range(0, xs.size, chunk):
                block = xs[i:i + chunk]
                z = (block[:, None] - self.thresholds[None, :]) / root
                dens = np.exp(-z * z / 2.0) / np.sqrt(2.0 * np.pi * s)
                out[i:i + chunk] = dens @ self.jumps
        out = out.reshape(np.atleast_1d(x).shape)
        return float(out[0]) if x.ndim == 0 else out


class CallableFn(MonotoneFn):
    """Wraps a vectorized nondecreasing callable, clamping to declared image bounds."""

    def __init__(self, fn, lower: float = -np.inf, upper: float = np.inf):
        self._fn = fn
        self.lower = float(lower)
        self.upper = float(upper)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        vals = np.asarray(self._fn(x), dtype=float)
        if np.isfinite(self.lower) or np.isfinite(self.upper):
            vals = np.clip(vals, self.lower, self.upper)
        return float(vals) if vals.ndim == 0 else vals


class TableFn(MonotoneFn):
    """Monotone linear interpolation of a table, constant beyond its ends."""

    def __init__(self, xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if np.any(np.diff(xs) <= 0):
            raise ValueError("table abscissae must be strictly increasing")
        if np.any(np.diff(ys) < 0):
            raise ValueError("table values must be nondecreasing")
        self.xs = xs
        self.ys = ys
        self.lower = float(ys[0])
        self.upper = float(ys[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.xs, self.ys)
        return float(out) if out.ndim == 0 else out


def heat_convolve(fn: MonotoneFn, s: float, x, n_nodes: int = DEFAULT_GH_NODES):
    """(fn * gamma_s)(x): Gaussian smoothing of a monotone function."""
    return fn.heat_convolve(s, x, n_nodes)


def heat_convolve_deriv(fn: MonotoneFn, s: float, x, n_nodes: int = DEFAULT_GH_NODES):
    """Spatial derivative of the Gaussian smoothing; nonnegative for monotone fn."""
    return fn.heat_convolve_deriv(s, x, n_nodes)
