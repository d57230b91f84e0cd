"""Gamma and Kummer functions, plus the random primitives behind the fading prior.

Only the parameter ranges the tilted-Nakagami moments need are supported:
``a`` in roughly [0.5, 12], ``b`` in {1, 2}, ``z >= 0``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

# Below this the Kummer series is summed directly; above it the large-z expansion is used.
SERIES_LIMIT = 50.0
_SERIES_TERMS = 200
_ASYMPTOTIC_TERMS = 48


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the stream identified by ``(seed, *key)``.

    Streams with different keys are statistically independent and each one is
    reproducible on its own, so trials can run in any order or process.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def log_gamma(x: float) -> float:
    if x <= 0:
        raise ValueError(f"log_gamma requires x > 0, got {x}")
    return math.lgamma(x)


def _check_params(a, b):
    if b <= 0:
        raise ValueError(f"hyp1f1 requires b > 0, got b={b}")
    if a <= 0:
        raise ValueError(f"hyp1f1 requires a > 0, got a={a}")


def _series_terms(a, b, z):
    # t_k = (a)_k z^k / ((b)_k k!), columns are k = 0.._SERIES_TERMS-1
    k = np.arange(_SERIES_TERMS - 1, dtype=float)
    ratios = (a + k) * z[:, None] / ((b + k) * (k + 1.0))
    terms = np.ones((z.size, _SERIES_TERMS))
    np.cumprod(ratios, axis=1, out=terms[:, 1:])
    return terms


@lru_cache(maxsize=256)
def _asymptotic_coeffs(a: float, b: float) -> np.ndarray:
    # (b-a)_k (1-a)_k / k!
    c = np.empty(_ASYMPTOTIC_TERMS)
    c[0] = 1.0
    for k in range(1, _ASYMPTOTIC_TERMS):
        c[k] = c[k - 1] * (b - a + k - 1) * (1.0 - a + k - 1) / k
    return c


def _asymptotic_sum(coeffs, z):
    k = np.arange(coeffs.size)
    return (coeffs[None, :] * z[:, None] ** (-k[None, :].astype(float))).sum(axis=1)


def log_hyp1f1(a: float, b: float, z):
    """Natural log of the Kummer function 1F1(a; b; z) for ``z >= 0``.

    Works in the log domain so that values like 1F1(11; 1; 700) stay finite.
    """
    _check_params(a, b)
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(z_arr < 0) or not np.all(np.isfinite(z_arr)):
        raise ValueError("hyp1f1 is only implemented for finite z >= 0")
    out = np.empty_like(z_arr)
    small = z_arr <= SERIES_LIMIT
    if small.any():
        out[small] = np.log(_series_terms(a, b, z_arr[small]).sum(axis=1))
    if (~small).any():
        zl = z_arr[~small]
        s = _asymptotic_sum(_asymptotic_coeffs(a, b), zl)
        out[~small] = (math.lgamma(b) - math.lgamma(a) + zl + (a - b) * np.log(zl)
                       + np.log(s))
    return out if np.ndim(z) else float(out[0])


def hyp1f1(a: float, b: float, z):
    """Kummer's confluent hypergeometric function 1F1(a; b; z), z >= 0.

    Raises OverflowError when the value itself is not representable; use
    :func:`log_hyp1f1` or :func:`kummer_log_derivative` in that regime.
    """
    logv = log_hyp1f1(a, b, z)
    if np.any(np.asarray(logv) > np.log(np.finfo(float).max)):
        raise OverflowError(f"1F1({a}; {b}; z) overflows double precision")
    return np.exp(logv)


@lru_cache(maxsize=256)
def _deficit_coeffs(m: float) -> np.ndarray:
    # coefficients of S(z) with 1F1(1-m; 1; -z) ~ z^(m-1) S(z) / Gamma(m)
    return _asymptotic_coeffs(m, 1.0)


def kummer_log_derivative(m: float, z):
    """Logarithmic derivative of F(z) = 1F1(m; 1; z), returned as ``(u, 1 - u)``.

    ``u = F'(z) / F(z) = m * 1F1(m+1; 2; z) / 1F1(m; 1; z)``. The complement
    ``1 - u`` is computed without cancellation, which the posterior variance
    of the tilted Nakagami density relies on when ``z`` is large.
    """
    if m <= 0:
        raise ValueError(f"shape must be positive, got {m}")
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(z_arr < 0):
        raise ValueError("z must be non-negative")
    u = np.empty_like(z_arr)
    deficit = np.empty_like(z_arr)
    small = z_arr <= SERIES_LIMIT
    if small.any():
        zs = z_arr[small]
        t = _series_terms(m, 1.0, zs)
        k = np.arange(_SERIES_TERMS - 1, dtype=float)
        # m * 1F1(m+1; 2; z) term by term: w_k = t_{k+1} (k+1) / z, built without dividing by z
        w_ratios = (m + 1.0 + k[:-1]) * zs[:, None] / ((k[:-1] + 2.0) * (k[:-1] + 1.0))
        w = np.empty((zs.size, _SERIES_TERMS - 1))
        w[:, 0] = m
        np.cumprod(w_ratios, axis=1, out=w[:, 1:])
        w[:, 1:] *= m
        us = w.sum(axis=1) / t.sum(axis=1)
        u[small] = us
        deficit[small] = 1.0 - us
    if (~small).any():
        zl = z_arr[~small]
        c = _deficit_coeffs(m)
        k = np.arange(c.size, dtype=float)
        powers = zl[:, None] ** (-k[None, :])
        s = (c[None, :] * powers).sum(axis=1)
        ds = -(c[None, 1:] * k[None, 1:] * powers[:, 1:]).sum(axis=1) / zl
        # F = e^z G(z), G(z) = 1F1(1-m; 1; -z)  =>  1 - u = -G'/G
        d = -(m - 1.0) / zl - ds / s
        deficit[~small] = d
        u[~small] = 1.0 - d
    if np.ndim(z):
        return u, deficit
    return float(u[0]), float(deficit[0])


def kummer_ratio(m: float, z):
    """1F1(m+1; 2; z) / 1F1(m; 1; z), finite for any z >= 0."""
    u, _ = kummer_log_derivative(m, z)
    return u / m


def kummer_ratio_second(m: float, z):
    """1F1(m+1; 1; z) / 1F1(m; 1; z) via the contiguous relation 1 + z * ratio."""
    return 1.0 + np.asarray(z, dtype=float) * kummer_ratio(m, z)


def sample_nakagami_gain(m: float, omega: float, rng: np.random.Generator, size=None):
    """Complex gain with Nakagami-m magnitude (spread ``omega``) and uniform phase."""
    if m < 0.5:
        raise ValueError(f"Nakagami shape must satisfy m >= 0.5, got {m}")
    if omega <= 0:
        raise ValueError(f"omega must be positive, got {omega}")
    power = rng.gamma(m, omega / m, size=size)
    phase = rng.uniform(-np.pi, np.pi, size=size)
    return np.sqrt(power) * np.exp(1j * phase)
