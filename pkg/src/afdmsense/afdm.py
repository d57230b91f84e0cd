"""AFDM waveform parameters and the discrete affine Fourier transform pair."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SPEED_OF_LIGHT = 3.0e8


@dataclass(frozen=True)
class AfdmConfig:
    """Chirp-multicarrier waveform constants.

    ``c1 = c2 = 0`` gives plain OFDM. ``k_v`` is the Doppler sensitivity
    threshold (half-width of the per-path band in the affine-domain channel).
    """

    n_sub: int
    c1: float
    c2: float = 0.0
    delta_f: float = 15e3
    f_c: float = 90e9
    c_light: float = SPEED_OF_LIGHT
    k_v: int = 1

    def __post_init__(self):
        if int(self.n_sub) != self.n_sub or self.n_sub < 2:
            raise ValueError(f"n_sub must be an integer >= 2, got {self.n_sub}")
        if self.delta_f <= 0 or self.f_c <= 0 or self.c_light <= 0:
            raise ValueError("delta_f, f_c and c_light must be positive")
        if self.k_v < 0:
            raise ValueError("k_v must be non-negative")

    @property
    def tap_spacing_m(self) -> float:
        """Propagation distance covered by one delay tap, c / (N * delta_f)."""
        return self.c_light / (self.n_sub * self.delta_f)

    @property
    def doppler_per_mps(self) -> float:
        """Normalized Doppler produced by 1 m/s of radial velocity."""
        return self.f_c / (self.c_light * self.delta_f)


def default_c1(n_sub: int, nu_max: float, k_v: int) -> float:
    """Resolvability heuristic c1 = (2 (ceil(nu_max) + k_v) + 1) / (2N).

    Makes 2 N c1 an odd integer so that a cyclic prefix behaves like a chirp-periodic one
    for even N.
    """
    return (2 * (math.ceil(abs(nu_max)) + k_v) + 1) / (2 * n_sub)


@lru_cache(maxsize=64)
def _chirp_cached(c: float, n_sub: int) -> np.ndarray:
    n = np.arange(n_sub, dtype=float)
    out = np.exp(-2j * np.pi * np.mod(c * n * n, 1.0))
    out.flags.writeable = False
    return out


def chirp(c: float, n_sub: int) -> np.ndarray:
    """Diagonal of Lambda_c, exp(-j 2 pi c n^2)."""
    return _chirp_cached(float(c), int(n_sub))


def build_daft_matrix(cfg: AfdmConfig) -> np.ndarray:
    """Dense A_af = Lambda_c2 F Lambda_c1 with F the unitary DFT."""
    n_sub = cfg.n_sub
    n = np.arange(n_sub)
    f = np.exp(-2j * np.pi * (np.outer(n, n) % n_sub) / n_sub) / np.sqrt(n_sub)
    return chirp(cfg.c2, n_sub)[:, None] * f * chirp(cfg.c1, n_sub)[None, :]


def _check_len(v, cfg):
    v = np.asarray(v)
    if v.shape[0] != cfg.n_sub:
        raise ValueError(f"expected leading dimension {cfg.n_sub}, got {v.shape[0]}")
    return v


def _bcast(d, v):
    return d.reshape((-1,) + (1,) * (v.ndim - 1))


def daft(s, cfg: AfdmConfig) -> np.ndarray:
    """Time domain -> affine domain, A_af s. Operates along axis 0."""
    s = _check_len(s, cfg)
    inner = np.fft.fft(_bcast(chirp(cfg.c1, cfg.n_sub), s) * s, axis=0, norm="ortho")
    return _bcast(chirp(cfg.c2, cfg.n_sub), s) * inner


def idaft(x, cfg: AfdmConfig) -> np.ndarray:
    """Affine domain -> time domain, A_af^H x. Operates along axis 0."""
    x = _check_len(x, cfg)
    inner = np.fft.ifft(_bcast(chirp(cfg.c2, cfg.n_sub).conj(), x) * x, axis=0, norm="ortho")
    return _bcast(chirp(cfg.c1, cfg.n_sub).conj(), x) * inner


def cyclic_shift(v, tap: int) -> np.ndarray:
    """Pi^l v: entry k of the result is v[(k - l) mod N]."""
    v = np.asarray(v)
    n_sub = v.shape[0]
    if int(tap) != tap or not 0 <= tap <= n_sub:
        raise ValueError(f"tap must be an integer in [0, {n_sub}], got {tap}")
    return np.roll(v, int(tap), axis=0)


def shift_matrix(n_sub: int, tap: int) -> np.ndarray:
    """Permutation matrix Pi^l."""
    return cyclic_shift(np.eye(n_sub), tap)
