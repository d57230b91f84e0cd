"""Known-pilot measurement operators and the first-order Doppler linearization.

The observation is y = S R(nu) h + n where block i of S is A_af diag(Pi^{l_i} s)
and R(nu) stacks the Doppler steering vectors r(nu_i). Expanding r around nu~
gives the bilinear model y ~ [A~ + B~ diag(nu - nu~)] h + n.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .afdm import AfdmConfig, build_daft_matrix, daft


def steering(nu: float, n_sub: int):
    """Doppler steering vector r(nu) and its derivative dr/dnu."""
    phase_slope = -2j * np.pi * np.arange(n_sub) / n_sub
    r = np.exp(phase_slope * nu)
    return r, phase_slope * r


def _check_taps(taps, n_sub):
    taps = np.asarray(taps, dtype=int)
    if np.any(taps < 0) or np.any(taps >= n_sub):
        raise ValueError(f"delay taps must lie in [0, {n_sub}), got {taps.tolist()}")
    return taps


def _shifted_pilots(pilot_time, taps):
    # column i is Pi^{l_i} s
    n_sub = len(pilot_time)
    idx = (np.arange(n_sub)[:, None] - np.asarray(taps)[None, :]) % n_sub
    return np.asarray(pilot_time)[idx]


def _steering_matrix(nu, n_sub):
    phase_slope = -2j * np.pi * np.arange(n_sub)[:, None] / n_sub
    r = np.exp(phase_slope * np.asarray(nu, dtype=float)[None, :])
    return r, phase_slope * r


def build_S(pilot_time, delay_taps, cfg: AfdmConfig) -> np.ndarray:
    """Dense S = A_af [diag(Pi^{l_1} s), ..., diag(Pi^{l_L} s)], shape N x (N L)."""
    taps = _check_taps(delay_taps, cfg.n_sub)
    a_af = build_daft_matrix(cfg)
    return np.hstack([a_af * np.roll(pilot_time, int(t))[None, :] for t in taps])


def blk_steering(nu, n_sub):
    """Block-diagonal R(nu), shape (N L) x L."""
    nu = np.atleast_1d(nu)
    out = np.zeros((n_sub * nu.size, nu.size), dtype=complex)
    for i, v in enumerate(nu):
        out[i * n_sub:(i + 1) * n_sub, i] = steering(v, n_sub)[0]
    return out


def sensing_columns(pilot_time, taps, nu, cfg: AfdmConfig) -> np.ndarray:
    """U = S R(nu), one column per path, computed with FFTs."""
    taps = _check_taps(taps, cfg.n_sub)
    nu = np.broadcast_to(np.asarray(nu, dtype=float), taps.shape)
    r, _ = _steering_matrix(nu, cfg.n_sub)
    return daft(_shifted_pilots(pilot_time, taps) * r, cfg)


def sensing_derivative_columns(pilot_time, taps, nu, cfg: AfdmConfig) -> np.ndarray:
    """Column i is d u_i / d nu_i."""
    return _columns_and_derivatives(pilot_time, taps, nu, cfg)[1]


def _columns_and_derivatives(pilot_time, taps, nu, cfg):
    taps = _check_taps(taps, cfg.n_sub)
    nu = np.broadcast_to(np.asarray(nu, dtype=float), taps.shape)
    r, dr = _steering_matrix(nu, cfg.n_sub)
    shifted = _shifted_pilots(pilot_time, taps)
    both = daft(np.hstack([shifted * r, shifted * dr]), cfg)
    return both[:, :taps.size], both[:, taps.size:]


def apply_sensing(pilot_time, taps, nu, h, cfg: AfdmConfig) -> np.ndarray:
    """Noiseless observation S R(nu) h."""
    return sensing_columns(pilot_time, taps, nu, cfg) @ np.asarray(h, dtype=complex)


@dataclass(frozen=True)
class LinearizedModel:
    """Bilinear observation model around the expansion point ``nu~``."""

    a_tilde: np.ndarray
    b_tilde: np.ndarray
    delay_taps: np.ndarray
    expansion_point: np.ndarray
    pilot_time: np.ndarray = field(repr=False)
    cfg: AfdmConfig = field(repr=False)

    @property
    def num_paths(self) -> int:
        return self.a_tilde.shape[1]

    @cached_property
    def s_mat(self) -> np.ndarray:
        return build_S(self.pilot_time, self.delay_taps, self.cfg)

    def delta(self, nu) -> np.ndarray:
        """A~ + B~ diag(nu - nu~)."""
        return self.a_tilde + self.b_tilde * (np.asarray(nu) - self.expansion_point)[None, :]

    def relinearized(self, expansion_point) -> "LinearizedModel":
        return linearized_model(self.pilot_time, self.delay_taps, self.cfg, expansion_point)


def linearized_model(pilot_time, delay_taps, cfg: AfdmConfig, expansion_point=None) -> LinearizedModel:
    """Build A~ and B~ directly with FFTs (no dense S)."""
    taps = _check_taps(delay_taps, cfg.n_sub)
    nu0 = np.zeros(taps.size) if expansion_point is None else np.asarray(expansion_point, float)
    pilot_time = np.asarray(pilot_time, dtype=complex)
    a_tilde, b_tilde = _columns_and_derivatives(pilot_time, taps, nu0, cfg)
    return LinearizedModel(
        a_tilde=a_tilde, b_tilde=b_tilde,
        delay_taps=taps, expansion_point=nu0.copy(), pilot_time=pilot_time, cfg=cfg)


def linearize(s_mat, delay_taps, expansion_point, *, pilot_time=None, cfg=None) -> LinearizedModel:
    """A~ = S A and B~ = S B from a dense S."""
    taps = np.asarray(delay_taps, dtype=int)
    nu0 = np.asarray(expansion_point, dtype=float)
    n_sub = s_mat.shape[0]
    if s_mat.shape[1] != n_sub * taps.size or nu0.size != taps.size:
        raise ValueError("S, taps and expansion point have inconsistent sizes")
    a_cols, b_cols = [], []
    for i, v in enumerate(nu0):
        block = s_mat[:, i * n_sub:(i + 1) * n_sub]
        r, dr = steering(v, n_sub)
        a_cols.append(block @ r)
        b_cols.append(block @ dr)
    return LinearizedModel(a_tilde=np.stack(a_cols, axis=1), b_tilde=np.stack(b_cols, axis=1),
                           delay_taps=taps, expansion_point=nu0, pilot_time=pilot_time, cfg=cfg)


def received_power(powers, pilot_time, taps, nu, cfg: AfdmConfig) -> float:
    """Average signal power per sample, (1/N) E_h ||S R(nu) h||^2."""
    u = sensing_columns(pilot_time, taps, nu, cfg)
    return float(np.sum(np.asarray(powers) * np.sum(np.abs(u) ** 2, axis=0)) / cfg.n_sub)


def calibrate_noise(snr_db: float, ps, pilot_time, cfg: AfdmConfig) -> float:
    """Noise variance giving the requested average per-sample SNR for this path geometry."""
    p_rx = received_power(ps.powers, pilot_time, ps.taps, ps.dopplers, cfg)
    return p_rx / 10.0 ** (snr_db / 10.0)
