"""Multipath delay-Doppler channel realizations and received-signal synthesis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .afdm import AfdmConfig, build_daft_matrix, daft, idaft, shift_matrix
from .special import sample_nakagami_gain


@dataclass(frozen=True)
class Path:
    gain: complex
    tap: int
    rel_distance: float
    delay: float
    doppler: float
    angle: float
    power: float
    fading_exp: float


@dataclass(frozen=True)
class PathSet:
    """One channel realization; ``paths[0]`` is the line-of-sight path."""

    paths: tuple[Path, ...]
    d0: float
    shape_m: float
    g0: float
    velocity: float

    @property
    def num_paths(self) -> int:
        return len(self.paths)

    def _col(self, name, dtype=float):
        return np.array([getattr(p, name) for p in self.paths], dtype=dtype)

    @property
    def gains(self) -> np.ndarray:
        return self._col("gain", complex)

    @property
    def taps(self) -> np.ndarray:
        return self._col("tap", int)

    @property
    def dopplers(self) -> np.ndarray:
        return self._col("doppler")

    @property
    def powers(self) -> np.ndarray:
        return self._col("power")

    @property
    def rel_distances(self) -> np.ndarray:
        return self._col("rel_distance")

    @property
    def fading_exps(self) -> np.ndarray:
        return self._col("fading_exp")

    @property
    def angles(self) -> np.ndarray:
        return self._col("angle")


@dataclass(frozen=True)
class ChannelMatrices:
    h_t: np.ndarray
    h_af: np.ndarray
    per_path: list
    band_centers: list


@dataclass(frozen=True)
class Observation:
    y_af: np.ndarray
    noise_var: float
    pilot_affine: np.ndarray
    pilot_time: np.ndarray


def path_power(d0, rel_distance, fading_exp, g0):
    """Mean path power G0 (d0 + d_i)^(-n_i)."""
    return g0 * (np.asarray(d0) + np.asarray(rel_distance)) ** (-np.asarray(fading_exp))


def doppler_shift(velocity, angle, cfg: AfdmConfig):
    """Normalized Doppler v cos(theta) f_c / (c delta_f)."""
    return velocity * np.cos(angle) * cfg.doppler_per_mps


def make_pathset(cfg: AfdmConfig, taps, gains, *, d0=100.0, angles=None, velocity=0.0,
                 dopplers=None, fading_exps=(2.19, 3.19), g0=1.0, shape_m=1.0) -> PathSet:
    """Assemble a PathSet from explicit per-path values.

    Doppler comes from ``dopplers`` when given, otherwise from ``velocity`` and ``angles``.
    ``fading_exps`` is either ``(n_los, n_nlos)`` or one exponent per path.
    """
    taps = np.asarray(taps, dtype=int)
    n_paths = taps.size
    gains = np.broadcast_to(np.asarray(gains, dtype=complex), (n_paths,))
    angles = np.zeros(n_paths) if angles is None else np.asarray(angles, dtype=float)
    if dopplers is None:
        dopplers = doppler_shift(velocity, angles, cfg)
    dopplers = np.broadcast_to(np.asarray(dopplers, dtype=float), (n_paths,))
    exps = np.asarray(fading_exps, dtype=float)
    if exps.size != n_paths:
        exps = np.where(np.arange(n_paths) == 0, exps[0], exps[-1])
    delays = taps / (cfg.n_sub * cfg.delta_f)
    rel = cfg.c_light * delays
    powers = path_power(d0, rel, exps, g0)
    paths = tuple(
        Path(gain=complex(gains[i]), tap=int(taps[i]), rel_distance=float(rel[i]),
             delay=float(delays[i]), doppler=float(dopplers[i]), angle=float(angles[i]),
             power=float(powers[i]), fading_exp=float(exps[i]))
        for i in range(n_paths)
    )
    return PathSet(paths=paths, d0=float(d0), shape_m=float(shape_m), g0=float(g0),
                   velocity=float(velocity))


def generate_paths(scn, rng: np.random.Generator) -> PathSet:
    """Draw a LoS path plus ``num_paths - 1`` NLoS paths on distinct integer taps."""
    cfg = scn.afdm
    n_paths = scn.num_paths
    lo, hi = scn.tap_range
    if n_paths - 1 > hi - lo + 1:
        raise ValueError("not enough distinct taps in tap_range")
    angles = rng.uniform(0.0, 2 * np.pi, size=n_paths)
    nlos = np.sort(rng.choice(np.arange(lo, hi + 1), size=n_paths - 1, replace=False))
    taps = np.concatenate([[0], nlos]).astype(int)
    exps = np.where(np.arange(n_paths) == 0, scn.fading_exps[0], scn.fading_exps[1])
    rel = cfg.tap_spacing_m * taps
    powers = path_power(scn.d0_true, rel, exps, scn.g0)
    gains = np.array([sample_nakagami_gain(scn.shape_m, w, rng) for w in powers])
    return make_pathset(cfg, taps, gains, d0=scn.d0_true, angles=angles,
                        velocity=scn.velocity, fading_exps=exps, g0=scn.g0,
                        shape_m=scn.shape_m)


def random_pilot(n_sub: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-modulus affine-domain pilot with independent uniform phases."""
    return np.exp(2j * np.pi * rng.uniform(size=n_sub))


def doppler_diagonal(nu: float, n_sub: int) -> np.ndarray:
    # leading entry is exp(0) = 1
    return np.exp(-2j * np.pi * nu * np.arange(n_sub) / n_sub)


def build_time_channel(ps: PathSet, cfg: AfdmConfig) -> np.ndarray:
    """H_t = sum_i h_i Delta_{nu_i} Pi^{l_i}."""
    n_sub = cfg.n_sub
    h_t = np.zeros((n_sub, n_sub), dtype=complex)
    for p in ps.paths:
        if not 0 <= p.tap < n_sub:
            raise ValueError(f"tap {p.tap} out of range for N={n_sub}")
        h_t += p.gain * doppler_diagonal(p.doppler, n_sub)[:, None] * shift_matrix(n_sub, p.tap)
    return h_t


def band_center(tap: int, cfg: AfdmConfig) -> int:
    return int(round(2 * cfg.n_sub * cfg.c1 * tap)) % cfg.n_sub


def effective_affine_channel(ps: PathSet, cfg: AfdmConfig) -> ChannelMatrices:
    """Affine-domain channel H_af and its per-path components H_i."""
    a_af = build_daft_matrix(cfg)
    per_path = []
    for p in ps.paths:
        dt = doppler_diagonal(p.doppler, cfg.n_sub)[:, None] * shift_matrix(cfg.n_sub, p.tap)
        per_path.append(a_af @ dt @ a_af.conj().T)
    h_af = sum(p.gain * hi for p, hi in zip(ps.paths, per_path))
    return ChannelMatrices(h_t=build_time_channel(ps, cfg), h_af=h_af, per_path=per_path,
                           band_centers=[band_center(p.tap, cfg) for p in ps.paths])


def noiseless_time_route(ps: PathSet, pilot_time: np.ndarray, cfg: AfdmConfig) -> np.ndarray:
    """A_af H_t s, applying H_t sample by sample."""
    ht_s = np.zeros(cfg.n_sub, dtype=complex)
    for p in ps.paths:
        ht_s += p.gain * doppler_diagonal(p.doppler, cfg.n_sub) * np.roll(pilot_time, p.tap)
    return daft(ht_s, cfg)


def complex_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    """Unit-variance circular complex Gaussian vector."""
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)


def synthesize_received(ps: PathSet, pilot, noise_var: float, cfg: AfdmConfig,
                        rng: np.random.Generator, route: str = "time") -> Observation:
    """y_af = H_af x + n with n ~ CN(0, noise_var I).

    ``route="time"`` goes through H_t; ``route="sensing"`` through S R(nu) h.
    Both consume the rng identically, so the same seed yields the same noise.
    """
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    pilot = np.asarray(pilot, dtype=complex)
    s = idaft(pilot, cfg)
    if route == "time":
        clean = noiseless_time_route(ps, s, cfg)
    elif route == "sensing":
        from .sensing import apply_sensing
        clean = apply_sensing(s, ps.taps, ps.dopplers, ps.gains, cfg)
    else:
        raise ValueError(f"unknown route {route!r}")
    y = clean + np.sqrt(noise_var) * complex_noise(rng, cfg.n_sub)
    return Observation(y_af=y, noise_var=float(noise_var), pilot_affine=pilot, pilot_time=s)
