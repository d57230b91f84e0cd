"""Fisher information and Cramer-Rao bounds for psi = [d0, nu] with Rayleigh paths.

With m = 1 the gains are circular Gaussian, so y ~ CN(0, Upsilon(psi)) with

    Upsilon = S R(nu) diag(Omega(d0)) R(nu)^H S^H + sigma^2 I.

Every derivative of Upsilon has the form K D K^H with K = [U, dU] (N x 2L),
so traces reduce to 2L x 2L products with M = K^H Upsilon^{-1} K.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .afdm import AfdmConfig
from .sensing import blk_steering, sensing_columns, sensing_derivative_columns, steering


@dataclass(frozen=True)
class CrbInputs:
    """Parameters of the Gaussian observation model.

    Either ``s_mat`` (dense N x NL) or ``pilot_time`` with ``cfg`` must be given;
    the FFT route is used whenever the pilot is available.
    """

    psi: np.ndarray
    taps: np.ndarray
    g0: float
    rel_distances: np.ndarray
    fading_exps: np.ndarray
    noise_var: float
    pilot_time: np.ndarray | None = field(default=None, repr=False)
    cfg: AfdmConfig | None = field(default=None, repr=False)
    s_mat: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=float)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "taps", np.asarray(self.taps, dtype=int))
        n_paths = psi.size - 1
        for name in ("rel_distances", "fading_exps"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n_paths,))
            object.__setattr__(self, name, arr)
        if psi[0] <= 0:
            raise ValueError("d0 must be positive")
        if self.taps.size != n_paths:
            raise ValueError("psi must hold d0 followed by one Doppler per tap")
        if self.noise_var <= 0:
            raise ValueError("noise_var must be positive")
        if self.s_mat is None and (self.pilot_time is None or self.cfg is None):
            raise ValueError("need either s_mat or pilot_time and cfg")
        if self.s_mat is not None and self.s_mat.shape[1] != self.s_mat.shape[0] * n_paths:
            raise ValueError("s_mat width must be N * L")

    @property
    def d0(self) -> float:
        return float(self.psi[0])

    @property
    def nu(self) -> np.ndarray:
        return self.psi[1:]

    @property
    def num_paths(self) -> int:
        return self.psi.size - 1

    @property
    def n_sub(self) -> int:
        return self.s_mat.shape[0] if self.s_mat is not None else self.cfg.n_sub

    def with_psi(self, psi) -> "CrbInputs":
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw["psi"] = np.asarray(psi, dtype=float)
        return CrbInputs(**kw)

    def with_noise(self, noise_var) -> "CrbInputs":
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw["noise_var"] = float(noise_var)
        return CrbInputs(**kw)


def path_powers(inp: CrbInputs):
    """Omega_i(d0) and dOmega_i/dd0."""
    base = inp.d0 + inp.rel_distances
    omega = inp.g0 * base ** (-inp.fading_exps)
    return omega, -inp.fading_exps * omega / base


def columns(inp: CrbInputs):
    """U = S R(nu) and its per-column Doppler derivative."""
    if inp.pilot_time is not None and inp.cfg is not None:
        return (sensing_columns(inp.pilot_time, inp.taps, inp.nu, inp.cfg),
                sensing_derivative_columns(inp.pilot_time, inp.taps, inp.nu, inp.cfg))
    n = inp.n_sub
    u = inp.s_mat @ blk_steering(inp.nu, n)
    du = np.empty_like(u)
    for i, v in enumerate(inp.nu):
        du[:, i] = inp.s_mat[:, i * n:(i + 1) * n] @ steering(v, n)[1]
    return u, du


def build_upsilon(inp: CrbInputs) -> np.ndarray:
    """Covariance of y for Rayleigh paths."""
    u, _ = columns(inp)
    omega, _ = path_powers(inp)
    ups = (u * omega) @ u.conj().T
    ups = 0.5 * (ups + ups.conj().T)
    ups[np.diag_indices_from(ups)] += inp.noise_var
    return ups


def _derivative_cores(inp: CrbInputs):
    """2L x 2L matrices D_p with dUpsilon/dpsi_p = K D_p K^H."""
    n_paths = inp.num_paths
    omega, domega = path_powers(inp)
    cores = np.zeros((n_paths + 1, 2 * n_paths, 2 * n_paths))
    cores[0, np.arange(n_paths), np.arange(n_paths)] = domega
    for i in range(n_paths):
        cores[i + 1, n_paths + i, i] = omega[i]
        cores[i + 1, i, n_paths + i] = omega[i]
    return cores


def upsilon_derivatives(inp: CrbInputs) -> np.ndarray:
    """Dense stack of dUpsilon/dpsi_p, shape (L+1, N, N)."""
    u, du = columns(inp)
    k = np.hstack([u, du])
    return np.stack([k @ d @ k.conj().T for d in _derivative_cores(inp)])


def fim(inp: CrbInputs) -> np.ndarray:
    """Fisher information tr(Upsilon^-1 dUps_p Upsilon^-1 dUps_q), real symmetric."""
    u, du = columns(inp)
    k = np.hstack([u, du])
    chol = cho_factor(build_upsilon(inp), lower=True)
    m = k.conj().T @ cho_solve(chol, k)
    m = 0.5 * (m + m.conj().T)
    cores = _derivative_cores(inp)
    # A_p = D_p M; FIM_pq = tr(A_p A_q)
    a = np.einsum("pij,jk->pik", cores, m)
    out = np.einsum("pij,qji->pq", a, a).real
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class CrbResult:
    crb_d0: float
    crb_nu1: float
    matrix: np.ndarray
    singular: bool

    @property
    def rcrb_d0(self) -> float:
        return float(np.sqrt(self.crb_d0))


def crb(inp: CrbInputs, rcond: float = 1e-12) -> CrbResult:
    """Invert the FIM; a pseudo-inverse is used (and flagged) when it is singular."""
    info = fim(inp)
    # equilibrate first: d0 (meters) and nu live on very different scales
    diag = np.diag(info)
    if np.any(diag <= 0):
        scale = np.ones_like(diag)
    else:
        scale = 1.0 / np.sqrt(diag)
    corr = info * np.outer(scale, scale)
    eig = np.linalg.eigvalsh(corr)
    singular = bool(eig[0] <= rcond * max(eig[-1], np.finfo(float).tiny))
    if singular:
        inv = np.linalg.pinv(corr, rcond=rcond, hermitian=True)
    else:
        inv = np.linalg.inv(corr)
    cov = inv * np.outer(scale, scale)
    cov = 0.5 * (cov + cov.T)
    return CrbResult(crb_d0=float(cov[0, 0]), crb_nu1=float(cov[1, 1]), matrix=cov,
                     singular=singular)


def log_likelihood(y, inp: CrbInputs) -> float:
    """ln CN(y; 0, Upsilon(psi))."""
    ups = build_upsilon(inp)
    chol = cho_factor(ups, lower=True)
    logdet = 2.0 * np.sum(np.log(np.abs(np.diag(chol[0]))))
    quad = np.real(np.vdot(y, cho_solve(chol, y)))
    return float(-inp.n_sub * np.log(np.pi) - logdet - quad)
