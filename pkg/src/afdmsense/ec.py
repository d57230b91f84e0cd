"""Expectation-consistent approximation of the path-gain posterior.

Two beliefs share the Gaussian family with natural parameters (eta, Lambda)
per component, q(h_i) ~ exp(-Lambda_i |h_i|^2 + 2 Re(eta_i^* h_i)), i.e. mean
eta/Lambda and variance 1/Lambda:

* r(h): Gaussian likelihood of the linearized model times the r-site;
* s(h): Nakagami-m prior times the s-site.

Site updates alternate until the matched Gaussian q stops moving. All
quantities here are expected in units where the noise variance is 1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .special import kummer_log_derivative

PRECISION_MIN = 1e-8
PRECISION_MAX = 1e8


@dataclass(frozen=True)
class EcState:
    eta_r: np.ndarray
    eta_s: np.ndarray
    eta_q: np.ndarray
    lambda_r: np.ndarray
    lambda_s: np.ndarray
    lambda_q: np.ndarray
    mu: np.ndarray | None = None
    sigma: np.ndarray | None = None
    s_mean: np.ndarray | None = None
    s_second: np.ndarray | None = None
    clamp_count: int = 0
    iterations: int = 0
    converged: bool = False
    fixed_point_residual: float = np.nan

    @classmethod
    def initial(cls, num_paths: int, precision: float = 1.0) -> "EcState":
        """Both sites start at Lambda = ``precision``, eta = 0."""
        lam = np.full(num_paths, float(precision))
        eta = np.zeros(num_paths, dtype=complex)
        return cls(eta_r=eta.copy(), eta_s=eta.copy(), eta_q=eta.copy(),
                   lambda_r=lam.copy(), lambda_s=lam.copy(), lambda_q=2 * lam)

    @property
    def q_mean(self) -> np.ndarray:
        return self.eta_q / self.lambda_q

    @property
    def q_var(self) -> np.ndarray:
        return 1.0 / self.lambda_q


def gaussian_posterior(gram, proj, lambda_r, eta_r):
    """Mean and covariance of r(h) given Delta^H Delta and Delta^H y (unit noise).

    Site precisions may be negative; the posterior only needs gram + diag(lambda_r)
    to be positive definite.
    """
    prec = gram + np.diag(lambda_r)
    factor = cho_factor(prec, lower=True)
    cov = cho_solve(factor, np.eye(prec.shape[0], dtype=complex))
    cov = 0.5 * (cov + cov.conj().T)
    return cov @ (proj + eta_r), cov


def _safe_posterior(gram, proj, lambda_r, eta_r):
    """Posterior with negative site precisions lifted to PRECISION_MIN if needed."""
    try:
        return gaussian_posterior(gram, proj, lambda_r, eta_r), lambda_r, 0
    except LinAlgError:
        lifted = np.maximum(lambda_r, PRECISION_MIN)
        n_lift = int(np.sum(lifted != lambda_r))
        try:
            return gaussian_posterior(gram, proj, lifted, eta_r), lifted, n_lift
        except LinAlgError:
            prec = gram + np.diag(lifted)
            cov = np.linalg.pinv(prec, hermitian=True)
            return (cov @ (proj + eta_r), cov), lifted, n_lift + 1


def tilted_nakagami_moments(eta, lam, omega, m):
    """Mean, second moment and variance of p_Nakagami(h; omega) exp(-lam |h|^2 + 2 Re(eta^* h)).

    The mean is m Omega eta / (m + lam Omega) * 1F1(m+1;2;xi) / 1F1(m;1;xi) and the
    second moment m Omega / (m + lam Omega) * 1F1(m+1;1;xi) / 1F1(m;1;xi), with
    xi = Omega |eta|^2 / (m + lam Omega). Requires m + lam Omega > 0.
    """
    eta = np.asarray(eta, dtype=complex)
    rate = m / np.asarray(omega, dtype=float) + np.asarray(lam, dtype=float)
    if np.any(rate <= 0):
        raise ValueError("invalid tilt: m + lambda * omega must be positive")
    xi = np.abs(eta) ** 2 / rate
    u, deficit = kummer_log_derivative(m, xi)
    mean = eta * u / rate
    second = (m + xi * u) / rate
    var = (m + xi * u * deficit) / rate
    return mean, second, var


def _clip_precision(lam):
    return np.clip(lam, PRECISION_MIN, PRECISION_MAX)


def _r_step(state: EcState, gram, proj, damping=1.0) -> EcState:
    (mean, cov), lam_r, clamps = _safe_posterior(gram, proj, state.lambda_r, state.eta_r)
    var = np.real(np.diag(cov))
    clamps += int(np.sum((var <= 1.0 / PRECISION_MAX) | (var >= 1.0 / PRECISION_MIN)))
    lam_q = _clip_precision(1.0 / np.maximum(var, 1e-300))
    eta_q = lam_q * mean
    lam_s = damping * (lam_q - lam_r) + (1 - damping) * state.lambda_s
    eta_s = damping * (eta_q - state.eta_r) + (1 - damping) * state.eta_s
    return replace(state, lambda_r=lam_r, lambda_s=lam_s, eta_s=eta_s,
                   lambda_q=lam_r + lam_s, eta_q=state.eta_r + eta_s,
                   mu=mean, sigma=cov, clamp_count=state.clamp_count + clamps)


def _s_step(state: EcState, omega, m, damping=1.0) -> EcState:
    omega = np.asarray(omega, dtype=float)
    valid = m + state.lambda_s * omega > 0
    lam_r = state.lambda_r.copy()
    eta_r = state.eta_r.copy()
    s_mean = np.full(lam_r.shape, np.nan + 0j)
    s_second = np.full(lam_r.shape, np.nan)
    clamps = int(np.sum(~valid))
    if valid.any():
        mean, second, var = tilted_nakagami_moments(state.eta_s[valid], state.lambda_s[valid],
                                                    omega[valid], m)
        s_mean[valid], s_second[valid] = mean, second
        lam_q = 1.0 / np.clip(var, 1.0 / PRECISION_MAX, 1.0 / PRECISION_MIN)
        clamps += int(np.sum((var < 1.0 / PRECISION_MAX) | (var > 1.0 / PRECISION_MIN)))
        eta_q = lam_q * mean
        new_lam_r = damping * (lam_q - state.lambda_s[valid]) + (1 - damping) * lam_r[valid]
        new_eta_r = damping * (eta_q - state.eta_s[valid]) + (1 - damping) * eta_r[valid]
        # a negative site precision is kept: only lambda_q has to stay positive
        lam_r[valid] = new_lam_r
        eta_r[valid] = new_eta_r
    return replace(state, lambda_r=lam_r, eta_r=eta_r,
                   lambda_q=lam_r + state.lambda_s, eta_q=eta_r + state.eta_s,
                   s_mean=s_mean, s_second=s_second, clamp_count=state.clamp_count + clamps)


def likelihood_terms(delta, y_af, noise_var):
    """(Delta^H Delta / noise_var, Delta^H y / noise_var)."""
    dh = delta.conj().T
    return dh @ delta / noise_var, dh @ y_af / noise_var


def ec_r_step(state: EcState, delta, y_af, noise_var, damping=1.0) -> EcState:
    """Moment-match q to the likelihood-tilted belief, then set the s-site."""
    gram, proj = likelihood_terms(delta, y_af, noise_var)
    return _r_step(state, gram, proj, damping)


def ec_s_step(state: EcState, omega, shape_m, damping=1.0) -> EcState:
    """Moment-match q to the prior-tilted belief, then set the r-site."""
    return _s_step(state, omega, shape_m, damping)


def _natural_vector(state):
    return state.lambda_q


def moment_gap(state: EcState) -> float:
    """Largest relative mismatch between r- and s-belief moments, per component."""
    r_mean = state.mu
    r_second = np.abs(r_mean) ** 2 + np.real(np.diag(state.sigma))
    scale = np.maximum(np.maximum(r_second, state.s_second), 1e-300)
    gap_mean = np.abs(r_mean - state.s_mean) / np.sqrt(scale)
    gap_second = np.abs(r_second - state.s_second) / scale
    return float(np.nanmax(np.maximum(gap_mean, gap_second)))


def ec_loop_terms(init: EcState, gram, proj, omega, shape_m, eps1=1e-3, max_iter=1000,
                  damping=1.0) -> EcState:
    """EC iterations from precomputed likelihood terms (unit noise variance)."""
    state = init
    old = _natural_vector(state)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        state = _r_step(state, gram, proj, damping)
        state = _s_step(state, omega, shape_m, damping)
        new = _natural_vector(state)
        change = np.sum(np.abs(new - old) ** 2) / max(np.sum(np.abs(new) ** 2), 1e-300)
        old = new
        if change < eps1:
            converged = True
            break
    # report the joint Gaussian of the r-belief under the final sites
    (mean, cov), _, _ = _safe_posterior(gram, proj, state.lambda_r, state.eta_r)
    state = replace(state, mu=mean, sigma=cov, iterations=it, converged=converged)
    s_mean, s_second, _ = tilted_nakagami_moments(
        state.eta_s, np.maximum(state.lambda_s, -shape_m / np.asarray(omega) * (1 - 1e-12)),
        omega, shape_m)
    state = replace(state, s_mean=s_mean, s_second=s_second)
    return replace(state, fixed_point_residual=moment_gap(state))


def ec_loop(init: EcState, delta, y_af, noise_var, omega, shape_m, eps1=1e-3, max_iter=1000,
            damping=1.0) -> EcState:
    """Alternate r- and s-steps until ||dlambda_q||^2 / ||lambda_q||^2 < eps1."""
    gram, proj = likelihood_terms(delta, y_af, noise_var)
    return ec_loop_terms(init, gram, proj, omega, shape_m, eps1, max_iter, damping)
