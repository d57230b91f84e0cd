import numpy as np
import pytest
from hypothesis import given, strategies as st

from afdmsense.afdm import AfdmConfig, build_daft_matrix, default_c1, idaft
from afdmsense.channel import make_pathset, noiseless_time_route
from afdmsense.crb import (CrbInputs, build_upsilon, columns, crb, fim, log_likelihood,
                           path_powers, upsilon_derivatives)
from afdmsense.harness import scenario_crb
from afdmsense.scenario import ScenarioConfig
from afdmsense.sensing import build_S

from conftest import crandn, random_unit


def _inputs(rng, n_sub=16, n_paths=2, noise_var=0.1, d0=50.0, dense=False, g0=1e4):
    cfg = AfdmConfig(n_sub=n_sub, c1=default_c1(n_sub, 0.5, 1))
    taps = np.r_[0, np.sort(rng.choice(np.arange(1, n_sub // 2), n_paths - 1, replace=False))]
    s = idaft(random_unit(n_sub, rng), cfg)
    rel = 3.0 * taps
    exps = np.where(taps == 0, 2.19, 3.19)
    psi = np.r_[d0, rng.uniform(-0.5, 0.5, n_paths)]
    if dense:
        return CrbInputs(psi, taps, g0, rel, exps, noise_var, s_mat=build_S(s, taps, cfg))
    return CrbInputs(psi, taps, g0, rel, exps, noise_var, pilot_time=s, cfg=cfg)


def _time_route_columns(inp):
    # column i is the noiseless output of path i alone with unit gain
    cols = []
    for tap, nu in zip(inp.taps, inp.nu):
        ps = make_pathset(inp.cfg, [tap], [1.0], dopplers=[nu])
        cols.append(noiseless_time_route(ps, inp.pilot_time, inp.cfg))
    return np.stack(cols, axis=1)


def _fd_derivatives(inp, rel_step=1e-3):
    """Five-point central differences of build_upsilon in every coordinate."""
    out = []
    for p in range(inp.psi.size):
        h = rel_step * (inp.psi[0] if p == 0 else 1.0)
        e = np.zeros(inp.psi.size)
        e[p] = h
        f = [build_upsilon(inp.with_psi(inp.psi + k * e)) for k in (-2, -1, 1, 2)]
        out.append((f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h))
    return out


def _score_samples(inp, ys):
    ups_inv = np.linalg.inv(build_upsilon(inp))
    derivs = _fd_derivatives(inp)
    scores = []
    for d in derivs:
        a = ups_inv @ d @ ups_inv
        quad = np.einsum("ni,ij,nj->n", ys.conj(), a, ys).real
        scores.append(quad - np.trace(ups_inv @ d).real)
    return np.stack(scores, axis=1)


class TestInputs:
    def test_validation(self, rng):
        inp = _inputs(rng)
        with pytest.raises(ValueError):
            inp.with_psi(np.r_[-1.0, inp.nu])
        with pytest.raises(ValueError):
            inp.with_noise(0.0)
        with pytest.raises(ValueError):
            CrbInputs(inp.psi, inp.taps[:1], 1.0, 0.0, 2.0, 1.0, pilot_time=inp.pilot_time,
                      cfg=inp.cfg)
        with pytest.raises(ValueError):
            CrbInputs(inp.psi, inp.taps, 1.0, 0.0, 2.0, 1.0)

    def test_dense_route_matches_fft_route(self, rng):
        inp = _inputs(rng, n_paths=3)
        dense = CrbInputs(inp.psi, inp.taps, inp.g0, inp.rel_distances, inp.fading_exps,
                          inp.noise_var, s_mat=build_S(inp.pilot_time, inp.taps, inp.cfg))
        for a, b in zip(columns(inp), columns(dense)):
            np.testing.assert_allclose(a, b, atol=1e-12)
        np.testing.assert_allclose(fim(inp), fim(dense), rtol=1e-9)


class TestUpsilon:
    def test_vanishing_power(self, rng):
        inp = _inputs(rng, g0=1e-30, noise_var=0.3)
        np.testing.assert_allclose(build_upsilon(inp), 0.3 * np.eye(16), atol=1e-20)

    @given(st.integers(0, 2**31), st.integers(1, 4))
    def test_hermitian_floor(self, seed, n_paths):
        inp = _inputs(np.random.default_rng(seed), n_paths=n_paths, noise_var=0.05)
        ups = build_upsilon(inp)
        np.testing.assert_array_equal(ups, ups.conj().T)
        assert np.min(np.linalg.eigvalsh(ups)) >= 0.05 * (1 - 1e-10)

    def test_single_path_rank_one(self, rng):
        cfg = AfdmConfig(n_sub=16, c1=default_c1(16, 0.5, 1))
        s = idaft(random_unit(16, rng), cfg)
        inp = CrbInputs([40.0, 0.0], [0], 1e3, 0.0, 2.19, 0.2, pilot_time=s, cfg=cfg)
        u = build_daft_matrix(cfg) @ s
        omega = 1e3 * 40.0 ** -2.19
        np.testing.assert_allclose(build_upsilon(inp),
                                   omega * np.outer(u, u.conj()) + 0.2 * np.eye(16), atol=1e-12)

    def test_monte_carlo_covariance(self, rng):
        inp = _inputs(rng, n_paths=3, noise_var=0.2)
        u = _time_route_columns(inp)
        omega, _ = path_powers(inp)
        draws = 10**5
        h = crandn(rng, inp.num_paths, draws) * np.sqrt(omega)[:, None]
        ys = u @ h + np.sqrt(inp.noise_var) * crandn(rng, 16, draws)
        sample = ys @ ys.conj().T / draws
        ups = build_upsilon(inp)
        assert np.linalg.norm(sample - ups) <= 0.03 * np.linalg.norm(ups)

    def test_log_likelihood_matches_density(self, rng):
        inp = _inputs(rng, n_paths=2)
        y = crandn(rng, 16)
        ups = build_upsilon(inp)
        direct = (-16 * np.log(np.pi) - np.log(np.linalg.det(ups).real)
                  - np.real(y.conj() @ np.linalg.solve(ups, y)))
        assert log_likelihood(y, inp) == pytest.approx(direct, rel=1e-10)


class TestFim:
    @given(st.integers(0, 2**31), st.integers(1, 4))
    def test_derivatives_match_finite_differences(self, seed, n_paths):
        inp = _inputs(np.random.default_rng(seed), n_paths=n_paths)
        for exact, fd in zip(upsilon_derivatives(inp), _fd_derivatives(inp)):
            assert np.linalg.norm(exact - fd) <= 1e-6 * np.linalg.norm(exact)

    @given(st.integers(0, 2**31), st.integers(1, 4))
    def test_trace_formula_from_finite_differences(self, seed, n_paths):
        inp = _inputs(np.random.default_rng(seed), n_paths=n_paths)
        ups_inv = np.linalg.inv(build_upsilon(inp))
        d = [ups_inv @ x for x in _fd_derivatives(inp)]
        direct = np.array([[np.trace(a @ b).real for b in d] for a in d])
        np.testing.assert_allclose(fim(inp), direct, rtol=1e-6,
                                   atol=1e-6 * np.max(np.abs(direct)))

    @given(st.integers(0, 2**31), st.integers(1, 5))
    def test_symmetric_psd(self, seed, n_paths):
        info = fim(_inputs(np.random.default_rng(seed), n_paths=n_paths))
        np.testing.assert_array_equal(info, info.T)
        assert np.min(np.linalg.eigvalsh(info)) >= -1e-10 * np.trace(info)

    def test_no_information_without_power(self, rng):
        info = fim(_inputs(rng, g0=1e-30))
        assert np.max(np.abs(info)) < 1e-40

    def test_score_covariance(self, rng):
        inp = _inputs(rng, n_sub=16, n_paths=1, noise_var=0.5)
        ups = build_upsilon(inp)
        chol = np.linalg.cholesky(ups)
        ys = (chol @ crandn(rng, 16, 10**5)).T
        scores = _score_samples(inp, ys)
        empirical = scores.T @ scores / scores.shape[0]
        info = fim(inp)
        scale = 1 / np.sqrt(np.diag(info))
        diff = (empirical - info) * np.outer(scale, scale)
        assert np.linalg.norm(diff) <= 0.05 * np.linalg.norm(info * np.outer(scale, scale))
        # the score has zero mean
        assert np.all(np.abs(scores.mean(axis=0)) * scale < 0.02)


class TestCrb:
    def test_single_path_closed_form(self, rng):
        cfg = AfdmConfig(n_sub=16, c1=default_c1(16, 0.5, 1))
        s = idaft(random_unit(16, rng), cfg)
        d0, nu, g0, n, noise = 40.0, 0.27, 1e3, 2.19, 0.2
        inp = CrbInputs([d0, nu], [0], g0, 0.0, n, noise, pilot_time=s, cfg=cfg)
        # rank-one plus identity: Upsilon^-1 u = u / (noise + omega a)
        k = np.arange(16)
        r = np.exp(-2j * np.pi * k * nu / 16)
        a_af = build_daft_matrix(cfg)
        u = a_af @ (s * r)
        du = a_af @ (s * (-2j * np.pi * k / 16) * r)
        omega = g0 * d0 ** -n
        domega = -n * omega / d0
        aa, b, c = np.vdot(u, u).real, np.vdot(u, du), np.vdot(du, du).real
        den = noise + omega * aa
        alpha, beta = aa / den, b / den
        gam = (c - omega * abs(b) ** 2 / den) / noise
        f_dd = (domega * alpha) ** 2
        f_nn = omega ** 2 * (2 * np.real(beta ** 2) + 2 * alpha * gam)
        f_dn = 2 * domega * omega * alpha * np.real(beta)
        expected = np.array([[f_dd, f_dn], [f_dn, f_nn]])
        np.testing.assert_allclose(fim(inp), expected, rtol=1e-9,
                                   atol=1e-12 * np.sqrt(f_dd * f_nn))
        res = crb(inp)
        assert res.crb_d0 == pytest.approx(f_nn / (f_dd * f_nn - f_dn ** 2), rel=1e-9)
        assert res.crb_nu1 == pytest.approx(f_dd / (f_dd * f_nn - f_dn ** 2), rel=1e-9)
        assert not res.singular

    @given(st.integers(0, 2**31), st.integers(1, 4))
    def test_noise_monotone(self, seed, n_paths):
        inp = _inputs(np.random.default_rng(seed), n_paths=n_paths)
        lo, hi = crb(inp), crb(inp.with_noise(10 * inp.noise_var))
        assert np.all(np.diag(lo.matrix) > 0)
        assert np.all(np.diag(hi.matrix) > np.diag(lo.matrix))

    def test_high_snr_not_flagged(self, rng):
        inp = _inputs(rng, n_paths=3, noise_var=1e-6)
        res = crb(inp)
        assert not res.singular and res.crb_d0 > 0

    def test_singular_flagged(self, rng):
        # identical taps and Dopplers make two paths indistinguishable
        inp = _inputs(rng, n_paths=2)
        twin = CrbInputs(np.r_[inp.d0, 0.1, 0.1], [0, 0], inp.g0, [0.0, 0.0], [2.19, 2.19],
                         inp.noise_var, pilot_time=inp.pilot_time, cfg=inp.cfg)
        res = crb(twin)
        assert res.singular and np.all(np.isfinite(res.matrix))

    def test_rcrb_trends_table_scenario(self):
        table = {}
        for n_paths in (3, 7, 11):
            for snr in (0, 10, 20, 30):
                scn = ScenarioConfig(num_paths=n_paths, snr_db=snr, seed=1, trials=20)
                table[n_paths, snr] = scenario_crb(scn, 20)["rcrb_d0"]
        for n_paths in (3, 7, 11):
            vals = [table[n_paths, s] for s in (0, 10, 20, 30)]
            assert all(a > b for a, b in zip(vals, vals[1:]))
        for snr in (0, 10, 20, 30):
            assert table[3, snr] > table[7, snr] > table[11, snr]
