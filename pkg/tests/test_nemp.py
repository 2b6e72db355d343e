import math

import numpy as np
import pytest

from l1cert.bounds import BoundRequest, risk_nemp
from l1cert.errors import BoundVoidError, NotCertifiableError
from l1cert.model import NoiseModel, NuNormParams, SensingMatrix, UncertaintySet, make_rng
from l1cert.nemp import NempConfig, NempState, nemp_init, nemp_run, nemp_step, write_trace
from l1cert.synthesis import ContrastCertificate, omega_star

from conftest import gaussian_matrix, sparse_signal, zero_params


def manual_cert(H, A, gamma_bar, s, omega):
    A = np.asarray(A, dtype=float)
    n = A.shape[1]
    res = np.abs(np.asarray(H).T @ A - np.eye(n)).max(axis=1)
    env = NuNormParams(UncertaintySet.zero(A.shape[0]), NoiseModel(0.0, 0.1), n)
    return ContrastCertificate(H, gamma_bar, s, s * gamma_bar, omega, np.full(n, omega), res, env)


@pytest.fixture(scope="module")
def arithmetic_config():
    # A = I, H = 0.9 I: residuals 0.1 everywhere
    A = SensingMatrix(np.eye(4))
    cert = manual_cert(0.9 * np.eye(4), np.eye(4), 0.1, 2, 0.5)
    return NempConfig(A, cert, 2)


@pytest.fixture(scope="module")
def gauss_setup():
    A = gaussian_matrix(28, 40, 5)
    params = zero_params(A, 0.01, 0.1)
    return A, params, omega_star(A, 0.2, params, s=2)


def good_draw(A, params, cert, rng):
    """Rejection-sample noise in the good event for every column of H."""
    sigma = params.noise.sigma
    thr = params.noise_coef * np.linalg.norm(cert.H, axis=0)
    while True:
        xi = rng.standard_normal(A.m)
        if np.all(np.abs(cert.H.T @ xi) * sigma <= thr):
            return sigma * xi


class TestInit:
    def test_zero(self):
        A = SensingMatrix(np.eye(3))
        cfg = NempConfig(A, manual_cert(np.eye(3), np.eye(3), 0.0, 1, 0.0), 1)
        st = nemp_init(np.zeros(3), cfg)
        assert st.alpha == 0.0 and np.all(st.v == 0) and st.k == 0

    def test_arithmetic(self, arithmetic_config):
        y = np.array([5.0, 3.0, 1.0, 0.0]) / 0.9
        st = nemp_init(y, arithmetic_config)
        assert st.alpha == pytest.approx(11.25, rel=1e-14)

    def test_rejects_s_gamma_at_least_one(self):
        A = SensingMatrix(np.eye(2))
        with pytest.raises(NotCertifiableError):
            NempConfig(A, manual_cert(0.5 * np.eye(2), np.eye(2), 0.5, 2, 0.0), 2)

    def test_alpha0_dominates_l1_on_good_draws(self, gauss_setup):
        A, params, cert = gauss_setup
        cfg = NempConfig(A, cert, 2)
        rng = make_rng(77)
        for _ in range(50):
            x = sparse_signal(rng, 40, 2)
            y = A.entries @ x + good_draw(A, params, cert, rng)
            assert nemp_init(y, cfg).alpha >= np.abs(x).sum()


class TestStep:
    def test_alpha_update(self, arithmetic_config):
        st = NempState(np.zeros(4), 10.0, 3)
        nxt = nemp_step(st, np.zeros(4), arithmetic_config)
        assert nxt.alpha == pytest.approx(6.0, rel=1e-14)
        assert np.all(nxt.v == 0) and nxt.k == 4

    def test_zero_residual_keeps_iterate(self, arithmetic_config):
        v = np.array([1.0, 0.0, -2.0, 0.0])
        y = np.eye(4) @ v
        cfg = NempConfig(SensingMatrix(np.eye(4)), manual_cert(np.eye(4), np.eye(4), 0.0, 2, 0.5), 2)
        nxt = nemp_step(NempState(v, 4.0, 0), y, cfg)
        assert np.array_equal(nxt.v, v)
        assert nxt.alpha == pytest.approx(2 * 2 * 0.5)

    def test_orthonormal_one_step(self):
        Q, _ = np.linalg.qr(make_rng(8).standard_normal((10, 10)))
        A = SensingMatrix(Q)
        cfg = NempConfig(A, manual_cert(Q, Q, 0.0, 3, 0.0), 3)
        x = np.zeros(10)
        x[[1, 4, 7]] = [2.0, -1.0, 0.5]
        y = Q @ x
        v1 = nemp_step(nemp_init(y, cfg), y, cfg)
        np.testing.assert_allclose(v1.v, x, atol=1e-12)
        xh, trace, cb = nemp_run(y, cfg)
        assert cb["t"] == 1 and cb["alpha"] == 0.0
        np.testing.assert_allclose(xh, x, atol=1e-12)


class TestRun:
    def test_closed_form_alpha(self, gauss_setup):
        A, params, cert = gauss_setup
        cfg = NempConfig(A, cert, 2, upsilon=0.1)
        y = A.entries @ sparse_signal(make_rng(1), 40, 2)
        _, trace, cb = nemp_run(y, cfg)
        rate = 2 * 2 * cfg.gamma_bar
        a0, a_inf = trace[0][1], cfg.alpha_inf
        for k, alpha, _ in trace:
            assert abs(alpha - (rate ** k * (a0 - a_inf) + a_inf)) <= 1e-12 * max(1.0, a0)
        assert (cb["alpha"] - a_inf) / a_inf <= cfg.alpha_rel_tol
        assert cb["regime"] == "contractive"

    def test_monotone_contraction(self, gauss_setup):
        A, _, cert = gauss_setup
        cfg = NempConfig(A, cert, 2)
        y = A.entries @ sparse_signal(make_rng(2), 40, 2)
        _, trace, _ = nemp_run(y, cfg)
        alphas = [a for _, a, _ in trace]
        for a, b in zip(alphas, alphas[1:]):
            if a > cfg.alpha_inf:
                assert b < a

    def test_bounds_match_evaluator(self, gauss_setup):
        A, _, cert = gauss_setup
        cfg = NempConfig(A, cert, 2, upsilon=0.05)
        y = A.entries @ sparse_signal(make_rng(3), 40, 2)
        _, _, cb = nemp_run(y, cfg)
        for key, p in (("1", 1.0), ("2", 2.0), ("inf", math.inf)):
            req = BoundRequest("nemp", 2, p, 0.05, nu_H=cfg.omega, gamma_bar=cfg.gamma_bar, t=cb["t"],
                               alpha0=cb["alpha0"])
            assert cb[key] == risk_nemp(req)

    @pytest.mark.parametrize("seed", range(4))
    def test_good_event_properties(self, gauss_setup, seed):
        A, params, cert = gauss_setup
        cfg = NempConfig(A, cert, 2)
        rng = make_rng(seed + 300)
        x = sparse_signal(rng, 40, 2)
        y = A.entries @ x + good_draw(A, params, cert, rng)
        st = nemp_init(y, cfg)
        for _ in range(25):
            prev_alpha = st.alpha
            st = nemp_step(st, y, cfg)
            # every coordinate stays between 0 and x_i
            lo, hi = np.minimum(0, x), np.maximum(0, x)
            assert np.all(st.v >= lo - 1e-12) and np.all(st.v <= hi + 1e-12)
            assert np.abs(st.v - x).sum() <= st.alpha + 1e-12
            # l_inf clause for the iterate produced after thresholding at gamma_bar * alpha_{k-1} + omega
            assert np.abs(st.v - x).max() <= 2 * cfg.gamma_bar * prev_alpha + 2 * cfg.omega + 1e-12

    def test_non_contractive(self):
        A = SensingMatrix(np.eye(3))
        cfg = NempConfig(A, manual_cert(0.4 * np.eye(3), np.eye(3), 0.6, 1, 0.1), 1)
        assert not cfg.contractive and cfg.alpha_inf == math.inf
        _, trace, cb = nemp_run(np.array([1.0, 0.0, 0.0]), cfg)
        assert cb["regime"] == "non-contractive"
        alphas = [a for _, a, _ in trace]
        assert all(b >= a for a, b in zip(alphas, alphas[1:]))
        with pytest.raises(BoundVoidError):
            risk_nemp(BoundRequest("nemp", 1, nu_H=0.1, gamma_bar=0.6, t=1, alpha0=1.0))

    def test_trace_csv(self, gauss_setup, tmp_path):
        A, _, cert = gauss_setup
        cfg = NempConfig(A, cert, 2, max_iters=5)
        _, trace, cb = nemp_run(A.entries @ sparse_signal(make_rng(4), 40, 2, 10.0), cfg)
        assert cb["t"] == 5 and len(trace) == 6
        write_trace(tmp_path / "t.csv", trace)
        rows = (tmp_path / "t.csv").read_text().splitlines()
        assert rows[0] == "k,alpha,l1_change" and len(rows) == 7
        k, a, c = rows[-1].split(",")
        assert int(k) == 5 and float(a) == trace[-1][1]
