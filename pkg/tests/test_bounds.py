import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l1cert.bounds import (P_GRID, UNCHECKABLE, BoundRequest, evaluate, nemp_alpha_inf, rip_constants,
                           risk_dantzig, risk_lasso, risk_nemp, risk_penalized, risk_regular)
from l1cert.errors import BoundVoidError, ParameterError

INF = math.inf

REQUESTS = {
    "regular": BoundRequest("regular", 3, kappa=0.15, upsilon=0.4, rho_hat=0.25, nu_H=0.3),
    "penalized": BoundRequest("penalized", 2, kappa=0.2, upsilon=0.1, nu_H=0.5),
    "dantzig": BoundRequest("dantzig", 2, kappa=0.15, upsilon=0.4, lambda_hat=0.7, varrho=0.25, rho=0.3),
    "lasso": BoundRequest("lasso", 2, kappa=0.2, upsilon=0.3, lambda_hat=0.5, varrho=0.1, varkappa=1.0),
    "nemp": BoundRequest("nemp", 2, upsilon=0.25, nu_H=0.5, gamma_bar=0.1, t=5, alpha0=7.0),
}
EVAL = {"regular": risk_regular, "penalized": risk_penalized, "dantzig": risk_dantzig, "lasso": risk_lasso,
        "nemp": risk_nemp}
KAPPA_METHODS = ("regular", "penalized", "dantzig", "lasso")


class TestExamples:
    def test_regular_substitution(self):
        s, w, k = 3, 0.2, 0.1
        r = BoundRequest("regular", s, 1, kappa=k, rho_hat=w, nu_H=w)
        assert risk_regular(r) == pytest.approx(4 * s * w / (1 - 2 * k), rel=1e-14)
        # (2s)^{1/p} is 1 at p = inf, leaving rho_hat + nu_H
        r = BoundRequest("regular", 1, INF, kappa=0.0, rho_hat=0.3, nu_H=0.4)
        assert risk_regular(r) == pytest.approx(0.7, rel=1e-14)

    def test_regular_oracle(self, derived):
        r = REQUESTS["regular"]
        assert abs(risk_regular(r) - derived["regular_s3_k0.15_u0.4_r0.25_n0.3_p1"]) <= 1e-12
        assert abs(risk_regular(r.replace(p=INF)) - derived["regular_s3_k0.15_u0.4_r0.25_n0.3_pinf"]) <= 1e-12

    def test_penalized_oracle(self, derived):
        r = BoundRequest("penalized", 2, 1, kappa=0.2, nu_H=0.5)
        assert abs(risk_penalized(r) - derived["penalized_s2_kappa0.2_nu0.5_p1"]) <= 1e-12
        assert risk_penalized(r) == pytest.approx(4 * 2 * 0.5 / (1 - 0.4), rel=1e-14)

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0, INF])
    def test_penalized_within_factor_two_of_regular(self, p):
        nu = 0.37
        pen = risk_penalized(BoundRequest("penalized", 4, p, kappa=0.1, nu_H=nu))
        reg = risk_regular(BoundRequest("regular", 4, p, kappa=0.1, rho_hat=nu, nu_H=nu))
        assert pen / reg <= 2.0 + 1e-12

    def test_dantzig_oracle(self, derived):
        r = BoundRequest("dantzig", 1, 1, kappa=0.25, lambda_hat=1.0, varrho=1.0)
        assert abs(risk_dantzig(r) - derived["dantzig_s1_lam1_varrho1_k0.25_p1"]) <= 1e-12
        r = REQUESTS["dantzig"].replace(p=2.0)
        assert abs(risk_dantzig(r) - derived["dantzig_s2_lam0.7_rho0.3_varrho0.25_k0.15_u0.4_p2"]) <= 1e-12

    def test_dantzig_small_lambda_limit(self):
        r = BoundRequest("dantzig", 3, 2.0, kappa=0.2, upsilon=0.6, lambda_hat=1e-12, varrho=0.5)
        assert risk_dantzig(r) == pytest.approx(2 * 9 ** 0.5 * 0.6 / (3 * 0.6), rel=1e-9)

    def test_dantzig_rho_default_from_noise(self):
        r = BoundRequest("dantzig", 1, kappa=0.1, lambda_hat=1.0, sigma=0.1, beta=2.0, epsilon=0.05, n=100)
        vr = 0.1 * 2.0 * math.sqrt(2 * math.log(100 / 0.05))
        assert risk_dantzig(r) == pytest.approx(risk_dantzig(r.replace(varrho=vr, sigma=None)), rel=1e-14)
        with pytest.raises(BoundVoidError):
            risk_dantzig(r.replace(rho=0.5 * vr))

    def test_lasso_auto_oracle(self, derived):
        r = BoundRequest("lasso", 3, 1, kappa=0.1, lambda_hat=1.5, varrho=0.2)
        assert abs(risk_lasso(r) - derived["lasso_auto_s3_lam1.5_varrho0.2_k0.1_p1"]) <= 1e-12
        r = BoundRequest("lasso", 1, 1, kappa=0.25, lambda_hat=1.0, varrho=1.0)
        assert abs(risk_lasso(r) - derived["lasso_auto_s1_lam1_varrho1_k0.25_p1"]) <= 1e-12

    def test_lasso_general_oracle(self, derived):
        r = BoundRequest("lasso", 2, 1, upsilon=1 / 3, kappa=0.2, lambda_hat=0.5, varrho=0.1, varkappa=1.0)
        assert abs(risk_lasso(r) - derived["lasso_s2_lam0.5_varrho0.1_k0.2_vk1_u1/3_p1"]) <= 1e-12

    @pytest.mark.parametrize("p", P_GRID)
    def test_lasso_plug_in(self, p):
        r = BoundRequest("lasso", 3, p, upsilon=0.2, kappa=0.15, lambda_hat=0.8, varrho=0.3)
        vk = (1 - 0.3) / (4 * 0.3)
        assert risk_lasso(r) == pytest.approx(risk_lasso(r.replace(varkappa=vk)), rel=1e-14)

    def test_lasso_precondition(self):
        with pytest.raises(BoundVoidError):
            risk_lasso(BoundRequest("lasso", 1, kappa=0.2, lambda_hat=1.0, varrho=1.0, varkappa=0.3))

    def test_rip(self, derived):
        g, f = rip_constants(0.5, 3)
        assert abs(g - derived["rip_gamma_delta0.5_k3"]) <= 1e-14
        assert abs(f - derived["rip_factor_delta0.5"]) <= 1e-14
        assert abs(rip_constants(0.2, 5)[0] - derived["rip_gamma_delta0.2_k5"]) <= 1e-14
        assert rip_constants(0.3, 10 ** 12)[0] < 1e-6
        assert rip_constants(1e-12, 2)[1] == pytest.approx(1.0, abs=1e-11)
        for bad in ((0.0, 3), (1.0, 3), (0.5, 1), (0.5, 2.5)):
            with pytest.raises(ParameterError):
                rip_constants(*bad)

    def test_nemp_oracle(self, derived):
        r = REQUESTS["nemp"]
        assert abs(nemp_alpha_inf(2, 0.1, 0.5, 0.25) - derived["nemp_alpha_inf_s2_g0.1_w0.5_u0.25"]) <= 1e-14
        assert abs(risk_nemp(r) - derived["nemp_bound_s2_g0.1_w0.5_u0.25_a07_t5_p1"]) <= 1e-12
        assert abs(risk_nemp(r.replace(p=INF)) - derived["nemp_bound_s2_g0.1_w0.5_u0.25_a07_t5_pinf"]) <= 1e-12

    def test_nemp_limits(self):
        r = REQUESTS["nemp"]
        a_inf = nemp_alpha_inf(2, 0.1, 0.5, 0.25)
        assert risk_nemp(r.replace(t=None)) == pytest.approx(a_inf, rel=1e-14)
        assert risk_nemp(r.replace(t=200)) == pytest.approx(a_inf, rel=1e-12)
        # s^{1/p}(2 omega + upsilon/s) / (1 - 2 s g) at p = 2
        assert risk_nemp(r.replace(t=None, p=2.0)) == pytest.approx(
            math.sqrt(2) * (2 * 0.5 + 0.25 / 2) / (1 - 0.4), rel=1e-14)
        assert risk_nemp(r.replace(t=0)) == pytest.approx(7.0, rel=1e-14)
        with pytest.raises(BoundVoidError):
            risk_nemp(r.replace(gamma_bar=0.25))


class TestProperties:
    @pytest.mark.parametrize("method", list(REQUESTS))
    def test_interpolation_identity(self, method):
        f = EVAL[method]
        r = REQUESTS[method]
        b1, binf = f(r.replace(p=1.0)), f(r.replace(p=INF))
        for p in (1.3, 2.0, 3.7, 50.0):
            assert abs(f(r.replace(p=p)) - b1 ** (1 / p) * binf ** ((p - 1) / p)) <= 1e-12 * b1

    @pytest.mark.parametrize("method", list(REQUESTS))
    def test_nonincreasing_in_p(self, method):
        f = EVAL[method]
        vals = [f(REQUESTS[method].replace(p=p)) for p in (1.0, 1.5, 2.0, 4.0, 10.0, INF)]
        assert all(b <= a * (1 + 1e-14) for a, b in zip(vals, vals[1:]))

    @settings(max_examples=50, deadline=None)
    @given(method=st.sampled_from(list(REQUESTS)), u1=st.floats(0, 5), du=st.floats(1e-3, 5))
    def test_increasing_in_upsilon(self, method, u1, du):
        f = EVAL[method]
        r = REQUESTS[method]
        assert f(r.replace(upsilon=u1 + du)) > f(r.replace(upsilon=u1))

    @pytest.mark.parametrize("method", KAPPA_METHODS)
    def test_diverges_at_threshold(self, method):
        f = EVAL[method]
        r = REQUESTS[method]
        if method == "lasso":
            r = r.replace(varkappa=None)
        vals = [f(r.replace(kappa=0.5 - d)) for d in (1e-1, 1e-3, 1e-6)]
        assert vals[0] < vals[1] < vals[2] and vals[2] > 1e4 * vals[0]
        with pytest.raises(BoundVoidError, match="bound void"):
            f(r.replace(kappa=0.5))

    def test_lasso_small_penalty_diverges(self):
        r = REQUESTS["lasso"]
        assert risk_lasso(r.replace(varkappa=1e-9)) > 1e8

    def test_nemp_diverges_at_threshold(self):
        r = REQUESTS["nemp"]
        vals = [risk_nemp(r.replace(gamma_bar=0.25 - d, t=None)) for d in (1e-1, 1e-4)]
        assert vals[1] > 100 * vals[0]


class TestPerColumnForms:
    def test_regular_vector_matches_scalar(self):
        # per-column data that are constant reproduce the kappa form
        s, g, w = 2, 0.1, 0.3
        vec = BoundRequest("regular", s, 1, gamma_vec=np.full(10, g), rho_vec=np.full(10, w),
                           nu_vec=np.full(10, w), nu_H=w, rho_hat=w)
        scalar = BoundRequest("regular", s, 1, kappa=s * g, rho_hat=w, nu_H=w)
        assert risk_regular(vec) <= risk_regular(scalar) * (1 + 1e-12)

    def test_penalized_theta_window(self):
        r = BoundRequest("penalized", 2, gamma_vec=np.full(5, 0.1), nu_H=0.2, theta=2.0)
        assert math.isfinite(risk_penalized(r))
        with pytest.raises(BoundVoidError):
            risk_penalized(r.replace(theta=1.1))
        with pytest.raises(ParameterError):
            risk_penalized(BoundRequest("penalized", 2, kappa=0.2, nu_H=0.2, theta=3.0))

    def test_penalized_monotone_in_gamma(self):
        base = BoundRequest("penalized", 2, gamma_vec=np.full(5, 0.05), nu_H=0.2)
        worse = base.replace(gamma_vec=np.full(5, 0.1))
        assert risk_penalized(worse) > risk_penalized(base)


class TestEvaluate:
    def test_dispatch_and_echo(self):
        out = evaluate(REQUESTS["regular"].replace(p=INF))
        assert out["p"] == "inf" and out["flags"] == []
        assert out["inputs"]["kappa"] == 0.15 and "lambda_hat" not in out["inputs"]

    def test_uncheckable_flag(self):
        out = evaluate(BoundRequest("regular_q", 2, 1, kappa=0.1, rho_hat=0.1, nu_H=0.1, q=2.0))
        assert UNCHECKABLE in out["flags"]
        with pytest.raises(BoundVoidError):
            evaluate(BoundRequest("regular_q", 2, 3.0, kappa=0.1, rho_hat=0.1, nu_H=0.1, q=2.0))

    def test_errors(self):
        with pytest.raises(ParameterError):
            evaluate(BoundRequest("nope", 1))
        with pytest.raises(ParameterError):
            BoundRequest("regular", 1, p=0.5)
        with pytest.raises(ParameterError):
            BoundRequest("regular", 0)
        with pytest.raises(ParameterError, match="needs 'nu_H'"):
            risk_regular(BoundRequest("regular", 1, kappa=0.1, rho_hat=0.1))
