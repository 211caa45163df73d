import math

import numpy as np
import pytest

import walkdp as wd
from walkdp.errors import CalibrationError, WalkDpError


def mu_of(n, q, sdp, scor, lam, clip=1.0):
    return wd.sec_gdp_mu(
        wd.SecParams(
            n=n, q=q, delta_grad=clip, sigma_dp=sdp, sigma_cor=scor,
            lambda_laplacian=lam,
        )
    )


class TestMu:
    def test_full_collusion_reduces_to_local(self):
        assert mu_of(4, 3, 2.0, 7.0, 2.0) == 0.5

    def test_infinite_correlated_noise_limit(self):
        got = mu_of(4, 0, 2.0, 1e8, 2.0)
        want = 1.0 / (math.sqrt(4) * 2.0)
        assert abs(got - want) < 1e-6

    def test_k2_plugin(self):
        lam = wd.laplacian_fiedler(wd.GraphSpec(n=2, edges=((0, 1),)))
        assert lam == pytest.approx(2.0)
        sdp, scor = 1.3, 0.8
        want = math.sqrt(1.0 / (2 * sdp**2) + 0.5 / (sdp**2 + 2 * scor**2))
        assert mu_of(2, 0, sdp, scor, lam) == pytest.approx(want, rel=1e-12)

    def test_decreasing_in_correlated_noise(self):
        vals = [mu_of(8, 2, 1.0, s, 1.5) for s in (0.0, 0.5, 1.0, 2.0, 8.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_independent_of_correlated_noise_at_full_collusion(self):
        assert mu_of(8, 7, 1.0, 0.0, 1.5) == mu_of(8, 7, 1.0, 9.0, 1.5)

    def test_increasing_in_collusion(self):
        vals = [mu_of(8, q, 1.0, 1.0, 1.5) for q in (0, 2, 4, 6)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_equal_power_allocation(self):
        # with the algebraic-connectivity eigenvalue, shifting injected power
        # from independent to correlated noise never tightens the bound (the
        # 1/((n-q) s_dp^2) term always grows); the correlated-noise win shows
        # up in calibration instead, where s_cor is free for utility
        for name, q in (("ring:16", 4), ("complete:16", 4)):
            spec = wd.named_graph(name)
            lam = wd.laplacian_fiedler(spec)
            degree = int(spec.degrees()[0])
            power = 4.0
            all_independent = mu_of(16, q, math.sqrt(power), 0.0, lam)
            for frac in (0.25, 0.5, 0.75):
                scor2 = frac * power / (degree + 1.0)
                sdp2 = power - degree * scor2
                mixed = mu_of(16, q, math.sqrt(sdp2), math.sqrt(scor2), lam)
                assert mixed >= all_independent - 1e-12

    def test_validation(self):
        with pytest.raises(WalkDpError):
            wd.SecParams(n=4, q=4, delta_grad=1.0, sigma_dp=1.0, sigma_cor=0.0,
                         lambda_laplacian=1.0)
        with pytest.raises(WalkDpError):
            wd.SecParams(n=4, q=0, delta_grad=1.0, sigma_dp=0.0, sigma_cor=0.0,
                         lambda_laplacian=1.0)


class TestConversion:
    def test_single_round_plain_conversion(self):
        p = wd.SecParams(n=4, q=0, delta_grad=1.0, sigma_dp=1.0, sigma_cor=1.0,
                         lambda_laplacian=2.0)
        out = wd.sec_to_epsdelta(p, 1, 1e-5)
        mu = wd.sec_gdp_mu(p)
        assert out["mu_total"] == mu
        assert out["epsilon_closed_form"] == pytest.approx(wd.gdp_epsilon(mu, 1e-5), rel=1e-9)

    def test_quadrature_rule(self):
        lam = 2.0
        # rounds=4 at mu and rounds=1 at 2mu must agree
        p = wd.SecParams(n=4, q=3, delta_grad=1.0, sigma_dp=2.0, sigma_cor=0.0,
                         lambda_laplacian=lam)
        four = wd.sec_to_epsdelta(p, 4, 1e-5)
        p2 = wd.SecParams(n=4, q=3, delta_grad=1.0, sigma_dp=1.0, sigma_cor=0.0,
                          lambda_laplacian=lam)
        one = wd.sec_to_epsdelta(p2, 1, 1e-5)
        assert four["mu_total"] == pytest.approx(one["mu_total"], rel=1e-12)
        assert four["epsilon_closed_form"] == pytest.approx(one["epsilon_closed_form"], rel=1e-9)

    def test_prv_route_vs_closed_form(self):
        p = wd.SecParams(n=6, q=1, delta_grad=1.0, sigma_dp=0.9, sigma_cor=1.1,
                         lambda_laplacian=1.3)
        out = wd.sec_to_epsdelta(p, 8, 1e-5)
        assert out["epsilon"] == pytest.approx(out["epsilon_closed_form"], abs=1e-4)
        assert out["epsilon"] >= out["epsilon_closed_form"] - 1e-12


class TestCalibration:
    def test_ratio_zero_reduces_to_local(self):
        # the two terms recombine to Delta/sigma regardless of q
        lam = 2.0
        sdp, scor = wd.sec_calibrate(
            n=8, q=2, delta_grad=1.0, lambda_laplacian=lam, rounds=1,
            target_epsilon=2.0, delta=1e-5, cor_ratio=0.0,
        )
        assert scor == 0.0
        p = wd.SecParams(n=8, q=2, delta_grad=1.0, sigma_dp=sdp, sigma_cor=0.0,
                         lambda_laplacian=lam)
        assert wd.sec_gdp_mu(p) == pytest.approx(1.0 / sdp, rel=1e-12)
        assert wd.gdp_epsilon(1.0 / sdp, 1e-5) == pytest.approx(2.0, abs=1e-4)

    def test_larger_ratio_needs_less_independent_noise(self):
        lam = wd.laplacian_fiedler(wd.named_graph("ring:8"))
        sdp0, _ = wd.sec_calibrate(8, 0, 1.0, lam, 4, 3.0, 1e-5, cor_ratio=0.0)
        sdp5, _ = wd.sec_calibrate(8, 0, 1.0, lam, 4, 3.0, 1e-5, cor_ratio=5.0)
        assert sdp5 < sdp0

    def test_ratio_irrelevant_at_full_collusion(self):
        lam = 1.7
        a, _ = wd.sec_calibrate(4, 3, 1.0, lam, 2, 2.0, 1e-5, cor_ratio=0.0)
        b, _ = wd.sec_calibrate(4, 3, 1.0, lam, 2, 2.0, 1e-5, cor_ratio=9.0)
        assert a == pytest.approx(b, rel=1e-6)

    def test_unreachable_target(self):
        with pytest.raises(CalibrationError):
            wd.sec_calibrate(4, 0, 1.0, 2.0, 1, 0.5, 1e-5, cor_ratio=0.0,
                             bracket=(1e-4, 2e-4))
