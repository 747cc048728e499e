import numpy as np
import pytest
from pydantic import ValidationError

from core.measures import Sample
from core.time_functions import SampledCurve
from src.coefficients import (
    GrowthProfile,
    HoelderProfile,
    LipschitzProfile,
    PowerEnvelope,
    c_p,
    check_envelope,
    envelope_curve,
    gamma_delta_hoelder,
    gamma_lipschitz,
    gamma_pq,
    growth_coeffs,
    lyapunov_from_envelope,
    picard_coefficients,
    product_bracket,
    product_bracket_bound,
)


def lipschitz_as_hoelder(profile: LipschitzProfile) -> HoelderProfile:
    return HoelderProfile(
        alpha=[1.0, 0.0],
        beta=[0.0, 1.0],
        eta=[profile.eta1, profile.eta2],
        eta_hat=[profile.etahat1, profile.etahat2],
        p=profile.p,
        c_pP=profile.c_pP,
    )


class TestStabilityCoefficients:
    def test_c_p(self):
        assert c_p(2) == 0.5
        assert c_p(4) == 1.5

    def test_geometric_model(self):
        profile = LipschitzProfile(eta1=-1.0, etahat1=0.5, p=4)
        assert gamma_lipschitz(profile, 0.0) == pytest.approx(-2.5)

    def test_hoelder_reduction_matches_lipschitz(self, rng):
        for _ in range(100):
            profile = LipschitzProfile(
                eta1=float(rng.normal()),
                eta2=float(rng.uniform(0, 2)),
                etahat1=float(rng.uniform(0, 2)),
                etahat2=float(rng.uniform(0, 2)),
                p=float(rng.uniform(2, 6)),
                c_pP=float(rng.uniform(0.5, 2)),
            )
            gamma, delta = gamma_delta_hoelder(lipschitz_as_hoelder(profile), 0.3)
            assert gamma == pytest.approx(gamma_lipschitz(profile, 0.3), rel=1e-12, abs=1e-12)
            assert delta == 0.0

    def test_delta_appears_below_unit_order(self):
        profile = HoelderProfile(alpha=[0.5], beta=[0.0], eta=[1.0], eta_hat=[0.0], p=2)
        gamma, delta = gamma_delta_hoelder(profile, 1.0)
        assert gamma == pytest.approx(1.5)
        assert delta == pytest.approx(0.5)

    def test_vectorised_over_time(self):
        profile = LipschitzProfile(eta1={"kind": "power", "exponent": 1.0, "scale": -1.0})
        t = np.array([0.0, 1.0, 2.0])
        assert gamma_lipschitz(profile, t) == pytest.approx(-2.0 * t)

    def test_unit_weights_forced(self):
        with pytest.raises(ValidationError):
            HoelderProfile(alpha=[1.0], beta=[0.0], eta=[1.0], eta_hat=[0.0], zeta=[2.0])

    @pytest.mark.parametrize("alpha, beta", [([0.7], [0.5]), ([1.2], [0.0]), ([], [])])
    def test_exponent_rules(self, alpha, beta):
        with pytest.raises(ValidationError):
            HoelderProfile(alpha=alpha, beta=beta, eta=[0.0] * len(alpha), eta_hat=[0.0] * len(alpha))

    def test_negative_lipschitz_parts_rejected(self):
        with pytest.raises(ValidationError):
            LipschitzProfile(eta1=0.0, eta2=-1.0)

    def test_pathwise_coefficient(self):
        profile = LipschitzProfile(eta1=-1.0, etahat1=0.5, p=2)
        assert gamma_pq(profile, 2, 0.0) == pytest.approx(-2.5)
        with pytest.raises(ValueError):
            gamma_pq(profile, 1.5, 0.0)

    def test_picard_coefficients(self):
        profile = LipschitzProfile(eta1=-1.0, eta2=0.25, p=2)
        gamma, delta = picard_coefficients(profile, 0.0)
        assert gamma == pytest.approx(-1.75)
        assert delta == pytest.approx(0.25)


class TestGrowth:
    def test_affine_growth(self):
        profile = GrowthProfile(
            alpha=[1.0, 0.0, 0.0], beta=[0.0, 1.0, 0.0],
            upsilon=[-1.0, 0.25, 0.0], upsilon_hat=[0.0, 0.0, 1.0], p=2,
        )
        f, g = growth_coeffs(profile, 0.0)
        assert f == pytest.approx(-1.5)
        assert g == pytest.approx(1.0)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            GrowthProfile(alpha=[1.0], beta=[0.0], upsilon=[1.0, 2.0], upsilon_hat=[0.0])


class TestBrackets:
    def test_hoelder_bound_dominates(self, rng):
        for _ in range(20):
            a = Sample(rng.uniform(0, 2, size=200))
            b = Sample(rng.uniform(0, 2, size=200))
            for alpha_j, alpha_k in [(0.0, 0.0), (0.5, 0.25), (1.0, 0.5)]:
                assert product_bracket(a, b, 2, alpha_j, alpha_k) <= product_bracket_bound(
                    a, b, 2, alpha_j, alpha_k
                ) * (1 + 1e-12)

    def test_negative_samples_rejected(self):
        with pytest.raises(ValueError):
            product_bracket(Sample([-1.0]), Sample([1.0]), 2, 0.0, 0.0)


class TestEnvelopes:
    def test_curve_and_check(self):
        env = PowerEnvelope(alpha=[1.0], lambda_hat=[-2.5], s=[0.0])
        times = np.linspace(0.0, 1.0, 5)
        assert envelope_curve(env, times) == pytest.approx(np.full(5, -2.5))
        assert check_envelope(SampledCurve(times, np.full(5, -2.5)), env).holds
        gamma = np.array([-3.0, -3.0, -2.0, -2.0, -3.0])
        verdict = check_envelope(SampledCurve(times, gamma), env)
        assert not verdict.holds
        assert verdict.t_star == pytest.approx(0.5)

    def test_two_term_envelope(self):
        env = PowerEnvelope(alpha=[0.5, 1.0], lambda_hat=[1.0, -1.0], s=[0.0, 0.0], t1=0.0)
        assert envelope_curve(env, [4.0]) == pytest.approx([0.25 - 1.0])

    def test_lyapunov_exponent(self):
        env = PowerEnvelope(alpha=[1.0], lambda_hat=[-2.5], s=[0.0])
        assert lyapunov_from_envelope(env, 4) == (pytest.approx(-0.625), 1.0)
        assert lyapunov_from_envelope(env) == (-2.5, 1.0)

    @pytest.mark.parametrize(
        "kwargs, rule",
        [
            ({"alpha": [1.0], "lambda_hat": [0.5], "s": [0.0]}, "lambda_hat_l must be negative"),
            ({"alpha": [1.0, 0.5], "lambda_hat": [0.0, -1.0], "s": [0.0, 0.0]}, "strictly increasing"),
            ({"alpha": [1.0], "lambda_hat": [-1.0], "s": [2.0], "t1": 1.0}, "must not exceed t1"),
        ],
    )
    def test_rules_are_named(self, kwargs, rule):
        with pytest.raises(ValidationError, match=rule):
            PowerEnvelope(**kwargs)
