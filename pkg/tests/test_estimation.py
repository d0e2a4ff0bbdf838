import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from appe.errors import InvalidArgumentError, SingularityError, UncorrectableError
from appe.estimation import (
    alpha_from_eta,
    bias_bound,
    correct_beta,
    estimate,
    f_poly,
    lemma_tail_bound,
    perturbed_beta,
    theta_from_beta,
    variance_check,
)

# reference values below come from 30-digit arithmetic, rounded to double


class TestFrozenValues:
    def test_alpha_from_eta(self):
        assert alpha_from_eta(math.pi / 4, 0.2) == pytest.approx(0.109301376476909792, rel=1e-12)

    def test_f_poly(self):
        assert f_poly(0.2, math.pi / 4) == pytest.approx(0.049336775044854670, rel=1e-12)

    def test_lemma(self):
        assert lemma_tail_bound(0.1, 200, 100) == pytest.approx(0.371539903071873074, rel=1e-12)

    def test_bias_bound(self):
        assert bias_bound(0.2, math.pi / 4, 0.0, 200, 100) == pytest.approx(0.785840274755402526, rel=1e-12)


class TestTheta:
    @pytest.mark.parametrize("beta,theta", [(1.0, 0.0), (0.5, math.pi / 2), (0.0, math.pi)])
    def test_endpoints(self, beta, theta):
        assert theta_from_beta(beta) == pytest.approx(theta)

    def test_clamped(self):
        assert theta_from_beta(1.0 + 1e-12) == 0.0
        assert theta_from_beta(-0.1) == pytest.approx(math.pi)

    @given(st.floats(0.0, math.pi))
    @settings(max_examples=50, deadline=None)
    def test_round_trip(self, theta):
        beta = (1 + math.cos(theta)) / 2
        assert theta_from_beta(beta) == pytest.approx(theta, abs=1e-6)


class TestPerturbation:
    def test_no_flip(self):
        assert perturbed_beta(0.3, 0.0) == 0.3

    def test_always_flip(self):
        assert perturbed_beta(0.3, 1.0) == pytest.approx(0.7)

    def test_half_flip_erases(self):
        assert perturbed_beta(0.9, 0.5) == pytest.approx(0.5)

    @given(st.floats(0.0, 1.0), st.floats(0.0, 0.49))
    @settings(max_examples=100, deadline=None)
    def test_correction_inverts(self, beta, alpha):
        b, clamped = correct_beta(perturbed_beta(beta, alpha), alpha)
        assert b == pytest.approx(beta, abs=1e-9) and not clamped

    def test_correction_clamps(self):
        b, clamped = correct_beta(0.02, 0.1)
        assert b == 0.0 and clamped

    def test_uncorrectable(self):
        with pytest.raises(UncorrectableError):
            correct_beta(0.5, 0.5)

    @given(st.floats(0.05, 1.4), st.floats(0.0, 0.3))
    @settings(max_examples=100, deadline=None)
    def test_alpha_shifts_theta_by_eta(self, theta, eta):
        # the flip rate alpha(eta) moves acos(2 beta - 1) from theta to theta + eta
        if theta + eta >= math.pi:
            return
        beta = (1 + math.cos(theta)) / 2
        shifted = theta_from_beta(perturbed_beta(beta, alpha_from_eta(theta, eta)))
        assert shifted == pytest.approx(theta + eta, abs=1e-7)

    def test_alpha_singular(self):
        with pytest.raises(SingularityError):
            alpha_from_eta(math.pi / 2, 0.1)


class TestBounds:
    def test_lemma_domain(self):
        for L, k in [(10, 0), (10, 10), (10, 11)]:
            with pytest.raises(InvalidArgumentError):
                lemma_tail_bound(0.1, L, k)

    def test_lemma_nonpositive_omega(self):
        assert lemma_tail_bound(0.0, 100, 50) == 1.0
        assert lemma_tail_bound(-0.2, 100, 50) == 1.0

    def test_lemma_decreasing_in_omega(self):
        vals = [lemma_tail_bound(w, 500, 250) for w in np.linspace(0.01, 0.5, 20)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_bias_trivial_when_delta_covers_f(self):
        assert bias_bound(0.2, math.pi / 4, 0.06, 200, 100) == 1.0

    def test_bias_zero_eta(self):
        assert bias_bound(0.0, 1.0, 0.0, 200, 100) == 1.0

    def test_f_poly_linear_in_eta(self):
        assert f_poly(0.4, 0.7) == pytest.approx(2 * f_poly(0.2, 0.7))


class TestVariance:
    def test_needs_two(self):
        with pytest.raises(InvalidArgumentError):
            variance_check([1.0])

    def test_prediction(self):
        var, pred = variance_check([0.0, 2.0], nu=4)
        assert var == 2.0 and pred == 0.25


class TestEstimate:
    def test_honest_counts(self):
        chi = np.array([0, 0, 1, 0])
        rep = estimate(chi, np.zeros(4, dtype=np.uint8), 8)
        assert rep.beta_hat == 0.75 and rep.delta_hat == 0.0
        assert rep.theta_hat == pytest.approx(math.acos(0.5))
        assert rep.variance_pred == 0.25 and rep.ci_halfwidth == 2.0
        assert len(rep.bias_bound_curve) == 11 and not rep.aborted

    def test_delta_threshold_abort(self):
        rep = estimate(np.zeros(4), np.array([1, 1, 0, 0]), 8, delta_threshold=0.25)
        assert rep.abort_reason == "delta-threshold" and rep.aborted

    def test_no_pe_rounds(self):
        rep = estimate(np.array([]), np.zeros(4), 4)
        assert rep.beta_hat is None and "no-pe-rounds" in rep.flags

    def test_no_pv_rounds(self):
        rep = estimate(np.zeros(4), np.array([]), 4)
        assert rep.delta_hat == 0.0 and "bias-bound-undefined" in rep.flags

    def test_correction_applied(self):
        chi = np.array([0] * 70 + [1] * 30)
        gamma = np.array([1] * 10 + [0] * 90)
        rep = estimate(chi, gamma, 200, correct=True)
        assert rep.corrected_beta == pytest.approx((0.7 - 0.1) / 0.8)
        assert rep.theta_hat == pytest.approx(theta_from_beta(0.75))

    def test_correction_uncorrectable_flagged(self):
        rep = estimate(np.zeros(4), np.array([1, 1, 1, 0]), 8, correct=True, delta_threshold=1.0)
        assert "uncorrectable" in rep.flags and rep.beta_used == rep.beta_hat

    def test_to_dict(self):
        d = estimate(np.zeros(4), np.zeros(4), 8).to_dict()
        assert d["beta_hat"] == 1.0 and d["abort_reason"] is None
