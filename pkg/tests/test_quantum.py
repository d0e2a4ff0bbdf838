import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from appe.errors import InvalidArgumentError
from appe.quantum import (
    GATES,
    DensityMatrix,
    PureState,
    apply_local_phase,
    apply_single_qubit_unitary,
    basis_state,
    make_ghz,
    measure_x_subset,
    phase_ghz,
    reduced_density,
    sample_ghz_phase_fastpath,
    trace_distance,
    x_outcome_probabilities,
)

R = 1 / math.sqrt(2)


class TestBitOrder:
    def test_agent_one_is_most_significant(self):
        s = basis_state([1, 0, 0])
        assert s.amplitudes[0b100] == 1

    def test_tensor_axis_matches_agent(self):
        s = basis_state([0, 1, 0])
        assert s.tensor[0, 1, 0] == 1


class TestMakeGhz:
    def test_single_qubit_is_plus(self):
        np.testing.assert_allclose(make_ghz(1).amplitudes, [R, R])

    def test_three_qubits(self):
        a = make_ghz(3).amplitudes
        expected = np.zeros(8)
        expected[0] = expected[7] = R
        np.testing.assert_allclose(a, expected)

    def test_two_qubit_marginal_is_maximally_mixed(self):
        rho = reduced_density(make_ghz(2), [1]).entries
        np.testing.assert_allclose(rho, np.eye(2) / 2, atol=1e-15)

    def test_zero_qubits_rejected(self):
        with pytest.raises(InvalidArgumentError):
            make_ghz(0)

    def test_norm_checked(self):
        with pytest.raises(InvalidArgumentError):
            PureState(1, [1.0, 1.0])


class TestLocalPhase:
    def test_zero_angle_is_identity(self):
        g = make_ghz(3)
        assert apply_local_phase(g, 2, 0.0, 3).allclose(g)

    def test_two_qubit_example(self):
        out = apply_local_phase(make_ghz(2), 1, math.pi / 2, 1)
        np.testing.assert_allclose(out.amplitudes, [R, 0, 0, 1j * R], atol=1e-15)

    def test_all_agents_give_global_phase_on_all_ones(self):
        thetas = [0.3, -1.1, 2.0, 0.7]
        s = make_ghz(4)
        for a, t in enumerate(thetas, start=1):
            s = apply_local_phase(s, a, t, 4)
        assert s.allclose(phase_ghz(4, sum(thetas) / 4))

    def test_agent_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            apply_local_phase(make_ghz(2), 3, 0.1, 1)

    @given(st.permutations(range(4)), st.lists(st.floats(-3, 3), min_size=4, max_size=4))
    @settings(max_examples=30, deadline=None)
    def test_phases_commute(self, order, thetas):
        a = make_ghz(4)
        b = make_ghz(4)
        for i in range(4):
            a = apply_local_phase(a, i + 1, thetas[i], 3)
        for i in order:
            b = apply_local_phase(b, i + 1, thetas[i], 3)
        assert a.allclose(b, atol=1e-12)


class TestSingleQubitUnitary:
    def test_identity(self):
        g = make_ghz(2)
        assert apply_single_qubit_unitary(g, 1, np.eye(2)).allclose(g)

    def test_z_flips_all_ones_sign(self):
        out = apply_single_qubit_unitary(make_ghz(2), 1, GATES["Z"])
        np.testing.assert_allclose(out.amplitudes, [R, 0, 0, -R], atol=1e-15)

    def test_x_moves_weight_to_odd_strings(self):
        out = apply_single_qubit_unitary(make_ghz(2), 1, GATES["X"])
        np.testing.assert_allclose(out.amplitudes, [0, R, R, 0], atol=1e-15)

    def test_non_unitary_rejected(self):
        with pytest.raises(InvalidArgumentError):
            apply_single_qubit_unitary(make_ghz(2), 1, np.array([[1, 1], [0, 1]]))

    @given(st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi), st.integers(1, 4))
    @settings(max_examples=30, deadline=None)
    def test_norm_preserved(self, a, b, agent):
        u = np.array([[math.cos(a), -np.exp(1j * b) * math.sin(a)], [math.sin(a), np.exp(1j * b) * math.cos(a)]])
        out = apply_single_qubit_unitary(phase_ghz(4, 0.4), agent, u)
        assert abs(np.linalg.norm(out.amplitudes) - 1) < 1e-10


class TestMeasurement:
    def test_ghz_full_parity_even(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            bits, residual = measure_x_subset(make_ghz(5), range(1, 6), rng)
            assert bits.parity == 0 and residual is None

    @pytest.mark.parametrize("theta", [0, math.pi / 4, math.pi / 2, 2 * math.pi / 3, math.pi])
    def test_exact_parity_law(self, theta):
        probs = x_outcome_probabilities(phase_ghz(4, theta), range(1, 5))
        even = sum(p for i, p in enumerate(probs) if bin(i).count("1") % 2 == 0)
        assert even == pytest.approx((1 + math.cos(theta)) / 2, abs=1e-12)

    def test_proper_subsets_uniform(self):
        for n in range(2, 7):
            s = phase_ghz(n, 1.3)
            for r in range(1, n):
                for sub in itertools.combinations(range(1, n + 1), r):
                    np.testing.assert_allclose(x_outcome_probabilities(s, sub), 2.0**-r, atol=1e-12)

    def test_residual_closed_form(self):
        rng = np.random.default_rng(3)
        bits, residual = measure_x_subset(phase_ghz(4, 0.0), [1, 2], rng)
        # remaining two qubits hold (|00> + (-1)^h |11>)/sqrt2 with h the measured parity
        sign = -1 if bits.parity else 1
        np.testing.assert_allclose(abs(np.vdot(residual.amplitudes, [R, 0, 0, sign * R])), 1, atol=1e-12)

    def test_parity_law_sampled(self):
        rng = np.random.default_rng(9)
        theta, N = math.pi / 3, 5000
        state = phase_ghz(3, theta)
        even = sum(measure_x_subset(state, [1, 2, 3], rng)[0].parity == 0 for _ in range(N))
        p = (1 + math.cos(theta)) / 2
        assert abs(even / N - p) < 4 * math.sqrt(p * (1 - p) / N)


class TestReducedDensity:
    def test_ghz3_single(self):
        np.testing.assert_allclose(reduced_density(make_ghz(3), [1]).entries, np.eye(2) / 2, atol=1e-15)

    def test_ghz4_pair(self):
        rho = reduced_density(make_ghz(4), [1, 2]).entries
        ref = np.zeros((4, 4))
        ref[0, 0] = ref[3, 3] = 0.5
        np.testing.assert_allclose(rho, ref, atol=1e-15)

    def test_phase_independent(self):
        for theta in np.linspace(0, 2 * math.pi, 7):
            a = reduced_density(phase_ghz(4, theta), [1, 3])
            b = reduced_density(make_ghz(4), [1, 3])
            assert trace_distance(a, b) < 1e-12

    def test_full_set_rejected(self):
        with pytest.raises(InvalidArgumentError):
            reduced_density(make_ghz(2), [1, 2])


class TestTraceDistance:
    def test_self(self):
        rho = make_ghz(2).density()
        assert trace_distance(rho, rho) == pytest.approx(0, abs=1e-15)

    def test_orthogonal(self):
        assert trace_distance(DensityMatrix.diagonal([1, 0]), DensityMatrix.diagonal([0, 1])) == pytest.approx(1)

    def test_diagonal_example(self):
        d = trace_distance(DensityMatrix.diagonal([0.75, 0.25]), DensityMatrix.diagonal([0.5, 0.5]))
        assert d == pytest.approx(0.25, abs=1e-15)

    def test_symmetric(self):
        a, b = DensityMatrix.diagonal([0.9, 0.1]), make_ghz(1).density()
        assert trace_distance(a, b) == pytest.approx(trace_distance(b, a), abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            trace_distance(DensityMatrix.diagonal([1, 0]), DensityMatrix.diagonal([1, 0, 0, 0]))


class TestFastPath:
    def test_zero_phase_even(self):
        out = sample_ghz_phase_fastpath(5, 0.0, np.random.default_rng(0), size=1000)
        assert not np.any(out.sum(axis=1) % 2)

    def test_pi_phase_odd(self):
        out = sample_ghz_phase_fastpath(5, math.pi, np.random.default_rng(0), size=1000)
        assert np.all(out.sum(axis=1) % 2 == 1)

    def test_single_sample_is_outcome_vector(self):
        out = sample_ghz_phase_fastpath(3, 0.0, np.random.default_rng(0))
        assert len(out) == 3 and out.parity == 0

    @pytest.mark.parametrize("n", [2, 4, 6])
    def test_matches_statevector(self, n):
        phase, N = math.pi / 2, 200_000
        probs = x_outcome_probabilities(phase_ghz(n, phase), range(1, n + 1))
        out = sample_ghz_phase_fastpath(n, phase, np.random.default_rng(n), size=N)
        counts = np.bincount(out @ (1 << np.arange(n - 1, -1, -1)), minlength=2**n)
        assert stats.chisquare(counts, probs * N).pvalue > 0.001
        # total variation within a generous multiple of the sampling scale
        tv = 0.5 * np.abs(counts / N - probs).sum()
        assert tv < 4 * math.sqrt(2**n / N)
