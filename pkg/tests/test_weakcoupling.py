import math

import numpy as np
import pytest
from scipy.integrate import simpson

from thermalizer.hamiltonians import (
    Hamiltonian,
    fermi,
    gibbs_probabilities,
    make_harmonic,
    make_qubit,
    spectral_profile,
)
from thermalizer.weakcoupling import (
    NonErgodicError,
    alpha_tilde_sq,
    build_T,
    build_expected_T,
    detailed_balance_residual,
    error_budget,
    fixed_point,
    i_sinc,
    jerison_steps,
    markov_evolve,
    sinc2,
    spectral_gap,
    split_resonance,
    transition_element,
)


def random_spectrum(rng, n=4, span=2.0):
    return Hamiltonian(np.sort(rng.uniform(0.0, span, n)))


class TestSinc2:
    def test_at_zero(self):
        assert sinc2(0.0) == 1.0

    def test_value_at_two(self):
        assert sinc2(2.0) == pytest.approx((math.sin(2.0) / 2.0) ** 2, rel=1e-14)
        assert sinc2(2.0) <= 4.0 / 16.0  # envelope bound at delta_min*t = 4

    def test_small_argument_series(self):
        for x in (1e-5, 1e-6, -3e-5):
            assert sinc2(x) == pytest.approx(1 - x * x / 3, abs=1e-18)

    def test_lower_bound_near_origin(self):
        # 1 - x^2/2 lower bound from the quadratic remainder estimate
        for x in (0.1, 0.5, 1.0):
            assert sinc2(x) >= 1 - 2 * x * x / 2

    def test_envelope_bound(self):
        xs = np.linspace(0.3, 50, 501)
        assert np.all(sinc2(xs) <= 1.0 / xs**2 + 1e-15)

    def test_range(self):
        xs = np.linspace(-30, 30, 1001)
        v = sinc2(xs)
        assert np.all((0 <= v) & (v <= 1.0))


class TestISinc:
    def test_zero_width(self):
        assert i_sinc(0.0) == 0.0

    def test_against_quadrature(self):
        for a in (0.3, 2.0, 7.5, 40.0):
            u = np.linspace(-a, a, 200_001)
            assert i_sinc(a) == pytest.approx(simpson(sinc2(u), x=u), abs=1e-10)

    def test_half_pi_threshold(self):
        assert i_sinc(math.pi / 2) >= 2.43

    def test_large_width_limit(self):
        assert i_sinc(5000.0) == pytest.approx(math.pi, abs=1e-3)


class TestTransitionElement:
    def test_qubit_closed_form(self):
        h = make_qubit(1.0)
        beta, gamma, alpha, t = 2.0, 0.8, 0.05, 6.0
        at2 = alpha_tilde_sq(alpha, t, 2)
        q0 = 1 / (1 + math.exp(-beta * gamma))
        q1 = 1 - q0
        # cooling element 1 -> 0
        expect = at2 * (sinc2(1.0 * t / 2)
                        + q0 * sinc2((1.0 - gamma) * t / 2)
                        + q1 * sinc2((1.0 + gamma) * t / 2))
        assert transition_element(1, 0, h, beta, gamma, alpha, t) == pytest.approx(
            expect, rel=1e-14)

    def test_resonant_large_t(self):
        h = make_qubit(1.0)
        t = 1000.0
        val = transition_element(1, 0, h, 3.0, 1.0, 0.01, t)
        at2 = alpha_tilde_sq(0.01, t, 2)
        q0 = 1 / (1 + math.exp(-3.0))
        # the tuned cooling term dominates: sinc^2(0) = 1
        assert val == pytest.approx(at2 * q0, rel=1e-4)

    def test_infinite_temperature_symmetry(self):
        h = make_qubit(1.0)
        up = transition_element(0, 1, h, 0.0, 1.0, 0.05, 7.0)
        down = transition_element(1, 0, h, 0.0, 1.0, 0.05, 7.0)
        assert up == pytest.approx(down, rel=1e-14)

    def test_diagonal_rejected(self):
        with pytest.raises(ValueError):
            transition_element(1, 1, make_qubit(1.0), 1.0, 1.0, 0.1, 1.0)


class TestResonanceSplit:
    def test_on_plus_off_reconstructs_total(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(2, 5))
            h = random_spectrum(rng, n)
            beta = float(rng.uniform(0, 5))
            gamma = float(rng.uniform(0, 3))
            alpha = float(rng.uniform(0.001, 0.2))
            t = float(rng.uniform(0.5, 30))
            split = split_resonance(h, beta, gamma, alpha, t)
            total = split.on + split.off
            for i in range(n):
                for j in range(n):
                    if i == j:
                        continue
                    expect = transition_element(i, j, h, beta, gamma, alpha, t)
                    assert abs(total[j, i] - expect) <= 1e-14

    def test_harmonic_tuned_gap_structure(self):
        h = make_harmonic(4, 1.0)
        beta, alpha, t = 1.5, 0.02, 9.0
        split = split_resonance(h, beta, 1.0, alpha, t)
        at2 = alpha_tilde_sq(alpha, t, 4)
        q0 = 1 / (1 + math.exp(-beta))
        on = split.on
        for i in range(4):
            for j in range(4):
                if i == j:
                    continue
                if j == i - 1:
                    assert on[j, i] == pytest.approx(at2 * q0, rel=1e-12)
                elif j == i + 1:
                    assert on[j, i] == pytest.approx(at2 * (1 - q0), rel=1e-12)
                else:
                    assert on[j, i] == 0.0

    def test_far_detuned_gamma_gives_empty_on(self):
        h = make_harmonic(3, 1.0)
        split = split_resonance(h, 1.0, 50.0, 0.05, 4.0)
        off_diag = split.on - np.diag(np.diag(split.on))
        assert np.all(off_diag == 0.0)

    def test_off_resonance_trace_norm_bound(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = int(rng.integers(2, 5))
            h = random_spectrum(rng, n)
            alpha = float(rng.uniform(0.001, 0.1))
            t = float(rng.uniform(1.0, 40.0))
            gamma = float(rng.uniform(0, 4))
            beta = float(rng.uniform(0, 4))
            prof = spectral_profile(h)
            split = split_resonance(h, beta, gamma, alpha, t)
            p = rng.dirichlet(np.ones(n))
            out_norm = np.sum(np.abs(split.off @ p))
            assert out_norm <= 8 * alpha**2 / prof.delta_min**2 + 1e-15

    def test_boundary_detuning_stays_off_resonance(self):
        # |difference - gamma| == delta_min means gamma resonates with some
        # other difference; the tie must not leak into the on part
        h = make_qubit(1.0)
        split = split_resonance(h, 1.0, 2.0, 0.05, 3.0)  # |1 - 2| = delta_min = 1
        off_diag = split.on - np.diag(np.diag(split.on))
        assert np.all(off_diag == 0.0)


class TestBuildT:
    def test_qubit_markov_matrix(self):
        h = make_qubit(1.0)
        beta, gamma, alpha, t = 2.0, 0.9, 0.05, 5.0
        gen = build_T(h, beta, gamma, alpha, t)
        at2 = alpha_tilde_sq(alpha, t, 2)
        s = sinc2((1.0 - gamma) * t / 2)
        q0 = 1 / (1 + math.exp(-beta * gamma))
        expect = at2 * s * q0 * np.array([
            [-math.exp(-beta * gamma), 1.0],
            [math.exp(-beta * gamma), -1.0],
        ])
        assert np.max(np.abs(gen.matrix - expect)) <= 1e-15

    def test_column_sums_zero(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            h = random_spectrum(rng, int(rng.integers(2, 6)))
            gen = build_T(h, float(rng.uniform(0, 6)), float(rng.uniform(0, 3)),
                          0.05, float(rng.uniform(1, 20)))
            assert np.max(np.abs(gen.matrix.sum(axis=0))) <= 1e-12

    def test_step_matrix_column_stochastic(self):
        h = make_harmonic(4, 1.0)
        gen = build_T(h, 2.0, 1.0, 0.05, 10.0)
        m = gen.step_matrix
        assert np.all(m >= 0)
        assert np.max(np.abs(m.sum(axis=0) - 1)) <= 1e-12
        off = gen.matrix - np.diag(np.diag(gen.matrix))
        assert np.all((off >= 0) & (off <= 1))

    def test_zero_temperature_upper_triangular(self):
        gen = build_T(make_harmonic(5, 1.0), math.inf, 1.0, 0.04, 8.0)
        assert np.max(np.abs(np.tril(gen.matrix, k=-1))) <= 1e-14

    def test_zero_temperature_harmonic_bidiagonal(self):
        at2 = alpha_tilde_sq(0.04, 8.0, 5)
        gen = build_T(make_harmonic(5, 1.0), math.inf, 1.0, 0.04, 8.0)
        expect = np.zeros((5, 5))
        for i in range(1, 5):
            expect[i - 1, i] = at2
            expect[i, i] = -at2
        assert np.max(np.abs(gen.matrix - expect)) <= 1e-15


def simpson_window_entry(d_signed, beta, t, delta_min, h_norm, n_pts=1_000_001):
    """Composite-Simpson oracle for one uniform-window element."""
    d_abs = abs(d_signed)
    lo_g = max(0.0, d_abs - delta_min)
    hi_g = min(4.0 * h_norm, d_abs + delta_min)
    u_lo = (d_abs - hi_g) * t / 2.0
    u_hi = (d_abs - lo_g) * t / 2.0
    u = np.linspace(u_lo, u_hi, n_pts)
    sign = 1.0 if d_signed > 0 else -1.0
    y = sinc2(u) * fermi(beta, sign * (d_abs - 2.0 * u / t))
    return (2.0 / (t * 4.0 * h_norm)) * simpson(y, x=u)


class TestExpectedT:
    def test_uniform_window_against_simpson_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(3, 5))
            h = random_spectrum(rng, n)
            beta = float(rng.uniform(0.2, 4.0))
            alpha = 0.05
            t = float(rng.uniform(2.0, 40.0))
            prof = spectral_profile(h)
            gen = build_expected_T(h, beta, alpha, t, mode="uniform-window")
            at2 = alpha_tilde_sq(alpha, t, n)
            for i in range(n):
                for j in range(n):
                    if i == j:
                        continue
                    oracle = at2 * simpson_window_entry(
                        prof.differences[j, i], beta, t, prof.delta_min,
                        h.spectral_norm)
                    assert abs(gen.matrix[j, i] - oracle) <= 1e-8
                    # same comparison on the O(1) rescaled entries
                    assert abs(gen.matrix[j, i] - oracle) / gen.rate_scale <= 1e-8

    def test_uniform_window_zero_temperature_columns(self):
        h = make_harmonic(4, 1.0)
        t = 11.0
        gen = build_expected_T(h, math.inf, 0.03, t, mode="uniform-window")
        prof = spectral_profile(h)
        expect = gen.rate_scale * i_sinc(prof.delta_min * t / 2.0)
        for i in range(1, 4):
            col = gen.matrix[:i, i]
            assert np.max(np.abs(col - expect)) <= 1e-15
        assert np.max(np.abs(np.tril(gen.matrix, k=-1))) <= 1e-14

    def test_uniform_window_residual_bound(self):
        rng = np.random.default_rng(13)
        alpha = 0.02
        for _ in range(12):
            h = random_spectrum(rng, 4)
            beta = float(rng.choice([0.5, 2.0, 8.0]))
            t = float(rng.uniform(2.0, 25.0))
            prof = spectral_profile(h)
            gen = build_expected_T(h, beta, alpha, t, mode="uniform-window")
            res = detailed_balance_residual(gen, gibbs_probabilities(h, beta))
            bound = alpha**2 * t * math.exp(beta * prof.delta_min) * math.pi / h.spectral_norm
            assert res <= bound

    def test_perfect_knowledge_detailed_balance(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            h = random_spectrum(rng, 4)
            for beta in (0.5, 2.0, 8.0):
                gen = build_expected_T(h, beta, 0.1, 3.0, mode="perfect-knowledge")
                res = detailed_balance_residual(gen, gibbs_probabilities(h, beta))
                assert res <= 1e-12

    def test_perfect_knowledge_zero_temperature_triangular(self):
        rng = np.random.default_rng(19)
        h = random_spectrum(rng, 5)
        gen = build_expected_T(h, math.inf, 0.05, 4.0, mode="perfect-knowledge")
        assert np.max(np.abs(np.tril(gen.matrix, k=-1))) <= 1e-14

    def test_empirical_mode_averages(self):
        h = make_harmonic(3, 1.0)
        draws = np.array([0.9, 1.1, 1.0])
        gen = build_expected_T(h, 1.0, 0.05, 6.0, mode="empirical",
                               gamma_samples=draws)
        acc = sum(build_T(h, 1.0, g, 0.05, 6.0).matrix for g in draws) / 3
        assert np.max(np.abs(gen.matrix - acc)) <= 1e-15

    def test_column_sums_zero_all_modes(self):
        h = make_harmonic(4, 1.0)
        for mode, kw in (("uniform-window", {}), ("perfect-knowledge", {}),
                         ("empirical", {"gamma_samples": np.array([0.5, 1.0])})):
            gen = build_expected_T(h, 1.2, 0.05, 7.0, mode=mode, **kw)
            assert np.max(np.abs(gen.matrix.sum(axis=0))) <= 1e-12


class TestFixedPoint:
    def test_qubit_thermal(self):
        h = make_qubit(1.0)
        beta, gamma = 2.0, 0.7
        gen = build_T(h, beta, gamma, 0.05, 5.0)
        p = fixed_point(gen)
        q0 = 1 / (1 + math.exp(-beta * gamma))
        assert np.max(np.abs(p - [q0, 1 - q0])) <= 1e-12

    @pytest.mark.parametrize("beta", [0.5, 2.0, 8.0])
    @pytest.mark.parametrize("dim", [3, 4, 6])
    def test_harmonic_tuned_gap_gibbs(self, beta, dim):
        h = make_harmonic(dim, 1.0)
        gen = build_T(h, beta, 1.0, 0.03, 12.0)
        p = fixed_point(gen)
        assert np.max(np.abs(p - gibbs_probabilities(h, beta))) <= 1e-12

    def test_zero_temperature_ground_state(self):
        gen = build_T(make_harmonic(4, 1.0), math.inf, 1.0, 0.03, 9.0)
        p = fixed_point(gen)
        assert np.max(np.abs(p - [1, 0, 0, 0])) <= 1e-12

    def test_non_ergodic_detected(self):
        # gamma far off resonance: T = 0, kernel is the whole space
        gen = build_T(make_harmonic(3, 1.0), 1.0, 40.0, 0.05, 5.0)
        with pytest.raises(NonErgodicError):
            fixed_point(gen)


class TestSpectralGap:
    def test_harmonic_zero_temperature(self):
        gen = build_T(make_harmonic(4, 1.0), math.inf, 1.0, 0.04, 10.0)
        gap = spectral_gap(gen)
        assert gap.lambda_tilde == pytest.approx(1.0, abs=1e-12)

    def test_zero_knowledge_zero_temperature(self):
        h = make_harmonic(4, 1.0)
        t = 12.0
        gen = build_expected_T(h, math.inf, 0.03, t, mode="uniform-window")
        gap = spectral_gap(gen)
        expect = i_sinc(spectral_profile(h).delta_min * t / 2.0)
        assert expect >= 2.43  # window wide enough to clear the first lobe
        assert gap.lambda_tilde == pytest.approx(expect, abs=1e-12)

    def test_perfect_knowledge_zero_temperature(self):
        h = make_harmonic(4, 1.0)
        gen = build_expected_T(h, math.inf, 0.05, 6.0, mode="perfect-knowledge")
        gap = spectral_gap(gen)
        prof = spectral_profile(h)
        sums = []
        for i in range(1, 4):
            sums.append(sum(prof.multiplicity(h.eigenvalues[i] - h.eigenvalues[j])
                            for j in range(i)))
        assert gap.lambda_tilde == pytest.approx(min(sums), abs=1e-12)
        assert min(sums) >= 1

    def test_perfect_knowledge_generic_spectrum(self):
        # all differences distinct: every multiplicity is 1, so the minimal
        # column sum is reached at the first excited level
        h = Hamiltonian(np.array([0.0, 0.31, 0.94, 2.17]))
        gen = build_expected_T(h, math.inf, 0.05, 6.0, mode="perfect-knowledge")
        assert spectral_gap(gen).lambda_tilde == pytest.approx(1.0, abs=1e-12)

    def test_physical_gap_qubit(self):
        h = make_qubit(1.0)
        gen = build_T(h, 2.0, 1.0, 0.1, 3.0)
        gap = spectral_gap(gen)
        assert gap.lambda_star == pytest.approx(alpha_tilde_sq(0.1, 3.0, 2), rel=1e-10)


class TestMarkovEvolve:
    def test_zero_steps(self):
        gen = build_T(make_qubit(1.0), 2.0, 1.0, 0.1, 3.0)
        p0 = np.array([0.25, 0.75])
        assert np.allclose(markov_evolve(gen, p0, 0), p0)

    def test_long_run_reaches_fixed_point(self):
        gen = build_T(make_harmonic(3, 1.0), 1.5, 1.0, 0.1, 6.0)
        p = markov_evolve(gen, np.array([0.0, 0.0, 1.0]), 20_000)
        assert np.max(np.abs(p - fixed_point(gen))) <= 1e-8

    def test_rejects_non_probability(self):
        gen = build_T(make_qubit(1.0), 2.0, 1.0, 0.1, 3.0)
        with pytest.raises(ValueError):
            markov_evolve(gen, np.array([0.5, 0.6]), 1)

    @pytest.mark.parametrize("epsilon", [0.1, 0.01])
    def test_jerison_bound_realized(self, epsilon):
        h = make_qubit(1.0)
        gen = build_T(h, 2.0, 1.0, 0.1, 3.0)  # tuned gap: gap = alpha_tilde^2
        gap = spectral_gap(gen).lambda_star
        bound = jerison_steps(2, gap, epsilon)
        pi = fixed_point(gen)
        starts = [np.array([1.0, 0.0]), np.array([0.0, 1.0]),
                  np.array([0.5, 0.5]), np.array([0.9, 0.1])]
        for x in starts:
            p = markov_evolve(gen, x, bound.steps)
            assert np.sum(np.abs(pi - p)) <= epsilon


class TestJerison:
    def test_reference_value(self):
        assert jerison_steps(2, 1.0, 0.5).steps == 14

    def test_halving_gap_more_than_doubles(self):
        for lam in (0.5, 0.1, 0.01):
            l1 = jerison_steps(4, lam, 0.1).steps
            l2 = jerison_steps(4, lam / 2, 0.1).steps
            assert l2 > 2 * l1

    def test_large_n_limit_at_unit_epsilon(self):
        lam = 0.3
        n = 10_000_000
        bound = jerison_steps(n, lam, 1.0)
        expect = (2 * math.log(1 / lam) + 4 * (1 + math.log(2))) / lam
        assert bound.steps / n == pytest.approx(expect, rel=1e-4)

    def test_invalid_gap(self):
        with pytest.raises(ValueError):
            jerison_steps(2, 0.0, 0.1)
        with pytest.raises(ValueError):
            jerison_steps(2, 1.5, 0.1)


class TestErrorBudget:
    def test_zero_coupling(self):
        b = error_budget(0.0, 5.0, 4, 1.0, 100)
        assert b.per_step == 0.0
        assert b.accumulated == 0.0

    def test_cubic_remainder_scaling(self):
        # remainder is cubic in the product alpha*t: halving it cuts the bound 8x
        b1 = error_budget(0.02, 10.0, 4, 1.0, 1)
        b2 = error_budget(0.01, 10.0, 4, 1.0, 1)
        assert b1.remainder_bound / b2.remainder_bound == pytest.approx(8.0, rel=1e-12)

    def test_off_resonance_value(self):
        b = error_budget(0.1, 1.0, 2, 0.5, 1)
        assert b.off_resonance_bound == pytest.approx(8 * 0.01 / 0.25, rel=1e-14)

    def test_qubit_recipe_budget_tracks_epsilon_times_logs(self):
        # accumulated budget for the exact-knowledge qubit recipe scales as
        # C * epsilon * J with a constant C; C is reported, not hidden
        from thermalizer.planner import plan_single_qubit
        ratios = []
        for eps in (0.2, 0.1, 0.05, 0.02):
            plan = plan_single_qubit(1.0, 0.0, 2.0, eps)
            j = (2 * math.log(5.0 / (plan.alpha * plan.t) ** 2)
                 + 4 * (1 + math.log(2)) - 0.5 + math.log(2 / eps))
            ratios.append(plan.budget.accumulated / (eps * j))
        ratios = np.asarray(ratios)
        assert np.max(np.abs(ratios - ratios.mean())) <= 0.02 * ratios.mean()
