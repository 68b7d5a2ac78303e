import math

import numpy as np
import pytest

from thermalizer.planner import (
    InvalidWindowError,
    plan_harmonic,
    plan_perfect_knowledge,
    plan_single_qubit,
    plan_zero_knowledge,
)
from thermalizer.weakcoupling import i_sinc


class TestSingleQubit:
    def test_exact_knowledge_reference_point(self):
        plan = plan_single_qubit(1.0, 0.0, 2.0, 0.04)
        assert plan.t == pytest.approx(5.0, rel=1e-12)
        assert plan.alpha == pytest.approx(1.0 / 125.0, rel=1e-12)

    def test_identity_holds(self):
        for sigma in (0.0, 0.01):
            plan = plan_single_qubit(1.0, sigma, 2.0, 0.05)
            assert plan.alpha * plan.t**3 * (1.0 + sigma) ** 2 == pytest.approx(
                1.0, abs=1e-12)

    def test_window_too_wide_for_roots(self):
        with pytest.raises(InvalidWindowError, match="complex"):
            plan_single_qubit(1.0, 0.5, 2.0, 0.04)

    def test_window_too_wide_for_beta(self):
        # sigma passes the root cap but blows the fixed-point budget
        with pytest.raises(InvalidWindowError, match="beta|fixed point"):
            plan_single_qubit(1.0, 0.05, 40.0, 0.16)

    def test_sigma_zero_always_valid_at_infinite_beta(self):
        plan = plan_single_qubit(1.0, 0.0, math.inf, 0.05)
        assert plan.steps >= 1

    def test_total_time_scaling(self):
        # L*t grows like eps^-2.5 up to logarithmic slack
        lt = []
        for eps in (0.04, 0.01):
            plan = plan_single_qubit(1.0, 0.0, 2.0, eps)
            lt.append(plan.steps * plan.t)
        ratio = lt[1] / lt[0]
        assert 2**5 / 2 <= ratio <= 2**5 * 2

    def test_multiplier_scales_steps(self):
        base = plan_single_qubit(1.0, 0.0, 2.0, 0.05)
        doubled = plan_single_qubit(1.0, 0.0, 2.0, 0.05, multiplier=2.0)
        assert doubled.steps == pytest.approx(2 * base.steps, abs=1.0)

    def test_finite_sigma_uses_smaller_root(self):
        sigma = 0.01
        plan = plan_single_qubit(1.0, sigma, 2.0, 0.05)
        disc = math.sqrt(1 - 2 * sigma**2 / 0.05)
        t_low = math.sqrt(1 - disc) / sigma
        assert plan.t == pytest.approx(t_low, rel=1e-12)
        assert plan.checks["t_sigma_below_sqrt2"]


class TestHarmonic:
    def test_identity(self):
        plan = plan_harmonic(4, 1.0, 2.0, 0.05, lambda_tilde=0.5)
        assert plan.alpha == pytest.approx(1.0 / (4 * plan.t**3), rel=1e-12)

    def test_ground_state_closed_form_gap(self):
        plan = plan_harmonic(4, 1.0, math.inf, 0.05)
        assert plan.lambda_tilde == 1.0
        assert plan.lambda_tilde_source == "closed-form"

    def test_finite_beta_requires_gap(self):
        with pytest.raises(ValueError, match="lambda_tilde"):
            plan_harmonic(4, 1.0, 2.0, 0.05)

    def test_dim2_epsilon_orders_match_qubit(self):
        # L*t in the two-level recipe follows the same eps^-2.5 power
        lt = [plan_harmonic(2, 1.0, math.inf, e).steps
              * plan_harmonic(2, 1.0, math.inf, e).t for e in (0.04, 0.01)]
        assert 2**5 / 2 <= lt[1] / lt[0] <= 2**5 * 2

    def test_time_formula(self):
        plan = plan_harmonic(5, 2.0, math.inf, 0.08)
        assert plan.t == pytest.approx(5 / (2.0 * math.sqrt(0.08)), rel=1e-12)


class TestZeroKnowledge:
    def test_ground_state_settings(self):
        dim_s, h_norm, delta = 4, 4.0, 1.0
        plan = plan_zero_knowledge(dim_s, h_norm, delta, math.inf, 0.1)
        t_expect = 4 * dim_s**2 * h_norm / (0.1 * delta**2)
        assert plan.t == pytest.approx(t_expect, rel=1e-12)
        assert plan.alpha == pytest.approx(1.0 / (dim_s * delta**2 * plan.t**3),
                                           rel=1e-12)
        assert plan.lambda_tilde == pytest.approx(
            i_sinc(delta * plan.t / 2.0), rel=1e-12)
        assert plan.lambda_tilde >= 2.43

    def test_finite_beta_identity(self):
        plan = plan_zero_knowledge(4, 4.0, 1.0, 2.0, 0.1, lambda_tilde=2.5)
        expect = 1.0**4 * 0.1**3 * 2.5**3 / (4**7 * 4.0**3)
        assert plan.alpha == pytest.approx(expect, rel=1e-12)

    def test_epsilon_range_enforced(self):
        with pytest.raises(ValueError, match="epsilon"):
            plan_zero_knowledge(4, 4.0, 1.0, math.inf, 2.5)

    def test_impossible_delta_min(self):
        with pytest.raises(ValueError, match="4\\*"):
            plan_zero_knowledge(4, 1.0, 5.0, math.inf, 0.1)

    def test_fixed_point_residual_attached_at_finite_beta(self):
        plan = plan_zero_knowledge(4, 4.0, 1.0, 2.0, 0.1, lambda_tilde=2.5)
        expect = plan.alpha**2 * plan.t * math.exp(2.0) * math.pi / 4.0
        assert plan.budget.fixed_point_residual == pytest.approx(expect, rel=1e-12)


class TestPerfectKnowledge:
    def test_identity(self):
        plan = plan_perfect_knowledge(4, 1.0, 2.0, 0.1, lambda_tilde=3.0)
        assert plan.alpha == pytest.approx(1.0 / (4 * 1.0**2 * plan.t**3),
                                           rel=1e-12)

    def test_formulas(self):
        dim_s, delta, eps, lam = 4, 0.5, 0.1, 2.0
        plan = plan_perfect_knowledge(dim_s, delta, math.inf, eps, lam)
        assert plan.alpha == pytest.approx(
            delta * eps**1.5 * lam**1.5 / dim_s**7, rel=1e-12)
        assert plan.t == pytest.approx(
            dim_s**2 / (delta * math.sqrt(eps * lam)), rel=1e-12)

    def test_monotone_in_epsilon(self):
        plans = [plan_perfect_knowledge(4, 1.0, 2.0, e, 1.0)
                 for e in (0.2, 0.1, 0.05)]
        steps = [p.steps for p in plans]
        ts = [p.t for p in plans]
        assert steps == sorted(steps) and ts == sorted(ts)
        assert steps[0] < steps[-1] and ts[0] < ts[-1]

    def test_rejects_nonpositive_gap(self):
        with pytest.raises(ValueError):
            plan_perfect_knowledge(4, 1.0, 2.0, 0.1, lambda_tilde=0.0)


class TestBudgets:
    def test_all_plans_carry_budget(self):
        plans = [
            plan_single_qubit(1.0, 0.0, 2.0, 0.05),
            plan_harmonic(4, 1.0, math.inf, 0.05),
            plan_zero_knowledge(4, 4.0, 1.0, math.inf, 0.1),
            plan_perfect_knowledge(4, 1.0, 2.0, 0.1, lambda_tilde=1.0),
        ]
        for plan in plans:
            assert plan.budget.per_step > 0
            assert plan.budget.accumulated == pytest.approx(
                plan.steps * plan.budget.per_step, rel=1e-12)
            assert plan.steps >= 1
            assert plan.alpha > 0 and plan.t > 0

    def test_plan_serialization(self):
        plan = plan_harmonic(4, 1.0, math.inf, 0.05)
        data = plan.to_dict()
        assert data["recipe"] == "harmonic"
        assert data["budget"]["remainder_bound"] > 0
