"""Turn a target (system, beta, epsilon) into concrete channel parameters.

Each planner follows one closed-form recipe: the coupling balances the
off-resonance error against the cubic Taylor remainder, the interaction time
makes their accumulated total order epsilon, and the step count comes from
the Markov relaxation bound at the (rescaled) spectral gap. Asymptotic
prefactors are hidden in the recipes, so an explicit ``multiplier`` knob on L
is exposed for experiments; measured minimal-L searches are the ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .weakcoupling import ErrorBudget, error_budget, i_sinc, jerison_steps

_IDENTITY_RTOL = 1e-12


class InvalidWindowError(ValueError):
    """Raised when an eigenvalue-uncertainty window violates its preconditions."""


@dataclass(frozen=True)
class Plan:
    """Concrete (alpha, t, L) with provenance and predicted error budget."""

    alpha: float
    t: float
    steps: int
    recipe: str
    lambda_tilde: float
    lambda_tilde_source: str
    budget: ErrorBudget
    checks: dict = field(default_factory=dict)
    multiplier: float = 1.0

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "t": self.t,
            "steps": self.steps,
            "recipe": self.recipe,
            "lambda_tilde": self.lambda_tilde,
            "lambda_tilde_source": self.lambda_tilde_source,
            "multiplier": self.multiplier,
            "checks": self.checks,
            "budget": {
                "off_resonance_bound": self.budget.off_resonance_bound,
                "remainder_bound": self.budget.remainder_bound,
                "per_step": self.budget.per_step,
                "accumulated": self.budget.accumulated,
                "markov_epsilon": self.budget.markov_epsilon,
                "fixed_point_residual": self.budget.fixed_point_residual,
            },
        }


def _verify_identity(lhs: float, rhs: float, label: str) -> None:
    if abs(lhs - rhs) > _IDENTITY_RTOL * max(abs(lhs), abs(rhs), 1.0):
        raise AssertionError(f"planner identity {label} violated: {lhs!r} vs {rhs!r}")


def _steps_from_gap(n_states: int, lambda_star: float, epsilon: float,
                    multiplier: float) -> tuple[int, float]:
    # relaxation targets the 1-norm; halve epsilon to cover the conversion
    # from the trace-distance goal, matching the single-qubit recipe
    bound = jerison_steps(n_states, min(lambda_star, 1.0), epsilon / 2.0)
    return max(1, math.ceil(multiplier * bound.steps)), bound.j_term


def plan_single_qubit(gap: float, sigma: float, beta: float, epsilon: float,
                      multiplier: float = 1.0) -> Plan:
    """Qubit recipe given a half-width-sigma window known to contain the gap.

    sigma = 0 is the exact-knowledge limit t = 1/(gap*sqrt(eps)); otherwise t
    is the smaller root of the window quadratic (the branch that stays finite
    as sigma -> 0).
    """
    if gap <= 0:
        raise ValueError(f"gap must be positive, got {gap}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")

    sigma_cap_beta = math.inf if beta == 0 else epsilon / (2.0 * beta)
    sigma_cap_roots = gap * math.sqrt(epsilon / 2.0)
    if sigma > sigma_cap_roots:
        raise InvalidWindowError(
            f"sigma = {sigma:g} > gap*sqrt(eps/2) = {sigma_cap_roots:g}: "
            "the time-window roots are complex")
    if sigma > sigma_cap_beta:
        raise InvalidWindowError(
            f"sigma = {sigma:g} > eps/(2*beta) = {sigma_cap_beta:g}: "
            "the fixed point drifts beyond the error budget")

    if sigma == 0:
        t = 1.0 / (gap * math.sqrt(epsilon))
    else:
        disc = math.sqrt(1.0 - 2.0 * sigma**2 / (gap**2 * epsilon))
        t = math.sqrt((1.0 - disc)) / sigma
    alpha = 1.0 / (t**3 * (gap + sigma) ** 2)
    _verify_identity(alpha * t**3 * (gap + sigma) ** 2, 1.0, "alpha*t^3*(gap+sigma)^2 = 1")

    shrink = 1.0 - sigma**2 * t**2 / 2.0  # worst-case sinc^2 over the window
    a2t2 = (alpha * t) ** 2
    log_terms = (2.0 * math.log(5.0 / (a2t2 * shrink)) + 4.0 * (1.0 + math.log(2.0))
                 - 0.5 + math.log(2.0 / epsilon))
    steps = max(1, math.ceil(multiplier * 10.0 / (a2t2 * shrink) * log_terms))
    lam_tilde = shrink  # gap of T/alpha_tilde^2 at the worst window edge

    budget = error_budget(alpha, t, 2, gap, steps,
                          markov_epsilon=epsilon, fixed_point_residual=2.0 * beta * sigma
                          if not math.isinf(beta) else 0.0)
    checks = {
        "sigma_within_beta_cap": sigma <= sigma_cap_beta,
        "sigma_within_root_cap": sigma <= sigma_cap_roots,
        "t_sigma_below_sqrt2": sigma * t <= math.sqrt(2.0),
    }
    return Plan(alpha=alpha, t=t, steps=steps, recipe="single-qubit",
                lambda_tilde=lam_tilde, lambda_tilde_source="closed-form",
                budget=budget, checks=checks, multiplier=multiplier)


def plan_harmonic(dim_s: int, gap: float, beta: float, epsilon: float,
                  lambda_tilde: float | None = None,
                  multiplier: float = 1.0) -> Plan:
    """Ladder-system recipe with the ancilla tuned to the known level spacing."""
    if dim_s < 2:
        raise ValueError(f"dim_s must be >= 2, got {dim_s}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if lambda_tilde is None:
        if math.isinf(beta):
            lambda_tilde, source = 1.0, "closed-form"
        else:
            raise ValueError("finite beta needs the rescaled gap lambda_tilde")
    else:
        source = "supplied"
        if lambda_tilde <= 0:
            raise ValueError(f"lambda_tilde must be positive, got {lambda_tilde}")

    alpha = epsilon**1.5 * lambda_tilde**1.5 * gap / dim_s**4
    t = dim_s / (gap * math.sqrt(epsilon * lambda_tilde))
    _verify_identity(alpha, 1.0 / (dim_s * gap**2 * t**3), "alpha = 1/(dim*gap^2*t^3)")

    at2 = (alpha * t) ** 2 / (2 * dim_s + 1)
    steps, _ = _steps_from_gap(dim_s, at2 * lambda_tilde, epsilon, multiplier)
    budget = error_budget(alpha, t, dim_s, gap, steps, markov_epsilon=epsilon)
    return Plan(alpha=alpha, t=t, steps=steps, recipe="harmonic",
                lambda_tilde=lambda_tilde, lambda_tilde_source=source,
                budget=budget, checks={"gap_known": True}, multiplier=multiplier)


def plan_zero_knowledge(dim_s: int, h_norm: float, delta_min: float, beta: float,
                        epsilon: float, lambda_tilde: float | None = None,
                        multiplier: float = 1.0) -> Plan:
    """Uniform-gamma recipe needing only a spectral-norm bound.

    At beta = +inf the rescaled gap has the closed form i_sinc(delta_min*t/2)
    and the dedicated (t, alpha) pair from that limit is used.
    """
    if delta_min <= 0:
        raise ValueError(f"delta_min must be positive, got {delta_min}")
    if delta_min > 4.0 * h_norm:
        raise ValueError(
            f"delta_min = {delta_min:g} exceeds 4*||H|| = {4 * h_norm:g}; "
            "no difference separation can be that large")
    if not 0.0 < epsilon <= 2.0:
        raise ValueError(f"epsilon must lie in (0, 2], got {epsilon}")
    if epsilon > dim_s**2 * 4.0 * h_norm / (math.pi * delta_min):
        raise ValueError("sinc-integral threshold violated; epsilon too large")

    source = "supplied"
    if math.isinf(beta):
        t = 4.0 * dim_s**2 * h_norm / (epsilon * delta_min**2)
        if lambda_tilde is None:
            lambda_tilde = i_sinc(delta_min * t / 2.0)
            source = "closed-form"
    else:
        if lambda_tilde is None:
            raise ValueError("finite beta needs the rescaled gap lambda_tilde")
        t = dim_s**2 * h_norm / (epsilon * lambda_tilde * delta_min**2)
    alpha = 1.0 / (dim_s * delta_min**2 * t**3)
    if not math.isinf(beta):
        _verify_identity(
            alpha, delta_min**4 * epsilon**3 * lambda_tilde**3 / (dim_s**7 * h_norm**3),
            "alpha = delta^4 eps^3 lam^3 / (dim^7 ||H||^3)")

    rate_scale = alpha**2 * t / (2.0 * h_norm * (2 * dim_s + 1))
    steps, _ = _steps_from_gap(dim_s, rate_scale * lambda_tilde, epsilon, multiplier)
    residual = (alpha**2 * t * math.exp(beta * delta_min) * math.pi / h_norm
                if not math.isinf(beta) else 0.0)
    budget = error_budget(alpha, t, dim_s, delta_min, steps,
                          markov_epsilon=epsilon, fixed_point_residual=residual)
    return Plan(alpha=alpha, t=t, steps=steps, recipe="zero-knowledge",
                lambda_tilde=lambda_tilde, lambda_tilde_source=source,
                budget=budget,
                checks={"epsilon_in_range": True,
                        "window_covers_differences": True},
                multiplier=multiplier)


def plan_perfect_knowledge(dim_s: int, delta_min: float, beta: float,
                           epsilon: float, lambda_tilde: float,
                           multiplier: float = 1.0) -> Plan:
    """Difference-weighted-gamma recipe for a fully known non-degenerate spectrum."""
    if delta_min <= 0:
        raise ValueError(f"delta_min must be positive, got {delta_min}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if lambda_tilde <= 0:
        raise ValueError(f"lambda_tilde must be positive, got {lambda_tilde}")

    alpha = delta_min * epsilon**1.5 * lambda_tilde**1.5 / dim_s**7
    t = dim_s**2 / (delta_min * math.sqrt(epsilon * lambda_tilde))
    _verify_identity(alpha, 1.0 / (dim_s * delta_min**2 * t**3),
                     "alpha = 1/(dim*delta^2*t^3)")

    n_pairs = dim_s * (dim_s - 1) // 2
    at2 = (alpha * t) ** 2 / (2 * dim_s + 1)
    steps, _ = _steps_from_gap(dim_s, (at2 / n_pairs) * lambda_tilde, epsilon,
                               multiplier)
    budget = error_budget(alpha, t, dim_s, delta_min, steps, markov_epsilon=epsilon)
    return Plan(alpha=alpha, t=t, steps=steps, recipe="perfect-knowledge",
                lambda_tilde=lambda_tilde, lambda_tilde_source="supplied",
                budget=budget, checks={"nondegenerate_required": True},
                multiplier=multiplier)
