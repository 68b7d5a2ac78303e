"""Closed-form weak-coupling Markov model of the thermalizing channel.

The second-order expansion of the channel in the coupling maps populations to
populations. Its on-resonance part defines a generator T with zero column
sums: I + T is the column-stochastic Markov step, column i holding the rates
out of source level i. The off-resonance part and the Taylor remainder are
tracked as norm bounds rather than simulated.

All indices are 0-based; level 0 is the ground state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import sici

from .hamiltonians import (
    Hamiltonian,
    SpectralProfile,
    env_qubit,
    fermi,
    gibbs_probabilities,
    spectral_profile,
)

_SMALL_X = 1e-4


class NonErgodicError(RuntimeError):
    """Raised when a transition generator has a multi-dimensional kernel."""


def sinc2(x) -> np.ndarray | float:
    """(sin x / x)^2 with the removable singularity handled by series."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SMALL_X
    x_safe = np.where(small, 1.0, x)
    out = np.where(small,
                   1.0 - x * x / 3.0 + 2.0 * x**4 / 45.0,
                   (np.sin(x_safe) / x_safe) ** 2)
    return float(out) if out.ndim == 0 else out


def _sinc2_primitive(x) -> np.ndarray | float:
    """Antiderivative F of sinc^2 with F(0) = 0: F(x) = Si(2x) - sin^2(x)/x."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SMALL_X
    x_safe = np.where(small, 1.0, x)
    si, _ = sici(2.0 * x_safe)
    exact = si - np.sin(x_safe) ** 2 / x_safe
    out = np.where(small, x - x**3 / 9.0, exact)
    return float(out) if out.ndim == 0 else out


def i_sinc(half_width: float) -> float:
    """Integral of sinc^2 over the symmetric window [-half_width, half_width]."""
    if half_width < 0:
        raise ValueError(f"half_width must be >= 0, got {half_width}")
    return float(2.0 * _sinc2_primitive(half_width))


def alpha_tilde_sq(alpha: float, t: float, dim_s: int) -> float:
    """Rescaled coupling (alpha*t)^2/(dim+1) for the joint system-ancilla space."""
    return alpha * alpha * t * t / (2 * dim_s + 1)


def transition_element(i: int, j: int, ham: Hamiltonian, beta: float,
                       gamma: float, alpha: float, t: float) -> float:
    """Population transfer rate from level i to level j (i != j), all sinc terms."""
    if i == j:
        raise ValueError("diagonal elements follow from column sums; use i != j")
    d = ham.eigenvalues[i] - ham.eigenvalues[j]
    env = env_qubit(gamma, beta)
    at2 = alpha_tilde_sq(alpha, t, ham.dim)
    return at2 * (sinc2(d * t / 2.0)
                  + env.q0 * sinc2((d - gamma) * t / 2.0)
                  + env.q1 * sinc2((d + gamma) * t / 2.0))


@dataclass(frozen=True)
class ResonanceSplit:
    """On/off-resonance split of the transfer terms for a fixed ancilla gap."""

    on: np.ndarray
    off: np.ndarray
    delta_min: float


def _fill_diagonal_from_columns(m: np.ndarray) -> np.ndarray:
    np.fill_diagonal(m, 0.0)
    np.fill_diagonal(m, -m.sum(axis=0))
    return m


def split_resonance(ham: Hamiltonian, beta: float, gamma: float, alpha: float,
                    t: float, delta_min: float | None = None) -> ResonanceSplit:
    """Route each sinc term to the on- or off-resonance generator.

    A term is on-resonance when its frequency offset is strictly inside
    delta_min; a detuning of exactly delta_min means gamma is resonant with a
    different difference, so such ties stay off-resonance (this keeps the
    tuned-gap ladder generator exactly bidiagonal). The bare
    system-difference term is always off-resonance.
    """
    if delta_min is None:
        delta_min = spectral_profile(ham).delta_min
    ev = ham.eigenvalues
    d = ev[None, :] - ev[:, None]  # [j, i] = lam(i) - lam(j)
    env = env_qubit(gamma, beta)
    at2 = alpha_tilde_sq(alpha, t, ham.dim)

    cool = env.q0 * sinc2((d - gamma) * t / 2.0)
    heat = env.q1 * sinc2((d + gamma) * t / 2.0)
    bare = sinc2(d * t / 2.0)
    cool_on = np.abs(d - gamma) < delta_min
    heat_on = np.abs(d + gamma) < delta_min

    on = at2 * (np.where(cool_on, cool, 0.0) + np.where(heat_on, heat, 0.0))
    off = at2 * (np.where(~cool_on, cool, 0.0) + np.where(~heat_on, heat, 0.0) + bare)
    return ResonanceSplit(on=_fill_diagonal_from_columns(on),
                          off=_fill_diagonal_from_columns(off),
                          delta_min=delta_min)


@dataclass(frozen=True)
class TransitionGenerator:
    """Generator T with zero column sums; I + T is the Markov step.

    ``rate_scale`` is the natural per-entry magnitude pulled out when quoting
    the rescaled spectral gap: T/rate_scale has O(1) entries. It depends on
    the gamma policy (fixed gap, uniform window, or difference-weighted) and
    is stored here so planners cannot mix conventions.
    """

    matrix: np.ndarray
    alpha: float
    t: float
    beta: float
    gamma_label: str
    rate_scale: float
    extras: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def step_matrix(self) -> np.ndarray:
        return np.eye(self.dim) + self.matrix

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "alpha": self.alpha,
            "t": self.t,
            "beta": self.beta if not math.isinf(self.beta) else "inf",
            "gamma": self.gamma_label,
            "rate_scale": self.rate_scale,
            "extras": self.extras,
        }


def build_T(ham: Hamiltonian, beta: float, gamma: float, alpha: float, t: float,
            delta_min: float | None = None) -> TransitionGenerator:
    """On-resonance generator for a fixed ancilla gap."""
    split = split_resonance(ham, beta, gamma, alpha, t, delta_min=delta_min)
    return TransitionGenerator(
        matrix=split.on, alpha=alpha, t=t, beta=beta,
        gamma_label=f"fixed({gamma})",
        rate_scale=alpha_tilde_sq(alpha, t, ham.dim),
        extras={"delta_min": split.delta_min},
    )


def _split_at_sinc_zeros(lo: float, hi: float) -> list[float]:
    """Panel boundaries for [lo, hi]: the interval ends plus every k*pi inside."""
    pts = [lo]
    k0 = math.floor(lo / math.pi) + 1
    k = k0
    while k * math.pi < hi:
        if k * math.pi > lo:
            pts.append(k * math.pi)
        k += 1
    pts.append(hi)
    return pts


def _integrate_panels(f, lo: float, hi: float, rtol: float = 1e-12) -> float:
    """Adaptive quadrature over [lo, hi] subdivided at the sinc zeros.

    The integrand oscillates with period pi; a fixed grid under-resolves large
    windows, so each lobe gets its own adaptive pass.
    """
    if hi <= lo:
        return 0.0
    pts = _split_at_sinc_zeros(lo, hi)
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(f, a, b, epsabs=1e-15, epsrel=rtol, limit=200)
        total += val
    return total


def _window_transfer(d_abs: float, cooling: bool, beta: float, t: float,
                     delta_min: float, window: tuple[float, float]) -> float:
    """Window-averaged on-resonance integral for one matrix element.

    Returns (2/(t*width)) * Int sinc^2(u) * occupancy(d_abs - 2u/t) du over the
    resonant gamma range clipped to the window, in units of alpha_tilde^2.
    """
    lo_g = max(window[0], d_abs - delta_min)
    hi_g = min(window[1], d_abs + delta_min)
    if hi_g <= lo_g:
        return 0.0
    width = window[1] - window[0]
    # u = (d_abs - gamma) * t / 2 maps the gamma range to a symmetric u window
    u_lo = (d_abs - hi_g) * t / 2.0
    u_hi = (d_abs - lo_g) * t / 2.0
    sign = 1.0 if cooling else -1.0
    if math.isinf(beta):
        if not cooling:
            return 0.0
        # occupancy is 1 a.e. on the domain (gamma > 0): closed form
        val = _sinc2_primitive(u_hi) - _sinc2_primitive(u_lo)
    else:
        def integrand(u):
            return sinc2(u) * fermi(beta, sign * (d_abs - 2.0 * u / t))
        val = _integrate_panels(integrand, u_lo, u_hi)
    return (2.0 / (t * width)) * val


def build_expected_T(ham: Hamiltonian, beta: float, alpha: float, t: float,
                     mode: str = "uniform-window",
                     window: tuple[float, float] | None = None,
                     gamma_samples: np.ndarray | None = None,
                     profile: SpectralProfile | None = None) -> TransitionGenerator:
    """Gamma-averaged generator.

    mode "uniform-window": gamma uniform on [0, 4*||H||] (or a custom window),
    entries by adaptive quadrature. mode "perfect-knowledge": gamma equal to a
    difference with probability multiplicity/C(dim,2), entries in closed form.
    mode "empirical": plain average of build_T over the supplied gamma draws.
    """
    if profile is None:
        profile = spectral_profile(ham)
    n = ham.dim
    at2 = alpha_tilde_sq(alpha, t, n)
    d = profile.differences  # [j, i] = lam(i) - lam(j)

    if mode == "uniform-window":
        if window is None:
            window = (0.0, 4.0 * ham.spectral_norm)
        max_diff = float(np.max(np.abs(d)))
        if window[1] < max_diff + profile.delta_min:
            import warnings
            warnings.warn(
                f"gamma window {window} is smaller than the largest eigenvalue "
                f"difference {max_diff:.6g} + delta_min; some transitions are "
                "unreachable", stacklevel=2)
        m = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                m[j, i] = at2 * _window_transfer(
                    abs(d[j, i]), cooling=d[j, i] > 0, beta=beta, t=t,
                    delta_min=profile.delta_min, window=window)
        width = window[1] - window[0]
        gen = TransitionGenerator(
            matrix=_fill_diagonal_from_columns(m), alpha=alpha, t=t, beta=beta,
            gamma_label=f"uniform[{window[0]:g},{window[1]:g}]",
            rate_scale=2.0 * at2 / (t * width),
            extras={"delta_min": profile.delta_min, "window": list(window)},
        )
        return gen

    if mode == "perfect-knowledge":
        n_pairs = n * (n - 1) // 2
        m = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                eta = profile.multiplicity(d[j, i])
                m[j, i] = at2 * (eta / n_pairs) * fermi(beta, d[j, i])
        return TransitionGenerator(
            matrix=_fill_diagonal_from_columns(m), alpha=alpha, t=t, beta=beta,
            gamma_label="difference-weighted",
            rate_scale=at2 / n_pairs,
            extras={"delta_min": profile.delta_min},
        )

    if mode == "empirical":
        if gamma_samples is None or len(gamma_samples) == 0:
            raise ValueError("empirical mode needs gamma_samples")
        acc = np.zeros((n, n))
        for g in np.asarray(gamma_samples, dtype=float):
            acc += build_T(ham, beta, float(g), alpha, t,
                           delta_min=profile.delta_min).matrix
        acc /= len(gamma_samples)
        return TransitionGenerator(
            matrix=acc, alpha=alpha, t=t, beta=beta,
            gamma_label=f"empirical({len(gamma_samples)} draws)",
            rate_scale=at2,
            extras={"delta_min": profile.delta_min},
        )

    raise ValueError(f"unknown mode {mode!r}")


def fixed_point(gen: TransitionGenerator, kernel_rtol: float = 1e-9) -> np.ndarray:
    """Probability vector spanning ker T, i.e. the fixed point of I + T.

    Uniqueness is checked through the multiplicity of the (near-)unit
    eigenvalue of I + T, equivalently the near-zero eigenvalues of the
    rescaled generator; a larger kernel raises NonErgodicError.
    """
    t_resc = gen.matrix / gen.rate_scale
    mu = np.linalg.eigvals(t_resc)
    scale = max(np.max(np.abs(mu)), 1.0)
    n_kernel = int(np.sum(np.abs(mu) <= kernel_rtol * scale))
    if n_kernel > 1:
        raise NonErgodicError(
            f"fixed point not unique: kernel dimension {n_kernel} "
            f"(eigenvalues {np.sort(np.abs(mu))[:n_kernel]})")
    # the null vector itself comes from the SVD for accuracy
    _, _, vh = np.linalg.svd(t_resc)
    v = np.conjugate(vh[-1])
    v = np.real(v)
    s = v.sum()
    if s == 0:
        raise NonErgodicError("kernel vector sums to zero; cannot normalize")
    p = v / s
    if np.min(p) < -1e-9:
        raise NonErgodicError(f"kernel vector has negative mass {np.min(p):.3e}")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


@dataclass(frozen=True)
class GapResult:
    """Spectral gap diagnostics of a Markov step I + T."""

    lambda_star: float
    lambda_tilde: float
    eigenvalues: np.ndarray  # of T/rate_scale
    rate_scale: float


def spectral_gap(gen: TransitionGenerator, rescale: float | None = None) -> GapResult:
    """Absolute gap of I + T plus the gap of the rescaled generator.

    ``lambda_star`` is 1 - max nontrivial |eigenvalue| of I + T. The rescaled
    ``lambda_tilde`` is the smallest nonzero eigenvalue magnitude of
    T/rate_scale, which stays well-conditioned when the physical rates are
    tiny.
    """
    scale = gen.rate_scale if rescale is None else rescale
    mu = np.linalg.eigvals(gen.matrix / scale)
    order = np.argsort(np.abs(mu))
    mu_sorted = mu[order]
    lambda_tilde = float(np.abs(mu_sorted[1])) if mu.size > 1 else 1.0
    step_eigs = 1.0 + scale * mu_sorted
    lambda_star = float(1.0 - np.max(np.abs(step_eigs[1:]))) if mu.size > 1 else 1.0
    return GapResult(lambda_star=lambda_star, lambda_tilde=lambda_tilde,
                     eigenvalues=mu_sorted, rate_scale=scale)


def markov_evolve(gen: TransitionGenerator | np.ndarray, p0: np.ndarray,
                  steps: int) -> np.ndarray:
    """(I + T)^steps applied to a probability vector by repeated multiplication."""
    t_mat = gen.matrix if isinstance(gen, TransitionGenerator) else np.asarray(gen)
    p = np.asarray(p0, dtype=float)
    if p.ndim != 1 or p.size != t_mat.shape[0]:
        raise ValueError("p0 shape does not match the generator")
    if abs(p.sum() - 1.0) > 1e-10 or np.min(p) < -1e-12:
        raise ValueError("p0 must be a probability vector")
    m = np.eye(t_mat.shape[0]) + t_mat
    for _ in range(steps):
        p = m @ p
    if abs(p.sum() - 1.0) > 1e-10:
        raise RuntimeError(f"probability drifted: sum = {p.sum()!r}")
    return p


def detailed_balance_residual(gen: TransitionGenerator, p: np.ndarray) -> float:
    """1-norm of T p; zero exactly when p is fixed."""
    return float(np.sum(np.abs(gen.matrix @ np.asarray(p, dtype=float))))


def gibbs_residual(gen: TransitionGenerator, ham: Hamiltonian) -> float:
    """Residual of the Gibbs vector at the generator's beta."""
    return detailed_balance_residual(gen, gibbs_probabilities(ham, gen.beta))


@dataclass(frozen=True)
class JerisonBound:
    steps: int
    j_term: float


def jerison_steps(n_states: int, lambda_star: float, epsilon: float) -> JerisonBound:
    """Relaxation-step bound L >= (N/gap) * J for an ergodic Markov step.

    J collects the logarithmic and constant terms and is exposed separately.
    Natural logarithms throughout.
    """
    if not 0.0 < lambda_star <= 1.0:
        raise ValueError(f"lambda_star must lie in (0, 1], got {lambda_star}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    j = (2.0 * math.log(1.0 / lambda_star) + 4.0 * (1.0 + math.log(2.0))
         + (2.0 * math.log(1.0 / epsilon) - 1.0) / n_states)
    return JerisonBound(steps=math.ceil(n_states * j / lambda_star), j_term=j)


REMAINDER_CONST = 16.0 * math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class ErrorBudget:
    """Norm bounds on the non-Markovian parts of the channel."""

    off_resonance_bound: float
    remainder_bound: float
    per_step: float
    steps: int
    accumulated: float
    markov_epsilon: float = 0.0
    fixed_point_residual: float = 0.0


def error_budget(alpha: float, t: float, dim_s: int, delta_min: float,
                 steps: int, markov_epsilon: float = 0.0,
                 fixed_point_residual: float = 0.0) -> ErrorBudget:
    off = 8.0 * alpha * alpha / (delta_min * delta_min)
    rem = REMAINDER_CONST * dim_s * (alpha * t) ** 3
    per_step = off + rem
    return ErrorBudget(
        off_resonance_bound=off,
        remainder_bound=rem,
        per_step=per_step,
        steps=steps,
        accumulated=steps * per_step,
        markov_epsilon=markov_epsilon,
        fixed_point_residual=fixed_point_residual,
    )
