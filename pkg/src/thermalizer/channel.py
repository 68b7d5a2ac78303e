"""Exact Monte Carlo simulation of the single-ancilla thermalizing channel.

One interaction couples the system to a fresh thermal ancilla qubit through a
random Hermitian term, evolves the pair for time t, and discards the ancilla.
The expectation over interactions is estimated by averaging independent
draws; iterating the step gives trajectories toward the thermal target.

Random streams are derived from (seed, step index, batch index) so that a
trajectory prefix never depends on how far it will eventually be extended and
results are independent of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hamiltonians import EnvQubit, Hamiltonian, env_populations
from .linalg import (
    RandomInteraction,
    dagger,
    partial_trace_env,
    sample_interaction,
    trace_distance,
    trace_distance_batch,
)

_MAX_RESAMPLE_ROUNDS = 10_000


def _resample_nonnegative(draw, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw until every value is >= 0; keeps the distribution shape on the
    nonnegative axis without piling mass at zero."""
    g = draw(rng, size)
    bad = g < 0
    rounds = 0
    while bad.any():
        g[bad] = draw(rng, int(bad.sum()))
        bad = g < 0
        rounds += 1
        if rounds > _MAX_RESAMPLE_ROUNDS:
            raise RuntimeError("gamma policy keeps producing negative draws")
    return g


@dataclass(frozen=True)
class FixedGamma:
    """Ancilla gap pinned to one value."""

    gamma: float

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, self.gamma)

    def to_dict(self) -> dict:
        return {"kind": "fixed", "gamma": self.gamma}


@dataclass(frozen=True)
class UniformWindowGamma:
    """Gap drawn uniformly from [lo, hi]; the zero-knowledge choice."""

    lo: float
    hi: float

    def __post_init__(self):
        if self.lo < 0 or self.hi <= self.lo:
            raise ValueError(f"need 0 <= lo < hi, got [{self.lo}, {self.hi}]")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size)

    def to_dict(self) -> dict:
        return {"kind": "uniform-window", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class GaussianGamma:
    """Gaussian guess for the gap; negative draws are re-sampled."""

    mean: float
    sigma: float

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.sigma == 0:
            if self.mean < 0:
                raise ValueError("gaussian policy with sigma=0 needs mean >= 0")
            return np.full(size, self.mean)
        return _resample_nonnegative(
            lambda r, n: self.mean + self.sigma * r.standard_normal(n), rng, size)

    def to_dict(self) -> dict:
        return {"kind": "gaussian", "mean": self.mean, "sigma": self.sigma}


@dataclass(frozen=True)
class EigdiffGamma:
    """Gap sampled from a list of candidate differences plus Gaussian noise.

    With the full level-pair difference list and sigma = 0 this is the
    perfect-knowledge distribution (each pair equally likely).
    """

    differences: np.ndarray
    sigma: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.differences, dtype=float)
        if d.ndim != 1 or d.size == 0:
            raise ValueError("differences must be a nonempty 1-d array")
        object.__setattr__(self, "differences", d)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        def draw(r, n):
            picks = self.differences[r.integers(0, self.differences.size, n)]
            if self.sigma > 0:
                picks = picks + self.sigma * r.standard_normal(n)
            return picks
        if self.sigma == 0:
            return draw(rng, size)
        return _resample_nonnegative(draw, rng, size)

    def to_dict(self) -> dict:
        return {"kind": "eigdiff", "sigma": self.sigma,
                "differences": self.differences.tolist()}


def perfect_knowledge_gamma(ham: Hamiltonian) -> EigdiffGamma:
    """Exact-difference policy: gap equal to a level difference, pairs uniform."""
    ev = ham.eigenvalues
    i, j = np.triu_indices(ev.size, k=1)
    return EigdiffGamma(differences=ev[j] - ev[i], sigma=0.0)


def gamma_policy_from_dict(data: dict, ham: Hamiltonian | None = None):
    kind = data["kind"]
    if kind == "fixed":
        return FixedGamma(float(data["gamma"]))
    if kind == "uniform-window":
        if "lo" in data or "hi" in data:
            return UniformWindowGamma(float(data.get("lo", 0.0)), float(data["hi"]))
        if ham is None:
            raise ValueError("uniform-window without bounds needs a Hamiltonian")
        return UniformWindowGamma(0.0, 4.0 * ham.spectral_norm)
    if kind == "gaussian":
        if "mean" in data:
            return GaussianGamma(float(data["mean"]), float(data["sigma"]))
        if ham is None:
            raise ValueError("gaussian without a mean needs a Hamiltonian")
        return GaussianGamma(float(np.mean(ham.eigenvalues)),
                             ham.spectral_norm / 2.0)
    if kind == "eigdiff":
        if "differences" in data:
            diffs = np.asarray(data["differences"], dtype=float)
        else:
            if ham is None:
                raise ValueError("eigdiff without differences needs a Hamiltonian")
            diffs = perfect_knowledge_gamma(ham).differences
        return EigdiffGamma(differences=diffs, sigma=float(data.get("sigma", 0.0)))
    if kind == "perfect":
        if ham is None:
            raise ValueError("perfect policy needs a Hamiltonian")
        return perfect_knowledge_gamma(ham)
    raise ValueError(f"unknown gamma policy kind {kind!r}")


@dataclass(frozen=True)
class ChannelParams:
    """Everything needed to apply the channel once (and to reproduce it)."""

    alpha: float
    t: float
    beta: float
    gamma_policy: object
    n_samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.t <= 0:
            raise ValueError(f"t must be positive, got {self.t}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")

    def alpha_tilde_sq(self, dim_s: int) -> float:
        return (self.alpha * self.t) ** 2 / (2 * dim_s + 1)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


_ENV_INDEX_STRIDE = 2  # single ancilla qubit throughout


def _joint_base(ham: Hamiltonian) -> np.ndarray:
    """System part of the joint Hamiltonian in the system-major ordering."""
    return np.kron(ham.matrix, np.eye(2, dtype=complex))


def _step_batch(rho_batch: np.ndarray, base: np.ndarray, alpha: float, t: float,
                beta: float, gammas: np.ndarray, g_batch: np.ndarray) -> np.ndarray:
    """Apply one fixed-interaction step to a stack of system states.

    rho_batch: (m, d, d); g_batch: (m, D, D) with D = 2d; gammas: (m,).
    """
    m, d, _ = rho_batch.shape
    dim_joint = 2 * d
    h = base[None, :, :] + alpha * g_batch
    env_idx = np.arange(1, dim_joint, _ENV_INDEX_STRIDE)
    h[:, env_idx, env_idx] += gammas[:, None]

    q0, q1 = env_populations(gammas, beta)
    envmat = np.zeros((m, 2, 2), dtype=complex)
    envmat[:, 0, 0] = q0
    envmat[:, 1, 1] = q1
    joint = np.einsum("mab,mcd->macbd", rho_batch, envmat).reshape(m, dim_joint, dim_joint)

    w, v = np.linalg.eigh(h)
    u = (v * np.exp(1j * t * w)[:, None, :]) @ dagger(v)
    evolved = u @ joint @ dagger(u)
    return partial_trace_env(evolved, 2)


def apply_fixed_interaction(rho_s: np.ndarray, interaction: RandomInteraction,
                            alpha: float, t: float, env: EnvQubit,
                            ham: Hamiltonian) -> np.ndarray:
    """One interaction with a fixed G: evolve rho ⊗ rho_env and trace the ancilla."""
    d = rho_s.shape[-1]
    g = interaction.matrix
    if g.shape[-1] != 2 * d:
        raise ValueError(
            f"interaction dim {g.shape[-1]} does not match joint dim {2 * d}")
    out = _step_batch(rho_s[None, :, :], _joint_base(ham), alpha, t, env.beta,
                      np.array([env.gamma]), g[None, :, :])
    return out[0]


def apply_channel(rho_s: np.ndarray, ham: Hamiltonian, params: ChannelParams,
                  rng: np.random.Generator, return_sem: bool = False):
    """Monte Carlo estimate of the channel: mean over n_samples interaction draws.

    With return_sem the entrywise standard error is also returned, real and
    imaginary parts carried in the respective parts of a complex matrix.
    """
    m = params.n_samples
    d = rho_s.shape[-1]
    gammas = params.gamma_policy.sample(rng, m)
    g = sample_interaction(2 * d, rng, size=m).matrix
    rho_batch = np.broadcast_to(rho_s, (m, d, d))
    outs = _step_batch(rho_batch, _joint_base(ham), params.alpha, params.t,
                       params.beta, gammas, g)
    mean = outs.mean(axis=0)
    if not return_sem:
        return mean
    if m > 1:
        sem = (np.std(outs.real, axis=0, ddof=1)
               + 1j * np.std(outs.imag, axis=0, ddof=1)) / math.sqrt(m)
    else:
        sem = np.full((d, d), np.nan, dtype=complex)
    return mean, sem


@dataclass(frozen=True)
class Trajectory:
    """Distance-to-target record of one iterated-channel run."""

    distances: np.ndarray  # length steps + 1, step 0 included
    final_state: np.ndarray
    steps: int
    seed: int


def iterate_channel(rho0: np.ndarray, ham: Hamiltonian, params: ChannelParams,
                    steps: int, target: np.ndarray) -> Trajectory:
    """Apply the Monte Carlo channel ``steps`` times, recording trace distances.

    Each step draws its own random stream from (params.seed, step), so the
    trajectory is reproducible and prefix-stable.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    rho = np.asarray(rho0, dtype=complex)
    dists = np.empty(steps + 1)
    dists[0] = trace_distance(rho, target)
    for ell in range(steps):
        rng = _stream(params.seed, 0, ell)
        rho = apply_channel(rho, ham, params, rng)
        dists[ell + 1] = trace_distance(rho, target)
    return Trajectory(distances=dists, final_state=rho, steps=steps,
                      seed=params.seed)


class TrajectoryBatch:
    """A batch of independent trajectories extended lazily and in lockstep.

    Per-step randomness comes from (seed, batch_id, step), so the recorded
    mean-distance curve is a pure function of the batch definition no matter
    in which order lengths are requested. Each trial evolves with single-draw
    interactions; n_samples > 1 averages that many draws per trial and step.
    """

    def __init__(self, rho0: np.ndarray, ham: Hamiltonian, params: ChannelParams,
                 target: np.ndarray, n_trials: int, batch_id: int = 0):
        d = rho0.shape[-1]
        self.ham = ham
        self.params = params
        self.target = np.asarray(target, dtype=complex)
        self.n_trials = n_trials
        self.batch_id = batch_id
        self._base = _joint_base(ham)
        self._states = np.broadcast_to(np.asarray(rho0, dtype=complex),
                                       (n_trials, d, d)).copy()
        self._dists = [trace_distance_batch(self._states, self.target)]
        self._mean_state_dists = [trace_distance(self._states.mean(axis=0),
                                                 self.target)]

    @property
    def length(self) -> int:
        return len(self._dists) - 1

    def extend_to(self, steps: int) -> None:
        p = self.params
        n, d = self.n_trials, self._states.shape[-1]
        k = p.n_samples
        while self.length < steps:
            ell = self.length
            rng = _stream(p.seed, 1 + self.batch_id, ell)
            gammas = p.gamma_policy.sample(rng, n * k)
            g = sample_interaction(2 * d, rng, size=n * k).matrix
            if k == 1:
                self._states = _step_batch(self._states, self._base, p.alpha,
                                           p.t, p.beta, gammas, g)
            else:
                rep = np.repeat(self._states, k, axis=0)
                out = _step_batch(rep, self._base, p.alpha, p.t, p.beta, gammas, g)
                self._states = out.reshape(n, k, d, d).mean(axis=1)
            self._dists.append(trace_distance_batch(self._states, self.target))
            self._mean_state_dists.append(
                trace_distance(self._states.mean(axis=0), self.target))

    def distances_at(self, steps: int) -> np.ndarray:
        self.extend_to(steps)
        return self._dists[steps]

    def mean_distance(self, steps: int) -> float:
        """Mean over trials of the per-trajectory distance at the given step."""
        return float(np.mean(self.distances_at(steps)))

    def mean_state_distance(self, steps: int) -> float:
        """Distance of the trial-averaged state: the Monte Carlo estimate of
        the iterated channel output itself."""
        self.extend_to(steps)
        return float(self._mean_state_dists[steps])

    def curve(self, metric: str = "mean-distance") -> np.ndarray:
        """Distance at every simulated step so far, index = step count."""
        if metric == "mean-distance":
            return np.array([float(np.mean(d)) for d in self._dists])
        if metric == "mean-state":
            return np.asarray(self._mean_state_dists, dtype=float)
        raise ValueError(f"unknown metric {metric!r}")


@dataclass(frozen=True)
class MinLResult:
    """Outcome of a minimal-interaction search; steps is None when not reached."""

    steps: int | None
    mean_at_steps: float
    trials: int
    l_max: int
    evaluations: tuple = field(default_factory=tuple)
    inversion_detected: bool = False


def binary_search_min_l(evaluate, epsilon: float, l_max: int):
    """Smallest L <= l_max with evaluate(L) < epsilon, assuming a roughly
    monotone decreasing curve. Returns (L or None, evaluations)."""
    evals: list[tuple[int, float]] = []

    def ev(l: int) -> float:
        val = evaluate(l)
        evals.append((l, val))
        return val

    if l_max < 0:
        raise ValueError(f"l_max must be >= 0, got {l_max}")
    if ev(0) < epsilon:
        return 0, evals
    if l_max == 0:
        return None, evals
    # exponential bracket: ev(lo) >= eps throughout
    lo, hi = 0, 1
    while hi < l_max and ev(hi) >= epsilon:
        lo, hi = hi, min(2 * hi, l_max)
    if ev(hi) >= epsilon:
        return None, evals
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ev(mid) < epsilon:
            hi = mid
        else:
            lo = mid
    return hi, evals


def resolve_min_l(mean_distance, get_curve, epsilon: float, l_max: int):
    """Binary search plus bracket verification against the cached curve.

    Returns (steps or None, evaluations, inversion_detected). When the
    bisection answer disagrees with the first crossing of the recorded
    mean-distance curve (a monotonicity inversion), the scan answer wins.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    result, evals = binary_search_min_l(mean_distance, epsilon, l_max)
    if result is None:
        return None, evals, False
    inversion = False
    curve = np.asarray(get_curve())
    below = np.nonzero(curve[:result + 1] < epsilon)[0]
    scan_result = int(below[0]) if below.size else result
    if scan_result != result:
        inversion = True
        result = scan_result
    return result, evals, inversion


def min_interactions(rho0: np.ndarray, ham: Hamiltonian, params: ChannelParams,
                     target: np.ndarray, epsilon: float, l_max: int,
                     n_trials: int, batch_id: int = 0,
                     metric: str = "mean-distance") -> MinLResult:
    """Minimal L whose measured final trace distance drops below epsilon;
    None when l_max is not enough.

    metric "mean-distance" averages per-trajectory distances over the trials;
    "mean-state" measures the distance of the trial-averaged state (the Monte
    Carlo estimate of the iterated channel output). Binary search over L with
    bracket re-verification; on a detected monotonicity inversion the answer
    is corrected by a linear scan of the cached curve.
    """
    batch = TrajectoryBatch(rho0, ham, params, target, n_trials, batch_id=batch_id)
    mean_fn = (batch.mean_distance if metric == "mean-distance"
               else batch.mean_state_distance)
    result, evals, inversion = resolve_min_l(
        mean_fn, lambda: batch.curve(metric), epsilon, l_max)
    if result is None:
        return MinLResult(steps=None, mean_at_steps=mean_fn(l_max),
                          trials=n_trials, l_max=l_max, evaluations=tuple(evals))
    return MinLResult(steps=result, mean_at_steps=mean_fn(result),
                      trials=n_trials, l_max=l_max, evaluations=tuple(evals),
                      inversion_detected=inversion)
