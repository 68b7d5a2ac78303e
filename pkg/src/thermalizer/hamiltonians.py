"""System Hamiltonians, Gibbs states, and spectral statistics.

A Hamiltonian is stored as its sorted eigenvalues plus an optional eigenbasis
(identity when built diagonal). All downstream formulas depend on eigenvalue
differences only, so constant offsets are harmless and never normalized away.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import dagger, max_abs

DEGENERACY_RTOL = 1e-9
DENSE_HERMITIAN_RTOL = 1e-10


def fermi(beta: float, x) -> np.ndarray | float:
    """Occupation factor 1/(1 + e^{-beta*x}), stable for large |beta*x|.

    beta = +inf is a distinct branch: step function with value 1/2 at x = 0.
    """
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if math.isinf(beta):
        out = np.where(arr > 0, 1.0, np.where(arr < 0, 0.0, 0.5))
    else:
        bx = beta * arr
        out = np.empty_like(arr)
        pos = bx >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-bx[pos]))
        e = np.exp(bx[~pos])
        out[~pos] = e / (1.0 + e)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class Hamiltonian:
    """Hermitian system operator as sorted eigenvalues + optional eigenbasis."""

    eigenvalues: np.ndarray
    eigenbasis: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if ev.ndim != 1 or ev.size < 1:
            raise ValueError("eigenvalues must be a nonempty 1-d array")
        if np.any(np.diff(ev) < 0):
            raise ValueError("eigenvalues must be sorted nondecreasing")
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def spectral_norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    @property
    def matrix(self) -> np.ndarray:
        if self.eigenbasis is None:
            return np.diag(self.eigenvalues).astype(complex)
        v = self.eigenbasis
        return (v * self.eigenvalues[None, :]) @ dagger(v)

    def degeneracy_tolerance(self, rtol: float = DEGENERACY_RTOL) -> float:
        return rtol * max(self.spectral_norm, 1e-300)

    def is_nondegenerate(self, tol: float | None = None) -> bool:
        if self.dim < 2:
            return True
        tol = self.degeneracy_tolerance() if tol is None else tol
        return bool(np.min(np.diff(self.eigenvalues)) > tol)


def make_qubit(gap: float, label: str = "qubit") -> Hamiltonian:
    """Single qubit with eigenvalues (0, gap)."""
    if gap <= 0:
        raise ValueError(f"gap must be positive, got {gap}")
    return Hamiltonian(np.array([0.0, gap]), label=label)


def make_harmonic(dim_s: int, gap: float, label: str = "harmonic") -> Hamiltonian:
    """Truncated oscillator with equally spaced levels gap, 2*gap, ..., dim_s*gap."""
    if dim_s < 2:
        raise ValueError(f"dim_s must be >= 2, got {dim_s}")
    if gap <= 0:
        raise ValueError(f"gap must be positive, got {gap}")
    return Hamiltonian(gap * np.arange(1, dim_s + 1, dtype=float), label=label)


def load_hamiltonian(path: str | Path, require_nondegenerate: bool = False) -> Hamiltonian:
    """Load a Hamiltonian from JSON (diagonal or dense row-major variant)."""
    path = Path(path)
    with open(path) as fh:
        data = json.load(fh)
    fmt = data.get("format")
    label = data.get("label", path.stem)
    if fmt == "diagonal":
        ev = np.sort(np.asarray(data["eigenvalues"], dtype=float))
        ham = Hamiltonian(ev, label=label)
    elif fmt == "dense":
        dim = int(data["dim"])
        a = np.asarray(data["re"], dtype=float) + 1j * np.asarray(data["im"], dtype=float)
        if a.shape != (dim, dim):
            raise ValueError(f"dense entries have shape {a.shape}, expected ({dim}, {dim})")
        defect = max_abs(a - dagger(a))
        if defect > DENSE_HERMITIAN_RTOL * max(max_abs(a), 1e-300):
            raise ValueError(f"dense input not Hermitian: max|A - A†| = {defect:.3e}")
        w, v = np.linalg.eigh(a)
        ham = Hamiltonian(w, eigenbasis=v, label=label)
    else:
        raise ValueError(f"unknown Hamiltonian format {fmt!r} in {path}")
    if require_nondegenerate and not ham.is_nondegenerate():
        raise ValueError(f"Hamiltonian {label!r} has a degenerate spectrum")
    return ham


def gibbs_probabilities(ham: Hamiltonian, beta: float) -> np.ndarray:
    """Thermal weights e^{-beta*lam}/Z computed with a max-eigenvalue shift.

    beta = +inf returns the ground-state indicator and requires a unique
    ground level.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    ev = ham.eigenvalues
    if math.isinf(beta):
        tol = ham.degeneracy_tolerance()
        if ev.size > 1 and ev[1] - ev[0] <= tol:
            raise ValueError("beta = +inf needs a non-degenerate ground level")
        p = np.zeros_like(ev)
        p[0] = 1.0
        return p
    w = np.exp(-beta * (ev - ev.min()))
    return w / w.sum()


def gibbs_state(ham: Hamiltonian, beta: float) -> np.ndarray:
    """Gibbs density matrix in the same basis as ``ham.matrix``."""
    p = gibbs_probabilities(ham, beta)
    if ham.eigenbasis is None:
        return np.diag(p).astype(complex)
    v = ham.eigenbasis
    return (v * p[None, :]) @ dagger(v)


@dataclass(frozen=True)
class EnvQubit:
    """Ancilla qubit with gap gamma thermalized at inverse temperature beta."""

    gamma: float
    beta: float
    q0: float
    q1: float


def env_qubit(gamma: float, beta: float) -> EnvQubit:
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if math.isinf(beta):
        return EnvQubit(gamma=gamma, beta=beta, q0=1.0, q1=0.0)
    q0 = float(fermi(beta, gamma))
    return EnvQubit(gamma=gamma, beta=beta, q0=q0, q1=1.0 - q0)


def env_populations(gammas: np.ndarray, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (q0, q1) for a batch of ancilla gaps."""
    q0 = np.asarray(fermi(beta, gammas), dtype=float)
    return q0, 1.0 - q0


@dataclass(frozen=True)
class SpectralProfile:
    """Eigenvalue-difference statistics of a system Hamiltonian.

    ``differences[j, i] = lam(i) - lam(j)`` so column i holds the signed drops
    from source level i. ``delta_min`` is the smallest separation between two
    distinct differences, the zero difference included.
    """

    differences: np.ndarray
    delta_min: float
    distinct_gaps: np.ndarray
    multiplicities: np.ndarray
    spectral_norm: float
    tol: float

    def multiplicity(self, value: float) -> int:
        """Multiplicity of a positive difference, 0 if it is not in the spectrum."""
        idx = np.where(np.abs(self.distinct_gaps - abs(value)) <= self.tol)[0]
        return int(self.multiplicities[idx[0]]) if idx.size else 0


def _cluster_sorted(values: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Group a sorted array into clusters of spacing <= tol; return (reps, counts)."""
    reps = [values[0]]
    counts = [1]
    for v in values[1:]:
        if v - reps[-1] <= tol:
            counts[-1] += 1
        else:
            reps.append(v)
            counts.append(1)
    return np.asarray(reps), np.asarray(counts, dtype=int)


def spectral_profile(ham: Hamiltonian, tol: float | None = None) -> SpectralProfile:
    ev = ham.eigenvalues
    n = ev.size
    tol = ham.degeneracy_tolerance() if tol is None else tol
    diffs = ev[None, :] - ev[:, None]  # [j, i] = lam(i) - lam(j)

    # delta_min over every pair of distinct difference values; the full signed
    # set (including the zero diagonal) is scanned via its sorted order.
    all_vals = np.sort(diffs.ravel())
    gaps = np.diff(all_vals)
    distinct = gaps[gaps > tol]
    if distinct.size == 0:
        raise ValueError("delta_min undefined: all eigenvalue differences coincide")
    delta_min = float(np.min(distinct))

    upper = np.sort(diffs[np.triu_indices(n, k=1)])  # positive differences
    positive = upper[upper > tol]
    if positive.size:
        reps, counts = _cluster_sorted(positive, tol)
    else:
        reps, counts = np.array([]), np.array([], dtype=int)
    return SpectralProfile(
        differences=diffs,
        delta_min=delta_min,
        distinct_gaps=reps,
        multiplicities=counts,
        spectral_norm=ham.spectral_norm,
        tol=tol,
    )
