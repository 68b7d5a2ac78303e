"""Dense complex linear algebra primitives for small quantum systems.

Everything operates on plain ``numpy`` arrays in complex double precision.
Where it matters for Monte Carlo throughput the functions accept a stack of
matrices (leading batch axis) and use the batched LAPACK drivers underneath.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_RTOL = 1e-12
UNITARY_ATOL = 1e-12
TRACE_ATOL = 1e-10
EIG_FLOOR = -1e-10


def dagger(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose, batch-aware."""
    return np.conjugate(np.swapaxes(a, -1, -2))


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def hermiticity_defect(a: np.ndarray) -> float:
    """max|A - A†|, over the whole batch if one is given."""
    return max_abs(a - dagger(a))


def unitarity_defect(u: np.ndarray) -> float:
    """max|U†U - I|, over the whole batch if one is given."""
    dim = u.shape[-1]
    eye = np.eye(dim)
    return max_abs(dagger(u) @ u - eye)


def assert_hermitian(a: np.ndarray, rtol: float = HERMITIAN_RTOL, name: str = "matrix") -> None:
    defect = hermiticity_defect(a)
    scale = max(max_abs(a), 1e-300)
    if defect > rtol * scale:
        raise ValueError(
            f"{name} is not Hermitian: max|A - A†| = {defect:.3e} "
            f"exceeds {rtol:.1e} * max|A| = {rtol * scale:.3e}"
        )


def check_density(rho: np.ndarray, trace_atol: float = TRACE_ATOL,
                  herm_rtol: float = HERMITIAN_RTOL, eig_floor: float = EIG_FLOOR,
                  name: str = "density matrix") -> None:
    """Validate a density matrix: unit trace, Hermitian, PSD up to ``eig_floor``.

    Violations raise with the measured values; nothing is clipped silently.
    """
    if rho.ndim < 2 or rho.shape[-1] != rho.shape[-2]:
        raise ValueError(f"{name} must be square, got shape {rho.shape}")
    problems = []
    traces = np.trace(rho, axis1=-2, axis2=-1)
    trace_err = max_abs(traces - 1.0)
    if trace_err > trace_atol:
        problems.append(f"max|tr - 1| = {trace_err:.3e} > {trace_atol:.1e}")
    defect = hermiticity_defect(rho)
    if defect > herm_rtol * max(max_abs(rho), 1e-300):
        problems.append(f"max|A - A†| = {defect:.3e}")
    lowest = float(np.min(np.linalg.eigvalsh(rho)))
    if lowest < eig_floor:
        problems.append(f"min eigenvalue = {lowest:.3e} < {eig_floor:.1e}")
    if problems:
        raise ValueError(f"{name} invalid: " + "; ".join(problems))


def evolve(h: np.ndarray, t: float) -> np.ndarray:
    """Unitary e^{+iHt} of a Hermitian H via eigendecomposition.

    Accepts a single matrix or a stack. The eigendecomposition route keeps the
    result unitary to roundoff for any t.
    """
    if not np.isfinite(t):
        raise ValueError(f"time must be finite, got {t}")
    assert_hermitian(h, name="evolve input")
    w, v = np.linalg.eigh(h)
    phases = np.exp(1j * t * w)
    return (v * phases[..., None, :]) @ dagger(v)


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product a ⊗ b; either factor may carry a batch axis."""
    if a.ndim == 2 and b.ndim == 2:
        return np.kron(a, b)
    a = np.asarray(a)
    b = np.asarray(b)
    da, db = a.shape[-1], b.shape[-1]
    out = np.einsum("...ij,...kl->...ikjl", a, b)
    return out.reshape(out.shape[:-4] + (a.shape[-2] * b.shape[-2], da * db))


def partial_trace_env(rho_se: np.ndarray, dim_env: int) -> np.ndarray:
    """Trace out the trailing environment factor of a system-major joint state.

    The joint index convention is (i, j) -> i * dim_env + j with i the system
    index, so the environment is the fast axis.
    """
    dim = rho_se.shape[-1]
    if rho_se.shape[-2] != dim:
        raise ValueError(f"joint state must be square, got shape {rho_se.shape}")
    if dim % dim_env != 0:
        raise ValueError(f"joint dimension {dim} not divisible by dim_env {dim_env}")
    dim_s = dim // dim_env
    shaped = rho_se.reshape(rho_se.shape[:-2] + (dim_s, dim_env, dim_s, dim_env))
    return np.einsum("...iajb,ab->...ij", shaped, np.eye(dim_env))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Schatten 1-norm of rho - sigma (no factor 1/2): sum of |eigenvalues|."""
    if rho.shape != sigma.shape:
        raise ValueError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    w = np.linalg.eigvalsh(rho - sigma)
    return float(np.sum(np.abs(w)))


def trace_distance_batch(rho: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Batched trace distance over a stack of states against one target."""
    w = np.linalg.eigvalsh(rho - sigma)
    return np.sum(np.abs(w), axis=-1)


def sample_haar_unitary(dim: int, rng: np.random.Generator,
                        size: int | None = None) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Ginibre matrix.

    The R diagonal is renormalized to unit modulus and absorbed into Q; without
    that phase fix the raw QR output is not Haar.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    shape = (dim, dim) if size is None else (size, dim, dim)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    q = q * (d / np.abs(d))[..., None, :]
    return q


@dataclass(frozen=True)
class RandomInteraction:
    """Random Hermitian interaction G = U diag(d) U† with Haar U and N(0,1) d.

    Fields may carry a leading batch axis.
    """

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvectors.shape[-1]

    @property
    def matrix(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues[..., None, :]) @ dagger(v)


def sample_interaction(dim: int, rng: np.random.Generator,
                       size: int | None = None) -> RandomInteraction:
    """Draw a RandomInteraction (or a batch of them) from the Haar x Gaussian law."""
    u = sample_haar_unitary(dim, rng, size=size)
    shape = (dim,) if size is None else (size, dim)
    d = rng.standard_normal(shape)
    return RandomInteraction(eigenvectors=u, eigenvalues=d)
