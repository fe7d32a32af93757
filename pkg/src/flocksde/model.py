"""Domain types and exact vector fields for velocity-alignment particle systems.

The dynamics couple N particles in R^d through a nonnegative, nonincreasing
communication kernel psi of inter-particle distance:

    dx_i = v_i dt
    dv_i = coupling * sum_j psi(|x_j - x_i|) (v_j - v_i) dt  +  noise

Three noise models are supported:

* common multiplicative noise: one shared scalar Wiener process w_t scaling
  the summed velocity differences, sigma * sum_j (v_j - v_i) o dw_t, read in
  the Stratonovich sense;
* independent additive noise: sqrt(D) dw on each of the N*d velocity
  components (Ito as written);
* independent multiplicative noise: D (v_i - v_ref) dw_i with one scalar
  Wiener process per particle, multiplying the full deviation vector
  (Ito as written).

Every operation here is a pure function of its inputs and safe to call from
any number of threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "StateError",
    "NumericsError",
    "SystemState",
    "FrameRecord",
    "RationalKernel",
    "SingularKernel",
    "ConstantKernel",
    "Kernel",
    "KernelBounds",
    "kernel_eval",
    "kernel_bounds",
    "CommonMultiplicativeNoise",
    "IndependentAdditiveNoise",
    "IndependentMultiplicativeNoise",
    "NoiseModel",
    "noise_channels",
    "ModelConfig",
    "drift",
    "diffusion_common",
    "ito_correction_common",
    "diffusion_other",
    "center_frame",
    "restore_frame",
    "pairwise_distances",
]


class StateError(ValueError):
    """A system state violates its shape or finiteness invariants."""


class NumericsError(ArithmeticError):
    """A field evaluation produced non-finite values."""


# ---------------------------------------------------------------------------
# states and frames
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemState:
    """Positions and velocities of N >= 2 particles in R^d at time t.

    Both arrays have shape (N, d) and must be finite; a non-finite state is
    an error, never a value to propagate silently.
    """

    t: float
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        v = np.array(self.v, dtype=float)
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        if x.ndim != 2 or x.shape != v.shape:
            raise StateError(
                f"positions {x.shape} and velocities {v.shape} must share shape (N, d)"
            )
        n, d = x.shape
        if n < 2 or d < 1:
            raise StateError(f"need N >= 2 particles in d >= 1 dimensions, got N={n}, d={d}")
        if not (np.isfinite(self.t) and np.isfinite(x).all() and np.isfinite(v).all()):
            raise StateError("state contains non-finite values")

    @property
    def n_particles(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class FrameRecord:
    """Removed means, expressed at t = 0 so the frame restores at any time.

    Restoring maps x -> x + x_mean0 + v_mean0 * t and v -> v + v_mean0.
    """

    x_mean0: np.ndarray
    v_mean0: np.ndarray


def center_frame(state: SystemState) -> tuple[SystemState, FrameRecord]:
    """Remove the mean position and mean velocity from a state.

    The returned state has sum(x_i) = sum(v_i) = 0 to machine precision.
    Because the mean velocity is exactly conserved and the mean position
    drifts linearly, the record stores the t = 0 equivalents, making
    restore_frame exact at any time.
    """
    v_mean = state.v.mean(axis=0)
    x_mean = state.x.mean(axis=0)
    record = FrameRecord(x_mean0=x_mean - v_mean * state.t, v_mean0=v_mean)
    centered = SystemState(t=state.t, x=state.x - x_mean, v=state.v - v_mean)
    return centered, record


def restore_frame(state: SystemState, record: FrameRecord) -> SystemState:
    """Invert center_frame, reapplying the removed (linearly drifting) frame."""
    return SystemState(
        t=state.t,
        x=state.x + record.x_mean0 + record.v_mean0 * state.t,
        v=state.v + record.v_mean0,
    )


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix of shape (N, N) for row vectors x."""
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


# ---------------------------------------------------------------------------
# communication kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RationalKernel:
    """psi(s) = K / (c + s^2)^beta; nonincreasing for beta >= 0."""

    K: float = 1.0
    c: float = 1.0
    beta: float = 0.25

    def __post_init__(self):
        if not (self.K >= 0 and self.c > 0 and self.beta >= 0):
            raise ValueError("rational kernel needs K >= 0, c > 0, beta >= 0")

    def __call__(self, s):
        return self.K / (self.c + np.square(s)) ** self.beta


@dataclass(frozen=True)
class SingularKernel:
    """psi(s) = K / s^(2 beta), clamped to psi(cap_s) on [0, cap_s).

    The unclamped kernel is not locally Lipschitz at 0; the clamp keeps the
    vector field integrable while leaving the far field untouched.  cap_s=None
    disables the clamp (psi(0) = +inf), which is only meaningful for threshold
    analysis, never for time stepping.
    """

    K: float = 1.0
    beta: float = 0.25
    cap_s: float | None = 1e-6

    def __post_init__(self):
        if not (self.K >= 0 and self.beta >= 0):
            raise ValueError("singular kernel needs K >= 0, beta >= 0")
        if self.cap_s is not None and not self.cap_s > 0:
            raise ValueError("cap_s must be positive (or None to disable the clamp)")

    def __call__(self, s):
        s_eff = np.maximum(s, self.cap_s) if self.cap_s is not None else np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            return self.K / s_eff ** (2.0 * self.beta)


@dataclass(frozen=True)
class ConstantKernel:
    """psi(s) = K for all s."""

    K: float = 1.0

    def __post_init__(self):
        if not self.K >= 0:
            raise ValueError("constant kernel needs K >= 0")

    def __call__(self, s):
        return np.broadcast_to(np.float64(self.K), np.shape(s)).copy() if np.ndim(s) else float(self.K)


Kernel = Union[RationalKernel, SingularKernel, ConstantKernel]


@dataclass(frozen=True)
class KernelBounds:
    """alpha = sup psi and psi_star = inf psi over s >= 0; alpha may be +inf."""

    alpha: float
    psi_star: float

    def __post_init__(self):
        if not 0 <= self.psi_star <= self.alpha:
            raise ValueError("kernel bounds need 0 <= psi_star <= alpha")


def kernel_eval(kernel: Kernel, s):
    """Evaluate the communication rate at distance(s) s >= 0.

    Accepts scalars or arrays; rejects negative or non-finite input.
    """
    arr = np.asarray(s, dtype=float)
    if not np.isfinite(arr).all():
        raise ValueError("kernel argument must be finite")
    if (arr < 0).any():
        raise ValueError("kernel argument must be nonnegative")
    out = kernel(arr)
    return float(out) if np.ndim(s) == 0 else out


def kernel_bounds(kernel: Kernel) -> KernelBounds:
    """Supremum and infimum of the kernel over [0, inf)."""
    if isinstance(kernel, ConstantKernel):
        return KernelBounds(alpha=kernel.K, psi_star=kernel.K)
    if isinstance(kernel, RationalKernel):
        if kernel.beta == 0:
            return KernelBounds(alpha=kernel.K, psi_star=kernel.K)
        return KernelBounds(alpha=kernel.K / kernel.c**kernel.beta, psi_star=0.0)
    if isinstance(kernel, SingularKernel):
        if kernel.beta == 0:
            return KernelBounds(alpha=kernel.K, psi_star=kernel.K)
        if kernel.cap_s is None:
            return KernelBounds(alpha=np.inf, psi_star=0.0)
        return KernelBounds(alpha=kernel.K / kernel.cap_s ** (2.0 * kernel.beta), psi_star=0.0)
    raise TypeError(f"unknown kernel type {type(kernel).__name__}")


# ---------------------------------------------------------------------------
# noise models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CommonMultiplicativeNoise:
    """sigma * sum_j (v_j - v_i) o dw_t with ONE shared scalar Wiener process.

    Stratonovich; converting to Ito adds the drift ito_correction_common.
    """

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class IndependentAdditiveNoise:
    """sqrt(D) dw on each velocity component; N*d independent channels (Ito)."""

    D: float

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError("D must be positive")


@dataclass(frozen=True)
class IndependentMultiplicativeNoise:
    """D (v_i - v_ref) dw_i; one scalar channel per particle scales the full
    deviation vector (Ito)."""

    D: float
    v_ref: np.ndarray

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError("D must be positive")
        v_ref = np.atleast_1d(np.array(self.v_ref, dtype=float))
        if v_ref.ndim != 1 or not np.isfinite(v_ref).all():
            raise ValueError("v_ref must be a finite vector in R^d")
        object.__setattr__(self, "v_ref", v_ref)


NoiseModel = Union[
    CommonMultiplicativeNoise,
    IndependentAdditiveNoise,
    IndependentMultiplicativeNoise,
    None,
]


def noise_channels(noise: NoiseModel, n_particles: int, dim: int) -> int:
    """Number of independent Wiener channels the model drives."""
    if noise is None:
        return 0
    if isinstance(noise, CommonMultiplicativeNoise):
        return 1
    if isinstance(noise, IndependentAdditiveNoise):
        return n_particles * dim
    if isinstance(noise, IndependentMultiplicativeNoise):
        return n_particles
    raise TypeError(f"unknown noise model {type(noise).__name__}")


@dataclass(frozen=True)
class ModelConfig:
    """Kernel, noise model, coupling scale, and system size.

    coupling_scale multiplies the alignment sum: 1 reproduces the common-noise
    system as written, lambda/N reproduces the mean-field normalization of the
    deterministic and independent-noise variants.
    """

    kernel: Kernel
    noise: NoiseModel
    n_particles: int
    dim: int
    coupling_scale: float = 1.0

    def __post_init__(self):
        if self.n_particles < 2 or self.dim < 1:
            raise ValueError("need n_particles >= 2 and dim >= 1")
        if not (np.isfinite(self.coupling_scale) and self.coupling_scale > 0):
            raise ValueError("coupling_scale must be positive and finite")
        if isinstance(self.noise, IndependentMultiplicativeNoise):
            if self.noise.v_ref.shape != (self.dim,):
                raise ValueError("v_ref dimension must match the model dimension")

    def validate_state(self, state: SystemState) -> None:
        if state.n_particles != self.n_particles or state.dim != self.dim:
            raise StateError(
                f"state shape {state.x.shape} does not match model "
                f"({self.n_particles}, {self.dim})"
            )


# ---------------------------------------------------------------------------
# exact fields
# ---------------------------------------------------------------------------


def _velocity_differences(v: np.ndarray) -> np.ndarray:
    """D_i = sum_j (v_j - v_i), summed as differences so that identical
    velocities give an exact zero in floating point."""
    return (v[None, :, :] - v[:, None, :]).sum(axis=1)


def _drift_dv(x: np.ndarray, v: np.ndarray, kernel: Kernel, coupling: float) -> np.ndarray:
    if isinstance(kernel, ConstantKernel):
        return (kernel.K * coupling) * _velocity_differences(v)
    psi = kernel(pairwise_distances(x))
    np.fill_diagonal(psi, 0.0)
    diff = v[None, :, :] - v[:, None, :]
    return coupling * np.einsum("ij,ijk->ik", psi, diff)


def drift(state: SystemState, config: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic drift (dx, dv); no Ito correction included.

    dx_i = v_i and dv_i = coupling * sum_j psi(|x_j - x_i|)(v_j - v_i).
    The row sum of dv vanishes exactly, so the mean velocity is conserved;
    equal velocities give an exactly zero field.
    """
    config.validate_state(state)
    with np.errstate(over="ignore", invalid="ignore"):
        dv = _drift_dv(state.x, state.v, config.kernel, config.coupling_scale)
    if not np.isfinite(dv).all():
        raise NumericsError("drift produced non-finite values")
    return state.v.copy(), dv


def _diffusion_common(v: np.ndarray, sigma: float) -> np.ndarray:
    return sigma * _velocity_differences(v)


def diffusion_common(state: SystemState, sigma: float) -> np.ndarray:
    """Shared-channel diffusion field g_i = sigma * sum_j (v_j - v_i).

    Equals sigma (S - N v_i) with S = sum_j v_j; rows sum to zero exactly.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return _diffusion_common(state.v, sigma)


def _ito_correction_common(v: np.ndarray, sigma: float) -> np.ndarray:
    # (sigma^2/2)(N^2 v_i - N S) = -(sigma^2 N / 2) sum_j (v_j - v_i)
    n = v.shape[0]
    return (-0.5 * sigma * sigma * n) * _velocity_differences(v)


def ito_correction_common(state: SystemState, sigma: float) -> np.ndarray:
    """Stratonovich-to-Ito drift correction for the shared-channel noise.

    The diffusion field g is linear in v, so (1/2)(Dg)g is exact:
    c_i = (sigma^2 / 2)(N^2 v_i - N S).  Rows sum to zero; in the centered
    frame 2 sum_i <v_i, c_i> + sum_i |g_i|^2 = 2 N^2 sigma^2 |v|^2, which is
    the Ito drift of |v|^2 produced by the conversion.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return _ito_correction_common(state.v, sigma)


def diffusion_other(state: SystemState, noise: NoiseModel) -> np.ndarray:
    """Diffusion coefficients for the independent-noise (Ito) models.

    Additive: constant sqrt(D) on every component, one channel per component.
    Multiplicative: D (v_i - v_ref), one scalar channel per particle.
    Both return an (N, d) coefficient array.
    """
    if isinstance(noise, IndependentAdditiveNoise):
        return np.full_like(state.v, np.sqrt(noise.D))
    if isinstance(noise, IndependentMultiplicativeNoise):
        return noise.D * (state.v - noise.v_ref[None, :])
    raise TypeError("diffusion_other requires an independent-noise model")
