"""Time-stepping schemes and single-trajectory simulation.

The common multiplicative noise is a Stratonovich system; the primary scheme
integrates its exactly converted Ito form (Euler-Maruyama plus the closed-form
drift correction).  An Euler-Heun predictor-corrector is kept as an
independent cross-check that discretizes the Stratonovich form directly and
must NOT include the correction.  The independent-noise models are Ito as
written and use plain Euler-Maruyama.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import metrics
from .brownian import BrownianPath, make_brownian_path
from .model import (
    CommonMultiplicativeNoise,
    IndependentAdditiveNoise,
    IndependentMultiplicativeNoise,
    ModelConfig,
    SystemState,
    _diffusion_common,
    _drift_dv,
    _ito_correction_common,
    noise_channels,
)

__all__ = ["StepScheme", "BlowUpError", "Trajectory", "step", "simulate"]


class StepScheme(str, Enum):
    EULER_MARUYAMA_ITO = "euler_maruyama_ito"
    EULER_HEUN_STRATONOVICH = "euler_heun_stratonovich"
    DETERMINISTIC_EULER = "deterministic_euler"


class BlowUpError(ArithmeticError):
    """A step produced a non-finite state; carries the time and step index.

    Blow-up is expected behavior in strong-noise regimes (mean square velocity
    grows exponentially), so callers running ensembles record it per trial
    rather than crashing.
    """

    def __init__(self, t: float, step: int | None = None):
        self.t = float(t)
        self.step = step
        where = f" (step {step})" if step is not None else ""
        super().__init__(f"trajectory blew up: non-finite state at t={t:.9g}{where}")


def _advance(x, v, config: ModelConfig, scheme: StepScheme, dt: float, dw, ito_correction: bool):
    """One step on raw arrays; single source of truth for step() and simulate()."""
    kernel, noise, coupling = config.kernel, config.noise, config.coupling_scale
    dv = _drift_dv(x, v, kernel, coupling)
    if scheme is StepScheme.DETERMINISTIC_EULER or noise is None:
        v_new = v + dv * dt
    elif isinstance(noise, CommonMultiplicativeNoise):
        dwc = float(dw if np.ndim(dw) == 0 else dw[0])
        g = _diffusion_common(v, noise.sigma)
        if scheme is StepScheme.EULER_HEUN_STRATONOVICH:
            v_pred = v + dv * dt + g * dwc
            g_pred = _diffusion_common(v_pred, noise.sigma)
            v_new = v + dv * dt + 0.5 * (g + g_pred) * dwc
        else:
            a = dv + _ito_correction_common(v, noise.sigma) if ito_correction else dv
            v_new = v + a * dt + g * dwc
    elif isinstance(noise, IndependentAdditiveNoise):
        v_new = v + dv * dt + np.sqrt(noise.D) * np.reshape(dw, v.shape)
    elif isinstance(noise, IndependentMultiplicativeNoise):
        dwp = np.reshape(dw, (v.shape[0], 1))
        v_new = v + dv * dt + noise.D * (v - noise.v_ref[None, :]) * dwp
    else:
        raise TypeError(f"unknown noise model {type(noise).__name__}")
    return x + v * dt, v_new


def _expected_dw_size(config: ModelConfig, scheme: StepScheme) -> int:
    if scheme is StepScheme.DETERMINISTIC_EULER:
        return 0
    return noise_channels(config.noise, config.n_particles, config.dim)


def step(
    state: SystemState,
    config: ModelConfig,
    scheme: StepScheme,
    dt: float,
    dw=None,
    ito_correction: bool = True,
) -> SystemState:
    """Advance one time step; dw must match the noise channel layout.

    For the shared-channel noise dw is a scalar (or length-1 array); the
    additive model takes N*d increments in row-major (particle, component)
    order; the per-particle multiplicative model takes N increments.
    ito_correction=False drops the Stratonovich-to-Ito drift correction and
    exists for negative controls in the verification suite.
    """
    config.validate_state(state)
    if not dt > 0:
        raise ValueError("dt must be positive")
    expected = _expected_dw_size(config, scheme)
    if expected == 0:
        dw = None
    else:
        if dw is None:
            raise ValueError(f"scheme/noise require {expected} Wiener increment(s)")
        if np.ndim(dw) != 0 and np.size(dw) != expected:
            raise ValueError(f"dw has {np.size(dw)} entries; noise layout needs {expected}")
        if np.ndim(dw) == 0 and expected != 1:
            raise ValueError(f"scalar dw given; noise layout needs {expected} channels")
    with np.errstate(over="ignore", invalid="ignore"):
        x_new, v_new = _advance(state.x, state.v, config, scheme, dt, dw, ito_correction)
    t_new = state.t + dt
    if not (np.isfinite(x_new).all() and np.isfinite(v_new).all()):
        raise BlowUpError(t_new)
    return SystemState(t=t_new, x=x_new, v=v_new)


@dataclass(frozen=True)
class Trajectory:
    """Time-sampled states and scalar diagnostics of one simulated path.

    w holds the driving Wiener value at each sample for single-channel noise,
    zero for noise-free runs, and NaN for multi-channel models.
    """

    times: np.ndarray
    states: tuple[SystemState, ...]
    v2_centered: np.ndarray
    dispersion: np.ndarray
    max_pair_dist: np.ndarray
    mean_pair_dist: np.ndarray
    w: np.ndarray
    path: BrownianPath | None = None

    @property
    def n_samples(self) -> int:
        return self.times.shape[0]

    @property
    def final_state(self) -> SystemState:
        return self.states[-1]


def resolve_output_indices(dt: float, n_steps: int, output_times=None) -> np.ndarray:
    """Map requested output offsets onto step indices; 0 is always included.

    Offsets must lie on the step grid (within 1e-9 relative) and inside the
    horizon.  Without an explicit grid, roughly 200 evenly strided samples
    plus the endpoint are used.
    """
    if output_times is None:
        stride = max(1, n_steps // 200)
        idx = np.arange(0, n_steps + 1, stride)
        if idx[-1] != n_steps:
            idx = np.append(idx, n_steps)
        return idx
    offsets = np.asarray(output_times, dtype=float)
    if offsets.ndim != 1 or offsets.size == 0:
        raise ValueError("output_times must be a nonempty 1-D sequence")
    idx = np.rint(offsets / dt).astype(int)
    if not np.allclose(idx * dt, offsets, rtol=0.0, atol=1e-9 * max(1.0, float(np.abs(offsets).max()))):
        raise ValueError("output times must lie on the step grid")
    if ((idx < 0) | (idx > n_steps)).any():
        raise ValueError("output times must lie within [0, t_final]")
    idx = np.unique(idx)
    if idx[0] != 0:
        idx = np.concatenate([[0], idx])
    return idx


def simulate(
    config: ModelConfig,
    init: SystemState,
    scheme: StepScheme,
    dt: float,
    t_final: float,
    output_times=None,
    seed=None,
    path: BrownianPath | None = None,
    ito_correction: bool = True,
) -> Trajectory:
    """Integrate one trajectory; a deterministic function of its arguments.

    output_times are offsets from the initial time and must be multiples of
    dt.  A pre-built BrownianPath may be shared with a theory oracle; one is
    otherwise drawn from seed.  Blow-up propagates as BlowUpError with the
    failure time and step index.
    """
    config.validate_state(init)
    if not (np.isfinite(dt) and dt > 0 and np.isfinite(t_final) and t_final > 0):
        raise ValueError("dt and t_final must be positive and finite")
    n_steps = int(round(t_final / dt))
    if n_steps < 1 or abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError("t_final must be an integral number of steps")

    channels = noise_channels(config.noise, config.n_particles, config.dim)
    use_noise = channels > 0 and scheme is not StepScheme.DETERMINISTIC_EULER
    if use_noise:
        if path is None:
            if seed is None:
                raise ValueError("a seed (or pre-built path) is required for noisy dynamics")
            path = make_brownian_path(seed, dt, n_steps, channels)
        if path.n_channels != channels:
            raise ValueError(
                f"path has {path.n_channels} channels; noise layout needs {channels}"
            )
        if abs(path.dt - dt) > 1e-12 * max(1.0, dt) or path.n_steps < n_steps:
            raise ValueError("path grid does not cover the requested integration")
        increments = path.increments
        w_grid = path.w[:, 0] if channels == 1 else None
    else:
        increments = None
        w_grid = None

    sample_idx = resolve_output_indices(dt, n_steps, output_times)
    t0 = float(init.t)

    x = init.x.copy()
    v = init.v.copy()

    times = np.empty(sample_idx.shape[0])
    v2 = np.empty_like(times)
    disp = np.empty_like(times)
    max_pair = np.empty_like(times)
    mean_pair = np.empty_like(times)
    w_out = np.empty_like(times)
    states: list[SystemState] = []

    def record(pos: int, k: int) -> None:
        t_k = t0 + k * dt
        state_k = SystemState(t=t_k, x=x.copy(), v=v.copy())
        states.append(state_k)
        times[pos] = t_k
        v2[pos] = metrics.centered_speed_norm2(v)
        disp[pos] = metrics.velocity_dispersion(v)
        spread = metrics.position_spread(x)
        max_pair[pos] = spread.max_pair
        mean_pair[pos] = spread.mean_pair
        # a finite state whose squared diagnostics overflow is out of numeric
        # range for every downstream consumer; treat it as blow-up
        if not (np.isfinite(v2[pos]) and np.isfinite(disp[pos]) and np.isfinite(max_pair[pos])):
            raise BlowUpError(t_k, k)
        if w_grid is not None:
            w_out[pos] = w_grid[k]
        else:
            w_out[pos] = 0.0 if increments is None else np.nan

    # overflow on the way to blow-up is expected and handled, not a warning
    with np.errstate(over="ignore", invalid="ignore"):
        record(0, 0)
        pos = 1
        for k in range(1, n_steps + 1):
            dw = increments[k - 1] if increments is not None else None
            x, v = _advance(x, v, config, scheme, dt, dw, ito_correction)
            if not (np.isfinite(v).all() and np.isfinite(x).all()):
                raise BlowUpError(t0 + k * dt, k)
            if pos < sample_idx.shape[0] and sample_idx[pos] == k:
                record(pos, k)
                pos += 1

    return Trajectory(
        times=times,
        states=tuple(states),
        v2_centered=v2,
        dispersion=disp,
        max_pair_dist=max_pair,
        mean_pair_dist=mean_pair,
        w=w_out,
        path=path,
    )
