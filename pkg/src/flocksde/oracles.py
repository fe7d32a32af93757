"""Closed-form bounds and exact solutions for comparison against simulation.

Pathwise bounds share the driving Brownian path with the trajectory under
test (a comparison-theorem sandwich); expectation bounds are plain
exponential envelopes of the mean square velocity.

Two decay-rate conventions coexist for the small-noise regime and differ by
a factor 2N in the exponent while sharing the sign threshold sigma^2 < psi*/N:
expected_decay_upper evaluates the slower envelope rate (N sigma^2 - psi*);
expected_decay_exact_const evaluates 2N(N sigma^2 - c), which is the exact
mean rate for a constant kernel psi = c (see the matching pathwise solution
pathwise_v_exact_const).  Both are provided rather than adjudicated; tests
pin the exact one against brute-force Monte Carlo.

All exponentials are evaluated in log space; values beyond the floating
range saturate at the largest finite double and are flagged, never silently
clipped.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from .brownian import BrownianPath
from .model import KernelBounds

__all__ = [
    "TheoryBound",
    "ThresholdReport",
    "pathwise_v_upper",
    "pathwise_x_upper",
    "expected_growth_lower",
    "expected_decay_upper",
    "expected_decay_exact_const",
    "pathwise_v_exact_const",
    "expected_x_upper",
    "thresholds",
]

_LOG_MAX = float(np.log(np.finfo(float).max))  # ~709.78
_FLOAT_MAX = float(np.finfo(float).max)


@dataclass(frozen=True)
class TheoryBound:
    """An evaluated bound series: values, exact log values, saturation flags."""

    kind: str
    params: dict
    times: np.ndarray
    values: np.ndarray
    log_values: np.ndarray
    saturated: np.ndarray

    @property
    def any_saturated(self) -> bool:
        return bool(self.saturated.any())


def _exp_series(kind: str, params: dict, times, base: float, exponent) -> TheoryBound:
    """base * exp(exponent) with log-space saturation flags.

    A zero exponent returns base exactly (the t = 0 anchor of every bound).
    """
    times = np.asarray(times, dtype=float)
    exponent = np.asarray(exponent, dtype=float)
    log_values = _log_or_neginf(base) + exponent
    saturated = log_values > _LOG_MAX
    with np.errstate(over="ignore"):
        values = np.where(exponent == 0.0, base, np.exp(np.minimum(log_values, _LOG_MAX)))
    values[saturated] = _FLOAT_MAX
    return TheoryBound(
        kind=kind,
        params=params,
        times=times,
        values=values,
        log_values=log_values,
        saturated=saturated,
    )


def _log_or_neginf(value: float) -> float:
    with np.errstate(divide="ignore"):
        return float(np.log(value))


def pathwise_v_upper(
    v0_norm2: float, n_particles: int, sigma: float, path: BrownianPath, times
) -> TheoryBound:
    """Pathwise upper envelope V(t) = |v(0)|^2 exp(-2 N sigma w_t).

    Dominates the centered mean square velocity almost surely along the same
    path, for any nonnegative kernel.
    """
    t = np.asarray(times, dtype=float)
    w = path.w_at(t)
    return _exp_series(
        "pathwise_v_upper",
        {"v0_norm2": v0_norm2, "n_particles": n_particles, "sigma": sigma},
        t,
        v0_norm2,
        -2.0 * n_particles * sigma * w,
    )


def pathwise_x_upper(
    x0_norm: float, v0_norm: float, n_particles: int, sigma: float, path: BrownianPath, times
) -> TheoryBound:
    """Pathwise bound |x(0)| + |v(0)| * integral_0^t exp(-N sigma w_s) ds.

    The integral is trapezoidal on the path's own grid, consistent with the
    path resolution.
    """
    t = np.asarray(times, dtype=float)
    idx = np.rint(t / path.dt).astype(int)
    w = path.w[:, 0]
    with np.errstate(over="ignore"):
        integrand = np.exp(-n_particles * sigma * w)
    cum = np.concatenate(
        [[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * path.dt)]
    )
    values = x0_norm + v0_norm * cum[idx]
    saturated = ~np.isfinite(values)
    values = np.where(saturated, _FLOAT_MAX, values)
    with np.errstate(divide="ignore"):
        log_values = np.log(values)
    return TheoryBound(
        kind="pathwise_x_upper",
        params={"x0_norm": x0_norm, "v0_norm": v0_norm, "n_particles": n_particles, "sigma": sigma},
        times=t,
        values=values,
        log_values=log_values,
        saturated=saturated,
    )


def expected_growth_lower(
    v0_norm2: float, n_particles: int, sigma: float, alpha: float, times
) -> TheoryBound:
    """E|v(t)|^2 >= |v(0)|^2 exp(2N(N sigma^2 - alpha) t), alpha = sup psi.

    The exponent is positive exactly when sigma > sqrt(alpha / N): large
    common noise forces the mean square velocity to diverge, so the particles
    cannot align.
    """
    t = np.asarray(times, dtype=float)
    rate = 2.0 * n_particles * (n_particles * sigma * sigma - alpha)
    return _exp_series(
        "expected_growth_lower",
        {"v0_norm2": v0_norm2, "n_particles": n_particles, "sigma": sigma, "alpha": alpha},
        t,
        v0_norm2,
        rate * t,
    )


def expected_decay_upper(
    v0_norm2: float, n_particles: int, sigma: float, psi_star: float, times
) -> TheoryBound:
    """Envelope |v(0)|^2 exp((N sigma^2 - psi*) t), psi* = inf psi.

    Decays exactly when sigma < sqrt(psi* / N).  For a constant kernel the
    exact mean decays 2N times faster; see expected_decay_exact_const.
    """
    t = np.asarray(times, dtype=float)
    rate = n_particles * sigma * sigma - psi_star
    return _exp_series(
        "expected_decay_upper",
        {"v0_norm2": v0_norm2, "n_particles": n_particles, "sigma": sigma, "psi_star": psi_star},
        t,
        v0_norm2,
        rate * t,
    )


def expected_decay_exact_const(
    v0_norm2: float, n_particles: int, sigma: float, psi_const: float, times
) -> TheoryBound:
    """Exact mean for a constant kernel: E|v(t)|^2 = |v(0)|^2 e^{2N(N sigma^2 - c)t}.

    With psi = c the centered mean square velocity solves the linear SDE
    d|v|^2 = 2N(N sigma^2 - c)|v|^2 dt - 2N sigma |v|^2 dw exactly, so its
    mean is a pure exponential.  The test suite verifies this against a
    brute-force Euler-Maruyama Monte Carlo of that scalar SDE.
    """
    t = np.asarray(times, dtype=float)
    rate = 2.0 * n_particles * (n_particles * sigma * sigma - psi_const)
    return _exp_series(
        "expected_decay_exact_const",
        {"v0_norm2": v0_norm2, "n_particles": n_particles, "sigma": sigma, "psi_const": psi_const},
        t,
        v0_norm2,
        rate * t,
    )


def pathwise_v_exact_const(
    v0_norm2: float,
    n_particles: int,
    sigma: float,
    psi_const: float,
    path: BrownianPath,
    times,
) -> TheoryBound:
    """Exact pathwise solution for a constant kernel, on the shared path:

        |v(t)|^2 = |v(0)|^2 exp(-2 N c t - 2 N sigma w_t)

    This is the primary strong-convergence target; averaging it over the path
    distribution recovers expected_decay_exact_const via
    E exp(-2 N sigma w_t) = exp(2 N^2 sigma^2 t).
    """
    t = np.asarray(times, dtype=float)
    w = path.w_at(t)
    return _exp_series(
        "pathwise_v_exact_const",
        {"v0_norm2": v0_norm2, "n_particles": n_particles, "sigma": sigma, "psi_const": psi_const},
        t,
        v0_norm2,
        -2.0 * n_particles * psi_const * t - 2.0 * n_particles * sigma * w,
    )


def expected_x_upper(
    x0_norm: float, v0_norm: float, n_particles: int, sigma: float, psi_star: float, times
) -> TheoryBound:
    """Mean position envelope with the finite limit x0 + 2 v0 / (psi* + (N^2-N) sigma^2):

        |x(0)| + |v(0)| * (2/r) * (exp(r t / 2) - 1),  r = (N - N^2) sigma^2 - psi*

    Requires r < 0, which holds whenever psi* > 0 or sigma > 0 for N >= 2.
    """
    t = np.asarray(times, dtype=float)
    n = n_particles
    r = (n - n * n) * sigma * sigma - psi_star
    if r == 0:
        raise ValueError("degenerate envelope: (N - N^2) sigma^2 - psi* must be negative")
    if r > 0:
        raise ValueError("envelope requires (N - N^2) sigma^2 - psi* < 0")
    values = x0_norm + v0_norm * (2.0 / r) * (np.exp(0.5 * r * t) - 1.0)
    with np.errstate(divide="ignore"):
        log_values = np.log(values)
    return TheoryBound(
        kind="expected_x_upper",
        params={
            "x0_norm": x0_norm,
            "v0_norm": v0_norm,
            "n_particles": n_particles,
            "sigma": sigma,
            "psi_star": psi_star,
        },
        times=t,
        values=values,
        log_values=log_values,
        saturated=np.zeros(t.shape, dtype=bool),
    )


@dataclass(frozen=True)
class ThresholdReport:
    """Noise-strength thresholds derived from the kernel bounds.

    sigma below sigma_flock_max guarantees flocking (needs psi* > 0); sigma
    above sigma_nonflock_min guarantees non-flocking (needs alpha < inf).
    For constant kernels the two coincide and only the exact threshold value
    stays indeterminate.
    """

    n_particles: int
    sigma_flock_max: float
    sigma_nonflock_min: float
    nonflock_applicable: bool

    def classify(self, sigma: float) -> str:
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        if self.nonflock_applicable and sigma > self.sigma_nonflock_min:
            return "non-flocking"
        if sigma < self.sigma_flock_max:
            return "flocking"
        return "indeterminate"


def thresholds(n_particles: int, bounds: KernelBounds) -> ThresholdReport:
    """(sqrt(psi*/N), sqrt(alpha/N)); alpha = inf disables the non-flocking side.

    An unbounded kernel admits no noise level that certifies non-flocking,
    so the report flags that side inapplicable instead of inventing a value.
    """
    if n_particles < 2:
        raise ValueError("need n_particles >= 2")
    applicable = np.isfinite(bounds.alpha)
    return ThresholdReport(
        n_particles=n_particles,
        sigma_flock_max=sqrt(bounds.psi_star / n_particles),
        sigma_nonflock_min=sqrt(bounds.alpha / n_particles) if applicable else float("inf"),
        nonflock_applicable=bool(applicable),
    )
