"""Flocking diagnostics and Monte Carlo estimators.

Flocking means two things at once: velocity alignment (pairwise velocity
differences vanish) and group forming (pairwise distances stay bounded).
The diagnostics here compute the per-trial statistics, aggregate them over
trials, and turn a finite observation window into a three-way verdict:
satisfied, violated, or undetermined when the evidence clears no margin.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .brownian import BrownianPath
from .model import SystemState

__all__ = [
    "SATISFIED",
    "VIOLATED",
    "UNDETERMINED",
    "PositionSpread",
    "FlockingVerdict",
    "velocity_dispersion",
    "centered_speed_norm2",
    "position_spread",
    "ensemble_mean",
    "slln_diagnostic",
    "classify_flocking",
]

SATISFIED = "satisfied"
VIOLATED = "violated"
UNDETERMINED = "undetermined"


def _velocities(state_or_v) -> np.ndarray:
    v = state_or_v.v if isinstance(state_or_v, SystemState) else np.asarray(state_or_v, dtype=float)
    if v.ndim != 2:
        raise ValueError("expected a SystemState or an (N, d) velocity array")
    return v


def _positions(state_or_x) -> np.ndarray:
    x = state_or_x.x if isinstance(state_or_x, SystemState) else np.asarray(state_or_x, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a SystemState or an (N, d) position array")
    return x


def velocity_dispersion(state_or_v) -> float:
    """Sum over unordered pairs i < j of |v_i - v_j|^2.

    This is the per-trial integrand of the mean-dispersion curve; it equals
    N * centered_speed_norm2 for every state.
    """
    v = _velocities(state_or_v)
    diff = v[:, None, :] - v[None, :, :]
    return 0.5 * float(np.einsum("ijk,ijk->", diff, diff))


def centered_speed_norm2(state_or_v) -> float:
    """|v|^2 = sum_i |v_i|^2 after removing the mean velocity."""
    v = _velocities(state_or_v)
    vc = v - v.mean(axis=0)
    return float(np.einsum("ij,ij->", vc, vc))


class PositionSpread(NamedTuple):
    max_pair: float
    mean_pair: float


def position_spread(state_or_x) -> PositionSpread:
    """Largest and pair-averaged inter-particle distance."""
    x = _positions(state_or_x)
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    n = x.shape[0]
    return PositionSpread(
        max_pair=float(dist.max()),
        mean_pair=float(dist.sum() / (n * (n - 1))),
    )


def ensemble_mean(
    trials: Sequence[np.ndarray], include: Sequence[bool] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise sample mean and standard error over aligned trial series.

    include masks trials out of the reduction (diverged trials are excluded
    upstream and counted separately, never averaged).  With a single trial
    the standard error is zero.
    """
    try:
        arr = np.stack([np.asarray(t, dtype=float) for t in trials])
    except ValueError as exc:
        raise ValueError("trial series have mismatched time grids") from exc
    if include is not None:
        arr = arr[np.asarray(include, dtype=bool)]
    n = arr.shape[0]
    if n < 1:
        raise ValueError("no trials to aggregate")
    with np.errstate(over="ignore"):
        mean = arr.mean(axis=0)
        if n == 1:
            return mean, np.zeros_like(mean)
        stderr = arr.std(axis=0, ddof=1) / np.sqrt(n)
    # near the top of the float range the plain variance overflows even for
    # finite trials; recompute those columns scaled by the column maximum
    bad = ~(np.isfinite(mean) & np.isfinite(stderr))
    if arr.ndim == 2 and bad.any() and np.isfinite(arr).all():
        cols = arr[:, bad]
        scale = np.abs(cols).max(axis=0)
        scaled = cols / scale
        mean[bad] = scale * scaled.mean(axis=0)
        stderr[bad] = scale * (scaled.std(axis=0, ddof=1) / np.sqrt(n))
    return mean, stderr


def slln_diagnostic(path: BrownianPath, times) -> np.ndarray:
    """w_t / t along a path; tends to zero almost surely as t grows."""
    t = np.asarray(times, dtype=float)
    if (t <= 0).any():
        raise ValueError("w_t / t is undefined at t <= 0")
    return path.w_at(t) / t


@dataclass(frozen=True)
class FlockingVerdict:
    """Three-way verdict per flocking condition, with the fitted evidence."""

    velocity_alignment: str
    group_forming: str
    evidence: dict


def classify_flocking(
    times,
    mean_dispersion,
    mean_pairdist,
    n_diverged: int = 0,
    window: tuple[float, float] | None = None,
    margin: float = 0.1,
) -> FlockingVerdict:
    """Judge velocity alignment and group forming over a finite window.

    Alignment is satisfied when the fitted slope of log(mean dispersion) over
    the window is below -margin (per unit time) and the final mean dispersion
    sits below the initial one, or when the dispersion has already collapsed
    to zero within tolerance.  It is violated when the slope exceeds +margin
    or any trial diverged.  Group forming is violated when the mean pair
    distance shows a relative growth trend beyond margin over the window.
    Anything that clears no margin stays undetermined.
    """
    t = np.asarray(times, dtype=float)
    disp = np.asarray(mean_dispersion, dtype=float)
    pair = np.asarray(mean_pairdist, dtype=float)
    if t.ndim != 1 or t.shape != disp.shape or t.shape != pair.shape:
        raise ValueError("times, mean_dispersion and mean_pairdist must be aligned 1-D series")
    if window is None:
        # last half of the horizon, widened to at least 10 samples when the
        # output grid is coarse
        lo = t[0] + 0.5 * (t[-1] - t[0])
        if (t >= lo).sum() < 10 and t.size >= 10:
            lo = t[-10]
        window = (lo, t[-1])
    lo, hi = window
    mask = (t >= lo) & (t <= hi)
    n_window = int(mask.sum())
    if n_window < 10:
        raise ValueError(f"classification window covers {n_window} samples; need at least 10")

    tw = t[mask]
    dw = disp[mask]
    pw = pair[mask]

    evidence: dict = {
        "window": (float(lo), float(hi)),
        "n_window": n_window,
        "margin": float(margin),
        "n_diverged": int(n_diverged),
        "dispersion_initial": float(disp[0]),
        "dispersion_final": float(disp[-1]),
    }

    # velocity alignment: log-slope of the mean dispersion
    if np.isfinite(dw).all():
        log_dw = np.log(np.clip(dw, 1e-300, None))
        slope = float(np.polyfit(tw, log_dw, 1)[0])
    else:
        slope = float("nan")
    evidence["dispersion_log_slope"] = slope

    already_aligned = disp[-1] == 0.0 or disp[-1] <= 1e-12 * disp[0]
    if n_diverged > 0:
        alignment = VIOLATED
    elif already_aligned:
        alignment = SATISFIED
    elif np.isnan(slope):
        alignment = UNDETERMINED
    elif slope <= -margin and disp[-1] < disp[0]:
        alignment = SATISFIED
    elif slope >= margin:
        alignment = VIOLATED
    else:
        alignment = UNDETERMINED

    # group forming: relative linear growth trend of the mean pair distance
    if np.isfinite(pw).all():
        pair_slope = float(np.polyfit(tw, pw, 1)[0])
        scale = max(float(np.abs(pw).mean()), 1e-300)
        rel_slope = pair_slope / scale
        evidence["pairdist_rel_slope"] = rel_slope
        evidence["pairdist_window_mean"] = float(pw.mean())
        grouping = VIOLATED if rel_slope >= margin else SATISFIED
    else:
        evidence["pairdist_rel_slope"] = float("nan")
        grouping = UNDETERMINED

    return FlockingVerdict(velocity_alignment=alignment, group_forming=grouping, evidence=evidence)
