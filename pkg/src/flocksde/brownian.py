"""Seeded Brownian-increment grids with exact dyadic refinement.

Increments come from counter-based Philox streams keyed by (seed entropy,
spawn key, depth), with the step index given by position in the stream.  The
same (seed, dt, steps, channels, refine_levels) always reproduces the same
arrays, independently of anything drawn elsewhere.

Refinement is declared at build time: the path is generated once at the
finest level dt / 2^refine_levels and every coarser level is the pairwise sum
of the level below.  That makes the refinement contract exact in floating
point (summing adjacent refined increments reproduces the coarse increments
bit for bit), which a conditional bridge construction cannot guarantee.
refine() walks down the prepared chain; walking past it is an error rather
than a silently inconsistent path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "BrownianPath",
    "PathMemoryError",
    "PathRefinementError",
    "make_brownian_path",
]

# 1.6 GB of float64 increments; larger requests should generate in chunks
MAX_PATH_ELEMENTS = 200_000_000


class PathMemoryError(MemoryError):
    """Requested increment array would not fit in addressable memory."""


class PathRefinementError(ValueError):
    """refine() was called past the depth declared at construction."""


def _seed_parts(seed) -> tuple:
    if isinstance(seed, np.random.SeedSequence):
        entropy = seed.entropy if seed.entropy is not None else 0
        return entropy, tuple(int(k) for k in seed.spawn_key)
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be a nonnegative integer")
    return seed, ()


def _stream(entropy, spawn_key: tuple, depth: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=entropy, spawn_key=tuple(spawn_key) + (depth,))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Increments of a Wiener process on a uniform grid of step dt.

    increments has shape (n_steps, n_channels) with entries N(0, dt);
    cumulative sums along axis 0 give W at the grid times k * dt.  finer
    holds the prepared refinement chain (next level first).
    """

    dt: float
    increments: np.ndarray
    entropy: object
    spawn_key: tuple
    finer: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.increments.ndim != 2:
            raise ValueError("increments must have shape (n_steps, n_channels)")
        self.increments.setflags(write=False)

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def n_channels(self) -> int:
        return self.increments.shape[1]

    @property
    def refine_levels(self) -> int:
        return len(self.finer)

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @cached_property
    def w(self) -> np.ndarray:
        """W on the grid, shape (n_steps + 1, n_channels), W(0) = 0."""
        out = np.zeros((self.n_steps + 1, self.n_channels))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    def w_at(self, times, channel: int = 0):
        """W values at grid times; times off the grid are an error."""
        t = np.asarray(times, dtype=float)
        idx = np.rint(t / self.dt).astype(int)
        if ((idx < 0) | (idx > self.n_steps)).any():
            raise ValueError("requested time outside the path horizon")
        atol = 1e-9 * max(1.0, float(np.max(np.abs(t), initial=0.0)))
        if not np.allclose(idx * self.dt, t, rtol=0.0, atol=atol):
            raise ValueError("requested times must lie on the path grid")
        vals = self.w[idx, channel]
        return float(vals) if np.ndim(times) == 0 else vals

    def refine(self) -> "BrownianPath":
        """The prepared path at step dt/2; its pairwise-summed increments
        equal this path's increments exactly."""
        if not self.finer:
            raise PathRefinementError(
                "path was built without remaining refinement depth; "
                "pass refine_levels when constructing it"
            )
        return BrownianPath(
            dt=self.dt / 2.0,
            increments=self.finer[0],
            entropy=self.entropy,
            spawn_key=self.spawn_key,
            finer=self.finer[1:],
        )


def make_brownian_path(
    seed, dt: float, steps: int, n_channels: int = 1, refine_levels: int = 0
) -> BrownianPath:
    """Draw a reproducible increment grid for the given seed.

    seed may be a nonnegative integer or a numpy SeedSequence (the ensemble
    engine passes per-trial SeedSequences so trials share no stream).
    refine_levels declares how many dt-halvings refine() may take; the path
    is generated once at the finest level and aggregated upward, so the
    declared depth is part of the path's identity.
    """
    if not (np.isfinite(dt) and dt > 0):
        raise ValueError("dt must be positive and finite")
    if steps < 1 or n_channels < 1:
        raise ValueError("need steps >= 1 and n_channels >= 1")
    if refine_levels < 0:
        raise ValueError("refine_levels must be >= 0")
    total = steps * n_channels * (2 ** (refine_levels + 1) - 1)
    if total > MAX_PATH_ELEMENTS:
        raise PathMemoryError(
            f"{steps} steps x {n_channels} channels at refine_levels={refine_levels} "
            "exceeds the in-memory limit; generate in chunks"
        )
    entropy, spawn_key = _seed_parts(seed)
    fine_steps = steps * 2**refine_levels
    fine_dt = dt / 2**refine_levels
    level = _stream(entropy, spawn_key, refine_levels).standard_normal(
        (fine_steps, n_channels)
    ) * np.sqrt(fine_dt)
    chain = [level]
    for _ in range(refine_levels):
        level = level.reshape(-1, 2, n_channels).sum(axis=1)
        chain.append(level)
    chain.reverse()  # coarsest first
    return BrownianPath(
        dt=float(dt),
        increments=chain[0],
        entropy=entropy,
        spawn_key=spawn_key,
        finer=tuple(chain[1:]),
    )
