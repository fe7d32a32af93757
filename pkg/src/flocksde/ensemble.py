"""Parallel Monte Carlo over independent trajectories, with persistence.

Trial k draws its initial condition and its Brownian path from streams keyed
by (base_seed, k, purpose), so trials share no random state and the result is
independent of the execution schedule.  Aggregation is a fixed-order fold over
trial indices after all trials complete; running with one worker or many
produces bit-identical results.  Diverged (blown-up) trials are excluded from
the aggregates and counted separately, never averaged.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import __version__ as _version
from .brownian import make_brownian_path
from .integrate import (
    BlowUpError,
    StepScheme,
    Trajectory,
    resolve_output_indices,
    simulate,
)
from .metrics import ensemble_mean
from .model import (
    CommonMultiplicativeNoise,
    ConstantKernel,
    IndependentAdditiveNoise,
    IndependentMultiplicativeNoise,
    Kernel,
    ModelConfig,
    NoiseModel,
    RationalKernel,
    SingularKernel,
    SystemState,
    noise_channels,
)

__all__ = [
    "SCHEMA_VERSION",
    "SchemaError",
    "UniformBoxInit",
    "ExplicitInit",
    "InitSpec",
    "sample_initial",
    "EnsembleConfig",
    "TrialTerminal",
    "EnsembleResult",
    "simulate_trial",
    "run_ensemble",
    "save_result",
    "load_result",
    "config_to_dict",
    "config_from_dict",
]

SCHEMA_VERSION = 1

_INIT_PURPOSE = 0
_NOISE_PURPOSE = 1


class SchemaError(ValueError):
    """A persisted result file is unreadable or from an incompatible schema."""


# ---------------------------------------------------------------------------
# initial conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformBoxInit:
    """Positions and velocities i.i.d. uniform per coordinate.

    Bounds are scalars or per-coordinate vectors of length d.  Read as: each
    particle's (x_i, v_i) is uniform over the product box, independently
    across particles.
    """

    x_low: float = 0.0
    x_high: float = 1.0
    v_low: float = 0.0
    v_high: float = 1.0

    def __post_init__(self):
        for low, high, name in (
            (self.x_low, self.x_high, "x"),
            (self.v_low, self.v_high, "v"),
        ):
            lo = np.asarray(low, dtype=float)
            hi = np.asarray(high, dtype=float)
            if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
                raise ValueError(f"{name} box bounds must be finite")
            if (lo > hi).any():
                raise ValueError(f"degenerate {name} box: low > high")


@dataclass(frozen=True)
class ExplicitInit:
    """A fixed initial state used verbatim for every trial."""

    state: SystemState


InitSpec = Union[UniformBoxInit, ExplicitInit]


def sample_initial(init: InitSpec, n_particles: int, dim: int, seed) -> SystemState:
    """Draw an initial state from the trial's dedicated stream.

    The stream is independent of the Brownian stream; positions are drawn
    first, then velocities.
    """
    if isinstance(init, ExplicitInit):
        return init.state
    if not isinstance(init, UniformBoxInit):
        raise TypeError(f"unknown init spec {type(init).__name__}")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    rng = np.random.Generator(np.random.Philox(ss))
    x = rng.uniform(init.x_low, init.x_high, size=(n_particles, dim))
    v = rng.uniform(init.v_low, init.v_high, size=(n_particles, dim))
    return SystemState(t=0.0, x=x, v=v)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleConfig:
    """Everything needed to reproduce an ensemble bit for bit."""

    model: ModelConfig
    scheme: StepScheme
    dt: float
    t_final: float
    output_times: tuple
    n_trials: int
    base_seed: int
    init: InitSpec
    resample_initial: bool = True
    n_workers: int = 1

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")
        if self.base_seed < 0:
            raise ValueError("base_seed must be a nonnegative integer")
        object.__setattr__(self, "output_times", tuple(float(t) for t in self.output_times))


def _trial_init_seed(config: EnsembleConfig, trial: int) -> np.random.SeedSequence:
    key = trial if config.resample_initial else 0
    return np.random.SeedSequence(entropy=config.base_seed, spawn_key=(key, _INIT_PURPOSE))


def _trial_noise_seed(config: EnsembleConfig, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=config.base_seed, spawn_key=(trial, _NOISE_PURPOSE))


def simulate_trial(config: EnsembleConfig, trial: int, ito_correction: bool = True) -> Trajectory:
    """Run one ensemble member; trial 0 is what the simulate command emits."""
    if not 0 <= trial < config.n_trials:
        raise ValueError(f"trial index {trial} outside [0, {config.n_trials})")
    model = config.model
    init = sample_initial(config.init, model.n_particles, model.dim, _trial_init_seed(config, trial))
    channels = noise_channels(model.noise, model.n_particles, model.dim)
    path = None
    if channels > 0 and config.scheme is not StepScheme.DETERMINISTIC_EULER:
        n_steps = int(round(config.t_final / config.dt))
        path = make_brownian_path(_trial_noise_seed(config, trial), config.dt, n_steps, channels)
    return simulate(
        model,
        init,
        config.scheme,
        config.dt,
        config.t_final,
        output_times=config.output_times or None,
        path=path,
        ito_correction=ito_correction,
    )


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrialTerminal:
    """Per-trial terminal diagnostics; diverged trials carry the blow-up time."""

    trial: int
    diverged: bool
    t_end: float
    dispersion: float
    v2_centered: float
    max_pair_dist: float

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrialTerminal):
            return NotImplemented

        def same(a: float, b: float) -> bool:
            return a == b or (np.isnan(a) and np.isnan(b))

        return (
            self.trial == other.trial
            and self.diverged == other.diverged
            and same(self.t_end, other.t_end)
            and same(self.dispersion, other.dispersion)
            and same(self.v2_centered, other.v2_centered)
            and same(self.max_pair_dist, other.max_pair_dist)
        )


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """Cross-trial aggregates with standard errors, plus full provenance."""

    times: np.ndarray
    mean_dispersion: np.ndarray
    stderr_dispersion: np.ndarray
    mean_v2: np.ndarray
    stderr_v2: np.ndarray
    mean_pairdist: np.ndarray
    stderr_pairdist: np.ndarray
    n_trials: int
    diverged_trials: tuple
    first_divergence_times: tuple
    terminal: tuple
    provenance: dict
    empty_aggregate: bool

    @property
    def diverged_count(self) -> int:
        return len(self.diverged_trials)

    @property
    def n_finished(self) -> int:
        return self.n_trials - self.diverged_count

    def diverged_by(self, t: float) -> int:
        """Number of trials that blew up at or before time t."""
        return int(sum(1 for tb in self.first_divergence_times if tb <= t))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EnsembleResult):
            return NotImplemented
        array_fields = (
            "times",
            "mean_dispersion",
            "stderr_dispersion",
            "mean_v2",
            "stderr_v2",
            "mean_pairdist",
            "stderr_pairdist",
        )
        for name in array_fields:
            if not np.array_equal(getattr(self, name), getattr(other, name), equal_nan=True):
                return False
        return (
            self.n_trials == other.n_trials
            and self.diverged_trials == other.diverged_trials
            and self.first_divergence_times == other.first_divergence_times
            and self.terminal == other.terminal
            and self.provenance == other.provenance
            and self.empty_aggregate == other.empty_aggregate
        )


def _run_trial_worker(args) -> dict:
    config, trial = args
    try:
        traj = simulate_trial(config, trial)
    except BlowUpError as exc:
        return {
            "trial": trial,
            "diverged": True,
            "t_blowup": exc.t,
            "terminal": TrialTerminal(
                trial=trial,
                diverged=True,
                t_end=exc.t,
                dispersion=float("nan"),
                v2_centered=float("nan"),
                max_pair_dist=float("nan"),
            ),
        }
    return {
        "trial": trial,
        "diverged": False,
        "times": traj.times,
        "dispersion": traj.dispersion,
        "v2_centered": traj.v2_centered,
        "mean_pair_dist": traj.mean_pair_dist,
        "terminal": TrialTerminal(
            trial=trial,
            diverged=False,
            t_end=float(traj.times[-1]),
            dispersion=float(traj.dispersion[-1]),
            v2_centered=float(traj.v2_centered[-1]),
            max_pair_dist=float(traj.max_pair_dist[-1]),
        ),
    }


def run_ensemble(config: EnsembleConfig) -> EnsembleResult:
    """Run all trials, aggregate in trial order, and attach provenance.

    The result is a deterministic function of the config alone; the number of
    workers changes wall time, never values.
    """
    tasks = [(config, k) for k in range(config.n_trials)]
    if config.n_workers > 1 and config.n_trials > 1:
        chunk = max(1, config.n_trials // (4 * config.n_workers))
        with ProcessPoolExecutor(max_workers=config.n_workers) as pool:
            outcomes = list(pool.map(_run_trial_worker, tasks, chunksize=chunk))
    else:
        outcomes = [_run_trial_worker(task) for task in tasks]

    n_steps = int(round(config.t_final / config.dt))
    idx = resolve_output_indices(config.dt, n_steps, config.output_times or None)
    times = idx * config.dt

    finished = [o for o in outcomes if not o["diverged"]]
    diverged = [o for o in outcomes if o["diverged"]]
    terminal = tuple(o["terminal"] for o in outcomes)

    if finished:
        times = finished[0]["times"]
        mean_disp, se_disp = ensemble_mean([o["dispersion"] for o in finished])
        mean_v2, se_v2 = ensemble_mean([o["v2_centered"] for o in finished])
        mean_pair, se_pair = ensemble_mean([o["mean_pair_dist"] for o in finished])
        empty = False
    else:
        nan = np.full(times.shape, np.nan)
        mean_disp = se_disp = mean_v2 = se_v2 = mean_pair = se_pair = nan
        empty = True

    provenance = {
        "package": "flocksde",
        "version": _version,
        "schema_version": SCHEMA_VERSION,
        "config": config_to_dict(config),
    }

    return EnsembleResult(
        times=times,
        mean_dispersion=mean_disp,
        stderr_dispersion=se_disp,
        mean_v2=mean_v2,
        stderr_v2=se_v2,
        mean_pairdist=mean_pair,
        stderr_pairdist=se_pair,
        n_trials=config.n_trials,
        diverged_trials=tuple(o["trial"] for o in diverged),
        first_divergence_times=tuple(o["t_blowup"] for o in diverged),
        terminal=terminal,
        provenance=provenance,
        empty_aggregate=empty,
    )


# ---------------------------------------------------------------------------
# config serialization
# ---------------------------------------------------------------------------


def _kernel_to_dict(kernel: Kernel) -> dict:
    if isinstance(kernel, RationalKernel):
        return {"kind": "rational", "K": kernel.K, "c": kernel.c, "beta": kernel.beta}
    if isinstance(kernel, SingularKernel):
        return {"kind": "singular", "K": kernel.K, "beta": kernel.beta, "cap_s": kernel.cap_s}
    if isinstance(kernel, ConstantKernel):
        return {"kind": "constant", "K": kernel.K}
    raise TypeError(f"unknown kernel type {type(kernel).__name__}")


def _kernel_from_dict(doc: dict) -> Kernel:
    kind = doc.get("kind")
    if kind == "rational":
        return RationalKernel(K=doc.get("K", 1.0), c=doc.get("c", 1.0), beta=doc.get("beta", 0.25))
    if kind == "singular":
        return SingularKernel(K=doc.get("K", 1.0), beta=doc.get("beta", 0.25), cap_s=doc.get("cap_s", 1e-6))
    if kind == "constant":
        return ConstantKernel(K=doc.get("K", 1.0))
    raise ValueError(f"unknown kernel kind {kind!r}")


def _noise_to_dict(noise: NoiseModel) -> dict:
    if noise is None:
        return {"kind": "none"}
    if isinstance(noise, CommonMultiplicativeNoise):
        return {"kind": "common", "sigma": noise.sigma}
    if isinstance(noise, IndependentAdditiveNoise):
        return {"kind": "additive", "D": noise.D}
    if isinstance(noise, IndependentMultiplicativeNoise):
        return {"kind": "multiplicative", "D": noise.D, "v_ref": noise.v_ref.tolist()}
    raise TypeError(f"unknown noise model {type(noise).__name__}")


def _noise_from_dict(doc: dict) -> NoiseModel:
    kind = doc.get("kind")
    if kind == "none":
        return None
    if kind == "common":
        return CommonMultiplicativeNoise(sigma=doc["sigma"])
    if kind == "additive":
        return IndependentAdditiveNoise(D=doc["D"])
    if kind == "multiplicative":
        return IndependentMultiplicativeNoise(D=doc["D"], v_ref=np.asarray(doc["v_ref"], dtype=float))
    raise ValueError(f"unknown noise kind {kind!r}")


def _init_to_dict(init: InitSpec) -> dict:
    if isinstance(init, UniformBoxInit):
        return {
            "kind": "uniform_box",
            "x_low": init.x_low,
            "x_high": init.x_high,
            "v_low": init.v_low,
            "v_high": init.v_high,
        }
    if isinstance(init, ExplicitInit):
        return {
            "kind": "explicit",
            "t": init.state.t,
            "x": init.state.x.tolist(),
            "v": init.state.v.tolist(),
        }
    raise TypeError(f"unknown init spec {type(init).__name__}")


def _init_from_dict(doc: dict) -> InitSpec:
    kind = doc.get("kind")
    if kind == "uniform_box":
        return UniformBoxInit(
            x_low=doc.get("x_low", 0.0),
            x_high=doc.get("x_high", 1.0),
            v_low=doc.get("v_low", 0.0),
            v_high=doc.get("v_high", 1.0),
        )
    if kind == "explicit":
        return ExplicitInit(state=SystemState(t=doc.get("t", 0.0), x=doc["x"], v=doc["v"]))
    raise ValueError(f"unknown init kind {kind!r}")


def config_to_dict(config: EnsembleConfig) -> dict:
    """JSON-ready mirror of an EnsembleConfig (the CLI config-file format)."""
    return {
        "model": {
            "kernel": _kernel_to_dict(config.model.kernel),
            "noise": _noise_to_dict(config.model.noise),
            "n_particles": config.model.n_particles,
            "dim": config.model.dim,
            "coupling_scale": config.model.coupling_scale,
        },
        "scheme": config.scheme.value,
        "dt": config.dt,
        "t_final": config.t_final,
        "output_times": list(config.output_times),
        "n_trials": config.n_trials,
        "base_seed": config.base_seed,
        "init": _init_to_dict(config.init),
        "resample_initial": config.resample_initial,
        "n_workers": config.n_workers,
    }


def config_from_dict(doc: dict) -> EnsembleConfig:
    try:
        model_doc = doc["model"]
        model = ModelConfig(
            kernel=_kernel_from_dict(model_doc["kernel"]),
            noise=_noise_from_dict(model_doc["noise"]),
            n_particles=int(model_doc["n_particles"]),
            dim=int(model_doc["dim"]),
            coupling_scale=float(model_doc.get("coupling_scale", 1.0)),
        )
        return EnsembleConfig(
            model=model,
            scheme=StepScheme(doc["scheme"]),
            dt=float(doc["dt"]),
            t_final=float(doc["t_final"]),
            output_times=tuple(doc["output_times"]),
            n_trials=int(doc["n_trials"]),
            base_seed=int(doc["base_seed"]),
            init=_init_from_dict(doc["init"]),
            resample_initial=bool(doc.get("resample_initial", True)),
            n_workers=int(doc.get("n_workers", 1)),
        )
    except KeyError as exc:
        raise ValueError(f"config document is missing required field {exc}") from exc


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _terminal_to_dict(term: TrialTerminal) -> dict:
    return {
        "trial": term.trial,
        "diverged": term.diverged,
        "t_end": term.t_end,
        "dispersion": term.dispersion,
        "v2_centered": term.v2_centered,
        "max_pair_dist": term.max_pair_dist,
    }


def save_result(result: EnsembleResult, path) -> None:
    """Write an EnsembleResult as a versioned JSON document.

    Floats serialize via repr (shortest round trip), so a load returns the
    exact binary values.
    """
    doc = {
        "schema_version": SCHEMA_VERSION,
        "provenance": result.provenance,
        "grid": result.times.tolist(),
        "aggregates": {
            "mean_dispersion": result.mean_dispersion.tolist(),
            "stderr_dispersion": result.stderr_dispersion.tolist(),
            "mean_v2": result.mean_v2.tolist(),
            "stderr_v2": result.stderr_v2.tolist(),
            "mean_pairdist": result.mean_pairdist.tolist(),
            "stderr_pairdist": result.stderr_pairdist.tolist(),
        },
        "n_trials": result.n_trials,
        "diverged": {
            "count": result.diverged_count,
            "trials": list(result.diverged_trials),
            "first_times": list(result.first_divergence_times),
        },
        "terminal": [_terminal_to_dict(t) for t in result.terminal],
        "empty_aggregate": result.empty_aggregate,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_result(path) -> EnsembleResult:
    """Read a persisted result; schema problems raise SchemaError, not crashes."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError(f"{path} is not a valid result document: {exc}") from exc
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise SchemaError(f"{path} is missing the schema_version tag")
    version = doc["schema_version"]
    if version != SCHEMA_VERSION:
        raise SchemaError(
            f"{path} was written with schema version {version}; this build reads version {SCHEMA_VERSION}"
        )
    try:
        agg = doc["aggregates"]
        return EnsembleResult(
            times=np.asarray(doc["grid"], dtype=float),
            mean_dispersion=np.asarray(agg["mean_dispersion"], dtype=float),
            stderr_dispersion=np.asarray(agg["stderr_dispersion"], dtype=float),
            mean_v2=np.asarray(agg["mean_v2"], dtype=float),
            stderr_v2=np.asarray(agg["stderr_v2"], dtype=float),
            mean_pairdist=np.asarray(agg["mean_pairdist"], dtype=float),
            stderr_pairdist=np.asarray(agg["stderr_pairdist"], dtype=float),
            n_trials=int(doc["n_trials"]),
            diverged_trials=tuple(doc["diverged"]["trials"]),
            first_divergence_times=tuple(doc["diverged"]["first_times"]),
            terminal=tuple(
                TrialTerminal(
                    trial=item["trial"],
                    diverged=item["diverged"],
                    t_end=item["t_end"],
                    dispersion=item["dispersion"],
                    v2_centered=item["v2_centered"],
                    max_pair_dist=item["max_pair_dist"],
                )
                for item in doc["terminal"]
            ),
            provenance=doc["provenance"],
            empty_aggregate=bool(doc["empty_aggregate"]),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path} is missing required result fields: {exc}") from exc
