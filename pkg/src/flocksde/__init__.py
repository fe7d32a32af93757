"""Stochastic Cucker-Smale flocking: simulation, metrics, theory oracles, ensembles.

The core system couples N particles through a distance-weighted velocity
alignment force; a single shared multiplicative Wiener process perturbs the
communication term.  Large noise provably destroys flocking, small noise
restores it, and this package makes both regimes executable: an SDE
integrator with explicit Stratonovich/Ito handling, closed-form bound
oracles, a reproducible parallel Monte Carlo engine, and a CLI that emits
plot-ready CSV plus rendered figures.
"""

__version__ = "0.1.0"

from .brownian import BrownianPath, PathMemoryError, make_brownian_path
from .ensemble import (
    EnsembleConfig,
    EnsembleResult,
    ExplicitInit,
    SchemaError,
    TrialTerminal,
    UniformBoxInit,
    config_from_dict,
    config_to_dict,
    load_result,
    run_ensemble,
    sample_initial,
    save_result,
    simulate_trial,
)
from .integrate import BlowUpError, StepScheme, Trajectory, simulate, step
from .metrics import (
    SATISFIED,
    UNDETERMINED,
    VIOLATED,
    FlockingVerdict,
    PositionSpread,
    centered_speed_norm2,
    classify_flocking,
    ensemble_mean,
    position_spread,
    slln_diagnostic,
    velocity_dispersion,
)
from .model import (
    CommonMultiplicativeNoise,
    ConstantKernel,
    FrameRecord,
    IndependentAdditiveNoise,
    IndependentMultiplicativeNoise,
    Kernel,
    KernelBounds,
    ModelConfig,
    NoiseModel,
    NumericsError,
    RationalKernel,
    SingularKernel,
    StateError,
    SystemState,
    center_frame,
    diffusion_common,
    diffusion_other,
    drift,
    ito_correction_common,
    kernel_bounds,
    kernel_eval,
    noise_channels,
    pairwise_distances,
    restore_frame,
)
from .oracles import (
    TheoryBound,
    ThresholdReport,
    expected_decay_exact_const,
    expected_decay_upper,
    expected_growth_lower,
    expected_x_upper,
    pathwise_v_exact_const,
    pathwise_v_upper,
    pathwise_x_upper,
    thresholds,
)

__all__ = [name for name in dir() if not name.startswith("_")]
