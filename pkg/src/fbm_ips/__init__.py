"""Simulation and drift estimation for particle systems driven by fractional Brownian motion.

The model is ``dX^i = <theta, b(X^i, mu^N)> dt + sigma dB^{H,i}`` for
``i = 1..N`` with ``mu^N`` the empirical measure. The package provides exact
fBm generation, Euler simulation with coupled variants, the ratio,
fixed-point, iterative and contrast estimators of ``theta``, Malliavin
derivative solvers with propagation-of-chaos diagnostics, and a Monte Carlo
harness.
"""

from .errors import (
    CholeskyError,
    ConfigError,
    DivergenceError,
    FbmIpsError,
    NumericalError,
    SimulationError,
    SingularMatrixError,
)
from .fbm import FbmEnsemble, TimeGrid, fbm_covariance, sample_fbm
from .models import (
    DriftModel,
    MeasureSummary,
    available_models,
    get_model,
    model_arctan,
    model_linear_meanfield,
    model_two_param,
    register_model,
)
from .simulation import (
    ParticleEnsemble,
    ShiftedFamily,
    euler_simulate,
    simulate_limit_proxy,
    simulate_shifted_family,
    wasserstein2_1d,
)
from .kernels import KernelWeights, build_kernel_weights, double_integral, phi
from .malliavin import (
    DerivativePanel,
    ExponentialSurrogate,
    exponential_surrogate,
    initial_condition_derivative,
    malliavin_independent,
    malliavin_interacting,
    poc_rate_report,
)
from .estimators import (
    ContrastGrid,
    EstimationResult,
    asymptotic_variance_mc,
    check_contraction,
    compute_psi,
    contrast_estimator,
    contrast_value,
    fixed_point_estimator,
    fixed_point_map,
    iterative_estimator,
    ratio_estimator,
    stratonovich_vector,
)
from .config import ExperimentConfig, load_config
from .harness import ResultRow, emit_results, run_experiment

__version__ = "0.1.0"
