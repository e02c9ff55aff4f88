"""Tempered MCMC: parallel tempering with the standard and the mode-rescaling
(QuanTA) swap, population orchestration with weighted K-means centring, and
numerical checks of the optimal-scaling theory."""

from ._backend import get_backend_name, set_backend
from .clustering import KMeansResult, ModeSet, WeightedPointSet, refine_modes, weighted_kmeans
from .diagnostics import (
    TraceLog,
    WeightEstimate,
    cost_report,
    default_bands,
    empirical_esjd,
    mode_weight_series,
    swap_rates,
)
from .errors import ConfigurationError, DomainError, NumericalError
from .kernels import (
    ChainState,
    SwapOutcome,
    mode_allocate,
    pt_swap_log_ratio,
    quanta_swap,
    quanta_transform,
    rwm_step,
)
from .marginals import Marginal, get_marginal
from .population import PopulationState, SweepConfig, run, swap_phase, within_sweep
from .schedule_theory import (
    ColdOrderReport,
    MarginalFunctionals,
    PilotConfig,
    TemperatureSchedule,
    cold_order_scan,
    composite_schedule,
    esjd_limit,
    geometric_schedule,
    marginal_functionals,
    optimal_ell,
    tune_schedule,
)
from .target_model import (
    GaussianMixtureTarget,
    ProductMarginalTarget,
    TargetDensity,
    mixture_mode_points,
    tempered_log_density,
)

__version__ = "0.1.0"
