"""Stratified two-gender HPV-6/11 transmission model.

Compartmental ODE dynamics on 2 genders x 4 activity groups x 9 age bands,
survey-driven heterosexual mixing, Bayesian calibration to seroprevalence
and treated-warts incidence via an adaptive Metropolis sampler, and
posterior-predictive vaccination forecasts.
"""

from .strata import (
    LIFELONG,
    ModelParams,
    ParamSpace,
    RateCoefficients,
    derive_rates,
    flatten_state,
    unflatten_state,
)
from .mixing import (
    BehaviorTables,
    MixingConfig,
    MixingMatrix,
    age_adjust,
    balance,
    balance_residual,
    build_mixing,
    min_rate,
    mixing_probabilities,
    relative_rates,
)
from .solver import (
    DivergenceError,
    SolveResult,
    SolverConfig,
    SolverError,
    StiffnessError,
    dormand_prince,
)
from .model import (
    Trajectory,
    default_initial_state,
    equilibrium_check,
    force_of_infection,
    integrate,
    model_rhs,
    rhs,
)
from .observe import (
    Observation,
    Prior,
    PriorSet,
    aggregate_over_activity,
    default_priors,
    incidence_mean,
    log_likelihood,
    log_prior,
    make_log_posterior,
    seroprevalence_mean,
)
from .mcmc import (
    ChainState,
    SamplerConfig,
    SampleRun,
    accept_prob,
    propose,
    run_chain,
    sample,
    update_moments,
)
from .vaccinate import (
    PredictiveResult,
    VaccinationPolicy,
    apply_vaccination_pulse,
    collapse_state,
    extend_state,
    posterior_predictive,
    project_with_vaccination,
)

__version__ = "0.1.0"
