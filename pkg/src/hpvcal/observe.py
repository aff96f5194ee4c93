"""Observables, observation error models, priors and the posterior.

Two observable kinds per gender and five-year age band, both computed on
activity-aggregated states:

    incidence        new treated-warts episodes per 1000 persons per year,
                     1000 * warts_onset * I / total, Gaussian error with
                     variance ``incidence_var`` shared across observations
    seroprevalence   P / total, Beta error with first shape ``sero_shape``
                     and second shape matched so the mean equals the model
                     value

Incidence observations may optionally be compared against the state one
year before the observation time (the treated episodes counted over the
year leading up to the survey); this lagged form is what the synthetic
generator uses, keeping generation and inference consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln

from .mixing import BehaviorTables, MixingConfig
from .model import Trajectory, integrate
from .solver import SolverConfig, SolverError
from .strata import I, ModelParams, N_AGES, P, ParamSpace, derive_rates

INCIDENCE = "incidence"
SEROPREVALENCE = "seroprevalence"

# model seroprevalence is clamped into this open interval before the Beta
# second shape parameter is formed
SERO_CLAMP = 1e-8


@dataclass(frozen=True)
class Observation:
    """One observed data point.

    gender is 0 (male) or 1 (female); age is the 1-based five-year band.
    ci_low / ci_high carry reported 95% interval bounds where available;
    they are not part of the likelihood.
    """

    time: float
    gender: int
    age: int
    kind: str
    value: float
    ci_low: float | None = None
    ci_high: float | None = None

    def __post_init__(self):
        if self.gender not in (0, 1):
            raise ValueError(f"gender must be 0 or 1, got {self.gender!r}")
        if not (1 <= self.age <= N_AGES):
            raise ValueError(f"age band out of range: {self.age!r}")
        if self.kind not in (INCIDENCE, SEROPREVALENCE):
            raise ValueError(f"unknown observation kind {self.kind!r}")
        if self.kind == SEROPREVALENCE and not (0.0 <= self.value <= 1.0):
            raise ValueError(f"seroprevalence {self.value!r} outside [0, 1]")
        if not math.isfinite(self.value):
            raise ValueError("observation value must be finite")


def aggregate_over_activity(state: np.ndarray) -> np.ndarray:
    """Sum out the activity axis: (2, 4, 9, C) -> (2, 9, C)."""
    return np.asarray(state, float).sum(axis=1)


def incidence_mean(counts: np.ndarray, warts_onset: float) -> np.ndarray:
    """Treated-warts incidence per 1000 persons per year for compartment
    count vectors (..., C).  Vaccinated layouts count both I blocks."""
    counts = np.asarray(counts, float)
    total = counts.sum(axis=-1)
    infected = counts[..., I]
    if counts.shape[-1] == 10:
        infected = infected + counts[..., 5 + I]
    if np.any(total <= 0.0):
        raise ValueError("incidence undefined for an empty aggregate")
    return 1000.0 * warts_onset * infected / total


def seroprevalence_mean(counts: np.ndarray) -> np.ndarray:
    """Seropositive fraction for compartment count vectors (..., C)."""
    counts = np.asarray(counts, float)
    total = counts.sum(axis=-1)
    positive = counts[..., P]
    if counts.shape[-1] == 10:
        positive = positive + counts[..., 5 + P]
    if np.any(total <= 0.0):
        raise ValueError("seroprevalence undefined for an empty aggregate")
    return positive / total


def gaussian_logpdf(x, mean, variance):
    return -0.5 * np.log(2.0 * np.pi * variance) - (x - mean) ** 2 / (
        2.0 * variance)


def beta_logpdf(x, a, b):
    return (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - betaln(a, b)


def predicted_observables(traj: Trajectory, params: ModelParams,
                          lagged_incidence: bool = True
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Model observables at every saved time.

    Returns (incidence, seroprevalence), each (n_times, 2, 9).  With
    lagged_incidence the incidence at time t uses the state one year
    earlier when available (exactly matched against the save grid).
    """
    agg = np.asarray(traj.states).sum(axis=2)  # (n_times, 2, 9, C)
    total = agg.sum(axis=-1)
    coeffs = derive_rates(params)
    inf = agg[..., I] + (agg[..., 5 + I] if agg.shape[-1] == 10 else 0.0)
    pos = agg[..., P] + (agg[..., 5 + P] if agg.shape[-1] == 10 else 0.0)
    prev_inf = np.zeros_like(total)
    np.divide(inf, total, out=prev_inf, where=total > 0)
    sero = np.zeros_like(total)
    np.divide(pos, total, out=sero, where=total > 0)
    inc = 1000.0 * coeffs.warts_onset[None, :, None] * prev_inf

    if lagged_incidence:
        shifted = inc.copy()
        times = np.asarray(traj.times)
        for j, t in enumerate(times):
            k = np.searchsorted(times, t - 1.0)
            for cand in (k - 1, k, k + 1):
                if 0 <= cand < times.size and abs(times[cand] - (t - 1.0)) <= 1e-9:
                    shifted[j] = inc[cand]
                    break
        inc = shifted
    return inc, sero


def log_likelihood(params: ModelParams, traj: Trajectory,
                   observations: list[Observation],
                   lagged_incidence: bool = True) -> float:
    """Joint log density of the observations given one trajectory."""
    inc, sero = predicted_observables(traj, params, lagged_incidence)
    times = np.asarray(traj.times)
    total = 0.0
    for obs in observations:
        idx = _time_index(times, obs.time)
        if obs.kind == INCIDENCE:
            mu = inc[idx, obs.gender, obs.age - 1]
            total += gaussian_logpdf(obs.value, mu, params.incidence_var)
        else:
            y_hat = sero[idx, obs.gender, obs.age - 1]
            y_hat = min(max(y_hat, SERO_CLAMP), 1.0 - SERO_CLAMP)
            a = params.sero_shape
            b = a * (1.0 / y_hat - 1.0)
            if not (0.0 < obs.value < 1.0):
                return -np.inf
            total += beta_logpdf(obs.value, a, b)
    return float(total)


def _time_index(times: np.ndarray, t: float) -> int:
    k = np.searchsorted(times, t)
    for cand in (k - 1, k, k + 1):
        if 0 <= cand < times.size and abs(times[cand] - t) <= 1e-9:
            return int(cand)
    raise ValueError(f"observation time {t} is not on the save grid")


@dataclass(frozen=True)
class Prior:
    """One univariate prior: uniform(a, b), beta(a, b), gamma(shape, scale)
    or invgamma(shape, scale)."""

    family: str
    args: tuple[float, float]

    def __post_init__(self):
        if self.family not in ("uniform", "beta", "gamma", "invgamma"):
            raise ValueError(f"unknown prior family {self.family!r}")
        a, b = self.args
        if self.family == "uniform":
            if not b > a:
                raise ValueError("uniform needs b > a")
        elif not (a > 0 and b > 0):
            raise ValueError(f"{self.family} needs positive parameters")

    def logpdf(self, x: float) -> float:
        a, b = self.args
        if self.family == "uniform":
            return -math.log(b - a) if a <= x <= b else -math.inf
        if self.family == "beta":
            if not 0.0 < x < 1.0:
                return -math.inf
            return ((a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x)
                    - float(betaln(a, b)))
        if self.family == "gamma":
            if not x > 0.0:
                return -math.inf
            return ((a - 1.0) * math.log(x) - x / b - a * math.log(b)
                    - float(gammaln(a)))
        # invgamma(shape a, scale b)
        if not x > 0.0:
            return -math.inf
        return (a * math.log(b) - float(gammaln(a))
                - (a + 1.0) * math.log(x) - b / x)

    def sample(self, rng: np.random.Generator) -> float:
        a, b = self.args
        if self.family == "uniform":
            return float(rng.uniform(a, b))
        if self.family == "beta":
            return float(rng.beta(a, b))
        if self.family == "gamma":
            return float(rng.gamma(a, b))
        return float(b / rng.gamma(a, 1.0))

    def mean(self) -> float:
        a, b = self.args
        if self.family == "uniform":
            return 0.5 * (a + b)
        if self.family == "beta":
            return a / (a + b)
        if self.family == "gamma":
            return a * b
        return b / (a - 1.0) if a > 1.0 else math.nan


class PriorSet:
    """Ordered priors aligned with a ParamSpace's free-parameter vector."""

    def __init__(self, priors: dict[str, Prior], names: tuple[str, ...]):
        missing = [n for n in names if n not in priors]
        if missing:
            raise ValueError(f"missing priors for {missing}")
        self.names = tuple(names)
        self.priors = tuple(priors[n] for n in self.names)

    def logpdf(self, vec: np.ndarray) -> float:
        total = 0.0
        for prior, x in zip(self.priors, vec):
            lp = prior.logpdf(float(x))
            if lp == -math.inf:
                return -math.inf
            total += lp
        return total

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([p.sample(rng) for p in self.priors])


def log_prior(vec: np.ndarray, priors: PriorSet) -> float:
    return priors.logpdf(vec)


#: variant-specific prior blocks: incubation and asymptomatic duration
#: bounds differ between the single-type and combined calibrations
_VARIANT_BLOCKS = {
    "hpv6": {
        "incubation_m": Prior("uniform", (0.9, 1.3)),
        "incubation_f": Prior("uniform", (0.6, 0.9)),
        "asympt_duration_m": Prior("uniform", (2.2, 3.6)),
        "asympt_duration_f": Prior("uniform", (2.2, 3.6)),
    },
    "hpv11": {
        "incubation_m": Prior("uniform", (0.9, 1.3)),
        "incubation_f": Prior("uniform", (0.6, 0.9)),
        "asympt_duration_m": Prior("uniform", (2.0, 3.6)),
        "asympt_duration_f": Prior("uniform", (2.0, 3.6)),
    },
    "combined": {
        "incubation_m": Prior("uniform", (1.0, 2.0)),
        "incubation_f": Prior("uniform", (1.0, 2.0)),
        "asympt_duration_m": Prior("uniform", (3.8, 4.8)),
        "asympt_duration_f": Prior("uniform", (3.8, 4.8)),
    },
}

VARIANTS = tuple(_VARIANT_BLOCKS)


def default_priors(variant: str = "combined") -> dict[str, Prior]:
    """Calibration priors for one model variant.

    Transmission probabilities and seroconversion probabilities are flat on
    [0, 1]; treatment durations follow their literature fits; the
    incidence-error variance is invgamma(2, 5) (mean 5) and the
    seroprevalence-error shape gamma(2, 2) (mean 4); mixing blends follow
    beta(0.5, 0.7).
    """
    if variant not in _VARIANT_BLOCKS:
        raise ValueError(f"unknown variant {variant!r}; pick one of {VARIANTS}")
    priors = {
        "trans_prob_m": Prior("uniform", (0.0, 1.0)),
        "trans_prob_f": Prior("uniform", (0.0, 1.0)),
        "treat_duration_m": Prior("gamma", (92.0, 0.003)),
        "treat_duration_f": Prior("beta", (69.0, 231.0)),
        "seroconv_prob_m": Prior("beta", (1.0, 1.0)),
        "seroconv_prob_f": Prior("beta", (1.0, 1.0)),
        "incidence_var": Prior("invgamma", (2.0, 5.0)),
        "sero_shape": Prior("gamma", (2.0, 2.0)),
        "age_mixing": Prior("beta", (0.5, 0.7)),
        "act_mixing": Prior("beta", (0.5, 0.7)),
        "immunity_m": Prior("uniform", (1.0, 50.0)),
        "immunity_f": Prior("uniform", (1.0, 50.0)),
    }
    priors.update(_VARIANT_BLOCKS[variant])
    return priors


def make_log_posterior(space: ParamSpace, priors: PriorSet,
                       observations: list[Observation],
                       initial: np.ndarray,
                       t0: float, t1: float,
                       save_times: np.ndarray,
                       tables: BehaviorTables | None = None,
                       solver_config: SolverConfig | None = None,
                       mix_template: MixingConfig | None = None,
                       lagged_incidence: bool = True,
                       engine: str = "numba"):
    """Build the target density for the sampler.

    Returns a callable vec -> (log posterior, terminal state or None).
    Solver failures and out-of-support proposals yield -inf; the callable
    counts solver failures on its ``n_solver_failures`` attribute.  The
    likelihood is skipped (no ODE solve) whenever the prior is -inf.
    """
    tables = tables or BehaviorTables()
    solver_config = solver_config or SolverConfig()
    save_times = np.asarray(save_times, float)
    age_pref = mix_template.age_pref_strength if mix_template else 0.3
    bal_exp = mix_template.balance_exponent if mix_template else 0.5

    def log_post(vec: np.ndarray):
        lp = priors.logpdf(vec)
        if lp == -math.inf:
            return -math.inf, None
        try:
            params = space.from_vector(vec)
        except ValueError:
            return -math.inf, None
        mix_config = MixingConfig(
            age_mixing=params.age_mixing, act_mixing=params.act_mixing,
            age_pref_strength=age_pref, balance_exponent=bal_exp)
        try:
            traj = integrate(initial, params, t0, t1, solver_config,
                             save_times, tables, mix_config, engine=engine)
        except SolverError:
            log_post.n_solver_failures += 1
            return -math.inf, None
        ll = log_likelihood(params, traj, observations, lagged_incidence)
        return lp + ll, traj.final_state

    log_post.n_solver_failures = 0
    return log_post
