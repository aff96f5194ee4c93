"""Population stratification, state layout and model parameters.

The modelled population is closed and split into 2 genders x 4 sexual
activity groups x 9 five-year age bands (15-19 through 55-59), giving 72
strata.  Each stratum carries five epidemiological compartments:

    S  susceptible
    I  infected, asymptomatic (pre-warts or never-warts)
    G  symptomatic genital warts under treatment
    P  recovered, seropositive
    N  recovered, seronegative

The canonical in-memory representation is a float array of shape
(2, 4, 9, 5) with axes (gender, activity, age, compartment).  Flattened
vectors use C order: gender-major, then activity, then age, then
compartment S, I, G, P, N.  Index 0 is therefore S for (male, activity
group 1, age band 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

N_GENDERS = 2
N_ACTIVITY = 4
N_AGES = 9
N_COMP = 5

MALE, FEMALE = 0, 1
S, I, G, P, N = range(N_COMP)

COMPARTMENTS = ("S", "I", "G", "P", "N")
GENDER_NAMES = ("male", "female")

STATE_SHAPE = (N_GENDERS, N_ACTIVITY, N_AGES, N_COMP)
STATE_SIZE = N_GENDERS * N_ACTIVITY * N_AGES * N_COMP  # 360
STRATUM_COUNT = N_GENDERS * N_ACTIVITY * N_AGES  # 72

AGE_BAND_YEARS = 5.0
AGING_RATE = 1.0 / AGE_BAND_YEARS

#: Sentinel for a duration of immunity that never wanes.
LIFELONG = math.inf


def state_index(gender: int, activity: int, age: int, comp: int) -> int:
    """Flat index of one compartment count.  All arguments 1-based except
    comp, which is one of the module constants S, I, G, P, N."""
    if not (1 <= gender <= N_GENDERS and 1 <= activity <= N_ACTIVITY
            and 1 <= age <= N_AGES and 0 <= comp < N_COMP):
        raise ValueError(f"index out of range: {(gender, activity, age, comp)}")
    return ((((gender - 1) * N_ACTIVITY + (activity - 1)) * N_AGES
             + (age - 1)) * N_COMP + comp)


def stratum_of(gender: int, activity: int, age: int) -> int:
    """Flat stratum id in 0..71 for 1-based (gender, activity, age)."""
    if not (1 <= gender <= N_GENDERS and 1 <= activity <= N_ACTIVITY
            and 1 <= age <= N_AGES):
        raise ValueError(f"stratum out of range: {(gender, activity, age)}")
    return ((gender - 1) * N_ACTIVITY + (activity - 1)) * N_AGES + (age - 1)


def empty_state() -> np.ndarray:
    return np.zeros(STATE_SHAPE)


def flatten_state(state: np.ndarray) -> np.ndarray:
    """Copy a (2, 4, 9, 5) state into the documented 360-vector order."""
    state = np.asarray(state, dtype=float)
    if state.shape != STATE_SHAPE:
        raise ValueError(f"expected state shape {STATE_SHAPE}, got {state.shape}")
    return state.reshape(STATE_SIZE).copy()


def unflatten_state(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (STATE_SIZE,):
        raise ValueError(f"expected vector of length {STATE_SIZE}, got {vec.shape}")
    return vec.reshape(STATE_SHAPE).copy()


def validate_state(state: np.ndarray, clip_tol: float = 1e-9) -> None:
    """Raise ValueError unless state has the canonical shape, finite entries
    and no count below -clip_tol."""
    state = np.asarray(state)
    if state.shape != STATE_SHAPE:
        raise ValueError(f"expected state shape {STATE_SHAPE}, got {state.shape}")
    if not np.all(np.isfinite(state)):
        raise ValueError("state contains non-finite entries")
    low = state.min()
    if low < -clip_tol:
        raise ValueError(f"state contains negative count {low:.3e}")


def stratum_totals(state: np.ndarray) -> np.ndarray:
    """Persons per stratum, shape (2, 4, 9).  Works for any number of
    trailing compartments (plain or vaccinated layouts)."""
    return np.asarray(state, dtype=float).sum(axis=-1)


@dataclass(frozen=True)
class ModelParams:
    """Natural-scale parameters of one model variant.

    Durations are in years.  ``immunity_*`` may be ``LIFELONG`` (math.inf)
    for immunity that never wanes.  ``incidence_var`` is the variance of the
    Gaussian observation error on treated-warts incidence;  ``sero_shape``
    is the first shape parameter of the Beta observation error on
    seroprevalence.  ``age_mixing``/``act_mixing`` blend assortative (0)
    with proportionate (1) partner choice.
    """

    trans_prob_m: float
    trans_prob_f: float
    incubation_m: float
    incubation_f: float
    treat_duration_m: float
    treat_duration_f: float
    asympt_duration_m: float
    asympt_duration_f: float
    seroconv_prob_m: float
    seroconv_prob_f: float
    immunity_m: float = LIFELONG
    immunity_f: float = LIFELONG
    incidence_var: float = 1.0
    sero_shape: float = 1.0
    age_mixing: float = 0.5
    act_mixing: float = 0.5

    def __post_init__(self):
        for name in ("trans_prob_m", "trans_prob_f", "seroconv_prob_m",
                     "seroconv_prob_f", "age_mixing", "act_mixing"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v!r} outside [0, 1]")
        for name in ("incubation_m", "incubation_f", "treat_duration_m",
                     "treat_duration_f", "asympt_duration_m",
                     "asympt_duration_f", "immunity_m", "immunity_f"):
            v = getattr(self, name)
            if not v > 0.0:
                raise ValueError(f"{name}={v!r} must be a positive duration")
        for name in ("incidence_var", "sero_shape"):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise ValueError(f"{name}={v!r} must be positive and finite")


PARAM_NAMES = tuple(f.name for f in fields(ModelParams))


@dataclass(frozen=True)
class RateCoefficients:
    """Per-gender ODE rate coefficients, each an array of shape (2,)
    ordered (male, female).

    trans            per-partnership transmission probability
    warts_onset      1 / incubation: rate of progressing I -> G
    treat_recovery   1 / treat_duration: rate of clearing G
    natural_recovery 1 / asympt_duration: rate of clearing I without warts
    seroconv         probability a recovery lands in P rather than N
    immunity_loss    1 / immunity duration (0 when lifelong)
    """

    trans: np.ndarray
    warts_onset: np.ndarray
    treat_recovery: np.ndarray
    natural_recovery: np.ndarray
    seroconv: np.ndarray
    immunity_loss: np.ndarray


def derive_rates(params: ModelParams) -> RateCoefficients:
    """Map natural-scale parameters to the ODE rate coefficients.

    Inverse-duration rates; lifelong immunity gives an exactly zero
    immunity-loss rate.  ModelParams validation guarantees positive
    durations, so the divisions are safe.
    """
    def inv(m: float, f: float) -> np.ndarray:
        return np.array([1.0 / m, 1.0 / f])

    return RateCoefficients(
        trans=np.array([params.trans_prob_m, params.trans_prob_f]),
        warts_onset=inv(params.incubation_m, params.incubation_f),
        treat_recovery=inv(params.treat_duration_m, params.treat_duration_f),
        natural_recovery=inv(params.asympt_duration_m, params.asympt_duration_f),
        seroconv=np.array([params.seroconv_prob_m, params.seroconv_prob_f]),
        immunity_loss=np.array([
            0.0 if params.immunity_m == LIFELONG else 1.0 / params.immunity_m,
            0.0 if params.immunity_f == LIFELONG else 1.0 / params.immunity_f,
        ]),
    )


class ParamSpace:
    """Bijection between a ModelParams instance and the free-parameter
    vector sampled by MCMC.

    ``names`` lists the free fields in vector order; every other field is
    held at its value in ``base``.  The default free set is the 14
    calibrated parameters (immunity fixed lifelong).
    """

    DEFAULT_FREE = (
        "trans_prob_m", "trans_prob_f",
        "incubation_m", "incubation_f",
        "treat_duration_m", "treat_duration_f",
        "asympt_duration_m", "asympt_duration_f",
        "seroconv_prob_m", "seroconv_prob_f",
        "incidence_var", "sero_shape",
        "age_mixing", "act_mixing",
    )

    def __init__(self, base: ModelParams, names: tuple[str, ...] | None = None):
        self.base = base
        self.names = tuple(names) if names is not None else self.DEFAULT_FREE
        unknown = set(self.names) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown parameter names: {sorted(unknown)}")

    @property
    def dim(self) -> int:
        return len(self.names)

    def to_vector(self, params: ModelParams) -> np.ndarray:
        return np.array([getattr(params, n) for n in self.names])

    def from_vector(self, vec: np.ndarray) -> ModelParams:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.dim,):
            raise ValueError(f"expected vector of length {self.dim}, got {vec.shape}")
        values = {f.name: getattr(self.base, f.name) for f in fields(ModelParams)}
        values.update(dict(zip(self.names, vec.tolist())))
        return ModelParams(**values)

    def in_natural_range(self, vec: np.ndarray) -> bool:
        """Cheap support check: True when from_vector would not raise."""
        try:
            self.from_vector(vec)
        except ValueError:
            return False
        return True
