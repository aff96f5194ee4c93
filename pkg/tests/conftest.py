import numpy as np
import pytest

from hpvcal.datasets import load_behavior_tables
from hpvcal.mixing import MixingConfig
from hpvcal.model import default_initial_state
from hpvcal.strata import ModelParams


#: ground truth used throughout the synthetic-study tests
TRUTH = ModelParams(
    trans_prob_m=0.9, trans_prob_f=0.9,
    incubation_m=0.95, incubation_f=0.85,
    treat_duration_m=0.15, treat_duration_f=0.3,
    asympt_duration_m=3.2, asympt_duration_f=3.4,
    seroconv_prob_m=0.5, seroconv_prob_f=0.6,
    incidence_var=5.0, sero_shape=2.0,
    age_mixing=0.5, act_mixing=0.5,
)


@pytest.fixture(scope="session")
def truth_params():
    return TRUTH


@pytest.fixture(scope="session")
def tables():
    return load_behavior_tables()


@pytest.fixture(scope="session")
def mix_config():
    return MixingConfig(age_mixing=0.5, act_mixing=0.5)


@pytest.fixture(scope="session")
def initial_state(tables):
    return default_initial_state(10_000.0, tables)


def random_state(rng, total=10_000.0):
    """A random non-negative model state normalized to a given population."""
    state = rng.random((2, 4, 9, 5))
    return state * (total / state.sum())
