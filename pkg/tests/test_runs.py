"""Run configuration resolution and orchestration helpers."""

import json
import math

import numpy as np
import pytest

from hpvcal.mcmc import SamplerConfig
from hpvcal.runs import (
    SYNTH_TRUTH,
    ConfigError,
    RunConfig,
    _resolve_lagged,
    _save_grid,
    _truth_params,
)
from hpvcal.observe import INCIDENCE, Observation
from hpvcal.strata import LIFELONG, ParamSpace


def test_load_defaults_and_overrides(tmp_path):
    config = RunConfig.load(None)
    assert config.variant == "combined" and config.seed == 1
    assert config.engine == "numba" and config.chains == 1
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"variant": "hpv6", "seed": 3,
                                "horizon": 60.0}))
    config = RunConfig.load(path, seed=9, out="elsewhere")
    assert config.variant == "hpv6"
    assert config.seed == 9  # explicit override beats the file
    assert config.out == "elsewhere" and config.horizon == 60.0
    # None-valued overrides leave file values alone
    config = RunConfig.load(path, seed=None)
    assert config.seed == 3


def test_load_rejects_malformed_configs(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        RunConfig.load(tmp_path / "absent.json")
    path = tmp_path / "c.json"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="JSON object"):
        RunConfig.load(path)
    path.write_text(json.dumps({"mystery": 1}))
    with pytest.raises(ConfigError, match="unknown config fields"):
        RunConfig.load(path)
    path.write_text(json.dumps({"sampler": {"iterations": -5}}))
    with pytest.raises(ConfigError):
        RunConfig.load(path)
    path.write_text(json.dumps({"solver": {"bogus": 1.0}}))
    with pytest.raises(ConfigError):
        RunConfig.load(path)


def test_validate_field_checks():
    for bad in (dict(variant="hpv16"), dict(engine="fortran"),
                dict(chains=0), dict(population=-1.0), dict(horizon=0.0)):
        with pytest.raises(ConfigError):
            RunConfig.load(None, **bad)


def test_config_section_builders():
    config = RunConfig.load(
        None,
        solver={"rel_tol": 1e-5},
        sampler={"iterations": 400, "burn_in": 100},
        mixing={"age_pref_strength": 0.2},
        vaccination={"gender": "male", "coverage": 0.5, "max_draws": 7})
    assert config.solver_config().rel_tol == 1e-5
    assert config.sampler_config() == SamplerConfig(iterations=400,
                                                    burn_in=100)
    template = config.mixing_template()
    assert template.age_pref_strength == 0.2
    assert template.age_mixing == 0.5 and template.act_mixing == 0.5
    policy = config.vaccination_policy()
    assert policy.gender == 0 and policy.coverage == 0.5
    # max_draws belongs to the prediction loop, not the policy
    assert not hasattr(policy, "max_draws")


def test_param_space_defaults_to_lifelong_immunity():
    space = RunConfig.load(None).param_space()
    assert space.names == ParamSpace.DEFAULT_FREE
    assert len(space.names) == 14
    assert space.base.immunity_m == LIFELONG
    vec = space.to_vector(space.base)
    assert vec[0] == SYNTH_TRUTH["trans_prob_m"]


def test_param_space_frees_finite_immunity():
    config = RunConfig.load(None, params={"immunity_m": 20.0,
                                          "immunity_f": 25.0})
    space = config.param_space()
    assert len(space.names) == 16
    assert space.names[10:12] == ("immunity_m", "immunity_f")
    assert space.base.immunity_m == 20.0
    vec = space.to_vector(space.base)
    assert vec[10] == 20.0 and vec[11] == 25.0


def test_param_space_rejects_bad_overrides():
    with pytest.raises(ConfigError, match="bad params"):
        RunConfig.load(None, params={"trans_prob_m": 1.5}).param_space()


def test_prior_set_override_mechanism():
    config = RunConfig.load(
        None, variant="hpv6",
        priors={"treat_duration_m": {"family": "uniform",
                                     "args": [0.05, 0.6]}})
    space = config.param_space()
    priors = config.prior_set(space)
    idx = space.names.index("treat_duration_m")
    assert priors.priors[idx].family == "uniform"
    assert priors.priors[idx].args == (0.05, 0.6)
    # untouched entries keep the variant defaults
    other = space.names.index("treat_duration_f")
    assert priors.priors[other].family == "beta"
    bad = RunConfig.load(None, priors={"treat_duration_m": {"family": "zeta",
                                                            "args": [1, 2]}})
    with pytest.raises(ConfigError, match="bad prior"):
        bad.prior_set(space)


def test_truth_params_layering():
    config = RunConfig.load(
        None,
        synth={"truth": {"trans_prob_m": 0.7}},
        params={"trans_prob_f": 0.6, "immunity_m": None})
    truth = _truth_params(config)
    assert truth.trans_prob_m == 0.7  # synth-truth layer
    assert truth.trans_prob_f == 0.6  # params layer
    assert truth.immunity_m == LIFELONG  # null means lifelong
    assert truth.incubation_m == SYNTH_TRUTH["incubation_m"]


def test_save_grid_is_yearly():
    grid = _save_grid(RunConfig.load(None, horizon=40.0))
    np.testing.assert_allclose(grid, np.arange(0.0, 41.0))


def test_resolve_lagged_convention():
    multi = [Observation(10.0, 0, 1, INCIDENCE, 1.0),
             Observation(20.0, 0, 1, INCIDENCE, 1.0)]
    single = [Observation(120.0, 0, 1, INCIDENCE, 1.0),
              Observation(120.0, 1, 1, INCIDENCE, 1.0)]
    config = RunConfig.load(None)
    assert _resolve_lagged(config, multi) is True
    assert _resolve_lagged(config, single) is False
    forced = RunConfig.load(None, lagged_incidence=True)
    assert _resolve_lagged(forced, single) is True


def test_manifest_hash_tracks_content():
    manifest = RunConfig.load(None, seed=4).manifest("synth")
    twin = RunConfig.load(None, seed=4).manifest("synth")
    assert manifest["config_sha256"] == twin["config_sha256"]
    other = RunConfig.load(None, seed=5).manifest("synth")
    assert manifest["config_sha256"] != other["config_sha256"]
    assert manifest["config"]["seed"] == 4
    assert not math.isnan(float(manifest["versions"]["numpy"].split(".")[0]))
