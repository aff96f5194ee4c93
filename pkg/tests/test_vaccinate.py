"""Vaccination pulses, widened dynamics, and posterior projection."""

import numpy as np
import pytest

from hpvcal.mixing import BehaviorTables, MixingConfig
from hpvcal.model import integrate
from hpvcal.strata import I, N_COMP, P, S, ParamSpace, derive_rates
from hpvcal.vaccinate import (
    VACC_STATE_SHAPE,
    VaccinationPolicy,
    apply_vaccination_pulse,
    collapse_state,
    extend_state,
    posterior_predictive,
    project_with_vaccination,
    vaccinated_rhs,
)

from conftest import TRUTH


@pytest.fixture(scope="module")
def endemic_terminal(initial_state, tables, mix_config):
    traj = integrate(initial_state, TRUTH, 0.0, 120.0, tables=tables,
                     mix_config=mix_config)
    return traj.final_state


# --- policy -----------------------------------------------------------------


def test_policy_validation():
    VaccinationPolicy()  # defaults are valid
    with pytest.raises(ValueError):
        VaccinationPolicy(coverage=1.2)
    with pytest.raises(ValueError):
        VaccinationPolicy(efficacy=-0.1)
    with pytest.raises(ValueError):
        VaccinationPolicy(gender=2)
    with pytest.raises(ValueError):
        VaccinationPolicy(age_band=0)
    with pytest.raises(ValueError):
        VaccinationPolicy(age_band=10)
    with pytest.raises(ValueError):
        VaccinationPolicy(start_offset=-1.0)
    with pytest.raises(ValueError):
        VaccinationPolicy(horizon=0.0)
    with pytest.raises(ValueError):
        VaccinationPolicy(interval=0.0)


def test_pulse_times_semantics():
    times = VaccinationPolicy().pulse_times(120.0)
    np.testing.assert_allclose(times, np.arange(130.0, 160.0))
    assert times.size == 30  # no campaign at the horizon itself
    times = VaccinationPolicy(interval=2.0).pulse_times(120.0)
    np.testing.assert_allclose(times, np.arange(130.0, 160.0, 2.0))
    times = VaccinationPolicy(start_offset=0.0).pulse_times(50.0)
    assert times[0] == 50.0
    # a horizon barely past the offset leaves exactly one campaign
    times = VaccinationPolicy(start_offset=10.0, horizon=10.5).pulse_times(0.0)
    np.testing.assert_allclose(times, [10.0])


# --- state widening -----------------------------------------------------------


def test_extend_collapse_round_trip():
    rng = np.random.default_rng(5)
    state = rng.uniform(0.0, 30.0, size=(2, 4, 9, 5))
    wide = extend_state(state)
    assert wide.shape == VACC_STATE_SHAPE
    np.testing.assert_array_equal(wide[..., :N_COMP], state)
    np.testing.assert_array_equal(wide[..., N_COMP:], 0.0)
    np.testing.assert_allclose(collapse_state(wide), state, atol=0.0)
    vstate = rng.uniform(0.0, 30.0, size=VACC_STATE_SHAPE)
    np.testing.assert_allclose(
        collapse_state(vstate), vstate[..., :5] + vstate[..., 5:], atol=0.0)
    assert vstate.sum() == pytest.approx(collapse_state(vstate).sum())


def test_pulse_moves_only_target_susceptibles():
    rng = np.random.default_rng(9)
    vstate = rng.uniform(1.0, 50.0, size=VACC_STATE_SHAPE)
    vstate[1, :, 0, S] = 100.0
    policy = VaccinationPolicy(coverage=0.8, gender=1, age_band=1)
    out = apply_vaccination_pulse(vstate, policy)
    np.testing.assert_allclose(out[1, :, 0, S], 20.0, atol=1e-12)
    np.testing.assert_allclose(
        out[1, :, 0, N_COMP + S], vstate[1, :, 0, N_COMP + S] + 80.0,
        atol=1e-12)
    # everything else is untouched, including the input array
    mask = np.ones(VACC_STATE_SHAPE, bool)
    mask[1, :, 0, S] = mask[1, :, 0, N_COMP + S] = False
    np.testing.assert_array_equal(out[mask], vstate[mask])
    assert vstate[1, 0, 0, S] == 100.0
    assert out.sum() == pytest.approx(vstate.sum(), rel=1e-14)


def test_pulse_coverage_limits():
    rng = np.random.default_rng(13)
    vstate = rng.uniform(1.0, 50.0, size=VACC_STATE_SHAPE)
    noop = apply_vaccination_pulse(
        vstate, VaccinationPolicy(coverage=0.0))
    np.testing.assert_array_equal(noop, vstate)
    full = apply_vaccination_pulse(
        vstate, VaccinationPolicy(coverage=1.0, gender=0, age_band=3))
    np.testing.assert_array_equal(full[0, :, 2, S], 0.0)
    np.testing.assert_allclose(
        full[0, :, 2, N_COMP + S],
        vstate[0, :, 2, N_COMP + S] + vstate[0, :, 2, S], atol=1e-12)


# --- widened derivatives -------------------------------------------------------


def test_vaccinated_rhs_conserves_population(tables):
    rng = np.random.default_rng(17)
    coeffs = derive_rates(TRUTH)
    vstate = rng.uniform(0.0, 40.0, size=VACC_STATE_SHAPE)
    lam = rng.uniform(0.0, 0.4, size=(2, 4, 9))
    deriv = vaccinated_rhs(0.0, vstate, coeffs, lam, 0.7, tables.act_shares)
    assert abs(deriv.sum()) < 1e-9


def test_vaccinated_rhs_efficacy_scales_breakthrough(tables):
    coeffs = derive_rates(TRUTH)
    rng = np.random.default_rng(19)
    vstate = np.zeros(VACC_STATE_SHAPE)
    vstate[..., N_COMP + S] = rng.uniform(10.0, 90.0, size=(2, 4, 9))
    lam = rng.uniform(0.0, 0.4, size=(2, 4, 9))
    # a perfect vaccine admits no breakthrough infections at all
    blocked = vaccinated_rhs(0.0, vstate, coeffs, lam, 1.0, tables.act_shares)
    np.testing.assert_allclose(blocked[..., N_COMP + I], 0.0, atol=1e-14)
    # otherwise new vaccinated infections are (1 - efficacy) * lam * Sv
    half = vaccinated_rhs(0.0, vstate, coeffs, lam, 0.5, tables.act_shares)
    np.testing.assert_allclose(
        half[..., N_COMP + I], 0.5 * lam * vstate[..., N_COMP + S],
        atol=1e-12)


def test_vaccinated_rhs_zero_efficacy_mirrors_base(tables):
    coeffs = derive_rates(TRUTH)
    rng = np.random.default_rng(23)
    block = rng.uniform(0.0, 40.0, size=(2, 4, 9, 5))
    block[:, :, -1, :] = 0.0  # silence recycling to compare blocks alone
    vstate = np.concatenate([block, block], axis=-1)
    lam = rng.uniform(0.0, 0.4, size=(2, 4, 9))
    deriv = vaccinated_rhs(0.0, vstate, coeffs, lam, 0.0, tables.act_shares)
    np.testing.assert_allclose(
        deriv[..., :N_COMP], deriv[..., N_COMP:], atol=1e-12)


def test_vaccinated_recycling_enters_unvaccinated(tables):
    # people aging out of the oldest vaccinated band re-enter the youngest
    # unvaccinated susceptible pool
    coeffs = derive_rates(TRUTH)
    vstate = np.zeros(VACC_STATE_SHAPE)
    vstate[:, :, -1, N_COMP + P] = 25.0
    oldest = vstate[..., N_COMP:][:, :, -1, :].sum()
    deriv = vaccinated_rhs(0.0, vstate, coeffs, np.zeros((2, 4, 9)), 0.9,
                           tables.act_shares)
    assert deriv[..., :N_COMP].sum() == pytest.approx(0.2 * oldest, rel=1e-12)
    assert deriv[..., N_COMP:].sum() == pytest.approx(-0.2 * oldest,
                                                      rel=1e-12)
    share_inflow = deriv[0, :, 0, S]
    np.testing.assert_allclose(
        share_inflow, 0.1 * oldest * np.asarray(tables.act_shares),
        atol=1e-12)


# --- projection ---------------------------------------------------------------


def test_projection_zero_coverage_matches_plain_forward(
        endemic_terminal, tables, mix_config):
    policy = VaccinationPolicy(start_offset=2.0, coverage=0.0, horizon=15.0)
    proj = project_with_vaccination(endemic_terminal, TRUTH, policy, 120.0,
                                    tables, mix_config)
    np.testing.assert_allclose(proj.times, np.arange(120.0, 136.0))
    assert np.all(proj.states[..., N_COMP:] == 0.0)
    plain = integrate(endemic_terminal, TRUTH, 120.0, 135.0,
                      save_times=np.arange(120.0, 136.0), tables=tables,
                      mix_config=mix_config)
    np.testing.assert_allclose(proj.states[..., :N_COMP], plain.states,
                               rtol=0.0, atol=1e-9)


def test_projection_zero_efficacy_matches_plain_totals(
        endemic_terminal, tables, mix_config):
    # a useless vaccine relabels people without changing the dynamics
    policy = VaccinationPolicy(start_offset=2.0, coverage=0.8, efficacy=0.0,
                               horizon=15.0)
    proj = project_with_vaccination(endemic_terminal, TRUTH, policy, 120.0,
                                    tables, mix_config)
    assert proj.states[..., N_COMP:].max() > 100.0  # pulses did move people
    plain = integrate(endemic_terminal, TRUTH, 120.0, 135.0,
                      save_times=np.arange(120.0, 136.0), tables=tables,
                      mix_config=mix_config)
    collapsed = proj.states[..., :N_COMP] + proj.states[..., N_COMP:]
    np.testing.assert_allclose(collapsed, plain.states, rtol=0.0, atol=1e-9)


def test_projection_saves_pre_pulse_states(endemic_terminal, tables,
                                           mix_config):
    kwargs = dict(start_offset=5.0, efficacy=0.9, horizon=15.0)
    vacc = project_with_vaccination(
        endemic_terminal, TRUTH,
        VaccinationPolicy(coverage=1.0, **kwargs), 120.0, tables, mix_config)
    twin = project_with_vaccination(
        endemic_terminal, TRUTH,
        VaccinationPolicy(coverage=0.0, **kwargs), 120.0, tables, mix_config)
    # the saved state at the first campaign time precedes the pulse
    np.testing.assert_array_equal(vacc.state_at(125.0), twin.state_at(125.0))
    assert np.all(vacc.state_at(125.0)[..., N_COMP:] == 0.0)
    after = np.abs(vacc.state_at(126.0) - twin.state_at(126.0)).max()
    assert after > 1.0


def test_projection_efficacy_monotonically_suppresses_infection(
        endemic_terminal, tables, mix_config):
    totals, males = [], []
    for efficacy in (0.0, 0.5, 0.9, 1.0):
        policy = VaccinationPolicy(start_offset=2.0, coverage=0.8,
                                   efficacy=efficacy, horizon=15.0)
        fin = project_with_vaccination(
            endemic_terminal, TRUTH, policy, 120.0, tables,
            mix_config).final_state
        totals.append(fin[..., I].sum() + fin[..., N_COMP + I].sum())
        males.append(fin[0, :, :, I].sum() + fin[0, :, :, N_COMP + I].sum())
    assert all(b < a for a, b in zip(totals, totals[1:]))
    # female-only campaigns still protect males through partner mixing
    assert males[-1] < males[0]


def test_projection_conserves_population(endemic_terminal, tables,
                                         mix_config):
    proj = project_with_vaccination(endemic_terminal, TRUTH,
                                    VaccinationPolicy(), 120.0, tables,
                                    mix_config)
    totals = proj.states.sum(axis=(1, 2, 3, 4))
    drift = np.abs(totals - totals[0]).max() / totals[0]
    assert drift <= 1e-6


# --- posterior projection -------------------------------------------------------


def test_posterior_predictive_shapes_and_bands(endemic_terminal, tables):
    space = ParamSpace(TRUTH)
    vec = space.to_vector(TRUTH)
    policy = VaccinationPolicy(start_offset=2.0, horizon=10.0)
    result = posterior_predictive(
        np.stack([vec, vec]), np.stack([endemic_terminal, endemic_terminal]),
        space, policy, 120.0, tables=tables)
    np.testing.assert_allclose(result.times, np.arange(120.0, 131.0))
    assert result.incidence.shape == (2, 11, 2, 9)
    assert result.seroprevalence.shape == (2, 11, 2, 9)
    assert result.gender_incidence.shape == (2, 11, 2)
    # identical draws leave nothing between the band edges
    summary = result.summary("incidence")
    np.testing.assert_allclose(summary["q2.5"], summary["q97.5"], atol=1e-12)
    np.testing.assert_allclose(summary["mean"], result.incidence[0],
                               atol=1e-12)


def test_posterior_predictive_summary_orders_quantiles(endemic_terminal,
                                                       tables):
    space = ParamSpace(TRUTH)
    rows = []
    for seroconv in (0.35, 0.5, 0.65):
        params = space.from_vector(space.to_vector(TRUTH))
        vec = space.to_vector(params)
        vec[space.names.index("seroconv_prob_f")] = seroconv
        rows.append(vec)
    terminals = np.stack([endemic_terminal] * 3)
    policy = VaccinationPolicy(start_offset=2.0, horizon=6.0)
    result = posterior_predictive(np.stack(rows), terminals, space, policy,
                                  120.0, tables=tables)
    summary = result.summary("seroprevalence")
    assert np.all(summary["q2.5"] <= summary["mean"] + 1e-12)
    assert np.all(summary["mean"] <= summary["q97.5"] + 1e-12)
    spread = summary["q97.5"][-1] - summary["q2.5"][-1]
    assert spread.max() > 0.0


def test_posterior_predictive_subsamples_evenly(endemic_terminal, tables):
    space = ParamSpace(TRUTH)
    vecs = []
    for j in range(5):
        vec = space.to_vector(TRUTH)
        vec[space.names.index("seroconv_prob_m")] = 0.3 + 0.1 * j
        vecs.append(vec)
    terminals = np.stack([endemic_terminal] * 5)
    policy = VaccinationPolicy(start_offset=2.0, horizon=4.0)
    full = posterior_predictive(np.stack(vecs), terminals, space, policy,
                                120.0, tables=tables)
    twice = posterior_predictive(np.stack(vecs), terminals, space, policy,
                                 120.0, tables=tables, max_draws=2)
    assert twice.incidence.shape[0] == 2
    # an even subsample keeps the first and last retained draws
    np.testing.assert_allclose(twice.seroprevalence[0],
                               full.seroprevalence[0], atol=1e-12)
    np.testing.assert_allclose(twice.seroprevalence[1],
                               full.seroprevalence[4], atol=1e-12)


def test_posterior_predictive_validates_lengths(endemic_terminal, tables):
    space = ParamSpace(TRUTH)
    vec = space.to_vector(TRUTH)
    with pytest.raises(ValueError):
        posterior_predictive(np.stack([vec, vec]),
                             endemic_terminal[None], space,
                             VaccinationPolicy(), 120.0, tables=tables)


def test_posterior_predictive_matches_manual_observables(
        endemic_terminal, tables, mix_config):
    space = ParamSpace(TRUTH)
    vec = space.to_vector(TRUTH)
    policy = VaccinationPolicy(start_offset=2.0, coverage=0.0, horizon=8.0)
    result = posterior_predictive(vec[None], endemic_terminal[None], space,
                                  policy, 120.0, tables=tables)
    traj = project_with_vaccination(endemic_terminal, TRUTH, policy, 120.0,
                                    tables, mix_config)
    agg = traj.states.sum(axis=2)
    coeffs = derive_rates(TRUTH)
    inf = agg[..., I] + agg[..., N_COMP + I]
    pos = agg[..., P] + agg[..., N_COMP + P]
    tot = agg.sum(axis=-1)
    np.testing.assert_allclose(
        result.incidence[0],
        1000.0 * coeffs.warts_onset[None, :, None] * inf / tot, atol=1e-9)
    np.testing.assert_allclose(result.seroprevalence[0], pos / tot,
                               atol=1e-12)
    np.testing.assert_allclose(
        result.gender_incidence[0],
        1000.0 * coeffs.warts_onset[None, :] * inf.sum(-1) / tot.sum(-1),
        atol=1e-9)
