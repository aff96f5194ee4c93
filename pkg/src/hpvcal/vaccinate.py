"""Vaccination scenarios and posterior-predictive projection.

The vaccinated population mirrors the five base compartments, so the state
widens to (2, 4, 9, 10) with blocks [S, I, G, P, N, Sv, Iv, Gv, Pv, Nv].
Vaccination is an annual discrete pulse: at each campaign time a fraction
``coverage`` of the still-unvaccinated susceptibles in the target gender
and age band moves S -> Sv.  Vaccinated dynamics are identical except the
force of infection is scaled by 1 - efficacy (protection against
acquisition only).  Aging preserves vaccination status; people recycled
into the youngest band enter unvaccinated S.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mixing import BehaviorTables, MixingConfig
from .model import Trajectory
from .solver import SolverConfig
from .strata import (
    I,
    N_ACTIVITY,
    N_AGES,
    N_COMP,
    N_GENDERS,
    P,
    S,
    ModelParams,
    ParamSpace,
    derive_rates,
)

VACC_STATE_SHAPE = (N_GENDERS, N_ACTIVITY, N_AGES, 2 * N_COMP)


@dataclass(frozen=True)
class VaccinationPolicy:
    """Annual pulse vaccination of one gender and age band.

    Pulses run at whole years from ``start_offset`` after the projection
    start until the horizon; ``coverage`` is the fraction of unvaccinated
    susceptibles moved per pulse and ``efficacy`` the reduction of the
    acquisition rate for vaccinated people.
    """

    start_offset: float = 10.0
    coverage: float = 0.8
    efficacy: float = 0.9
    gender: int = 1  # female
    age_band: int = 1  # youngest band, 1-based
    horizon: float = 40.0
    interval: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.coverage <= 1.0 and 0.0 <= self.efficacy <= 1.0):
            raise ValueError("coverage and efficacy must be in [0, 1]")
        if self.gender not in (0, 1):
            raise ValueError("gender must be 0 or 1")
        if not (1 <= self.age_band <= N_AGES):
            raise ValueError(f"age_band out of range: {self.age_band}")
        if self.start_offset < 0 or self.horizon <= 0 or self.interval <= 0:
            raise ValueError("start_offset, horizon, interval must be positive")

    def pulse_times(self, t_start: float) -> np.ndarray:
        """Campaign times in [t_start + start_offset, t_start + horizon)."""
        return np.arange(t_start + self.start_offset,
                         t_start + self.horizon - 1e-9, self.interval)


def extend_state(state: np.ndarray) -> np.ndarray:
    """Widen a plain (2, 4, 9, 5) state with empty vaccinated blocks."""
    state = np.asarray(state, float)
    out = np.zeros(VACC_STATE_SHAPE)
    out[..., :N_COMP] = state
    return out


def collapse_state(vstate: np.ndarray) -> np.ndarray:
    """Sum vaccinated and unvaccinated blocks back to (2, 4, 9, 5)."""
    vstate = np.asarray(vstate, float)
    return vstate[..., :N_COMP] + vstate[..., N_COMP:]


def apply_vaccination_pulse(vstate: np.ndarray,
                            policy: VaccinationPolicy) -> np.ndarray:
    """Move coverage * S into Sv for the target gender and age band (all
    activity groups).  Only susceptibles are eligible."""
    out = np.asarray(vstate, float).copy()
    g, a = policy.gender, policy.age_band - 1
    moved = policy.coverage * out[g, :, a, S]
    out[g, :, a, S] -= moved
    out[g, :, a, N_COMP + S] += moved
    return out


def vaccinated_rhs(t: float, vstate: np.ndarray, coeffs, lam: np.ndarray,
                   efficacy: float,
                   act_shares: np.ndarray | None = None) -> np.ndarray:
    """Compartment derivatives on the widened state for a given force of
    infection (reference path; the jitted kernel fuses the mixing build).

    Both blocks share the base dynamics; the vaccinated block sees
    (1 - efficacy) * lam.  Prevalence feeding lam includes both I blocks,
    which the caller accounts for by computing lam on the collapsed state.
    """
    from .model import rhs  # local import to avoid a cycle at module load

    vstate = np.asarray(vstate, float)
    if act_shares is None:
        act_shares = BehaviorTables().act_shares
    base = rhs(t, vstate[..., :N_COMP], coeffs, lam, act_shares)
    vacc = rhs(t, vstate[..., N_COMP:], coeffs, (1.0 - efficacy) * lam,
               act_shares)
    # the plain rhs recycles each block's own oldest-band outflow into its
    # own S; the widened model sends the vaccinated block's share to
    # unvaccinated S instead (vaccination status is lost on re-entry)
    vacc_inflow = 0.1 * vstate[..., N_COMP:][:, :, -1, :].sum() * act_shares
    vacc[:, :, 0, S] -= vacc_inflow[None, :]
    base[:, :, 0, S] += vacc_inflow[None, :]
    out = np.empty_like(vstate)
    out[..., :N_COMP] = base
    out[..., N_COMP:] = vacc
    return out


def project_with_vaccination(terminal: np.ndarray, params: ModelParams,
                             policy: VaccinationPolicy,
                             t_start: float,
                             tables: BehaviorTables | None = None,
                             mix_config: MixingConfig | None = None,
                             solver_config: SolverConfig | None = None,
                             save_interval: float = 1.0) -> Trajectory:
    """Project one posterior draw forward under the vaccination policy.

    Integrates the widened model from the calibrated terminal state over
    [t_start, t_start + horizon], applying pulses between integration
    segments, and returns the widened trajectory at the save grid.
    """
    from ._kernels import integrate_kernel

    tables = tables or BehaviorTables()
    mix_config = mix_config or MixingConfig(
        age_mixing=params.age_mixing, act_mixing=params.act_mixing)
    solver_config = solver_config or SolverConfig()
    coeffs = derive_rates(params)
    susc = 1.0 - policy.efficacy

    t_end = t_start + policy.horizon
    save_times = np.arange(t_start, t_end + 1e-9, save_interval)
    pulses = policy.pulse_times(t_start)

    vstate = np.asarray(terminal, float)
    if vstate.shape != VACC_STATE_SHAPE:
        vstate = extend_state(vstate)
    out_times = [t_start]
    out_states = [vstate.copy()]

    # saved states at pulse times are pre-pulse (campaign applies at the
    # very start of the following segment)
    remaining = save_times[save_times > t_start + 1e-9]
    t = t_start
    for boundary in np.concatenate((pulses, [t_end])):
        if boundary > t + 1e-12:
            on_seg = remaining <= boundary + 1e-9
            seg_saves = remaining[on_seg]
            remaining = remaining[~on_seg]
            n_keep = seg_saves.size
            if n_keep == 0 or abs(seg_saves[-1] - boundary) > 1e-9:
                seg_saves = np.append(seg_saves, boundary)
            _, seg_states, _ = integrate_kernel(
                vstate, t, boundary, seg_saves, coeffs, tables, mix_config,
                solver_config, vacc_susc=susc)
            out_times.extend(seg_saves[:n_keep].tolist())
            out_states.extend(seg_states[:n_keep])
            vstate = seg_states[-1]
            t = boundary
        if boundary < t_end - 1e-12:
            vstate = apply_vaccination_pulse(vstate, policy)

    return Trajectory(times=np.array(out_times), states=np.stack(out_states))


@dataclass
class PredictiveResult:
    """Per-draw observables over the projection grid.

    incidence / seroprevalence have shape (n_draws, n_times, 2, 9);
    gender_incidence aggregates over all strata of a gender,
    shape (n_draws, n_times, 2).  Incidence uses the instantaneous form
    (current prevalence over incubation) and counts both I blocks.
    """

    times: np.ndarray
    incidence: np.ndarray
    seroprevalence: np.ndarray
    gender_incidence: np.ndarray

    def summary(self, which: str = "incidence") -> dict[str, np.ndarray]:
        arr = getattr(self, which)
        return {
            "mean": arr.mean(axis=0),
            "q2.5": np.quantile(arr, 0.025, axis=0),
            "q97.5": np.quantile(arr, 0.975, axis=0),
        }


def posterior_predictive(samples: np.ndarray, terminal_states: np.ndarray,
                         space: ParamSpace, policy: VaccinationPolicy,
                         t_start: float,
                         tables: BehaviorTables | None = None,
                         solver_config: SolverConfig | None = None,
                         mix_template: MixingConfig | None = None,
                         max_draws: int | None = None,
                         save_interval: float = 1.0) -> PredictiveResult:
    """Project retained posterior draws under a vaccination policy.

    Each draw starts from its own calibrated terminal state; observables
    are collected per draw so the caller can form pointwise means and
    central 95% bands.
    """
    samples = np.atleast_2d(np.asarray(samples, float))
    terminal_states = np.asarray(terminal_states, float)
    if terminal_states.shape[0] != samples.shape[0]:
        raise ValueError("samples and terminal states disagree in length")
    n = samples.shape[0]
    if max_draws is not None and n > max_draws:
        sel = np.linspace(0, n - 1, max_draws).round().astype(int)
        samples, terminal_states = samples[sel], terminal_states[sel]
        n = max_draws

    age_pref = mix_template.age_pref_strength if mix_template else 0.3
    bal_exp = mix_template.balance_exponent if mix_template else 0.5

    times = None
    inc_all, sero_all, gender_all = [], [], []
    for row, terminal in zip(samples, terminal_states):
        params = space.from_vector(row)
        mix_config = MixingConfig(
            age_mixing=params.age_mixing, act_mixing=params.act_mixing,
            age_pref_strength=age_pref, balance_exponent=bal_exp)
        traj = project_with_vaccination(
            terminal, params, policy, t_start, tables, mix_config,
            solver_config, save_interval)
        if times is None:
            times = traj.times
        coeffs = derive_rates(params)
        agg = traj.states.sum(axis=2)  # (nt, 2, 9, 10)
        inf = agg[..., I] + agg[..., N_COMP + I]
        pos = agg[..., P] + agg[..., N_COMP + P]
        tot = agg.sum(axis=-1)
        inc_all.append(1000.0 * coeffs.warts_onset[None, :, None] * inf / tot)
        sero_all.append(pos / tot)
        gender_all.append(1000.0 * coeffs.warts_onset[None, :]
                          * inf.sum(axis=-1) / tot.sum(axis=-1))

    return PredictiveResult(
        times=times,
        incidence=np.stack(inc_all),
        seroprevalence=np.stack(sero_all),
        gender_incidence=np.stack(gender_all),
    )
