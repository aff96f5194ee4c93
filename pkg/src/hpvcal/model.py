"""Transmission dynamics and forward integration.

Within every stratum the compartments evolve as

    dS = -lam*S + zeta*(P + N)   + aging
    dI =  lam*S - (gamma + rho)*I + aging
    dG =  gamma*I - r*G           + aging
    dP =  nu*(rho*I + r*G) - zeta*P + aging
    dN =  (1 - nu)*(rho*I + r*G) - zeta*N + aging

where lam is the force of infection, gamma the warts-onset rate, r the
treated-recovery rate, rho the natural-recovery rate, nu the
seroconversion probability and zeta the immunity-loss rate.  Aging moves
each compartment up one five-year band at rate 1/5; people leaving the
oldest band re-enter the youngest band's susceptible pool (split equally
by gender and across activity groups by their population shares), keeping
the population closed.

The force of infection couples strata through the balanced mixing tensor,
rebuilt from the instantaneous stratum totals at every evaluation:

    lam[g, s, a] = trans[g] * sum_{s', a'} rate[g, s, s', a, a']
                                * prevalence[opposite(g), s', a']
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mixing import BehaviorTables, MixingConfig, MixingMatrix, build_mixing
from .solver import SolveResult, SolverConfig, dormand_prince
from .strata import (
    AGING_RATE,
    G,
    I,
    N,
    N_ACTIVITY,
    N_AGES,
    N_GENDERS,
    P,
    S,
    STATE_SHAPE,
    ModelParams,
    RateCoefficients,
    derive_rates,
    stratum_totals,
    validate_state,
)

NEGATIVE_CLIP = 1e-9


def default_initial_state(total: float = 10_000.0,
                          tables: BehaviorTables | None = None,
                          seed_fraction: float = 0.01) -> np.ndarray:
    """Standard starting population.

    ``total`` persons split equally by gender, across activity groups by
    their population shares and uniformly over the nine age bands; a
    ``seed_fraction`` of every stratum starts infected (I), the remainder
    susceptible.  This layout is a fixed point of the aging flows, so
    stratum totals stay constant along trajectories.
    """
    tables = tables or BehaviorTables()
    state = np.zeros(STATE_SHAPE)
    per_stratum = (total / N_GENDERS / N_AGES) * tables.act_shares
    for g in range(N_GENDERS):
        for a in range(N_AGES):
            state[g, :, a, S] = per_stratum * (1.0 - seed_fraction)
            state[g, :, a, I] = per_stratum * seed_fraction
    return state


def force_of_infection(state: np.ndarray, mix: MixingMatrix | np.ndarray,
                       trans: np.ndarray) -> np.ndarray:
    """Per-capita infection rate lam[g, s, a] given a mixing tensor.

    Empty strata contribute zero prevalence (0/0 reads as 0), so absent
    partner pools never produce NaN.
    """
    state = np.asarray(state, float)
    rate = mix.rate if isinstance(mix, MixingMatrix) else np.asarray(mix, float)
    totals = stratum_totals(state)
    prev = np.zeros_like(totals)
    np.divide(state[..., I], totals, out=prev, where=totals > 0)
    lam = np.empty((N_GENDERS, N_ACTIVITY, N_AGES))
    for g in range(N_GENDERS):
        lam[g] = trans[g] * np.einsum("stab,tb->sa", rate[g], prev[1 - g])
    return lam


def rhs(t: float, state: np.ndarray, rates: RateCoefficients,
        lam: np.ndarray, act_shares: np.ndarray | None = None) -> np.ndarray:
    """Compartment derivatives for a given force of infection.

    The act_shares vector sets how the recycled oldest-band outflow is
    distributed over the youngest band's activity groups; it defaults to
    the survey population shares.
    """
    if act_shares is None:
        act_shares = BehaviorTables().act_shares
    state = np.asarray(state, float)
    out = np.empty_like(state)

    for g in range(N_GENDERS):
        X = state[g]
        gamma = rates.warts_onset[g]
        r = rates.treat_recovery[g]
        rho = rates.natural_recovery[g]
        nu = rates.seroconv[g]
        zeta = rates.immunity_loss[g]

        recovery = rho * X[..., I] + r * X[..., G]
        d = np.empty_like(X)
        d[..., S] = -lam[g] * X[..., S] + zeta * (X[..., P] + X[..., N])
        d[..., I] = lam[g] * X[..., S] - (gamma + rho) * X[..., I]
        d[..., G] = gamma * X[..., I] - r * X[..., G]
        d[..., P] = nu * recovery - zeta * X[..., P]
        d[..., N] = (1.0 - nu) * recovery - zeta * X[..., N]
        out[g] = d

    # aging: each band feeds the next at rate 1/5
    out -= AGING_RATE * state
    out[:, :, 1:, :] += AGING_RATE * state[:, :, :-1, :]
    # closure: oldest-band outflow re-enters the youngest band susceptible,
    # split equally by gender and over activity groups by population share
    oldest_outflow = AGING_RATE * state[:, :, -1, :].sum()
    out[:, :, 0, S] += 0.5 * oldest_outflow * act_shares[None, :]
    return out


def model_rhs(t: float, state: np.ndarray, coeffs: RateCoefficients,
              tables: BehaviorTables, mix_config: MixingConfig) -> np.ndarray:
    """Full derivative: rebuild mixing from the instantaneous totals, then
    apply the compartment flows.  Readable reference for the jitted kernel."""
    mix = build_mixing(tables, mix_config, stratum_totals(state))
    lam = force_of_infection(state, mix, coeffs.trans)
    return rhs(t, state, coeffs, lam, tables.act_shares)


@dataclass
class Trajectory:
    """States saved along one forward integration."""

    times: np.ndarray
    states: np.ndarray  # (n_times,) + state shape

    def state_at(self, t: float) -> np.ndarray:
        idx = np.searchsorted(self.times, t)
        for j in (idx - 1, idx, idx + 1):
            if 0 <= j < self.times.size and abs(self.times[j] - t) <= 1e-9:
                return self.states[j]
        raise KeyError(f"time {t} is not among the saved times")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def integrate(initial: np.ndarray, params: ModelParams,
              t0: float = 0.0, t1: float = 120.0,
              config: SolverConfig | None = None,
              save_times: np.ndarray | None = None,
              tables: BehaviorTables | None = None,
              mix_config: MixingConfig | None = None,
              engine: str = "numba") -> Trajectory:
    """Integrate the model forward and return saved states.

    save_times defaults to every whole year in [t0, t1].  The "numba"
    engine runs the fused jitted kernel; "numpy" runs the readable
    reference path through the generic stepper.  Saved snapshots clip
    negative components within -1e-9 to zero; anything lower raises
    DivergenceError.
    """
    tables = tables or BehaviorTables()
    mix_config = mix_config or MixingConfig(
        age_mixing=params.age_mixing, act_mixing=params.act_mixing)
    config = config or SolverConfig()
    validate_state(initial)
    if save_times is None:
        save_times = np.arange(np.ceil(t0), np.floor(t1) + 0.5, 1.0)
        if save_times.size == 0 or save_times[0] > t0:
            save_times = np.concatenate(([t0], save_times))
        if save_times[-1] < t1:
            save_times = np.concatenate((save_times, [t1]))
    coeffs = derive_rates(params)

    if engine == "numba":
        from ._kernels import integrate_kernel
        times, states, _ = integrate_kernel(
            np.asarray(initial, float), float(t0), float(t1),
            np.asarray(save_times, float), coeffs, tables, mix_config, config)
        return Trajectory(times=times, states=states)
    if engine != "numpy":
        raise ValueError(f"unknown engine {engine!r}")

    shape = np.asarray(initial).shape

    def f(t, y):
        return rhs_flat(t, y, shape, coeffs, tables, mix_config)

    result: SolveResult = dormand_prince(
        f, t0, t1, np.asarray(initial, float).ravel(), config,
        np.asarray(save_times, float), clip_negative=NEGATIVE_CLIP)
    return Trajectory(times=result.times,
                      states=result.states.reshape((-1,) + shape))


def rhs_flat(t: float, y: np.ndarray, shape: tuple, coeffs: RateCoefficients,
             tables: BehaviorTables, mix_config: MixingConfig) -> np.ndarray:
    """model_rhs on a flattened state vector (generic-stepper adapter)."""
    return model_rhs(t, y.reshape(shape), coeffs, tables, mix_config).ravel()


def equilibrium_check(traj: Trajectory, params: ModelParams,
                      tables: BehaviorTables | None = None,
                      mix_config: MixingConfig | None = None,
                      tol: float = 1e-6) -> tuple[bool, float]:
    """Residual derivative at the trajectory endpoint.

    The residual is the largest absolute compartment derivative divided by
    the total population (per-capita change per year); returns
    (residual <= tol, residual).
    """
    tables = tables or BehaviorTables()
    mix_config = mix_config or MixingConfig(
        age_mixing=params.age_mixing, act_mixing=params.act_mixing)
    final = traj.final_state
    deriv = model_rhs(traj.times[-1], final, derive_rates(params), tables,
                      mix_config)
    residual = float(np.max(np.abs(deriv)) / final.sum())
    return residual <= tol, residual
