"""Heterosexual partnership mixing between population strata.

Partner-acquisition behaviour comes from survey tables of relative
partner-change rates by age band and activity group (ASHR sexual-behaviour
survey).  The pipeline is

    relative rates r[s, a] = act_rate[s] * age_rate[a]
    scale to absolute rates c so the population mean matches the survey
    mixing probabilities rho: blend of fully assortative and fully
        proportionate partner choice, weighted by partner supply c * N
    age-preference adjustment: shift a fraction of same-age partnerships
        toward pairings of older males with younger females
    balancing: reconcile male-reported and female-reported partnership
        flows so both genders agree on the number of new partnerships

All arrays are indexed with 0-based gender (0 male, 1 female), activity
group and age band.  Mixing probability and rate tensors have shape
(2, 4, 4, 9, 9) indexed [gender, own activity, partner activity, own age,
partner age].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .strata import N_ACTIVITY, N_AGES, N_GENDERS

# ASHR survey constants: relative new-partner rates by five-year age band
# (15-19 ... 55-59) and by activity quartile group, the population share of
# each activity group, and the population-mean new-partner rate per year.
AGE_RATE_TABLE = (5.28, 6.06, 4.37, 2.57, 1.61, 1.43, 1.00, 1.00, 1.00)
ACT_RATE_TABLE = (1.00, 4.76, 24.83, 105.67)
ACT_SHARE_TABLE = (0.60, 0.27, 0.11, 0.02)
MEAN_RATE = 0.437


@dataclass(frozen=True)
class BehaviorTables:
    """Survey inputs driving partner-acquisition rates."""

    age_rates: np.ndarray = field(
        default_factory=lambda: np.array(AGE_RATE_TABLE))
    act_rates: np.ndarray = field(
        default_factory=lambda: np.array(ACT_RATE_TABLE))
    act_shares: np.ndarray = field(
        default_factory=lambda: np.array(ACT_SHARE_TABLE))
    mean_rate: float = MEAN_RATE

    def __post_init__(self):
        object.__setattr__(self, "age_rates", np.asarray(self.age_rates, float))
        object.__setattr__(self, "act_rates", np.asarray(self.act_rates, float))
        object.__setattr__(self, "act_shares", np.asarray(self.act_shares, float))
        if self.age_rates.shape != (N_AGES,):
            raise ValueError(f"age_rates must have shape ({N_AGES},)")
        if self.act_rates.shape != (N_ACTIVITY,):
            raise ValueError(f"act_rates must have shape ({N_ACTIVITY},)")
        if self.act_shares.shape != (N_ACTIVITY,):
            raise ValueError(f"act_shares must have shape ({N_ACTIVITY},)")
        if np.any(self.age_rates <= 0) or np.any(self.act_rates <= 0):
            raise ValueError("relative rates must be positive")
        if np.any(self.act_shares < 0) or abs(self.act_shares.sum() - 1.0) > 1e-9:
            raise ValueError("activity shares must be non-negative and sum to 1")
        if not self.mean_rate > 0:
            raise ValueError("mean_rate must be positive")


@dataclass(frozen=True)
class MixingConfig:
    """Mixing behaviour knobs.

    age_mixing / act_mixing blend assortative (0) with proportionate (1)
    partner choice; they are calibrated parameters.  age_pref_strength is
    the fraction of same-age partnership probability shifted to the
    male-two-bands-older pairing.  balance_exponent in [0, 1] sets which
    gender adjusts when partnership supply and demand disagree: 0 leaves
    male rates unchanged, 1 leaves female rates unchanged.
    """

    age_mixing: float
    act_mixing: float
    age_pref_strength: float = 0.3
    balance_exponent: float = 0.5

    def __post_init__(self):
        for name in ("age_mixing", "act_mixing", "balance_exponent"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v!r} outside [0, 1]")
        if not (0.0 <= self.age_pref_strength < 1.0):
            raise ValueError("age_pref_strength must be in [0, 1)")


@dataclass(frozen=True)
class MixingMatrix:
    """Balanced mixing for one population snapshot.

    rate[g, s, s', a, a'] is the per-capita rate at which a person of
    gender g in (activity s, age a) forms new partnerships with
    opposite-gender members of (activity s', age a').  stratum_rates holds
    the pre-balancing absolute partner-change rates c and min_rate the
    per-gender scale factor; probs is the mixing probability tensor after
    the age-preference adjustment.
    """

    rate: np.ndarray
    probs: np.ndarray
    stratum_rates: np.ndarray
    min_rate: np.ndarray


def relative_rates(tables: BehaviorTables) -> np.ndarray:
    """Relative partner-change rate per stratum, shape (4, 9).

    The survey factorizes into an activity component and an age component;
    both genders share the same relative surface.
    """
    return tables.act_rates[:, None] * tables.age_rates[None, :]


def min_rate(tables: BehaviorTables, populations: np.ndarray) -> np.ndarray:
    """Per-gender scale factor, shape (2,), matching the population-mean
    partner-change rate to the survey mean.

    c_min[g] = mean_rate * N_g / sum_{s,a} r[s,a] * N[g,s,a].  Empty
    genders get 0 rather than an error.
    """
    populations = _check_populations(populations)
    rel = relative_rates(tables)
    out = np.zeros(N_GENDERS)
    for g in range(N_GENDERS):
        weight = float((rel * populations[g]).sum())
        if weight > 0.0:
            out[g] = tables.mean_rate * populations[g].sum() / weight
    return out


def stratum_rates(tables: BehaviorTables, populations: np.ndarray) -> np.ndarray:
    """Absolute partner-change rates c[g, s, a] = c_min[g] * r[s, a]."""
    return min_rate(tables, populations)[:, None, None] * relative_rates(tables)


def mixing_probabilities(config: MixingConfig, rates: np.ndarray,
                         populations: np.ndarray) -> np.ndarray:
    """Partner-choice distribution rho[g, s, s', a, a'] before balancing.

    Each factor blends a Kronecker delta (assortative) with the partner
    supply share of the opposite gender (proportionate); the blend weights
    are the age_mixing / act_mixing knobs.  Because the age and activity
    factors are normalized separately, every row of rho sums to 1 exactly
    whenever the opposite gender is non-empty.
    """
    populations = _check_populations(populations)
    rates = np.asarray(rates, float)
    rho = np.zeros((N_GENDERS, N_ACTIVITY, N_ACTIVITY, N_AGES, N_AGES))
    for g in range(N_GENDERS):
        partner = 1 - g
        supply = rates[partner] * populations[partner]  # (4, 9)
        total = supply.sum()
        if total > 0.0:
            act_share = supply.sum(axis=1) / total
            age_share = supply.sum(axis=0) / total
        else:
            act_share = np.zeros(N_ACTIVITY)
            age_share = np.zeros(N_AGES)
        act_factor = ((1.0 - config.act_mixing) * np.eye(N_ACTIVITY)
                      + config.act_mixing * act_share[None, :])
        age_factor = ((1.0 - config.age_mixing) * np.eye(N_AGES)
                      + config.age_mixing * age_share[None, :])
        rho[g] = act_factor[:, :, None, None] * age_factor[None, None, :, :]
    return rho


def age_adjust(rho: np.ndarray, strength: float) -> np.ndarray:
    """Shift same-age partnership probability toward male-older pairings.

    For male rows with age bands 3..7 a fraction ``strength`` of the
    same-age probability moves to the partner band two steps younger; for
    female rows with age bands 1..5 the same fraction moves to the partner
    band two steps older.  The moves are paired transfers computed from the
    pre-adjustment matrix, so every row sum is preserved and the male and
    female shifts mirror each other.  strength = 0 returns an equal matrix.
    """
    if not (0.0 <= strength < 1.0):
        raise ValueError("strength must be in [0, 1)")
    rho = np.asarray(rho, float)
    out = rho.copy()
    # male rows, 0-based ages 2..6: same-age mass moves to partner age a-2
    for a in range(2, 7):
        moved = strength * rho[0, :, :, a, a]
        out[0, :, :, a, a] -= moved
        out[0, :, :, a, a - 2] += moved
    # female rows, 0-based ages 0..4: same-age mass moves to partner age a+2
    for a in range(0, 5):
        moved = strength * rho[1, :, :, a, a]
        out[1, :, :, a, a] -= moved
        out[1, :, :, a, a + 2] += moved
    return out


def balance(rates: np.ndarray, rho: np.ndarray, populations: np.ndarray,
            exponent: float) -> np.ndarray:
    """Reconcile male- and female-side partnership flows.

    For each cell pair the male-reported flow is
    F_m[s, s', a, a'] = c_m[s, a] * rho_m[s, s', a, a'] * N_m[s, a] and the
    female-reported flow of the mirrored cell is
    F_f[s, s', a, a'] = c_f[s', a'] * rho_f[s', s, a', a] * N_f[s', a'].
    The balanced common flow is the weighted geometric mean
    F_m**(1 - exponent) * F_f**exponent; dividing by the respective
    population gives each gender's adjusted per-capita rate.  Cells where
    either side reports zero flow stay zero.  exponent = 0 reproduces the
    male rates exactly, 1 the female rates.
    """
    if not (0.0 <= exponent <= 1.0):
        raise ValueError("exponent must be in [0, 1]")
    populations = _check_populations(populations)
    rates = np.asarray(rates, float)
    rho = np.asarray(rho, float)

    flow_m = (rates[0, :, None, :, None] * rho[0]
              * populations[0, :, None, :, None])
    # mirror the female tensor into male orientation [s, s', a, a']
    rho_f = np.transpose(rho[1], (1, 0, 3, 2))
    flow_f = (rates[1, None, :, None, :] * rho_f
              * populations[1, None, :, None, :])

    live = (flow_m > 0.0) & (flow_f > 0.0)
    common = np.zeros_like(flow_m)
    common[live] = flow_m[live] ** (1.0 - exponent) * flow_f[live] ** exponent

    out = np.zeros((N_GENDERS, N_ACTIVITY, N_ACTIVITY, N_AGES, N_AGES))
    np.divide(common, populations[0, :, None, :, None],
              out=out[0], where=live)
    per_female = np.zeros_like(common)
    np.divide(common, populations[1, None, :, None, :],
              out=per_female, where=live)
    out[1] = np.transpose(per_female, (1, 0, 3, 2))
    return out


def build_mixing(tables: BehaviorTables, config: MixingConfig,
                 populations: np.ndarray) -> MixingMatrix:
    """Full pipeline from survey tables and a population snapshot to the
    balanced mixing tensor."""
    scale = min_rate(tables, populations)
    rates = scale[:, None, None] * relative_rates(tables)
    rho = mixing_probabilities(config, rates, populations)
    rho = age_adjust(rho, config.age_pref_strength)
    rate = balance(rates, rho, populations, config.balance_exponent)
    return MixingMatrix(rate=rate, probs=rho, stratum_rates=rates,
                        min_rate=scale)


def balance_residual(mix: MixingMatrix, populations: np.ndarray) -> float:
    """Largest relative disagreement between male- and female-side flows.

    Zero-flow cell pairs count as balanced.
    """
    populations = _check_populations(populations)
    flow_m = mix.rate[0] * populations[0, :, None, :, None]
    flow_f_mirrored = np.transpose(
        mix.rate[1] * populations[1, :, None, :, None], (1, 0, 3, 2))
    scale = np.maximum(np.maximum(flow_m, flow_f_mirrored), 1e-300)
    resid = np.abs(flow_m - flow_f_mirrored) / scale
    resid[(flow_m == 0.0) & (flow_f_mirrored == 0.0)] = 0.0
    return float(resid.max())


def _check_populations(populations: np.ndarray) -> np.ndarray:
    populations = np.asarray(populations, float)
    if populations.shape != (N_GENDERS, N_ACTIVITY, N_AGES):
        raise ValueError(
            f"populations must have shape {(N_GENDERS, N_ACTIVITY, N_AGES)}, "
            f"got {populations.shape}")
    if not np.all(np.isfinite(populations)) or np.any(populations < 0):
        raise ValueError("populations must be finite and non-negative")
    return populations
