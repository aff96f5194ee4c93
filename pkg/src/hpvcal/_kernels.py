"""Jitted fast path: fused mixing + force-of-infection + compartment flows,
and a Dormand-Prince loop specialized to the model state.

The mixing tensor factorizes into an age-pair matrix, an activity-pair
matrix and per-stratum supply weights; the balanced flow is the weighted
geometric mean of the male- and female-reported flows, so the full
(2,4,4,9,9) tensor never needs materializing:

    Phi[s,a,s',a'] = um[s,a]^(1-th) * uf[s',a']^th
                     * Am[a,a']^(1-th) * Af[a',a]^th
                     * Rm[s,s']^(1-th) * Rf[s',s]^th

Powers are zero-preserving (0^p == 0, any p) so zero-flow cells stay zero,
matching the dense reference in mixing.balance.  The readable equivalents
live in mixing.py / model.py / solver.py; equivalence is under test.

States are flat float64 vectors with the documented compartment order; the
same kernels serve the plain 5-compartment layout and the vaccinated
10-compartment layout (block 2 = vaccinated, susceptibility scaled by
1 - efficacy, youngest-band inflow only into unvaccinated S).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .solver import (
    DP_A,
    DP_B5,
    DP_C,
    DP_ERR,
    MAX_FACTOR,
    MIN_FACTOR,
    ORDER_EXP,
    SAFETY,
    DivergenceError,
    SolverConfig,
    StiffnessError,
)

STATUS_OK = 0
STATUS_STIFF = 1
STATUS_NONFINITE = 2
STATUS_NEGATIVE = 3


@njit(cache=True, inline="always")
def _zpow(x, p):
    if x <= 0.0:
        return 0.0
    if p == 0.5:
        return math.sqrt(x)
    if p == 0.0:
        return 1.0
    if p == 1.0:
        return x
    return math.exp(p * math.log(x))


@njit(cache=True)
def _make_workspace():
    return (np.empty((2, 4, 9)), np.empty((2, 4, 9)), np.empty((2, 4, 9)),
            np.empty((2, 9, 9)), np.empty((2, 4, 4)), np.empty((9, 9)),
            np.empty((4, 4)), np.empty((4, 9)), np.empty((4, 9)),
            np.empty((4, 9)), np.empty((4, 9)), np.empty((4, 9)),
            np.empty((2, 4, 9)), np.empty(4), np.empty(9))


@njit(cache=True)
def _deriv(y, out, C, trans, gamma, r, rho, nu, zeta, rel, act_shares,
           mean_rate, age_mix, act_mix, age_pref, theta, vacc_susc, ws):
    (T, prev, u, A, R, Abar, Rbar, um, uf, qm, qf, tmp, lam, us4, ua9) = ws

    # stratum totals and infectious prevalence
    for g in range(2):
        for s in range(4):
            for a in range(9):
                base = ((g * 4 + s) * 9 + a) * C
                tot = 0.0
                for c in range(C):
                    tot += y[base + c]
                T[g, s, a] = tot
                inf = y[base + 1]
                if C == 10:
                    inf += y[base + 6]
                prev[g, s, a] = inf / tot if tot > 0.0 else 0.0

    # partner supply u = c * T with c = c_min * rel
    for g in range(2):
        n_g = 0.0
        w = 0.0
        for s in range(4):
            for a in range(9):
                n_g += T[g, s, a]
                w += rel[s, a] * T[g, s, a]
        cmin = mean_rate * n_g / w if w > 0.0 else 0.0
        for s in range(4):
            for a in range(9):
                u[g, s, a] = cmin * rel[s, a] * T[g, s, a]

    # per-gender choice factors from the opposite gender's supply shares
    for g in range(2):
        p = 1 - g
        for s in range(4):
            us4[s] = 0.0
        for a in range(9):
            ua9[a] = 0.0
        utot = 0.0
        for s in range(4):
            for a in range(9):
                v = u[p, s, a]
                us4[s] += v
                ua9[a] += v
                utot += v
        if utot > 0.0:
            for s in range(4):
                us4[s] /= utot
            for a in range(9):
                ua9[a] /= utot
        else:
            for s in range(4):
                us4[s] = 0.0
            for a in range(9):
                ua9[a] = 0.0
        for a in range(9):
            for b in range(9):
                A[g, a, b] = age_mix * ua9[b]
            A[g, a, a] += 1.0 - age_mix
        # paired same-age shift toward older-male pairings; sources are
        # diagonal entries, targets off-diagonal, so in-place is safe
        if g == 0:
            for a in range(2, 7):
                moved = age_pref * A[0, a, a]
                A[0, a, a] -= moved
                A[0, a, a - 2] += moved
        else:
            for a in range(0, 5):
                moved = age_pref * A[1, a, a]
                A[1, a, a] -= moved
                A[1, a, a + 2] += moved
        for s in range(4):
            for t in range(4):
                R[g, s, t] = act_mix * us4[t]
            R[g, s, s] += 1.0 - act_mix

    # balanced-flow factor matrices and supply powers
    for a in range(9):
        for b in range(9):
            Abar[a, b] = _zpow(A[0, a, b], 1.0 - theta) * _zpow(A[1, b, a], theta)
    for s in range(4):
        for t in range(4):
            Rbar[s, t] = _zpow(R[0, s, t], 1.0 - theta) * _zpow(R[1, t, s], theta)
    for s in range(4):
        for a in range(9):
            um[s, a] = _zpow(u[0, s, a], 1.0 - theta)
            uf[s, a] = _zpow(u[1, s, a], theta)
            qm[s, a] = um[s, a] * prev[0, s, a]
            qf[s, a] = uf[s, a] * prev[1, s, a]

    # male force of infection
    for s in range(4):
        for b in range(9):
            acc = 0.0
            for t in range(4):
                acc += Rbar[s, t] * qf[t, b]
            tmp[s, b] = acc
    for s in range(4):
        for a in range(9):
            acc = 0.0
            for b in range(9):
                acc += Abar[a, b] * tmp[s, b]
            lam[0, s, a] = (trans[0] * um[s, a] * acc / T[0, s, a]
                            if T[0, s, a] > 0.0 else 0.0)
    # female force of infection
    for t in range(4):
        for a in range(9):
            acc = 0.0
            for s in range(4):
                acc += Rbar[s, t] * qm[s, a]
            tmp[t, a] = acc
    for t in range(4):
        for b in range(9):
            acc = 0.0
            for a in range(9):
                acc += Abar[a, b] * tmp[t, a]
            lam[1, t, b] = (trans[1] * uf[t, b] * acc / T[1, t, b]
                            if T[1, t, b] > 0.0 else 0.0)

    # recycled outflow of the oldest band: equal gender split, activity
    # shares, into unvaccinated S of the youngest band
    old = 0.0
    for g in range(2):
        for s in range(4):
            old += T[g, s, 8]
    inflow = 0.1 * old

    blocks = C // 5
    for g in range(2):
        for s in range(4):
            for a in range(9):
                base = ((g * 4 + s) * 9 + a) * C
                for blk in range(blocks):
                    o = base + 5 * blk
                    lam_eff = lam[g, s, a] * (vacc_susc if blk == 1 else 1.0)
                    sus = y[o]
                    inf = y[o + 1]
                    wart = y[o + 2]
                    pos = y[o + 3]
                    neg = y[o + 4]
                    rec = rho[g] * inf + r[g] * wart
                    out[o] = -lam_eff * sus + zeta[g] * (pos + neg)
                    out[o + 1] = lam_eff * sus - (gamma[g] + rho[g]) * inf
                    out[o + 2] = gamma[g] * inf - r[g] * wart
                    out[o + 3] = nu[g] * rec - zeta[g] * pos
                    out[o + 4] = (1.0 - nu[g]) * rec - zeta[g] * neg

    for g in range(2):
        for s in range(4):
            for a in range(9):
                base = ((g * 4 + s) * 9 + a) * C
                for c in range(C):
                    out[base + c] -= 0.2 * y[base + c]
                if a > 0:
                    below = ((g * 4 + s) * 9 + (a - 1)) * C
                    for c in range(C):
                        out[base + c] += 0.2 * y[below + c]
            out[((g * 4 + s) * 9 + 0) * C] += inflow * act_shares[s]


@njit(cache=True)
def _integrate(y0, C, t0, t1, save_times, trans, gamma, r, rho, nu, zeta,
               rel, act_shares, mean_rate, age_mix, act_mix, age_pref, theta,
               vacc_susc, rtol, atol, h0, hmin, hmax, states):
    n = y0.size
    y = y0.copy()
    y_new = np.empty(n)
    ytmp = np.empty(n)
    err = np.empty(n)
    k = np.empty((7, n))
    ws = _make_workspace()

    t = t0
    next_save = 0
    n_accepted = 0
    n_rejected = 0
    n_evals = 1

    if abs(save_times[0] - t) <= 1e-12 * max(1.0, abs(t)):
        for j in range(n):
            v = y[j]
            if v < 0.0:
                if v <= -1e-9:
                    return STATUS_NEGATIVE, t, n_accepted, n_rejected, n_evals
                v = 0.0
            states[0, j] = v
        next_save = 1

    _deriv(y, k[0], C, trans, gamma, r, rho, nu, zeta, rel, act_shares,
           mean_rate, age_mix, act_mix, age_pref, theta, vacc_susc, ws)
    h_ctrl = min(h0, hmax)

    while t < t1 and abs(t - t1) > 1e-12 * max(1.0, abs(t), abs(t1)):
        if h_ctrl < hmin:
            return STATUS_STIFF, t, n_accepted, n_rejected, n_evals
        target = save_times[next_save] if next_save < save_times.size else t1
        h = h_ctrl
        hit = False
        if target - t <= h_ctrl or abs(t + h_ctrl - target) <= 1e-12 * max(
                1.0, abs(target)):
            h = target - t
            hit = True

        for i in range(1, 7):
            for j in range(n):
                acc = 0.0
                for m in range(i):
                    acc += DP_A[i, m] * k[m, j]
                ytmp[j] = y[j] + h * acc
            _deriv(ytmp, k[i], C, trans, gamma, r, rho, nu, zeta, rel,
                   act_shares, mean_rate, age_mix, act_mix, age_pref, theta,
                   vacc_susc, ws)
        n_evals += 6

        finite = True
        err_sq = 0.0
        for j in range(n):
            acc5 = 0.0
            acce = 0.0
            for m in range(7):
                acc5 += DP_B5[m] * k[m, j]
                acce += DP_ERR[m] * k[m, j]
            yn = y[j] + h * acc5
            ej = h * acce
            y_new[j] = yn
            err[j] = ej
            if not (math.isfinite(yn) and math.isfinite(ej)):
                finite = False
                break
            ay = abs(y[j])
            ayn = abs(yn)
            scale = atol + rtol * (ay if ay > ayn else ayn)
            q = ej / scale
            err_sq += q * q
        if not finite:
            return STATUS_NONFINITE, t, n_accepted, n_rejected, n_evals

        err_norm = math.sqrt(err_sq / n)
        if err_norm <= 1.0:
            t = target if hit else t + h
            for j in range(n):
                y[j] = y_new[j]
                k[0, j] = k[6, j]
            n_accepted += 1
            if next_save < save_times.size and abs(
                    t - save_times[next_save]) <= 1e-12 * max(1.0, abs(t)):
                for j in range(n):
                    v = y[j]
                    if v < 0.0:
                        if v <= -1e-9:
                            return (STATUS_NEGATIVE, t, n_accepted,
                                    n_rejected, n_evals)
                        v = 0.0
                    states[next_save, j] = v
                next_save += 1
            if err_norm == 0.0:
                factor = MAX_FACTOR
            else:
                factor = SAFETY * err_norm ** -ORDER_EXP
                if factor > MAX_FACTOR:
                    factor = MAX_FACTOR
                elif factor < MIN_FACTOR:
                    factor = MIN_FACTOR
        else:
            n_rejected += 1
            factor = SAFETY * err_norm ** -ORDER_EXP
            if factor < MIN_FACTOR:
                factor = MIN_FACTOR
        h_ctrl = min(hmax, h_ctrl * factor)

    if next_save < save_times.size:
        # loop ended with saves missing; should be unreachable
        return STATUS_NONFINITE, t, n_accepted, n_rejected, n_evals
    return STATUS_OK, t, n_accepted, n_rejected, n_evals


def _unpack(coeffs, tables, mix_config):
    rel = np.ascontiguousarray(
        tables.act_rates[:, None] * tables.age_rates[None, :])
    return (np.ascontiguousarray(coeffs.trans),
            np.ascontiguousarray(coeffs.warts_onset),
            np.ascontiguousarray(coeffs.treat_recovery),
            np.ascontiguousarray(coeffs.natural_recovery),
            np.ascontiguousarray(coeffs.seroconv),
            np.ascontiguousarray(coeffs.immunity_loss),
            rel, np.ascontiguousarray(tables.act_shares),
            float(tables.mean_rate), float(mix_config.age_mixing),
            float(mix_config.act_mixing), float(mix_config.age_pref_strength),
            float(mix_config.balance_exponent))


def deriv_kernel(state, coeffs, tables, mix_config, vacc_susc=1.0):
    """Single derivative evaluation through the jitted path (testing aid)."""
    state = np.asarray(state, float)
    C = state.shape[-1]
    y = np.ascontiguousarray(state.ravel())
    out = np.empty_like(y)
    args = _unpack(coeffs, tables, mix_config)
    ws = _make_workspace()
    _deriv(y, out, C, *args[:6], args[6], args[7], *args[8:13],
           float(vacc_susc), ws)
    return out.reshape(state.shape)


def integrate_kernel(initial, t0, t1, save_times, coeffs, tables, mix_config,
                     config: SolverConfig, vacc_susc=1.0):
    """Run the jitted integrator; raises the same typed errors as the
    reference stepper and returns (times, states, stats)."""
    initial = np.asarray(initial, float)
    C = initial.shape[-1]
    y0 = np.ascontiguousarray(initial.ravel())
    save_times = np.ascontiguousarray(np.asarray(save_times, float))
    states = np.empty((save_times.size, y0.size))
    args = _unpack(coeffs, tables, mix_config)
    status, t_fail, n_acc, n_rej, n_evals = _integrate(
        y0, C, float(t0), float(t1), save_times, *args[:6], args[6], args[7],
        *args[8:13], float(vacc_susc), config.rel_tol,
        config.resolve_abs_tol(y0), config.initial_step, config.min_step,
        config.max_step, states)
    if status == STATUS_STIFF:
        raise StiffnessError(t_fail, config.min_step)
    if status == STATUS_NONFINITE:
        raise DivergenceError(t_fail)
    if status == STATUS_NEGATIVE:
        raise DivergenceError(t_fail, "component fell below -1e-9")
    stats = {"n_accepted": n_acc, "n_rejected": n_rej, "n_evals": n_evals}
    return save_times.copy(), states.reshape(
        (save_times.size,) + initial.shape), stats
