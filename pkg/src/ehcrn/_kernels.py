"""Compiled per-slot state machines.

Randomness is never generated here: callers pass blocks of uniforms drawn
from a seeded numpy Generator, so episodes are reproducible independently
of numba and different policies can share common random numbers.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# slot-sim system codes
ORIGINAL = 0
DOMINANT_I = 1
DOMINANT_II = 2

# slot-sim state layout: [qp, qep, qps, samples_taken, qs[0..K), qes[0..K)]
S_QP, S_QEP, S_QPS, S_NSAMP, S_NODES = 0, 1, 2, 3, 4

# slot-sim counter layout
C_ARR_P = 0
C_DEL_DIRECT = 1
C_DEL_RELAY = 2
C_RELAY_IN = 3
C_ARR_S = 4
C_DEL_S = 5
C_HARV_P = 6
C_USED_P = 7
C_PU_TX = 8
C_IDLE = 9
C_IDLE_ENERGY = 10
C_OPP_P = 11
C_OPP_PS = 12
C_OPP_S = 13
C_SU_TX = 14
C_DUMMY = 15
C_HARV_S = 16
C_USED_S = 17
N_COUNTERS = 18

# slot-sim float accumulators: time-summed queue lengths
F_QP, F_QEP, F_QPS, F_QS, F_QES = 0, 1, 2, 3, 4
N_FLOATS = 5


def slot_columns(k: int) -> int:
    return 6 + 3 * k


@njit(cache=True)
def slot_block(
    u, state, counters, qsum, node_harv, node_used, samples, sample_at,
    k, p_pspd, p_psss, relay_ok_p, own_ok_p, lep, les, lp, ls, a,
    cooperative, system, saturate_pu,
):
    """Advance the energy-harvesting queue system by ``u.shape[0]`` slots.

    ``sample_at`` holds block-relative slot indices at which queue lengths
    are written into ``samples`` (row index taken from state[S_NSAMP]).
    """
    n = u.shape[0]
    si = 0
    n_sample = sample_at.shape[0]
    qs = state[S_NODES:S_NODES + k]
    qes = state[S_NODES + k:S_NODES + 2 * k]
    c_dec = 3
    c_es = 3 + k
    c_ds = 3 + 2 * k
    c_sel = 3 + 3 * k
    c_coin = c_sel + 1
    c_link = c_sel + 2
    for t in range(n):
        row = u[t]
        # (1) energy arrivals
        if row[0] < lep:
            state[S_QEP] += 1
            counters[C_HARV_P] += 1
        for j in range(k):
            if row[c_es + j] < les:
                qes[j] += 1
                node_harv[j] += 1
                counters[C_HARV_S] += 1
        # (2) data arrivals
        if row[1] < lp:
            state[S_QP] += 1
            counters[C_ARR_P] += 1
        for j in range(k):
            if row[c_ds + j] < ls:
                qs[j] += 1
                counters[C_ARR_S] += 1
        # (3) PU
        direct = row[2] < p_pspd
        decoded = False
        if cooperative:
            for j in range(k):
                if row[c_dec + j] < p_psss:
                    decoded = True
        pu_energy = state[S_QEP] > 0
        if pu_energy and (direct or decoded):
            counters[C_OPP_P] += 1
        busy = False
        if state[S_QP] > 0 and pu_energy:
            busy = True
            state[S_QEP] -= 1
            counters[C_USED_P] += 1
            counters[C_PU_TX] += 1
            if direct:
                state[S_QP] -= 1
                counters[C_DEL_DIRECT] += 1
            elif decoded:
                state[S_QP] -= 1
                state[S_QPS] += 1
                counters[C_RELAY_IN] += 1
        elif saturate_pu and pu_energy:
            # saturated-PU battery: one unit drains every slot
            state[S_QEP] -= 1
            counters[C_USED_P] += 1

        # (4) SU side, only in slots the PU leaves idle
        if not busy:
            counters[C_IDLE] += 1
            own_ok = row[c_link] < own_ok_p
            relay_ok = row[c_link] < relay_ok_p
            coin_own = row[c_coin] < a
            any_own = False
            for j in range(k):
                if qs[j] > 0:
                    any_own = True
            node = -1
            src = 0  # 0 none, 1 own, 2 relay
            if system == ORIGINAL:
                n_energy = 0
                n_cand = 0
                for j in range(k):
                    if qes[j] > 0:
                        n_energy += 1
                        if qs[j] > 0:
                            n_cand += 1
                if n_energy > 0:
                    counters[C_IDLE_ENERGY] += 1
                relay_possible = cooperative and state[S_QPS] > 0 and n_energy > 0
                if n_energy > 0:
                    if cooperative and relay_ok and (n_cand == 0 or not coin_own):
                        counters[C_OPP_PS] += 1
                    if own_ok and (not cooperative or state[S_QPS] == 0 or coin_own):
                        counters[C_OPP_S] += 1
                if relay_possible and n_cand > 0:
                    src = 1 if coin_own else 2
                elif relay_possible:
                    src = 2
                elif n_cand > 0:
                    src = 1
                if src == 1:
                    pick = min(int(row[c_sel] * n_cand), n_cand - 1)
                    for j in range(k):
                        if qes[j] > 0 and qs[j] > 0:
                            if pick == 0:
                                node = j
                                break
                            pick -= 1
                elif src == 2:
                    pick = min(int(row[c_sel] * n_energy), n_energy - 1)
                    for j in range(k):
                        if qes[j] > 0:
                            if pick == 0:
                                node = j
                                break
                            pick -= 1
            else:
                # dominant systems: the scheduler picks a node uniformly, dummies fill empty queues
                node = min(int(row[c_sel] * k), k - 1)
                if qes[node] > 0:
                    counters[C_IDLE_ENERGY] += 1
                    if not cooperative:
                        src = 1
                        if own_ok:
                            counters[C_OPP_S] += 1
                    elif system == DOMINANT_I:
                        src = 2 if (state[S_QPS] > 0 and not coin_own) else 1
                        if relay_ok and not coin_own:
                            counters[C_OPP_PS] += 1
                        if own_ok and (state[S_QPS] == 0 or coin_own):
                            counters[C_OPP_S] += 1
                    else:
                        src = 1 if (any_own and coin_own) else 2
                        if relay_ok and ((not any_own) or not coin_own):
                            counters[C_OPP_PS] += 1
                        if own_ok and coin_own:
                            counters[C_OPP_S] += 1
            if src != 0:
                qes[node] -= 1
                node_used[node] += 1
                counters[C_USED_S] += 1
                counters[C_SU_TX] += 1
                if src == 1:
                    if qs[node] > 0:
                        if own_ok:
                            qs[node] -= 1
                            counters[C_DEL_S] += 1
                    else:
                        counters[C_DUMMY] += 1
                else:
                    if state[S_QPS] > 0:
                        if relay_ok:
                            state[S_QPS] -= 1
                            counters[C_DEL_RELAY] += 1
                    else:
                        counters[C_DUMMY] += 1

        # (5) statistics
        qsum[F_QP] += state[S_QP]
        qsum[F_QEP] += state[S_QEP]
        qsum[F_QPS] += state[S_QPS]
        tot_s = 0
        tot_e = 0
        for j in range(k):
            tot_s += qs[j]
            tot_e += qes[j]
        qsum[F_QS] += tot_s
        qsum[F_QES] += tot_e
        if si < n_sample and sample_at[si] == t:
            r = state[S_NSAMP]
            samples[r, 0] = state[S_QP]
            samples[r, 1] = state[S_QEP]
            samples[r, 2] = state[S_QPS]
            samples[r, 3] = tot_s
            samples[r, 4] = tot_e
            for j in range(k):
                samples[r, 5 + j] = qs[j]
                samples[r, 5 + k + j] = qes[j]
            state[S_NSAMP] += 1
            si += 1
        if state[S_QP] < 0 or state[S_QPS] < 0 or state[S_QEP] < 0 or tot_s < 0 or tot_e < 0:
            return t
    return -1


# hybrid-agent layout
H_QP, H_QPS, H_CH = 0, 1, 2
HC_ARR, HC_DEL_DIRECT, HC_DEL_RELAY, HC_RELAY_IN, HC_DEL_S = 0, 1, 2, 3, 4
HC_IDLE, HC_UNDERLAY, HC_COOP, HC_PU_TX = 5, 6, 7, 8
HN_COUNTERS = 9
HYB_HYBRID, HYB_CONVENTIONAL, HYB_NONCOOP = 0, 1, 2


@njit(cache=True)
def hybrid_block(
    u, state, counters, belief, qsum, samples, sample_at,
    cum, trans, a_coop, b_under, th_direct, th_underlay,
    p_own, p_relay, p_decode, p_underlay, lam_p, policy, underlay_power,
):
    """Advance the hybrid-access system; columns: fsmc, arrival, su link, relay link, decode."""
    n = u.shape[0]
    m = belief.shape[0]
    nxt = np.empty(m)
    si = 0
    n_sample = sample_at.shape[0]
    for t in range(n):
        row = u[t]
        # channel evolves first
        s = state[H_CH]
        r = cum[s]
        ns = m - 1
        for l in range(m):
            if row[0] < r[l]:
                ns = l
                break
        state[H_CH] = ns
        if row[1] < lam_p:
            state[H_QP] += 1
            counters[HC_ARR] += 1
        feedback = False
        if state[H_QP] == 0:
            counters[HC_IDLE] += 1
            if state[H_QPS] > 0:
                if row[3] < p_relay:
                    state[H_QPS] -= 1
                    counters[HC_DEL_RELAY] += 1
            elif row[2] < p_own:
                counters[HC_DEL_S] += 1
        else:
            feedback = True
            counters[HC_PU_TX] += 1
            underlay = False
            if policy == HYB_HYBRID:
                ec = 0.0
                eu = 0.0
                for l in range(m):
                    ec += belief[l] * a_coop[l]
                    eu += belief[l] * b_under[l]
                underlay = eu > ec
            threshold = th_direct
            listening = True
            if underlay:
                counters[HC_UNDERLAY] += 1
                if underlay_power:
                    listening = False
                    threshold = th_underlay
                    if row[2] < p_underlay:
                        counters[HC_DEL_S] += 1
            else:
                counters[HC_COOP] += 1
            if ns >= threshold:
                state[H_QP] -= 1
                counters[HC_DEL_DIRECT] += 1
            elif listening and policy != HYB_NONCOOP and row[4] < p_decode:
                state[H_QP] -= 1
                state[H_QPS] += 1
                counters[HC_RELAY_IN] += 1
        # belief for the next slot
        if feedback:
            for l in range(m):
                belief[l] = trans[ns, l]
        else:
            for l in range(m):
                acc = 0.0
                for q in range(m):
                    acc += belief[q] * trans[q, l]
                nxt[l] = acc
            tot = 0.0
            for l in range(m):
                tot += nxt[l]
            for l in range(m):
                belief[l] = nxt[l] / tot
        qsum[0] += state[H_QP]
        qsum[1] += state[H_QPS]
        if si < n_sample and sample_at[si] == t:
            samples[state[3], 0] = state[H_QP]
            samples[state[3], 1] = state[H_QPS]
            state[3] += 1
            si += 1
    return -1
