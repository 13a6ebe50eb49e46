"""Compiled period loop shared by the learning and evaluation phases."""
import numba
import numpy as np

from .agents import _apply_skew, _encode_state, _greedy, _select_action
from .market import _arrival_probability, _match_side


@numba.njit(cache=True)
def _first_argmax(row):
    best = 0
    for j in range(1, row.shape[0]):
        if row[j] > row[best]:
            best = j
    return best


@numba.njit(cache=True)
def run_periods(
    q,  # (N, S, A) Q-tables, updated in place when learning
    inventory,  # (N,) updated in place
    state,  # zero-based current state
    t0,  # period index of the first step, drives epsilon
    n_periods,
    learns,  # (N,) bool; frozen agents act greedily and never update
    explore,  # use epsilon-greedy for learning agents
    window,  # stop once greedy policies are unchanged this long; 0 disables
    curves,  # (K, K) quote curve for each concentration level
    n_buckets,  # state buckets per side
    resolution,  # bucket width in levels
    deltas,
    weights,
    sigma,
    M,
    beta,
    xi,
    alpha,
    gamma,
    mu,
    skew_upper,
    skew_lower,
    market_rng,
    agent_rngs,
    visits,  # (N, S, A) visit counts, updated in place
    inv_range,  # (N, 2) running min / max inventory, updated in place
    totals,  # (N, 4): ask fills, bid fills, fee-weighted ask fills, fee-weighted bid fills
    profiles,  # (n_periods,) int64 encoded selected profiles; size 0 to skip
    trace_s,  # (T, N) state / selected action / reward traces; T = 0 to skip
    trace_c,
    trace_r,
):
    N = q.shape[0]
    A = q.shape[2]
    K = curves.shape[0]
    earn = deltas + beta

    greedy = np.empty((N, q.shape[1]), dtype=np.int64)
    for i in range(N):
        for s in range(q.shape[1]):
            greedy[i, s] = _first_argmax(q[i, s])

    sel = np.empty(N, dtype=np.int64)
    ask_q = np.empty((N, K))
    bid_q = np.empty((N, K))
    ask_f = np.empty((N, K))
    bid_f = np.empty((N, K))
    ask_side = np.empty(K)
    bid_side = np.empty(K)
    stable = 0
    s = state

    for n in range(n_periods):
        t = t0 + n
        eps = np.exp(-mu * t) if explore else 0.0
        for i in range(N):
            if learns[i]:
                sel[i] = _select_action(q[i, s], eps, agent_rngs[i])
            else:
                sel[i] = _greedy(q[i, s], agent_rngs[i])
            exe = _apply_skew(sel[i], inventory[i], skew_upper, skew_lower, K)
            a_lv = exe // K
            b_lv = exe % K
            for k in range(K):
                ask_q[i, k] = curves[a_lv, k]
                bid_q[i, k] = curves[b_lv, k]

        for k in range(K):
            ask_side[k] = 0.0
            bid_side[k] = 0.0
            for i in range(N):
                ask_side[k] += ask_q[i, k]
                bid_side[k] += bid_q[i, k]

        p_ask = _arrival_probability(ask_side, weights, sigma)
        p_bid = _arrival_probability(bid_side, weights, sigma)
        m_ask = market_rng.binomial(M, p_ask)
        m_bid = market_rng.binomial(M, p_bid)
        _match_side(ask_q, float(m_ask), ask_f)
        _match_side(bid_q, float(m_bid), bid_f)
        s_next = _encode_state(ask_side, bid_side, n_buckets, resolution)

        changed = False
        for i in range(N):
            a_tot = 0.0
            b_tot = 0.0
            r = 0.0
            for k in range(K):
                a_tot += ask_f[i, k]
                b_tot += bid_f[i, k]
                r += (ask_f[i, k] + bid_f[i, k]) * earn[k]
            dy = b_tot - a_tot
            r -= xi * dy * dy
            inventory[i] += dy
            if inventory[i] < inv_range[i, 0]:
                inv_range[i, 0] = inventory[i]
            if inventory[i] > inv_range[i, 1]:
                inv_range[i, 1] = inventory[i]
            totals[i, 0] += a_tot
            totals[i, 1] += b_tot
            for k in range(K):
                totals[i, 2] += ask_f[i, k] * earn[k]
                totals[i, 3] += bid_f[i, k] * earn[k]

            if n < trace_s.shape[0]:
                trace_s[n, i] = s
                trace_c[n, i] = sel[i]
                trace_r[n, i] = r

            if learns[i]:
                c = sel[i]
                nxt = q[i, s_next, 0]
                for j in range(1, A):
                    if q[i, s_next, j] > nxt:
                        nxt = q[i, s_next, j]
                q[i, s, c] = (1.0 - alpha) * q[i, s, c] + alpha * (r + gamma * nxt)
                visits[i, s, c] += 1
                g = _first_argmax(q[i, s])
                if g != greedy[i, s]:
                    greedy[i, s] = g
                    changed = True

        if profiles.shape[0] > n:
            code = 0
            for i in range(N):
                code = code * A + sel[i]
            profiles[n] = code

        s = s_next
        if changed:
            stable = 0
        else:
            stable += 1
        if window > 0 and stable >= window:
            return True, n + 1, s
    return False, n_periods, s
