"""Compiled inner loops.

Everything the episode loop touches lives here so that the public Python
operations and the compiled episode runner share one arithmetic definition
(and therefore agree bit for bit).
"""

import math

import numpy as np
from numba import njit

N_ACTIONS = 3
INC_RISKY, HOLD, DEC_RISKY = 0, 1, 2
GRID = 10  # weights are stored in tenths

SHARPE_CAP = 100.0
# A window counts as zero-volatility when its stdev is below this fraction of
# its largest absolute return (scale-free, absorbs summation round-off).
DEGENERATE_REL = 1e-9

SARSA, QLEARNING = 0, 1
DD_FROM_PEAK, DD_FROM_START = 0, 1


@njit(cache=True, nogil=True)
def sharpe_range(x, lo, hi):
    n = hi - lo
    m = 0.0
    amax = 0.0
    for i in range(lo, hi):
        m += x[i]
        a = abs(x[i])
        if a > amax:
            amax = a
    m /= n
    v = 0.0
    for i in range(lo, hi):
        d = x[i] - m
        v += d * d
    sd = math.sqrt(v / n)
    if sd <= DEGENERATE_REL * amax:
        if amax == 0.0 or m == 0.0:
            return 0.0
        return SHARPE_CAP if m > 0.0 else -SHARPE_CAP
    return m / sd


@njit(cache=True, nogil=True)
def apply_action(w, a):
    if a == INC_RISKY:
        return min(w + 1, GRID)
    if a == DEC_RISKY:
        return max(w - 1, 0)
    return w


@njit(cache=True, nogil=True)
def mix_return(w, r_risky, r_safe):
    # exact when both assets return the same
    return r_safe + (w / GRID) * (r_risky - r_safe)


@njit(cache=True, nogil=True)
def position_bucket(w):
    # 0 risky-heavy, 1 equal, 2 safe-heavy
    if w > GRID // 2:
        return 0
    if w == GRID // 2:
        return 1
    return 2


@njit(cache=True, nogil=True)
def is_rebalance_day(day, period):
    return period <= 1 or day % period == 0


@njit(cache=True, nogil=True)
def select_action(qrow, feasible, eps, u_explore, u_choice):
    """Epsilon-greedy over the feasible mask using two caller-drawn uniforms."""
    n_feas = 0
    for a in range(N_ACTIONS):
        if feasible[a]:
            n_feas += 1
    if u_explore < eps:
        k = min(int(u_choice * n_feas), n_feas - 1)
        for a in range(N_ACTIONS):
            if feasible[a]:
                if k == 0:
                    return a
                k -= 1
    best = -np.inf
    n_best = 0
    for a in range(N_ACTIONS):
        if feasible[a]:
            if qrow[a] > best:
                best = qrow[a]
                n_best = 1
            elif qrow[a] == best:
                n_best += 1
    k = min(int(u_choice * n_best), n_best - 1)
    for a in range(N_ACTIONS):
        if feasible[a] and qrow[a] == best:
            if k == 0:
                return a
            k -= 1
    return HOLD


@njit(cache=True, nogil=True)
def level_count(levels, value):
    c = 0
    for lv in levels:
        if lv <= value:
            c += 1
    return c


@njit(cache=True, nogil=True)
def status_drawdown(wealth, peak, dd_mode):
    if dd_mode == DD_FROM_START:
        return max(0.0, 1.0 - wealth)
    return 1.0 - wealth / peak


@njit(cache=True, nogil=True)
def run_episodes(
    q,
    exo_index,
    pos_stride,
    tgt_stride,
    dd_stride,
    tgt_levels,
    tgt_bonus,
    dd_levels,
    dd_pen,
    dd_mode,
    r_risky,
    r_safe,
    bm_sr,
    bm_sr10,
    period,
    algo,
    alpha,
    gamma,
    eps,
    learn,
    with_reward,
    uniforms,
    tr_w,
    tr_action,
    tr_state,
    tr_port,
    tr_reward,
    tr_wealth,
    tr_peak,
    tr_dd_level,
):
    """Run ``uniforms.shape[0]`` episodes over one year, mutating ``q`` when ``learn``.

    ``exo_index[e or last, t]`` is the state index contribution of the
    exogenous features; strides of 0 disable the endogenous components.
    The trace arrays receive the last episode, recorded at decision time.
    Returns 0 on success or ``-(t + 1)`` if wealth was wiped out on day t.
    """
    n_ep = uniforms.shape[0]
    T = r_risky.shape[0]
    port = np.empty(T)
    feasible = np.ones(N_ACTIONS, dtype=np.bool_)
    n_tgt = tgt_levels.shape[0]
    n_dd = dd_levels.shape[0]
    for ep in range(n_ep):
        row = min(ep, exo_index.shape[0] - 1)
        w = GRID // 2
        wealth = 1.0
        peak = 1.0
        tl = 0
        dl = 0
        s = exo_index[row, 0] + pos_stride * position_bucket(w)
        for a_ in range(N_ACTIONS):
            feasible[a_] = is_rebalance_day(0, period) or a_ == HOLD
        a = select_action(q[s], feasible, eps, uniforms[ep, 0, 0], uniforms[ep, 0, 1])
        for t in range(T):
            if ep == n_ep - 1:
                tr_w[t] = w
                tr_action[t] = a
                tr_state[t] = s
                tr_wealth[t] = wealth
                tr_peak[t] = peak
                tr_dd_level[t] = dl
            w = apply_action(w, a)
            ret = mix_return(w, r_risky[t], r_safe[t])
            if 1.0 + ret <= 0.0:
                return -(t + 1)
            wealth *= 1.0 + ret
            if wealth > peak:
                peak = wealth
            port[t] = ret
            if n_tgt > 0:
                tl = level_count(tgt_levels, wealth - 1.0)
            if n_dd > 0:
                dl = max(dl, level_count(dd_levels, status_drawdown(wealth, peak, dd_mode)))
            reward = 0.0
            if with_reward:
                lo10 = max(0, t - 9)
                reward = (sharpe_range(port, 0, t + 1) - bm_sr[t]) + (
                    sharpe_range(port, lo10, t + 1) - bm_sr10[t]
                )
                if tl > 0:
                    reward += tgt_bonus[tl - 1]
                if dl > 0:
                    reward += dd_pen[dl - 1]
            if ep == n_ep - 1:
                tr_port[t] = ret
                tr_reward[t] = reward
            if t + 1 < T:
                s_next = (
                    exo_index[row, t + 1]
                    + pos_stride * position_bucket(w)
                    + tgt_stride * tl
                    + dd_stride * dl
                )
                for a_ in range(N_ACTIONS):
                    feasible[a_] = is_rebalance_day(t + 1, period) or a_ == HOLD
                if algo == SARSA:
                    a_next = select_action(
                        q[s_next], feasible, eps, uniforms[ep, t + 1, 0], uniforms[ep, t + 1, 1]
                    )
                    if learn:
                        q[s, a] += alpha * (reward + gamma * q[s_next, a_next] - q[s, a])
                else:
                    if learn:
                        qmax = q[s_next, 0]
                        for a_ in range(1, N_ACTIONS):
                            if q[s_next, a_] > qmax:
                                qmax = q[s_next, a_]
                        q[s, a] += alpha * (reward + gamma * qmax - q[s, a])
                    a_next = select_action(
                        q[s_next], feasible, eps, uniforms[ep, t + 1, 0], uniforms[ep, t + 1, 1]
                    )
                s = s_next
                a = a_next
            elif learn:
                q[s, a] += alpha * (reward - q[s, a])
    return 0
