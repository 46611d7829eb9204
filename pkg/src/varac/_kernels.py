"""Compiled inner loops.

Scalar-loop versions of the per-episode work, fused so that a whole training
run or Monte Carlo batch executes inside one compiled call. Each kernel draws
uniforms from the numpy Generator it is handed in exactly the order used by
:func:`varac.mdp.simulate_episode` (action, then successor, per step).

Status codes returned by the loops: 0 ok, 1 episode exceeded max_steps,
2 non-finite critic, 3 non-finite actor estimate.
"""
import numpy as np

from ._accel import njit

OK, NON_PROPER, CRITIC_DIVERGED, ACTOR_DIVERGED = 0, 1, 2, 3


@njit
def _sample(cdf, v):
    k = 0
    last = cdf.shape[0] - 1
    while k < last and cdf[k] <= v:
        k += 1
    return k


@njit
def policy_tables(theta, index, terminal, pi, pi_cdf):
    S, A = index.shape
    z = np.empty(A)
    for x in range(S):
        if x == terminal:
            for u in range(A):
                pi[x, u] = 0.0
                pi_cdf[x, u] = 1.0
            continue
        zmax = -np.inf
        for u in range(A):
            j = index[x, u]
            z[u] = theta[j] if j >= 0 else 0.0
            if z[u] > zmax:
                zmax = z[u]
        total = 0.0
        for u in range(A):
            z[u] = np.exp(z[u] - zmax)
            total += z[u]
        acc = 0.0
        last_pos = 0
        for u in range(A):
            pi[x, u] = z[u] / total
            acc += pi[x, u]
            pi_cdf[x, u] = acc
            if pi[x, u] > 0.0:
                last_pos = u
        for u in range(last_pos, A):
            pi_cdf[x, u] = 1.0


@njit
def run_episode(gen, initial, terminal, pi_cdf, p_cdf, max_steps, states, actions):
    """Fill states/actions; return tau, or -1 if max_steps was reached."""
    x = initial
    T = 0
    while True:
        if T >= max_steps:
            return -1
        u = _sample(pi_cdf[x], gen.random())
        states[T] = x
        actions[T] = u
        T += 1
        x = _sample(p_cdf[x, u], gen.random())
        if x == terminal:
            return T


@njit
def _return_sums(reward, states, T, G, C):
    acc = 0.0
    for t in range(T - 1, -1, -1):
        acc = reward[states[t]] + acc
        G[t] = acc
    C[0] = 0.0
    for t in range(1, T):
        C[t] = C[t - 1] + reward[states[t - 1]]


@njit
def _phi_dot(w, x, u, pi, index, extra, n):
    s = 0.0
    for v in range(index.shape[1]):
        j = index[x, v]
        if j >= 0:
            s += w[j] * ((1.0 if v == u else 0.0) - pi[x, v])
    for k in range(extra.shape[2]):
        s += w[n + k] * extra[x, u, k]
    return s


@njit
def _phi_axpy(out, coef, x, u, pi, index, extra, n):
    for v in range(index.shape[1]):
        j = index[x, v]
        if j >= 0:
            out[j] += coef * ((1.0 if v == u else 0.0) - pi[x, v])
    for k in range(extra.shape[2]):
        out[n + k] += coef * extra[x, u, k]


@njit
def _all_finite(a):
    for v in a:
        if not np.isfinite(v):
            return False
    return True


@njit
def _episode_pass(states, actions, T, G, C, pi, index, extra_J, extra_M, n,
                  wJ, wM, wT, J0, mu, g, dJ, dM, dT, want_grad):
    """Accumulate the actor estimate into g and the critic increments into dJ/dM/dT."""
    for t in range(T):
        x = states[t]
        u = actions[t]
        jt = _phi_dot(wJ, x, u, pi, index, extra_J, n)
        mt = _phi_dot(wM, x, u, pi, index, extra_M, n)
        tt = _phi_dot(wT, x, u, pi, index, extra_J, n)
        if want_grad:
            weight = jt - mu * (mt + 2.0 * C[t] * tt - 2.0 * J0 * jt)
            for v in range(index.shape[1]):
                j = index[x, v]
                if j >= 0:
                    g[j] += weight * ((1.0 if v == u else 0.0) - pi[x, v])
        _phi_axpy(dJ, G[t] - jt, x, u, pi, index, extra_J, n)
        _phi_axpy(dM, G[t] * G[t] - mt, x, u, pi, index, extra_M, n)
        _phi_axpy(dT, C[t] * (G[t] - tt), x, u, pi, index, extra_J, n)


@njit
def train_loop(gen, theta0, index, initial, terminal, reward, p_cdf, extra_J, extra_M,
               wJ0, wM0, wT0, J00, mu, c_a, e_a, o_a, c_b, e_b, o_b,
               episodes, eval_every, theta_max, max_steps, update_actor):
    n = theta0.size
    S, A = index.shape
    n_rec = (episodes + eval_every - 1) // eval_every
    ep_hist = np.zeros(n_rec, dtype=np.int64)
    theta_hist = np.zeros((n_rec, n))
    wJ_hist = np.zeros((n_rec, wJ0.size))
    wM_hist = np.zeros((n_rec, wM0.size))
    wT_hist = np.zeros((n_rec, wT0.size))
    J0_hist = np.zeros(n_rec)
    clamp_hist = np.zeros(n_rec, dtype=np.int64)

    theta = theta0.copy()
    wJ = wJ0.copy()
    wM = wM0.copy()
    wT = wT0.copy()
    J0 = J00
    pi = np.empty((S, A))
    pi_cdf = np.empty((S, A))
    states = np.empty(max_steps, dtype=np.int64)
    actions = np.empty(max_steps, dtype=np.int64)
    G = np.empty(max_steps)
    C = np.empty(max_steps)
    g = np.zeros(n)
    dJ = np.zeros(wJ.size)
    dM = np.zeros(wM.size)
    dT = np.zeros(wT.size)

    status = OK
    fail_at = -1
    rec = 0
    clamps = 0
    for i in range(episodes):
        policy_tables(theta, index, terminal, pi, pi_cdf)
        T = run_episode(gen, initial, terminal, pi_cdf, p_cdf, max_steps, states, actions)
        if T < 0:
            status = NON_PROPER
            fail_at = i
            break
        _return_sums(reward, states, T, G, C)
        g[:] = 0.0
        dJ[:] = 0.0
        dM[:] = 0.0
        dT[:] = 0.0
        _episode_pass(states, actions, T, G, C, pi, index, extra_J, extra_M, n,
                      wJ, wM, wT, J0, mu, g, dJ, dM, dT, update_actor)

        a = c_a / (i + o_a) ** e_a
        for k in range(wJ.size):
            wJ[k] += a * dJ[k]
            wT[k] += a * dT[k]
        for k in range(wM.size):
            wM[k] += a * dM[k]
        J0 += a * (G[0] - J0)
        if not (_all_finite(wJ) and _all_finite(wM) and _all_finite(wT) and np.isfinite(J0)):
            status = CRITIC_DIVERGED
            fail_at = i
            break

        if update_actor:
            if not _all_finite(g):
                status = ACTOR_DIVERGED
                fail_at = i
                break
            b = c_b / (i + o_b) ** e_b
            clamped = False
            for k in range(n):
                theta[k] += b * g[k]
                if theta[k] > theta_max:
                    theta[k] = theta_max
                    clamped = True
                elif theta[k] < -theta_max:
                    theta[k] = -theta_max
                    clamped = True
            if clamped:
                clamps += 1

        if (i + 1) % eval_every == 0 or i == episodes - 1:
            ep_hist[rec] = i + 1
            theta_hist[rec] = theta
            wJ_hist[rec] = wJ
            wM_hist[rec] = wM
            wT_hist[rec] = wT
            J0_hist[rec] = J0
            clamp_hist[rec] = clamps
            clamps = 0
            rec += 1

    return (status, fail_at, ep_hist[:rec], theta_hist[:rec], wJ_hist[:rec], wM_hist[:rec],
            wT_hist[:rec], J0_hist[:rec], clamp_hist[:rec])


@njit
def actor_estimates(gen, pi, pi_cdf, index, initial, terminal, reward, p_cdf, extra_J, extra_M,
                    wJ, wM, wT, J0, mu, n_episodes, max_steps):
    """Per-episode gradient estimates at fixed theta and critic, shape (N, n)."""
    n = index.max() + 1
    out = np.zeros((n_episodes, n))
    states = np.empty(max_steps, dtype=np.int64)
    actions = np.empty(max_steps, dtype=np.int64)
    G = np.empty(max_steps)
    C = np.empty(max_steps)
    dJ = np.zeros(wJ.size)
    dM = np.zeros(wM.size)
    dT = np.zeros(wT.size)
    for e in range(n_episodes):
        T = run_episode(gen, initial, terminal, pi_cdf, p_cdf, max_steps, states, actions)
        if T < 0:
            return NON_PROPER, out
        _return_sums(reward, states, T, G, C)
        _episode_pass(states, actions, T, G, C, pi, index, extra_J, extra_M, n,
                      wJ, wM, wT, J0, mu, out[e], dJ, dM, dT, True)
    return OK, out


@njit
def critic_increments(gen, pi, pi_cdf, index, initial, terminal, reward, p_cdf, extra_J, extra_M,
                      wJ, wM, wT, J0, n_episodes, max_steps):
    """Per-episode critic increments [dJ, dM, dT, dJ0] at fixed weights."""
    n = index.max() + 1
    dj, dm = wJ.size, wM.size
    out = np.zeros((n_episodes, 2 * dj + dm + 1))
    states = np.empty(max_steps, dtype=np.int64)
    actions = np.empty(max_steps, dtype=np.int64)
    G = np.empty(max_steps)
    C = np.empty(max_steps)
    g = np.zeros(max(n, 1))
    for e in range(n_episodes):
        T = run_episode(gen, initial, terminal, pi_cdf, p_cdf, max_steps, states, actions)
        if T < 0:
            return NON_PROPER, out
        _return_sums(reward, states, T, G, C)
        row = out[e]
        _episode_pass(states, actions, T, G, C, pi, index, extra_J, extra_M, n,
                      wJ, wM, wT, J0, 0.0, g, row[:dj], row[dj:dj + dm], row[dj + dm:2 * dj + dm], False)
        row[2 * dj + dm] = G[0] - J0
    return OK, out


@njit
def episode_stats(gen, pi_cdf, initial, terminal, reward, p_cdf, n_episodes, max_steps):
    """Per-episode returns plus per-(x,u) sums and sums of squares of visit
    counts and of prefix-reward-weighted visits (t >= 1)."""
    S, A = pi_cdf.shape
    returns = np.zeros(n_episodes)
    lengths = np.zeros(n_episodes, dtype=np.int64)
    v_sum = np.zeros((S, A))
    v_sq = np.zeros((S, A))
    w_sum = np.zeros((S, A))
    w_sq = np.zeros((S, A))
    visits = np.zeros((S, A))
    wvisits = np.zeros((S, A))
    states = np.empty(max_steps, dtype=np.int64)
    actions = np.empty(max_steps, dtype=np.int64)
    G = np.empty(max_steps)
    C = np.empty(max_steps)
    for e in range(n_episodes):
        T = run_episode(gen, initial, terminal, pi_cdf, p_cdf, max_steps, states, actions)
        if T < 0:
            return NON_PROPER, returns, lengths, v_sum, v_sq, w_sum, w_sq
        _return_sums(reward, states, T, G, C)
        returns[e] = G[0]
        lengths[e] = T
        for t in range(T):
            visits[states[t], actions[t]] += 1.0
            wvisits[states[t], actions[t]] += C[t]
        for t in range(T):
            x = states[t]
            u = actions[t]
            if visits[x, u] != 0.0 or wvisits[x, u] != 0.0:
                v_sum[x, u] += visits[x, u]
                v_sq[x, u] += visits[x, u] ** 2
                w_sum[x, u] += wvisits[x, u]
                w_sq[x, u] += wvisits[x, u] ** 2
                visits[x, u] = 0.0
                wvisits[x, u] = 0.0
    return OK, returns, lengths, v_sum, v_sq, w_sum, w_sq
