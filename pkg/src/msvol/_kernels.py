"""Jitted inner loops: MAP sampling and the event-driven volatility recursions.

All random draws go through the ``numpy.random.Generator`` handed in by the
caller, so a path is a pure function of the generator state.  Jump-law codes:
1 point mass ``p1``, 2 exponential with rate ``p1``, 3 normal(``p1``, ``p2``).
"""

import math

import numpy as np
from numba import njit

# 16-point Gauss-Legendre rule on [-1, 1] for the drift integral of sqrt(V)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


@njit(cache=True)
def draw_law(rng, code, p1, p2):
    if code == 2:
        return rng.exponential(1.0 / p1)
    if code == 3:
        return rng.normal(p1, p2)
    return p1


@njit(cache=True)
def sample_regime(rng, exit_rates, cdf, j0, horizon):
    n_states = exit_rates.shape[0]
    cap = 16
    times = np.empty(cap)
    states = np.empty(cap + 1, dtype=np.int64)
    states[0] = j0
    n = 0
    t = 0.0
    j = j0
    while exit_rates[j] > 0.0:
        t += rng.exponential(1.0 / exit_rates[j])
        if t > horizon:
            break
        u = rng.random()
        k = 0
        while k < n_states - 1 and cdf[j, k] <= u:
            k += 1
        if n == cap:
            cap *= 2
            new_t = np.empty(cap)
            new_t[:n] = times[:n]
            times = new_t
            new_s = np.empty(cap + 1, dtype=np.int64)
            new_s[: n + 1] = states[: n + 1]
            states = new_s
        times[n] = t
        n += 1
        states[n] = k
        j = k
    return times[:n].copy(), states[: n + 1].copy()


@njit(cache=True)
def sample_map(rng, exit_rates, cdf, j0, horizon, drv_rate, drv_law, sw_law):
    """Regime path, then driver jumps interval by interval, then switch jumps.

    ``drv_law`` is ``(N, 3)`` rows ``(code, p1, p2)``; ``sw_law`` is
    ``(N, N, 2, 3)`` with component 0 for xi and 1 for eta.  Returns merged
    event arrays ``(t, kind, from, to, a, b)``: kind 0 is a driver jump of raw
    size ``a``; kind 1 is a switch with ``(a, b) = (dxi, deta)``.  A switch is
    placed after driver jumps sharing its time stamp.
    """
    sw_t, states = sample_regime(rng, exit_rates, cdf, j0, horizon)
    n_sw = sw_t.shape[0]

    counts = np.zeros(n_sw + 1, dtype=np.int64)
    cap = 64
    d_t = np.empty(cap)
    d_a = np.empty(cap)
    n_d = 0
    lo = 0.0
    for m in range(n_sw + 1):
        hi = sw_t[m] if m < n_sw else horizon
        j = states[m]
        rate = drv_rate[j]
        if rate > 0.0 and hi > lo:
            c = rng.poisson(rate * (hi - lo))
            if c > 0:
                while n_d + c > cap:
                    cap *= 2
                    tmp = np.empty(cap)
                    tmp[:n_d] = d_t[:n_d]
                    d_t = tmp
                    tmp = np.empty(cap)
                    tmp[:n_d] = d_a[:n_d]
                    d_a = tmp
                u = np.sort(rng.uniform(lo, hi, c))
                code = int(drv_law[j, 0])
                for i in range(c):
                    d_t[n_d + i] = u[i]
                    d_a[n_d + i] = draw_law(rng, code, drv_law[j, 1], drv_law[j, 2])
                n_d += c
                counts[m] = c
        lo = hi

    z_xi = np.empty(n_sw)
    z_eta = np.empty(n_sw)
    for n in range(n_sw):
        i = states[n]
        k = states[n + 1]
        z_xi[n] = draw_law(rng, int(sw_law[i, k, 0, 0]), sw_law[i, k, 0, 1], sw_law[i, k, 0, 2])
        z_eta[n] = draw_law(rng, int(sw_law[i, k, 1, 0]), sw_law[i, k, 1, 1], sw_law[i, k, 1, 2])

    total = n_d + n_sw
    ev_t = np.empty(total)
    ev_kind = np.empty(total, dtype=np.int64)
    ev_from = np.empty(total, dtype=np.int64)
    ev_to = np.empty(total, dtype=np.int64)
    ev_a = np.empty(total)
    ev_b = np.zeros(total)
    e = 0
    d = 0
    for m in range(n_sw + 1):
        j = states[m]
        for _ in range(counts[m]):
            ev_t[e] = d_t[d]
            ev_kind[e] = 0
            ev_from[e] = j
            ev_to[e] = j
            ev_a[e] = d_a[d]
            e += 1
            d += 1
        if m < n_sw:
            ev_t[e] = sw_t[m]
            ev_kind[e] = 1
            ev_from[e] = j
            ev_to[e] = states[m + 1]
            ev_a[e] = z_xi[m]
            ev_b[e] = z_eta[m]
            e += 1
    return ev_t, ev_kind, ev_from, ev_to, ev_a, ev_b


@njit(cache=True)
def _segment(v, r, c, tau):
    """Flow of dV = r (V - c) dt over ``tau``: end value, int V, int V^2."""
    d = v - c
    e1 = math.expm1(r * tau)
    e2 = math.expm1(2.0 * r * tau)
    v_end = c + d * (1.0 + e1)
    int_v = c * tau + d * e1 / r
    int_v2 = c * c * tau + 2.0 * c * d * e1 / r + d * d * e2 / (2.0 * r)
    return v_end, int_v, int_v2


@njit(cache=True)
def _int_sqrt(v, r, c, tau, gl_x, gl_w):
    s = 0.0
    d = v - c
    for i in range(gl_x.shape[0]):
        u = 0.5 * tau * (gl_x[i] + 1.0)
        s += gl_w[i] * math.sqrt(max(c + d * math.exp(r * u), 0.0))
    return 0.5 * tau * s


@njit(cache=True)
def cogarch_path(rng, ev_t, ev_kind, ev_to, ev_a, ev_b, j0, v0,
                 log_delta, level, jump_mult, l_drift, l_sd, sample_t, n_states):
    """MSCOGARCH recursion along merged events, observed at ``sample_t``.

    Between events ``dV = (beta + V log delta) dt``; at a driver jump ``y``
    ``V *= 1 + (lambda/delta) y^2`` and ``G += sqrt(V-) y``; at a switch
    ``V = exp(-dxi) (V- + deta)``.  Occupation integrals cover
    ``[sample_t[0], sample_t[-1]]``.
    """
    n_ev = ev_t.shape[0]
    m = sample_t.shape[0]
    v_pre = np.full(n_ev, np.nan)
    v_post = np.full(n_ev, np.nan)
    dg = np.zeros(n_ev)
    s_v = np.empty(m)
    s_g = np.empty(m)
    s_j = np.empty(m, dtype=np.int64)
    s_iv = np.zeros(m)
    s_iv2 = np.zeros(m)
    occ = np.zeros(n_states)
    occ_v = np.zeros(n_states)
    occ_v2 = np.zeros(n_states)

    t = 0.0
    v = v0
    g = 0.0
    j = j0
    k = 0
    started = False
    acc_v = 0.0
    acc_v2 = 0.0
    gauss = l_sd > 0.0
    for e in range(n_ev + 1):
        t_next = ev_t[e] if e < n_ev else np.inf
        while k < m:
            is_sample = sample_t[k] < t_next
            target = sample_t[k] if is_sample else t_next
            tau = target - t
            if tau > 0.0:
                r = log_delta[j]
                c = level[j]
                v_end, iv, iv2 = _segment(v, r, c, tau)
                if l_drift != 0.0:
                    g += l_drift * _int_sqrt(v, r, c, tau, _GL_X, _GL_W)
                if gauss:
                    g += l_sd * math.sqrt(iv) * rng.standard_normal()
                if started:
                    acc_v += iv
                    acc_v2 += iv2
                    occ[j] += tau
                    occ_v[j] += iv
                    occ_v2[j] += iv2
                v = v_end
                t = target
            if is_sample:
                s_v[k] = v
                s_g[k] = g
                s_j[k] = j
                s_iv[k] = acc_v
                s_iv2[k] = acc_v2
                acc_v = 0.0
                acc_v2 = 0.0
                started = True
                k += 1
            else:
                break
        if e == n_ev or k == m:
            break
        v_pre[e] = v
        if ev_kind[e] == 0:
            y = ev_a[e]
            dg[e] = math.sqrt(v) * y
            g += dg[e]
            v = v * (1.0 + jump_mult[j] * y * y)
        else:
            v = math.exp(-ev_a[e]) * (v + ev_b[e])
            j = ev_to[e]
        v_post[e] = v
    return v_pre, v_post, dg, s_v, s_g, s_j, s_iv, s_iv2, occ, occ_v, occ_v2


@njit(cache=True)
def bns_path(rng, ev_t, ev_kind, ev_to, ev_a, ev_b, j0, v0,
             lam, level, mu, beta, rho, eta_drift, comp_rate, sample_t, n_states):
    """MSBNS recursion along merged events, observed at ``sample_t``.

    Between events ``V`` relaxes at rate ``lambda(j)`` towards the subordinator
    drift ``level(j)``; a driver jump adds ``y``; a switch maps ``V-`` to
    ``exp(-dxi) (V- + deta)``.  The price collects ``(mu + beta V) dt``, a
    Gaussian term with variance ``int V``, and ``rho(J-) d eta_tilde``.
    Also returns ``eta_tilde`` at the sample times.
    """
    n_ev = ev_t.shape[0]
    m = sample_t.shape[0]
    v_pre = np.full(n_ev, np.nan)
    v_post = np.full(n_ev, np.nan)
    dg = np.zeros(n_ev)
    s_v = np.empty(m)
    s_g = np.empty(m)
    s_j = np.empty(m, dtype=np.int64)
    s_iv = np.zeros(m)
    s_iv2 = np.zeros(m)
    s_eta = np.empty(m)
    occ = np.zeros(n_states)
    occ_v = np.zeros(n_states)
    occ_v2 = np.zeros(n_states)

    t = 0.0
    v = v0
    g = 0.0
    eta = 0.0
    j = j0
    k = 0
    started = False
    acc_v = 0.0
    acc_v2 = 0.0
    for e in range(n_ev + 1):
        t_next = ev_t[e] if e < n_ev else np.inf
        while k < m:
            is_sample = sample_t[k] < t_next
            target = sample_t[k] if is_sample else t_next
            tau = target - t
            if tau > 0.0:
                v_end, iv, iv2 = _segment(v, -lam[j], level[j], tau)
                comp = (eta_drift[j] - comp_rate[j]) * tau
                eta += comp
                g += mu[j] * tau + beta[j] * iv + rho[j] * comp
                g += math.sqrt(iv) * rng.standard_normal()
                if started:
                    acc_v += iv
                    acc_v2 += iv2
                    occ[j] += tau
                    occ_v[j] += iv
                    occ_v2[j] += iv2
                v = v_end
                t = target
            if is_sample:
                s_v[k] = v
                s_g[k] = g
                s_j[k] = j
                s_iv[k] = acc_v
                s_iv2[k] = acc_v2
                s_eta[k] = eta
                acc_v = 0.0
                acc_v2 = 0.0
                started = True
                k += 1
            else:
                break
        if e == n_ev or k == m:
            break
        v_pre[e] = v
        if ev_kind[e] == 0:
            y = ev_a[e]
            v = v + y
            eta += y
            dg[e] = rho[j] * y
        else:
            v = math.exp(-ev_a[e]) * (v + ev_b[e])
            eta += ev_b[e]
            dg[e] = rho[j] * ev_b[e]
            j = ev_to[e]
        g += dg[e]
        v_post[e] = v
    return v_pre, v_post, dg, s_v, s_g, s_j, s_iv, s_iv2, occ, occ_v, occ_v2, s_eta
