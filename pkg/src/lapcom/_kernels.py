"""Compiled Gibbs sweep over a fixed-capacity array layout of the model state.

State arrays are sized by (G_max, K_max) and only the leading G / K_g slots
are meaningful. ``hp`` packs the real hyperparameters in the order of
``HP_FIELDS``. Counters ``acc`` / ``prop`` follow the block order Z, alpha,
e, w.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

HP_FIELDS = ("m_alpha", "s_alpha", "mu0_1", "mu0_2", "mu_prior_var", "u_sigma2", "v_sigma2",
             "a_G", "b_G", "c_G", "a_K", "b_K", "c_K", "l_G", "r_G", "l_K", "r_K", "s_e", "s_w")
(M_ALPHA, S_ALPHA, MU0_1, MU0_2, MU_VAR, U_S2, V_S2, A_G, B_G, C_G, A_K, B_K, C_K,
 L_G, R_G, L_K, R_K, S_E, S_W) = range(len(HP_FIELDS))
Z_TARGET, ALPHA_TARGET = 0.25, 0.44


@njit(cache=True)
def _log_partition(eta, bern):
    if bern:
        if eta > 0:
            return eta + math.log1p(math.exp(-eta))
        return math.log1p(math.exp(eta))
    return math.exp(eta)


@njit(cache=True)
def _betaln(x, y):
    return math.lgamma(x) + math.lgamma(y) - math.lgamma(x + y)


@njit(cache=True)
def _log_bnb(k, a, b, c):
    j = k - 1.0
    return (math.lgamma(a + j) - math.lgamma(a) - math.lgamma(j + 1.0)
            + _betaln(a + b, j + c) - _betaln(b, c))


@njit(cache=True)
def _log_f(x, l, r):
    return (0.5 * l * math.log(l) + 0.5 * r * math.log(r) + (0.5 * l - 1.0) * math.log(x)
            - 0.5 * (l + r) * math.log(r + l * x) - _betaln(0.5 * l, 0.5 * r))


@njit(cache=True)
def _conc_target(x, counts, n_active, k_total, n_items, l, r):
    a = x / k_total
    out = _log_f(x, l, r) + n_active * math.log(x) + math.lgamma(x) - math.lgamma(n_items + x)
    for h in range(n_active):
        out += math.lgamma(counts[h] + a) - math.lgamma(1.0 + a)
    return out


@njit(cache=True)
def _draw_log_index(logw, n, rng):
    mx = logw[0]
    for i in range(1, n):
        if logw[i] > mx:
            mx = logw[i]
    tot = 0.0
    for i in range(n):
        tot += math.exp(logw[i] - mx)
    u = rng.random() * tot
    acc = 0.0
    for i in range(n):
        acc += math.exp(logw[i] - mx)
        if u < acc:
            return i
    return n - 1


@njit(cache=True)
def _count_draw(k_plus, counts, conc, k_max, a, b, c, rng, buf):
    """Telescoping draw of the number of components over k_plus..k_max."""
    n = k_max - k_plus + 1
    for idx in range(n):
        k = k_plus + idx
        ak = conc / k
        v = (_log_bnb(k, a, b, c) + k_plus * math.log(conc) + math.lgamma(k + 1.0)
             - k_plus * math.log(k) - math.lgamma(k - k_plus + 1.0))
        for h in range(k_plus):
            v += math.lgamma(counts[h] + ak) - math.lgamma(1.0 + ak)
        buf[idx] = v
    return k_plus + _draw_log_index(buf, n, rng)


@njit(cache=True)
def _log_dirichlet(conc, n, out, rng):
    if n == 1:
        out[0] = 0.0
        return
    mx = -np.inf
    for i in range(n):
        out[i] = math.log(rng.gamma(conc[i] + 1.0, 1.0)) + math.log1p(-rng.random()) / conc[i]
        if out[i] > mx:
            mx = out[i]
    tot = 0.0
    for i in range(n):
        tot += math.exp(out[i] - mx)
    lse = mx + math.log(tot)
    for i in range(n):
        out[i] -= lse


@njit(cache=True)
def _d2(Z, rows, cols, out):
    for d in range(rows.size):
        a = Z[rows[d], 0] - Z[cols[d], 0]
        b = Z[rows[d], 1] - Z[cols[d], 1]
        out[d] = a * a + b * b


@njit(cache=True)
def _sum_partition(alpha, d2, bern):
    s = 0.0
    for d in range(d2.size):
        s += _log_partition(alpha - d2[d], bern)
    return s


@njit(cache=True)
def _prior_space(g, N, hp, mono, Z, S, K, w, log_pi, mu, sigma2, rng):
    K[g] = 1
    log_pi[g, 0] = 0.0
    if mono:
        w[g] = 1.0
        for q in range(2):
            mu[g, 0, q] = 0.0
            sigma2[g, 0, q] = 1.0
    else:
        sd0 = math.sqrt(hp[MU_VAR])
        mu[g, 0, 0] = hp[MU0_1] + sd0 * rng.standard_normal()
        mu[g, 0, 1] = hp[MU0_2] + sd0 * rng.standard_normal()
        for q in range(2):
            sigma2[g, 0, q] = hp[V_S2] / rng.gamma(hp[U_S2], 1.0)
        w[g] = rng.f(hp[L_K], hp[R_K])
    for i in range(N):
        S[g, i] = 0
        for q in range(2):
            Z[g, i, q] = mu[g, 0, q] + math.sqrt(sigma2[g, 0, q]) * rng.standard_normal()


@njit(cache=True)
def gibbs_node_params(Zg, Sg, k_plus, counts, mu_g, sigma2_g, hp, rng):
    """Mean-then-variance conjugate draws for occupied node components."""
    N = Zg.shape[0]
    mu0 = (hp[MU0_1], hp[MU0_2])
    for k in range(k_plus):
        n_k = counts[k]
        for q in range(2):
            s = 0.0
            for i in range(N):
                if Sg[i] == k:
                    s += Zg[i, q]
            var = 1.0 / (n_k / sigma2_g[k, q] + 1.0 / hp[MU_VAR])
            mean = var * (s / sigma2_g[k, q] + mu0[q] / hp[MU_VAR])
            mu_g[k, q] = mean + math.sqrt(var) * rng.standard_normal()
            ss = 0.0
            for i in range(N):
                if Sg[i] == k:
                    r = Zg[i, q] - mu_g[k, q]
                    ss += r * r
            sigma2_g[k, q] = (hp[V_S2] + 0.5 * ss) / rng.gamma(hp[U_S2] + 0.5 * n_k, 1.0)


@njit(cache=True)
def _permute_spaces(perm, G, Z, S, K, w, log_pi, mu, sigma2, log_tau, d2):
    Z[:G] = Z[perm].copy()
    S[:G] = S[perm].copy()
    K[:G] = K[perm].copy()
    w[:G] = w[perm].copy()
    log_pi[:G] = log_pi[perm].copy()
    mu[:G] = mu[perm].copy()
    sigma2[:G] = sigma2[perm].copy()
    log_tau[:G] = log_tau[perm].copy()
    d2[:G] = d2[perm].copy()


@njit(cache=True)
def _active_first(counts, n):
    perm = np.empty(n, dtype=np.int64)
    j = 0
    for i in range(n):
        if counts[i] > 0:
            perm[j] = i
            j += 1
    n_active = j
    for i in range(n):
        if counts[i] == 0:
            perm[j] = i
            j += 1
    return perm, n_active


@njit(cache=True)
def _update_space(g, n_g, ysum_g, rows, cols, d2, d2_prop, Zp, alpha, bern, n_obs, hp, K_max,
                  mono, Z, S, K, w, log_pi, mu, sigma2, delta_Z, rng, acc, prop, buf, cnt, conc):
    """Resample one occupied latent space; returns 1 if the position block moved."""
    N = Z.shape[1]
    # (a) block random-walk proposal for all positions
    ratio = 0.0
    for i in range(N):
        k = S[g, i]
        for q in range(2):
            s2 = sigma2[g, k, q]
            zp = Z[g, i, q] + delta_Z * math.sqrt(s2) * rng.standard_normal()
            Zp[i, q] = zp
            a = zp - mu[g, k, q]
            b = Z[g, i, q] - mu[g, k, q]
            ratio -= 0.5 * (a * a - b * b) / s2
    _d2(Zp, rows, cols, d2_prop)
    if n_obs > 0:
        tot = n_obs * n_g
        for d in range(rows.size):
            ratio += ysum_g[d] * (d2[g, d] - d2_prop[d])
            ratio -= tot * (_log_partition(alpha - d2_prop[d], bern)
                            - _log_partition(alpha - d2[g, d], bern))
    prop[0] += 1
    moved = 0
    if math.isfinite(ratio) and math.log(rng.random()) < ratio:
        acc[0] += 1
        moved = 1
        Z[g, :, :] = Zp
        d2[g, :] = d2_prop
    if mono:
        return moved

    # (b) node allocations
    Kg = K[g]
    for i in range(N):
        for k in range(Kg):
            v = log_pi[g, k]
            for q in range(2):
                r = Z[g, i, q] - mu[g, k, q]
                v -= 0.5 * (math.log(sigma2[g, k, q]) + r * r / sigma2[g, k, q])
            buf[k] = v
        S[g, i] = _draw_log_index(buf, Kg, rng)
    # (c) occupied node components first
    cnt[:Kg] = 0.0
    for i in range(N):
        cnt[S[g, i]] += 1.0
    perm, k_plus = _active_first(cnt, Kg)
    inv = np.empty(Kg, dtype=np.int64)
    for j in range(Kg):
        inv[perm[j]] = j
    for i in range(N):
        S[g, i] = inv[S[g, i]]
    log_pi[g, :Kg] = log_pi[g, perm].copy()
    mu[g, :Kg] = mu[g, perm].copy()
    sigma2[g, :Kg] = sigma2[g, perm].copy()
    cnt[:Kg] = cnt[perm].copy()
    # (d) conjugate updates of occupied components
    gibbs_node_params(Z[g], S[g], k_plus, cnt, mu[g], sigma2[g], hp, rng)
    # (e) number of node components, using the current concentration
    Kg = _count_draw(k_plus, cnt, w[g], K_max, hp[A_K], hp[B_K], hp[C_K], rng, buf)
    K[g] = Kg
    # (f) concentration: log-normal random walk
    w_prop = w[g] * math.exp(hp[S_W] * rng.standard_normal())
    r = (_conc_target(w_prop, cnt, k_plus, Kg, N, hp[L_K], hp[R_K])
         - _conc_target(w[g], cnt, k_plus, Kg, N, hp[L_K], hp[R_K])
         + math.log(w_prop) - math.log(w[g]))
    prop[3] += 1
    if math.isfinite(r) and math.log(rng.random()) < r:
        acc[3] += 1
        w[g] = w_prop
    # (g) empty node components from the prior
    sd0 = math.sqrt(hp[MU_VAR])
    for k in range(k_plus, Kg):
        mu[g, k, 0] = hp[MU0_1] + sd0 * rng.standard_normal()
        mu[g, k, 1] = hp[MU0_2] + sd0 * rng.standard_normal()
        for q in range(2):
            sigma2[g, k, q] = hp[V_S2] / rng.gamma(hp[U_S2], 1.0)
    # (h) node weights
    for k in range(Kg):
        conc[k] = w[g] / Kg + (cnt[k] if k < k_plus else 0.0)
    _log_dirichlet(conc, Kg, buf, rng)
    log_pi[g, :Kg] = buf[:Kg]
    return moved


@njit(cache=True)
def sweep_kernel(n_sweeps, t0, burn_in, tune, mono, ysum, n_obs, bern, rows, cols, hp,
                 G_max, K_max, st_i, st_f, C, log_tau, Z, S, K, w, log_pi, mu, sigma2,
                 delta, tune_step, acc, prop, gp_path, rng):
    """Run ``n_sweeps`` sweeps in place.

    ``st_i = [G]``, ``st_f = [e, alpha]``, ``delta = [delta_Z, delta_alpha]``.
    Proposal scales adapt by Robbins-Monro while the global sweep index
    ``t0 + s`` is below ``burn_in`` and ``tune`` is set; counters are reset
    when the burn-in ends. ``gp_path[t]`` receives the number of occupied
    latent spaces after the allocation step of sweep t.
    """
    M, D = ysum.shape
    N = Z.shape[1]
    cap = max(G_max, K_max) + 1
    buf = np.empty(cap)
    cnt = np.empty(cap)
    conc = np.empty(cap)
    mcount = np.empty(G_max)
    d2 = np.empty((G_max, D))
    d2_prop = np.empty(D)
    Zp = np.empty((N, 2))
    ll = np.empty(G_max)
    ysum_g = np.empty(D)
    for s in range(n_sweeps):
        t = t0 + s
        if t == burn_in:
            acc[:] = 0
            prop[:] = 0
        G = st_i[0]
        e = st_f[0]
        alpha = st_f[1]
        for g in range(G):
            _d2(Z[g], rows, cols, d2[g])

        # 1. network allocations
        part = np.zeros(G)
        if n_obs > 0:
            for g in range(G):
                part[g] = n_obs * _sum_partition(alpha, d2[g], bern)
        for m in range(M):
            for g in range(G):
                v = log_tau[g] - part[g]
                if n_obs > 0:
                    for d in range(D):
                        v += ysum[m, d] * (alpha - d2[g, d])
                ll[g] = v
            C[m] = _draw_log_index(ll, G, rng)
        # 2. occupied latent spaces first
        mcount[:G] = 0.0
        for m in range(M):
            mcount[C[m]] += 1.0
        perm, g_plus = _active_first(mcount, G)
        inv = np.empty(G, dtype=np.int64)
        for j in range(G):
            inv[perm[j]] = j
        for m in range(M):
            C[m] = inv[C[m]]
        _permute_spaces(perm, G, Z, S, K, w, log_pi, mu, sigma2, log_tau, d2)
        mcount[:G] = mcount[perm].copy()
        if t < gp_path.size:
            gp_path[t] = g_plus

        # 3. occupied latent spaces
        moved = 0
        for g in range(g_plus):
            ysum_g[:] = 0.0
            for m in range(M):
                if C[m] == g:
                    for d in range(D):
                        ysum_g[d] += ysum[m, d]
            moved += _update_space(g, mcount[g], ysum_g, rows, cols, d2, d2_prop, Zp, alpha,
                                   bern, n_obs, hp, K_max, mono, Z, S, K, w, log_pi, mu, sigma2,
                                   delta[0], rng, acc, prop, buf, cnt, conc)

        # 4. intercept
        alpha_prop = alpha + delta[1] * hp[S_ALPHA] * rng.standard_normal()
        ratio = -0.5 * ((alpha_prop - hp[M_ALPHA]) ** 2 - (alpha - hp[M_ALPHA]) ** 2) / hp[S_ALPHA] ** 2
        if n_obs > 0:
            for g in range(g_plus):
                ysum_tot = 0.0
                for m in range(M):
                    if C[m] == g:
                        for d in range(D):
                            ysum_tot += ysum[m, d]
                ratio += (alpha_prop - alpha) * ysum_tot
                ratio -= mcount[g] * n_obs * (_sum_partition(alpha_prop, d2[g], bern)
                                              - _sum_partition(alpha, d2[g], bern))
        prop[1] += 1
        ok_alpha = 0.0
        if math.isfinite(ratio) and math.log(rng.random()) < ratio:
            acc[1] += 1
            ok_alpha = 1.0
            alpha = alpha_prop
        # 5. number of latent spaces, using the current concentration
        G = _count_draw(g_plus, mcount, e, G_max, hp[A_G], hp[B_G], hp[C_G], rng, buf)
        # 6. network concentration
        e_prop = e * math.exp(hp[S_E] * rng.standard_normal())
        r = (_conc_target(e_prop, mcount, g_plus, G, M, hp[L_G], hp[R_G])
             - _conc_target(e, mcount, g_plus, G, M, hp[L_G], hp[R_G])
             + math.log(e_prop) - math.log(e))
        prop[2] += 1
        if math.isfinite(r) and math.log(rng.random()) < r:
            acc[2] += 1
            e = e_prop
        # 7. empty latent spaces from the prior
        for g in range(g_plus, G):
            _prior_space(g, N, hp, mono, Z, S, K, w, log_pi, mu, sigma2, rng)
        # 8. network weights
        for g in range(G):
            conc[g] = e / G + (mcount[g] if g < g_plus else 0.0)
        _log_dirichlet(conc, G, buf, rng)
        log_tau[:G] = buf[:G]

        st_i[0] = G
        st_f[0] = e
        st_f[1] = alpha
        if tune and t < burn_in:
            tune_step[0] += 1
            gain = 1.0 / (tune_step[0] + 1.0) ** 0.6
            if g_plus > 0:
                delta[0] *= math.exp(gain * (moved / g_plus - Z_TARGET))
            delta[1] *= math.exp(gain * (ok_alpha - ALPHA_TARGET))
