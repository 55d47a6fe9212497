"""Jitted inner loops for the per-token trainers.

The public trainers fall back to their pure-Python loops when numba is
unavailable or the configured schedule has no jitted equivalent.  Each
loop takes the caller's Generator object, drawing from it in exactly the
same order as the Python path (one position draw and one race draw per
event), so fast and slow runs with the same seed produce the same bits.

Schedule kinds: 0 constant, 1 power-law decay, 2 accumulated-square
scaling; parameter layout documented inline.
"""

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional speedup
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return wrap

KIND_CONST = 0
KIND_POWER = 1
KIND_ACCUM = 2


@njit(cache=True, inline="always")
def _categorical_from_logits(u, r):
    """Mirror of softmax + inverse-CDF draw: returns the index with the
    same float arithmetic as the Python path."""
    k = u.shape[0]
    m = u[0]
    for i in range(1, k):
        if u[i] > m:
            m = u[i]
    p = np.empty(k)
    s = 0.0
    for i in range(k):
        p[i] = np.exp(u[i] - m)
        s += p[i]
    for i in range(k):
        p[i] /= s
    cdf = np.cumsum(p)
    target = r * cdf[k - 1]
    idx = np.searchsorted(cdf, target, side="right")
    if idx > k - 1:
        idx = k - 1
    return idx


@njit(cache=True, inline="always")
def _scalar_rate(kind, params, t, peak):
    """Step size for scalar schedule kinds (constant / power decay),
    including the shared max-step rescaling."""
    if kind == KIND_POWER:
        eta = params[0] * (1.0 + t / params[1]) ** (-params[2])
        cap = params[3]
    else:
        eta = params[0]
        cap = params[1]
    if np.isfinite(cap) and peak * eta > cap:
        eta = cap / peak
    return eta


@njit(cache=True)
def ed_loop(m_alpha, m_beta, tw, td, lengths, lam, kappa, plsi,
            events, t0, n_pass, rng,
            kind_a, params_a, acc_a, amp_a, kind_b, params_b, acc_b, amp_b):
    """Event-driven updates; returns the updated (amp_a, amp_b, t).

    ``acc_*`` are the accumulated-square tables (kind 2) and ``amp_*``
    their end-of-pass amplification state; unused otherwise.
    """
    K, V = m_alpha.shape
    n = tw.shape[0]
    t = t0
    for step in range(events):
        i = rng.integers(0, n)
        w = tw[i]
        d = td[i]
        u = np.empty(K)
        for zz in range(K):
            u[zz] = m_alpha[zz, w] + m_beta[zz, d]
        z = _categorical_from_logits(u, rng.random())

        # word-side row update
        mzw = m_alpha[z, w]
        gw = np.exp(min(-mzw, 700.0)) - 1.0
        if kind_a == KIND_ACCUM:
            eta = params_a[0]
            eps = params_a[2]
            for j in range(V):
                g = gw if j == w else -1.0
                acc_a[z, j] += g * g
                m_alpha[z, j] += amp_a * eta / (np.sqrt(acc_a[z, j]) + eps) * g
        else:
            peak = gw if gw > 1.0 else 1.0
            if -gw > peak:
                peak = -gw
            eta = _scalar_rate(kind_a, params_a, t, peak)
            for j in range(V):
                g = gw if j == w else -1.0
                m_alpha[z, j] += eta * g

        # document-side column update
        n_d = lengths[d]
        if kind_b == KIND_ACCUM:
            eta = params_b[0]
            eps = params_b[2]
            for zz in range(K):
                e = np.exp(min(-m_beta[zz, d], 700.0))
                if plsi:
                    g = (e if zz == z else 0.0) - 1.0
                else:
                    g = ((1.0 if zz == z else 0.0) + (lam[zz] - 1.0) / n_d) * e \
                        - 1.0 / kappa - 1.0 / n_d
                acc_b[zz, d] += g * g
                m_beta[zz, d] += amp_b * eta / (np.sqrt(acc_b[zz, d]) + eps) * g
        else:
            gcol = np.empty(K)
            peak = 0.0
            for zz in range(K):
                e = np.exp(min(-m_beta[zz, d], 700.0))
                if plsi:
                    g = (e if zz == z else 0.0) - 1.0
                else:
                    g = ((1.0 if zz == z else 0.0) + (lam[zz] - 1.0) / n_d) * e \
                        - 1.0 / kappa - 1.0 / n_d
                gcol[zz] = g
                if abs(g) > peak:
                    peak = abs(g)
            eta = _scalar_rate(kind_b, params_b, t, peak)
            for zz in range(K):
                m_beta[zz, d] += eta * gcol[zz]

        t += 1
        if t % n_pass == 0:
            if kind_a == KIND_ACCUM:
                amp_a *= params_a[1]
            if kind_b == KIND_ACCUM:
                amp_b *= params_b[1]
    return amp_a, amp_b, t


@njit(cache=True)
def cgs_loop(c_wz, c_zd, c_dot_z, z, tw, td, phi_w, phi_bar, lam, order, rng):
    """Collapsed resampling steps over the given token positions."""
    K = c_zd.shape[0]
    for s in range(order.shape[0]):
        i = order[s]
        w = tw[i]
        d = td[i]
        zo = z[i]
        c_wz[w, zo] -= 1
        c_zd[zo, d] -= 1
        c_dot_z[zo] -= 1
        p = np.empty(K)
        tot = 0.0
        for zz in range(K):
            p[zz] = (c_wz[w, zz] + phi_w[w]) / (c_dot_z[zz] + phi_bar) \
                * (c_zd[zz, d] + lam[zz])
            tot += p[zz]
        for zz in range(K):
            p[zz] /= tot
        cdf = np.cumsum(p)
        target = rng.random() * cdf[K - 1]
        zn = np.searchsorted(cdf, target, side="right")
        if zn > K - 1:
            zn = K - 1
        c_wz[w, zn] += 1
        c_zd[zn, d] += 1
        c_dot_z[zn] += 1
        z[i] = zn


@njit(cache=True, inline="always")
def _tau1(x):
    if x < 30.0:
        return np.log(np.expm1(x))
    return x + np.log1p(-np.exp(-x))


@njit(cache=True, inline="always")
def _tau2(x):
    return np.logaddexp(0.0, x)


@njit(cache=True)
def spikecgs_loop(m_alpha, m_beta, b, z, tw, td, order, rng):
    """Log-space resampling steps over the given token positions."""
    K = m_beta.shape[0]
    for s in range(order.shape[0]):
        i = order[s]
        w = tw[i]
        d = td[i]
        zo = z[i]
        m_alpha[zo, w] = _tau1(m_alpha[zo, w])
        m_beta[zo, d] = _tau1(m_beta[zo, d])
        b[zo] = _tau1(b[zo])
        u = np.empty(K)
        for zz in range(K):
            u[zz] = m_alpha[zz, w] + m_beta[zz, d] - b[zz]
        zn = _categorical_from_logits(u, rng.random())
        m_alpha[zn, w] = _tau2(m_alpha[zn, w])
        m_beta[zn, d] = _tau2(m_beta[zn, d])
        b[zn] = _tau2(b[zn])
        z[i] = zn


@njit(cache=True)
def semi_doc_loop(m_alpha, tokens, z, m_col, T, n_zw, rng):
    """2T semi-collapsed sweeps over one document's tokens, accumulating
    the last T sweeps into n_zw.  Mutates z and m_col in place."""
    K = m_alpha.shape[0]
    n = tokens.shape[0]
    for s in range(2 * T):
        keep = s >= T
        for i in range(n):
            w = tokens[i]
            zo = z[i]
            m_col[zo] = _tau1(m_col[zo])
            u = np.empty(K)
            for zz in range(K):
                u[zz] = m_alpha[zz, w] + m_col[zz]
            zn = _categorical_from_logits(u, rng.random())
            m_col[zn] = _tau2(m_col[zn])
            z[i] = zn
            if keep:
                n_zw[zn, w] += 1
