"""Compiled inner loops for isotropic Gaussian-mixture targets.

Every function here has a twin with the same signature in
``_numpy_kernels``. Mixture parameters are passed as three arrays:
``means`` (K, d), ``log_coef`` (K,) holding ``log w_k - d log sigma_k - d/2 log 2pi``
and ``inv2var`` (K,) holding ``1 / (2 sigma_k^2)``.
"""

import math

import numpy as np
from numba import njit

_OPTS = dict(cache=True, nogil=True, fastmath=False)


@njit(**_OPTS)
def _logpdf_row(x, means, log_coef, inv2var):
    K, d = means.shape
    best = -np.inf
    vals = np.empty(K)
    for k in range(K):
        s = 0.0
        for j in range(d):
            diff = x[j] - means[k, j]
            s += diff * diff
        v = log_coef[k] - inv2var[k] * s
        vals[k] = v
        if v > best:
            best = v
    if best == -np.inf:
        return best
    acc = 0.0
    for k in range(K):
        acc += math.exp(vals[k] - best)
    return best + math.log(acc)


@njit(**_OPTS)
def mixture_logpdf(X, means, log_coef, inv2var):
    m = X.shape[0]
    out = np.empty(m)
    for i in range(m):
        out[i] = _logpdf_row(X[i], means, log_coef, inv2var)
    return out


@njit(**_OPTS)
def _grad_row(x, means, log_coef, inv2var, out):
    K, d = means.shape
    vals = np.empty(K)
    best = -np.inf
    for k in range(K):
        s = 0.0
        for j in range(d):
            diff = x[j] - means[k, j]
            s += diff * diff
        vals[k] = log_coef[k] - inv2var[k] * s
        if vals[k] > best:
            best = vals[k]
    tot = 0.0
    for k in range(K):
        vals[k] = math.exp(vals[k] - best)
        tot += vals[k]
    for j in range(d):
        out[j] = 0.0
    for k in range(K):
        r = vals[k] / tot
        for j in range(d):
            out[j] -= r * 2.0 * inv2var[k] * (x[j] - means[k, j])


@njit(**_OPTS)
def mixture_grad(X, means, log_coef, inv2var):
    m, d = X.shape
    out = np.empty((m, d))
    for i in range(m):
        _grad_row(X[i], means, log_coef, inv2var, out[i])
    return out


@njit(**_OPTS)
def rwm_mixture(X, logp, beta, scale, noise, log_u, means, log_coef, inv2var):
    """k fused random-walk Metropolis sweeps over all m chains, in place.

    Returns a (k, m) uint8 array of acceptance indicators.
    """
    k, m, d = noise.shape
    accepted = np.zeros((k, m), dtype=np.uint8)
    prop = np.empty(d)
    for t in range(k):
        for i in range(m):
            for j in range(d):
                prop[j] = X[i, j] + scale[i] * noise[t, i, j]
            lp = _logpdf_row(prop, means, log_coef, inv2var)
            if log_u[t, i] < beta[i] * (lp - logp[i]):
                for j in range(d):
                    X[i, j] = prop[j]
                logp[i] = lp
                accepted[t, i] = 1
    return accepted


@njit(**_OPTS)
def _nearest(x, centres):
    K, d = centres.shape
    best = 0
    best_d = np.inf
    for h in range(K):
        s = 0.0
        for j in range(d):
            diff = x[j] - centres[h, j]
            s += diff * diff
        if s < best_d:
            best_d = s
            best = h
    return best


@njit(**_OPTS)
def nearest_centre(X, centres):
    m = X.shape[0]
    out = np.empty(m, dtype=np.int64)
    for i in range(m):
        out[i] = _nearest(X[i], centres)
    return out


@njit(**_OPTS)
def _objective(X, w, centres, labels):
    m, d = X.shape
    tot = 0.0
    for i in range(m):
        s = 0.0
        c = labels[i]
        for j in range(d):
            diff = X[i, j] - centres[c, j]
            s += diff * diff
        tot += w[i] * s
    return tot


@njit(**_OPTS)
def weighted_lloyd(X, w, centres, max_iter):
    m, d = X.shape
    K = centres.shape[0]
    C = centres.copy()
    labels = np.full(m, -1, dtype=np.int64)
    history = np.full(max_iter, np.nan)
    n_iter = 0
    wsum = np.empty(K)
    for it in range(max_iter):
        changed = False
        for i in range(m):
            z = _nearest(X[i], C)
            if z != labels[i]:
                changed = True
                labels[i] = z
        if not changed:
            break
        counts = np.zeros(K, dtype=np.int64)
        for i in range(m):
            counts[labels[i]] += 1
        newC = np.zeros((K, d))
        for h in range(K):
            wsum[h] = 0.0
        for i in range(m):
            h = labels[i]
            wsum[h] += w[i]
            for j in range(d):
                newC[h, j] += w[i] * X[i, j]
        for h in range(K):
            if counts[h] > 0:
                for j in range(d):
                    C[h, j] = newC[h, j] / wsum[h]
        for h in range(K):
            if counts[h] == 0:
                # reseed on the point contributing most to the objective
                far = 0
                far_v = -1.0
                for i in range(m):
                    c = labels[i]
                    s = 0.0
                    for j in range(d):
                        diff = X[i, j] - C[c, j]
                        s += diff * diff
                    if w[i] * s > far_v:
                        far_v = w[i] * s
                        far = i
                for j in range(d):
                    C[h, j] = X[far, j]
        history[it] = _objective(X, w, C, labels)
        n_iter = it + 1
    return C, labels, history[:n_iter], n_iter


@njit(**_OPTS)
def refine_mixture(centres, max_steps, tol, means, log_coef, inv2var):
    """Gradient ascent with Armijo backtracking and Barzilai-Borwein steps."""
    K, d = centres.shape
    out = centres.copy()
    g = np.empty(d)
    g_new = np.empty(d)
    trial = np.empty(d)
    for c in range(K):
        x = out[c].copy()
        f = _logpdf_row(x, means, log_coef, inv2var)
        if not np.isfinite(f):
            continue
        _grad_row(x, means, log_coef, inv2var, g)
        gn2 = 0.0
        for j in range(d):
            gn2 += g[j] * g[j]
        alpha = 1.0 / max(1.0, math.sqrt(gn2))
        for step in range(max_steps):
            if math.sqrt(gn2) < tol:
                break
            ok = False
            for _ in range(80):
                for j in range(d):
                    trial[j] = x[j] + alpha * g[j]
                ft = _logpdf_row(trial, means, log_coef, inv2var)
                if np.isfinite(ft) and ft >= f + 1e-4 * alpha * gn2:
                    ok = True
                    break
                alpha *= 0.5
            if not ok:
                break
            _grad_row(trial, means, log_coef, inv2var, g_new)
            sy = 0.0
            ss = 0.0
            gn2_new = 0.0
            for j in range(d):
                s_j = trial[j] - x[j]
                y_j = g_new[j] - g[j]
                sy += s_j * y_j
                ss += s_j * s_j
                gn2_new += g_new[j] * g_new[j]
            for j in range(d):
                x[j] = trial[j]
                g[j] = g_new[j]
            f = ft
            gn2 = gn2_new
            if sy < 0.0:
                alpha = -ss / sy
            else:
                alpha *= 2.0
        for j in range(d):
            out[c, j] = x[j]
    return out


@njit(**_OPTS)
def swap_mixture(Xa, Xb, logpa, logpb, beta_a, beta_b, use_quanta, log_u, centres,
                 means, log_coef, inv2var):
    """Evaluate and apply one swap proposal per row pair, in place.

    Row p pairs a colder chain ``Xa[p]`` (at ``beta_a[p]``) with a hotter chain
    ``Xb[p]``. Returns (accepted, log_ratio).
    """
    p_count, d = Xa.shape
    accepted = np.zeros(p_count, dtype=np.bool_)
    log_ratio = np.empty(p_count)
    ya = np.empty(d)
    yb = np.empty(d)
    for p in range(p_count):
        ba = beta_a[p]
        bb = beta_b[p]
        if use_quanta[p]:
            za = _nearest(Xa[p], centres)
            zb = _nearest(Xb[p], centres)
            up = math.sqrt(ba / bb)
            down = math.sqrt(bb / ba)
            for j in range(d):
                ya[j] = centres[za, j] + up * (Xa[p, j] - centres[za, j])
                yb[j] = centres[zb, j] + down * (Xb[p, j] - centres[zb, j])
            if _nearest(ya, centres) != za or _nearest(yb, centres) != zb:
                log_ratio[p] = -np.inf
                continue
            lya = _logpdf_row(ya, means, log_coef, inv2var)
            lyb = _logpdf_row(yb, means, log_coef, inv2var)
            lr = bb * lya + ba * lyb - ba * logpa[p] - bb * logpb[p]
            log_ratio[p] = lr
            if log_u[p] < lr:
                accepted[p] = True
                for j in range(d):
                    Xa[p, j] = yb[j]
                    Xb[p, j] = ya[j]
                logpa[p] = lyb
                logpb[p] = lya
        else:
            lr = (ba - bb) * (logpb[p] - logpa[p])
            log_ratio[p] = lr
            if log_u[p] < lr:
                accepted[p] = True
                for j in range(d):
                    tmp = Xa[p, j]
                    Xa[p, j] = Xb[p, j]
                    Xb[p, j] = tmp
                tmp = logpa[p]
                logpa[p] = logpb[p]
                logpb[p] = tmp
    return accepted, log_ratio
