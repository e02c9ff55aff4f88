"""Vectorised numpy fallbacks for the compiled kernels.

Signatures and semantics mirror ``_numba_kernels`` exactly; results agree to
floating-point rounding.
"""

import numpy as np
from scipy.special import logsumexp


def _component_logs(X, means, log_coef, inv2var):
    sq = ((X[:, None, :] - means[None, :, :]) ** 2).sum(axis=-1)
    return log_coef[None, :] - inv2var[None, :] * sq


def mixture_logpdf(X, means, log_coef, inv2var):
    return logsumexp(_component_logs(X, means, log_coef, inv2var), axis=1)


def mixture_grad(X, means, log_coef, inv2var):
    comp = _component_logs(X, means, log_coef, inv2var)
    resp = np.exp(comp - comp.max(axis=1, keepdims=True))
    resp /= resp.sum(axis=1, keepdims=True)
    diff = X[:, None, :] - means[None, :, :]
    return -(resp[:, :, None] * 2.0 * inv2var[None, :, None] * diff).sum(axis=1)


def rwm_mixture(X, logp, beta, scale, noise, log_u, means, log_coef, inv2var):
    k, m, _ = noise.shape
    accepted = np.zeros((k, m), dtype=np.uint8)
    for t in range(k):
        prop = X + scale[:, None] * noise[t]
        lp = mixture_logpdf(prop, means, log_coef, inv2var)
        acc = log_u[t] < beta * (lp - logp)
        X[acc] = prop[acc]
        logp[acc] = lp[acc]
        accepted[t] = acc
    return accepted


def nearest_centre(X, centres):
    sq = ((X[:, None, :] - centres[None, :, :]) ** 2).sum(axis=-1)
    # argmin returns the first minimiser, i.e. the lowest index on ties
    return np.argmin(sq, axis=1).astype(np.int64)


def _objective(X, w, centres, labels):
    return float((w * ((X - centres[labels]) ** 2).sum(axis=1)).sum())


def weighted_lloyd(X, w, centres, max_iter):
    m, d = X.shape
    K = centres.shape[0]
    C = centres.copy()
    labels = np.full(m, -1, dtype=np.int64)
    history = []
    for _ in range(max_iter):
        new = nearest_centre(X, C)
        if np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=K)
        wsum = np.bincount(labels, weights=w, minlength=K)
        num = np.zeros((K, d))
        np.add.at(num, labels, w[:, None] * X)
        filled = counts > 0
        C[filled] = num[filled] / wsum[filled, None]
        for h in np.flatnonzero(~filled):
            contrib = w * ((X - C[labels]) ** 2).sum(axis=1)
            C[h] = X[int(np.argmax(contrib))]
        history.append(_objective(X, w, C, labels))
    return C, labels, np.asarray(history), len(history)


def refine_mixture(centres, max_steps, tol, means, log_coef, inv2var):
    out = centres.copy()
    for c in range(out.shape[0]):
        x = out[c].copy()
        f = mixture_logpdf(x[None], means, log_coef, inv2var)[0]
        if not np.isfinite(f):
            continue
        g = mixture_grad(x[None], means, log_coef, inv2var)[0]
        gn2 = float(g @ g)
        alpha = 1.0 / max(1.0, np.sqrt(gn2))
        for _ in range(max_steps):
            if np.sqrt(gn2) < tol:
                break
            ok = False
            for _ in range(80):
                trial = x + alpha * g
                ft = mixture_logpdf(trial[None], means, log_coef, inv2var)[0]
                if np.isfinite(ft) and ft >= f + 1e-4 * alpha * gn2:
                    ok = True
                    break
                alpha *= 0.5
            if not ok:
                break
            g_new = mixture_grad(trial[None], means, log_coef, inv2var)[0]
            s = trial - x
            sy = float(s @ (g_new - g))
            ss = float(s @ s)
            x, g, f = trial, g_new, ft
            gn2 = float(g @ g)
            alpha = -ss / sy if sy < 0.0 else alpha * 2.0
        out[c] = x
    return out


def swap_mixture(Xa, Xb, logpa, logpb, beta_a, beta_b, use_quanta, log_u, centres,
                 means, log_coef, inv2var):
    n_pairs = Xa.shape[0]
    log_ratio = np.empty(n_pairs)
    accepted = np.zeros(n_pairs, dtype=bool)

    pt = ~use_quanta
    if pt.any():
        lr = (beta_a[pt] - beta_b[pt]) * (logpb[pt] - logpa[pt])
        log_ratio[pt] = lr
        acc = np.zeros(n_pairs, dtype=bool)
        acc[pt] = log_u[pt] < lr
        Xa[acc], Xb[acc] = Xb[acc].copy(), Xa[acc].copy()
        logpa[acc], logpb[acc] = logpb[acc].copy(), logpa[acc].copy()
        accepted |= acc

    q = np.flatnonzero(use_quanta)
    if q.size:
        ba, bb = beta_a[q], beta_b[q]
        za = nearest_centre(Xa[q], centres)
        zb = nearest_centre(Xb[q], centres)
        ya = centres[za] + np.sqrt(ba / bb)[:, None] * (Xa[q] - centres[za])
        yb = centres[zb] + np.sqrt(bb / ba)[:, None] * (Xb[q] - centres[zb])
        keep = (nearest_centre(ya, centres) == za) & (nearest_centre(yb, centres) == zb)
        lr = np.full(q.size, -np.inf)
        if keep.any():
            lya = mixture_logpdf(ya[keep], means, log_coef, inv2var)
            lyb = mixture_logpdf(yb[keep], means, log_coef, inv2var)
            kq = q[keep]
            lr[keep] = bb[keep] * lya + ba[keep] * lyb - ba[keep] * logpa[kq] - bb[keep] * logpb[kq]
        log_ratio[q] = lr
        acc_q = log_u[q] < lr
        rows = q[acc_q]
        Xa[rows] = yb[acc_q]
        Xb[rows] = ya[acc_q]
        if rows.size:
            full_lya = np.full(q.size, np.nan)
            full_lyb = np.full(q.size, np.nan)
            full_lya[keep] = lya
            full_lyb[keep] = lyb
            logpa[rows] = full_lyb[acc_q]
            logpb[rows] = full_lya[acc_q]
        accepted[rows] = True
    return accepted, log_ratio
