"""Pure-Python/NumPy versions of the compiled kernels in ``_core.pyx``.

Used when the extension is not built or when ``PLGNET_PURE=1`` is set.
Signatures and in-place semantics match the compiled module exactly.
"""
import math

import numpy as np


def soft_threshold(z, gamma):
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


def cd_epoch_pairwise(xt, w, r, beta, xwx, thresh, coords, pair_s, pair_t, n_obs):
    N = xt.shape[1]
    m = pair_s.shape[0]
    crit = 0.0
    for j in coords:
        j = int(j)
        a = xwx[j] / n_obs
        if a <= 0.0:
            continue
        if j < m:
            s, t = int(pair_s[j]), int(pair_t[j])
            bs = slice(s * N, (s + 1) * N)
            bt = slice(t * N, (t + 1) * N)
            g = float(np.dot(xt[t], w[bs] * r[bs]) + np.dot(xt[s], w[bt] * r[bt]))
        else:
            bs = slice((j - m) * N, (j - m + 1) * N)
            g = float(np.dot(w[bs], r[bs]))
        u = g / n_obs + a * beta[j]
        d = soft_threshold(u, thresh[j]) / a - beta[j]
        if d == 0.0:
            continue
        beta[j] += d
        if j < m:
            r[bs] -= d * xt[t]
            r[bt] -= d * xt[s]
        else:
            r[bs] -= d
        crit = max(crit, a * d * d)
    return crit


def cd_epoch_dense(dt, w, r, beta, xwx, thresh, coords, n_obs):
    crit = 0.0
    for j in coords:
        j = int(j)
        a = xwx[j] / n_obs
        if a <= 0.0:
            continue
        g = float(np.dot(dt[j], w * r))
        u = g / n_obs + a * beta[j]
        d = soft_threshold(u, thresh[j]) / a - beta[j]
        if d == 0.0:
            continue
        beta[j] += d
        r -= d * dt[j]
        crit = max(crit, a * d * d)
    return crit


def gibbs_sweeps(theta, x, u, out):
    p = theta.shape[0]
    rows = theta.tolist()
    state = [int(v) for v in x]
    for k in range(u.shape[0]):
        uk = u[k]
        for s in range(p):
            row = rows[s]
            eta = row[s]
            for t in range(p):
                if t != s and state[t]:
                    eta = eta + row[t]
            if eta >= 0.0:
                prob = 1.0 / (1.0 + math.exp(-eta))
            else:
                prob = math.exp(eta) / (1.0 + math.exp(eta))
            state[s] = 1 if uk[s] < prob else 0
        out[k] = state
    x[:] = state
