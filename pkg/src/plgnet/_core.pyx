# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: coordinate-descent epochs and Gibbs sweeps.

Every function here has a twin in ``_fallback.py`` with the same coordinate
order and update rule; results agree to floating-point rounding.
"""
from libc.math cimport exp


cdef inline double _soft(double z, double g) noexcept nogil:
    if z > g:
        return z - g
    if z < -g:
        return z + g
    return 0.0


def soft_threshold(double z, double gamma):
    return _soft(z, gamma)


def cd_epoch_pairwise(const double[:, ::1] xt,
                      const double[::1] w,
                      double[::1] r,
                      double[::1] beta,
                      const double[::1] xwx,
                      const double[::1] thresh,
                      const Py_ssize_t[::1] coords,
                      const Py_ssize_t[::1] pair_s,
                      const Py_ssize_t[::1] pair_t,
                      double n_obs):
    """One cyclic pass over ``coords`` for the stacked pseudo-likelihood design.

    ``xt`` is the sample matrix transposed (p x N). Pair column j touches
    block s with values X[:, t] and block t with values X[:, s]; indicator
    column m + s touches block s with ones. ``r`` holds the unweighted
    working residual and is updated in place.

    Returns max_j (xwx_j / n) * delta_j**2 over the pass.
    """
    cdef Py_ssize_t N = xt.shape[1]
    cdef Py_ssize_t m = pair_s.shape[0]
    cdef Py_ssize_t k, j, n, s, t, off_s, off_t
    cdef double g, a, u, b_new, d, crit = 0.0
    with nogil:
        for k in range(coords.shape[0]):
            j = coords[k]
            a = xwx[j] / n_obs
            if a <= 0.0:
                continue
            g = 0.0
            if j < m:
                s = pair_s[j]
                t = pair_t[j]
                off_s = s * N
                off_t = t * N
                for n in range(N):
                    g = g + xt[t, n] * w[off_s + n] * r[off_s + n]
                for n in range(N):
                    g = g + xt[s, n] * w[off_t + n] * r[off_t + n]
            else:
                off_s = (j - m) * N
                for n in range(N):
                    g = g + w[off_s + n] * r[off_s + n]
            u = g / n_obs + a * beta[j]
            b_new = _soft(u, thresh[j]) / a
            d = b_new - beta[j]
            if d == 0.0:
                continue
            beta[j] = b_new
            if j < m:
                for n in range(N):
                    r[off_s + n] = r[off_s + n] - d * xt[t, n]
                for n in range(N):
                    r[off_t + n] = r[off_t + n] - d * xt[s, n]
            else:
                for n in range(N):
                    r[off_s + n] = r[off_s + n] - d
            if a * d * d > crit:
                crit = a * d * d
    return crit


def cd_epoch_dense(const double[:, ::1] dt,
                   const double[::1] w,
                   double[::1] r,
                   double[::1] beta,
                   const double[::1] xwx,
                   const double[::1] thresh,
                   const Py_ssize_t[::1] coords,
                   double n_obs):
    """One cyclic pass over ``coords`` for an explicit design stored column-major (q x n)."""
    cdef Py_ssize_t n_rows = dt.shape[1]
    cdef Py_ssize_t k, j, i
    cdef double g, a, u, b_new, d, crit = 0.0
    with nogil:
        for k in range(coords.shape[0]):
            j = coords[k]
            a = xwx[j] / n_obs
            if a <= 0.0:
                continue
            g = 0.0
            for i in range(n_rows):
                g = g + dt[j, i] * w[i] * r[i]
            u = g / n_obs + a * beta[j]
            b_new = _soft(u, thresh[j]) / a
            d = b_new - beta[j]
            if d == 0.0:
                continue
            beta[j] = b_new
            for i in range(n_rows):
                r[i] = r[i] - d * dt[j, i]
            if a * d * d > crit:
                crit = a * d * d
    return crit


def gibbs_sweeps(const double[:, ::1] theta,
                 unsigned char[::1] x,
                 const double[:, ::1] u,
                 unsigned char[:, ::1] out):
    """Run ``u.shape[0]`` systematic-scan sweeps, storing the state after each.

    Vertex s is set to 1 when u[k, s] < sigmoid(theta_ss + sum_{t!=s} theta_st x_t).
    """
    cdef Py_ssize_t p = theta.shape[0]
    cdef Py_ssize_t k, s, t
    cdef double eta, prob
    with nogil:
        for k in range(u.shape[0]):
            for s in range(p):
                eta = theta[s, s]
                for t in range(p):
                    if t != s and x[t]:
                        eta = eta + theta[s, t]
                if eta >= 0.0:
                    prob = 1.0 / (1.0 + exp(-eta))
                else:
                    prob = exp(eta) / (1.0 + exp(eta))
                x[s] = 1 if u[k, s] < prob else 0
            for s in range(p):
                out[k, s] = x[s]
