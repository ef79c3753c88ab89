# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels.

Same API and the same floating-point evaluation order as ``_pykernels``;
see that module for the readable reference.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport cos, exp, floor, fabs, isfinite, log, sqrt, INFINITY, NAN, M_PI
from libc.stdlib cimport malloc, free
from numpy.random cimport bitgen_t

import numpy as np

BACKEND = "compiled"

cdef double N1PHI = 4.0
cdef double AW = 1.5
cdef double AT = 6.0
cdef double F_TRAVERSE = 0.4918
cdef double F_WALK = 0.9836
cdef double F_BLOW = 0.9918
cdef double LANDING_TOL = 1e-9

MOVE_TRAVERSE, MOVE_WALK, MOVE_BLOW, MOVE_HOP = 0, 1, 2, 3


cdef struct Consts:
    double th0, th1, inv_th2, inv_a, inv_b, gb


cdef inline void forced_rate(double G, double I, double L, double Dk, const Consts* k,
                             double* dG, double* dI, double* dL) noexcept nogil:
    cdef double ex = G - k.gb
    cdef double sub = k.gb - G
    dG[0] = L - I + Dk * k.inv_th2
    dI[0] = k.th0 * (ex if ex > 0.0 else 0.0) - I * k.inv_a
    dL[0] = k.th1 * (sub if sub > 0.0 else 0.0) - L * k.inv_b


cdef inline void forced_step(double* y, double D0, double Dm, double D1, double h,
                             const Consts* k) noexcept nogil:
    cdef double h2 = 0.5 * h
    cdef double h6 = h / 6.0
    cdef double k1G, k1I, k1L, k2G, k2I, k2L, k3G, k3I, k3L, k4G, k4I, k4L
    cdef double G = y[0], I = y[1], L = y[2]
    forced_rate(G, I, L, D0, k, &k1G, &k1I, &k1L)
    forced_rate(G + h2 * k1G, I + h2 * k1I, L + h2 * k1L, Dm, k, &k2G, &k2I, &k2L)
    forced_rate(G + h2 * k2G, I + h2 * k2I, L + h2 * k2L, Dm, k, &k3G, &k3I, &k3L)
    forced_rate(G + h * k3G, I + h * k3I, L + h * k3L, D1, k, &k4G, &k4I, &k4L)
    y[0] = G + h6 * (k1G + 2.0 * k2G + 2.0 * k3G + k4G)
    y[1] = I + h6 * (k1I + 2.0 * k2I + 2.0 * k3I + k4I)
    y[2] = L + h6 * (k1L + 2.0 * k2L + 2.0 * k3L + k4L)


cdef inline double digestive(double t, double K, double c, double th2) noexcept nogil:
    return K * (exp(-2.0 * t / c) - exp(-t / th2))


cdef void forced_core(double th0, double th1, double th2, double g0, double a, double b,
                      double c, double gb, double v0, double h,
                      const double* times, Py_ssize_t m, double* out) noexcept nogil:
    cdef Consts k
    k.th0 = th0
    k.th1 = th1
    k.inv_th2 = 1.0 / th2
    k.inv_a = 1.0 / a
    k.inv_b = 1.0 / b
    k.gb = gb
    cdef double K = v0 / (c / (2.0 * th2) - 1.0)
    cdef double r1 = exp(-h / c)
    cdef double r2 = exp(-(0.5 * h) / th2)
    cdef double e1 = 1.0, e2 = 1.0
    cdef double y[3]
    cdef double yp[3]
    cdef double D0, Dm, D1, t, q, jr, rem, tj
    cdef long j = 0, jk
    cdef Py_ssize_t idx
    y[0] = g0
    y[1] = 0.0
    y[2] = 0.0
    for idx in range(m):
        t = times[idx]
        q = t / h
        jr = floor(q + 0.5)
        if fabs(q - jr) < LANDING_TOL:
            jk = <long>jr
            rem = 0.0
        else:
            jk = <long>floor(q)
            rem = t - floor(q) * h
        while j < jk and isfinite(y[0]):
            D0 = K * (e1 - e2)
            e1 = e1 * r1
            e2 = e2 * r2
            Dm = K * (e1 - e2)
            e1 = e1 * r1
            e2 = e2 * r2
            D1 = K * (e1 - e2)
            forced_step(y, D0, Dm, D1, h, &k)
            j += 1
        if not isfinite(y[0]):
            out[idx] = NAN
            continue
        if rem == 0.0:
            out[idx] = y[0]
        else:
            tj = j * h
            D0 = digestive(tj, K, c, th2)
            Dm = digestive(tj + 0.5 * rem, K, c, th2)
            D1 = digestive(t, K, c, th2)
            yp[0] = y[0]
            yp[1] = y[1]
            yp[2] = y[2]
            forced_step(yp, D0, Dm, D1, rem, &k)
            out[idx] = yp[0]


def forced_glucose(double th0, double th1, double th2, double g0, double a, double b,
                   double c, double gb, double v0, double h, times):
    """Blood glucose at ``times`` via RK4 on (G, I, L) forced by analytic D(t)."""
    cdef double[::1] tv = np.ascontiguousarray(times, dtype=np.float64)
    out = np.empty(tv.shape[0], dtype=np.float64)
    cdef double[::1] ov = out
    if tv.shape[0] > 0:
        forced_core(th0, th1, th2, g0, a, b, c, gb, v0, h, &tv[0], tv.shape[0], &ov[0])
    return out


def forced_states(double th0, double th1, double th2, double g0, double a, double b,
                  double c, double gb, double v0, double h, Py_ssize_t n_steps):
    """Grid states (n_steps + 1, 5); D and V columns are the closed forms."""
    cdef Consts k
    k.th0 = th0
    k.th1 = th1
    k.inv_th2 = 1.0 / th2
    k.inv_a = 1.0 / a
    k.inv_b = 1.0 / b
    k.gb = gb
    cdef double K = v0 / (c / (2.0 * th2) - 1.0)
    cdef double r1 = exp(-h / c)
    cdef double r2 = exp(-(0.5 * h) / th2)
    cdef double e1 = 1.0, e2 = 1.0
    cdef double D0, Dm, D1, t
    cdef double y[3]
    cdef Py_ssize_t j
    out = np.empty((n_steps + 1, 5), dtype=np.float64)
    cdef double[:, ::1] ov = out
    y[0] = g0
    y[1] = 0.0
    y[2] = 0.0
    ov[0, 0] = g0
    ov[0, 1] = 0.0
    ov[0, 2] = 0.0
    ov[0, 3] = 0.0
    ov[0, 4] = v0
    for j in range(n_steps):
        D0 = K * (e1 - e2)
        e1 = e1 * r1
        e2 = e2 * r2
        Dm = K * (e1 - e2)
        e1 = e1 * r1
        e2 = e2 * r2
        D1 = K * (e1 - e2)
        forced_step(y, D0, Dm, D1, h, &k)
        t = (j + 1) * h
        ov[j + 1, 0] = y[0]
        ov[j + 1, 1] = y[1]
        ov[j + 1, 2] = y[2]
        ov[j + 1, 3] = digestive(t, K, c, th2)
        ov[j + 1, 4] = v0 * exp(-2.0 * t / c)
    return out


cdef inline void full_rate(const double* y, const Consts* k, double two_c,
                           double* dy) noexcept nogil:
    cdef double ex = y[0] - k.gb
    cdef double sub = k.gb - y[0]
    dy[0] = y[2] - y[1] + y[3] * k.inv_th2
    dy[1] = k.th0 * (ex if ex > 0.0 else 0.0) - y[1] * k.inv_a
    dy[2] = k.th1 * (sub if sub > 0.0 else 0.0) - y[2] * k.inv_b
    dy[3] = -y[3] * k.inv_th2 + two_c * y[4]
    dy[4] = -two_c * y[4]


def full_states(double th0, double th1, double th2, double g0, double a, double b,
                double c, double gb, double v0, double h, Py_ssize_t n_steps):
    """Grid states (n_steps + 1, 5) from RK4 on all five equations."""
    cdef Consts k
    k.th0 = th0
    k.th1 = th1
    k.inv_th2 = 1.0 / th2
    k.inv_a = 1.0 / a
    k.inv_b = 1.0 / b
    k.gb = gb
    cdef double two_c = 2.0 / c
    cdef double h2 = 0.5 * h
    cdef double h6 = h / 6.0
    cdef double y[5]
    cdef double tmp[5]
    cdef double k1[5]
    cdef double k2[5]
    cdef double k3[5]
    cdef double k4[5]
    cdef Py_ssize_t j, q
    out = np.empty((n_steps + 1, 5), dtype=np.float64)
    cdef double[:, ::1] ov = out
    y[0] = g0
    y[1] = 0.0
    y[2] = 0.0
    y[3] = 0.0
    y[4] = v0
    for q in range(5):
        ov[0, q] = y[q]
    for j in range(n_steps):
        full_rate(y, &k, two_c, k1)
        for q in range(5):
            tmp[q] = y[q] + h2 * k1[q]
        full_rate(tmp, &k, two_c, k2)
        for q in range(5):
            tmp[q] = y[q] + h2 * k2[q]
        full_rate(tmp, &k, two_c, k3)
        for q in range(5):
            tmp[q] = y[q] + h * k3[q]
        full_rate(tmp, &k, two_c, k4)
        for q in range(5):
            y[q] = y[q] + h6 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q])
            ov[j + 1, q] = y[q]
    return out


cdef class OGTTTarget:
    """Unnormalized log-posterior over (theta0, theta1, theta2, g0)."""

    cdef double[::1] times
    cdef double[::1] values
    cdef double[::1] gbuf
    cdef readonly double a, b, c, gb, v0
    cdef readonly double s0, r0, k0, s1, r1, k1, s2, r2, k2, lo2, hi2, m_g, sd_g, k_g
    cdef readonly double h, inv_two_sigma2, lik_const, lik_sign

    def __init__(self, times, values, fixed, prior, h, inv_two_sigma2, lik_const,
                 lik_sign=1.0):
        self.times = np.array(times, dtype=np.float64)
        self.values = np.array(values, dtype=np.float64)
        self.gbuf = np.empty(len(self.times), dtype=np.float64)
        self.a, self.b, self.c, self.gb, self.v0 = [float(v) for v in fixed]
        (self.s0, self.r0, self.k0,
         self.s1, self.r1, self.k1,
         self.s2, self.r2, self.k2, self.lo2, self.hi2,
         self.m_g, self.sd_g, self.k_g) = [float(v) for v in prior]
        self.h = float(h)
        self.inv_two_sigma2 = float(inv_two_sigma2)
        self.lik_const = float(lik_const)
        self.lik_sign = float(lik_sign)

    cdef double prior_c(self, const double* x) noexcept nogil:
        cdef double th0 = x[0], th1 = x[1], th2 = x[2], g0 = x[3]
        if not (th0 > 0.0 and th1 > 0.0 and th2 >= self.lo2 and th2 <= self.hi2
                and th2 > 0.5 * self.c and g0 > 0.0):
            return -INFINITY
        cdef double zg = (g0 - self.m_g) / self.sd_g
        cdef double lp = ((self.s0 - 1.0) * log(th0) - self.r0 * th0 + self.k0)
        lp = lp + ((self.s1 - 1.0) * log(th1) - self.r1 * th1 + self.k1)
        lp = lp + ((self.s2 - 1.0) * log(th2) - self.r2 * th2 + self.k2)
        lp = lp + (-0.5 * zg * zg + self.k_g)
        return lp

    cdef double evaluate(self, const double* x) noexcept nogil:
        cdef double lp = self.prior_c(x)
        cdef double ss = 0.0, r, val
        cdef Py_ssize_t i, m = self.times.shape[0]
        if lp == -INFINITY:
            return -INFINITY
        forced_core(x[0], x[1], x[2], x[3], self.a, self.b, self.c, self.gb, self.v0,
                    self.h, &self.times[0], m, &self.gbuf[0])
        for i in range(m):
            r = self.values[i] - self.gbuf[i]
            ss = ss + r * r
        val = lp + (self.lik_const - self.lik_sign * ss * self.inv_two_sigma2)
        if not isfinite(val):
            return -INFINITY
        return val

    def log_prior(self, x):
        cdef double buf[4]
        cdef Py_ssize_t i
        for i in range(4):
            buf[i] = float(x[i])
        return self.prior_c(buf)

    def __call__(self, x):
        cdef double buf[4]
        cdef Py_ssize_t i
        for i in range(4):
            buf[i] = float(x[i])
        return self.evaluate(buf)


cdef inline double next_u(bitgen_t* rng) noexcept nogil:
    return rng.next_double(rng.state)


cdef inline double normal_bm(bitgen_t* rng) noexcept nogil:
    cdef double u1 = next_u(rng)
    cdef double u2 = next_u(rng)
    return sqrt(-2.0 * log(1.0 - u1)) * cos(2.0 * M_PI * u2)


cdef inline double sim_beta(bitgen_t* rng) noexcept nogil:
    cdef double u1 = next_u(rng)
    cdef double u2 = 1.0 - next_u(rng)
    if u1 < (AT - 1.0) / (2.0 * AT):
        return exp(log(u2) / (AT + 1.0))
    return exp(log(u2) / (1.0 - AT))


cdef double call_target(object target, OGTTTarget fast, double* y, Py_ssize_t n):
    cdef Py_ssize_t j
    if fast is not None:
        return fast.evaluate(y)
    arr = np.empty(n, dtype=np.float64)
    cdef double[::1] av = arr
    for j in range(n):
        av[j] = y[j]
    return float(target(arr))


def twalk(target, x0, xp0, Py_ssize_t n_iter, bitgen):
    """Run the t-walk; returns (chain, logp, accepted, moves).

    ``chain`` and ``logp`` have ``n_iter + 1`` rows, the first being the
    initial point. Only the first of the two coupled points is recorded.
    """
    cdef Py_ssize_t n = len(x0)
    cdef OGTTTarget fast = target if isinstance(target, OGTTTarget) else None
    if fast is not None and n != 4:
        raise ValueError("OGTTTarget expects 4 coordinates")
    cdef bitgen_t* rng = <bitgen_t*>PyCapsule_GetPointer(bitgen.capsule, "BitGenerator")

    chain = np.empty((n_iter + 1, n), dtype=np.float64)
    logp = np.empty(n_iter + 1, dtype=np.float64)
    accepted = np.zeros(n_iter, dtype=np.int8)
    moves = np.empty(n_iter, dtype=np.int8)
    cdef double[:, ::1] cv = chain
    cdef double[::1] lv = logp
    cdef signed char[::1] av = accepted
    cdef signed char[::1] mvv = moves

    cdef double* x = <double*>malloc(n * sizeof(double))
    cdef double* xp = <double*>malloc(n * sizeof(double))
    cdef double* y = <double*>malloc(n * sizeof(double))
    cdef int* phi = <int*>malloc(n * sizeof(int))
    cdef double* mv
    cdef double* an
    cdef double ux, uxp, lmv, ly, ker, side, pphi, beta, u, z, extra, sig, sig_r
    cdef double dj, fwd, rev, df, dr, u_acc, log_a
    cdef Py_ssize_t it, j
    cdef int nphi, ok, move, blow
    try:
        for j in range(n):
            x[j] = float(x0[j])
            xp[j] = float(xp0[j])
        ux = call_target(target, fast, x, n)
        uxp = call_target(target, fast, xp, n)
        for j in range(n):
            cv[0, j] = x[j]
        lv[0] = ux
        pphi = (n if n < N1PHI else N1PHI) / <double>n

        with bitgen.lock:
            for it in range(n_iter):
                ker = next_u(rng)
                side = next_u(rng)
                nphi = 0
                for j in range(n):
                    phi[j] = next_u(rng) < pphi
                    if phi[j]:
                        nphi += 1
                if side < 0.5:
                    mv = xp
                    an = x
                    lmv = uxp
                else:
                    mv = x
                    an = xp
                    lmv = ux

                ok = nphi > 0
                extra = 0.0
                if ker < F_TRAVERSE:
                    move = 0
                    beta = sim_beta(rng)
                    for j in range(n):
                        if phi[j]:
                            y[j] = an[j] + beta * (an[j] - mv[j])
                        else:
                            y[j] = mv[j]
                    extra = (nphi - 2.0) * log(beta)
                elif ker < F_WALK:
                    move = 1
                    for j in range(n):
                        if phi[j]:
                            u = next_u(rng)
                            z = (AW / (1.0 + AW)) * (AW * u * u + 2.0 * u - 1.0)
                            y[j] = mv[j] + (mv[j] - an[j]) * z
                        else:
                            y[j] = mv[j]
                    for j in range(n):
                        if y[j] == an[j]:
                            ok = 0
                else:
                    blow = ker < F_BLOW
                    move = 2 if blow else 3
                    sig = 0.0
                    for j in range(n):
                        if phi[j]:
                            dj = fabs(mv[j] - an[j])
                            if dj > sig:
                                sig = dj
                    if not blow:
                        sig = sig / 3.0
                    for j in range(n):
                        if phi[j]:
                            z = normal_bm(rng)
                            y[j] = (an[j] if blow else mv[j]) + sig * z
                        else:
                            y[j] = mv[j]
                    if sig > 0.0 and ok:
                        sig_r = 0.0
                        for j in range(n):
                            if phi[j]:
                                dj = fabs(y[j] - an[j])
                                if dj > sig_r:
                                    sig_r = dj
                        if not blow:
                            sig_r = sig_r / 3.0
                        if sig_r > 0.0:
                            fwd = 0.0
                            rev = 0.0
                            for j in range(n):
                                if phi[j]:
                                    if blow:
                                        df = y[j] - an[j]
                                        dr = mv[j] - an[j]
                                    else:
                                        df = y[j] - mv[j]
                                        dr = df
                                    fwd = fwd + df * df
                                    rev = rev + dr * dr
                            extra = (nphi * log(sig) - nphi * log(sig_r)
                                     + 0.5 * fwd / (sig * sig) - 0.5 * rev / (sig_r * sig_r))
                        else:
                            ok = 0
                    else:
                        ok = 0

                u_acc = next_u(rng)
                mvv[it] = move
                if ok:
                    ly = call_target(target, fast, y, n)
                    if ly > -INFINITY:
                        log_a = ly - lmv + extra
                        if log(u_acc) < log_a:
                            av[it] = 1
                            for j in range(n):
                                mv[j] = y[j]
                            if side < 0.5:
                                uxp = ly
                            else:
                                ux = ly
                for j in range(n):
                    cv[it + 1, j] = x[j]
                lv[it + 1] = ux
    finally:
        free(x)
        free(xp)
        free(y)
        free(phi)
    return chain, logp, accepted, moves
