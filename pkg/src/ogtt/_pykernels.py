"""Pure-Python numerical kernels.

This module mirrors ``_ckernels.pyx`` operation for operation, in the same
floating-point evaluation order, so both backends produce identical numbers
for identical inputs. It is selected automatically when the compiled
extension is not available, and serves as the readable reference for it.
"""

from math import cos, exp, floor, inf, isfinite, log, nan, pi, sqrt

import numpy as np

BACKEND = "python"

# t-walk tuning constants (fixed, not user-facing)
N1PHI = 4.0
AW = 1.5
AT = 6.0
# cumulative move probabilities: traverse, walk, blow, hop
F_TRAVERSE = 0.4918
F_WALK = 0.9836
F_BLOW = 0.9918

MOVE_TRAVERSE, MOVE_WALK, MOVE_BLOW, MOVE_HOP = 0, 1, 2, 3

# an observation time within this many grid steps of a grid point lands on it
_LANDING_TOL = 1e-9


def _landing(t, h):
    q = t / h
    jr = floor(q + 0.5)
    if abs(q - jr) < _LANDING_TOL:
        return int(jr), 0.0
    j = floor(q)
    return int(j), t - j * h


def _forced_rate(G, I, L, Dk, th0, th1, inv_th2, inv_a, inv_b, gb):
    ex = G - gb
    sub = gb - G
    dG = L - I + Dk * inv_th2
    dI = th0 * (ex if ex > 0.0 else 0.0) - I * inv_a
    dL = th1 * (sub if sub > 0.0 else 0.0) - L * inv_b
    return dG, dI, dL


def _forced_step(G, I, L, D0, Dm, D1, h, th0, th1, inv_th2, inv_a, inv_b, gb):
    h2 = 0.5 * h
    h6 = h / 6.0
    k1G, k1I, k1L = _forced_rate(G, I, L, D0, th0, th1, inv_th2, inv_a, inv_b, gb)
    k2G, k2I, k2L = _forced_rate(G + h2 * k1G, I + h2 * k1I, L + h2 * k1L, Dm,
                                 th0, th1, inv_th2, inv_a, inv_b, gb)
    k3G, k3I, k3L = _forced_rate(G + h2 * k2G, I + h2 * k2I, L + h2 * k2L, Dm,
                                 th0, th1, inv_th2, inv_a, inv_b, gb)
    k4G, k4I, k4L = _forced_rate(G + h * k3G, I + h * k3I, L + h * k3L, D1,
                                 th0, th1, inv_th2, inv_a, inv_b, gb)
    G = G + h6 * (k1G + 2.0 * k2G + 2.0 * k3G + k4G)
    I = I + h6 * (k1I + 2.0 * k2I + 2.0 * k3I + k4I)
    L = L + h6 * (k1L + 2.0 * k2L + 2.0 * k3L + k4L)
    return G, I, L


def _digestive(t, K, c, th2):
    return K * (exp(-2.0 * t / c) - exp(-t / th2))


def _forced_core(th0, th1, th2, g0, a, b, c, gb, v0, h, times):
    """G at each of ``times`` (sorted, >= 0) using the closed-form D forcing."""
    inv_th2 = 1.0 / th2
    inv_a = 1.0 / a
    inv_b = 1.0 / b
    K = v0 / (c / (2.0 * th2) - 1.0)
    r1 = exp(-h / c)
    r2 = exp(-(0.5 * h) / th2)
    e1 = 1.0
    e2 = 1.0
    G, I, L = g0, 0.0, 0.0
    j = 0
    out = []
    for t in times:
        jk, rem = _landing(t, h)
        while j < jk and isfinite(G):
            D0 = K * (e1 - e2)
            e1 = e1 * r1
            e2 = e2 * r2
            Dm = K * (e1 - e2)
            e1 = e1 * r1
            e2 = e2 * r2
            D1 = K * (e1 - e2)
            G, I, L = _forced_step(G, I, L, D0, Dm, D1, h, th0, th1, inv_th2, inv_a, inv_b, gb)
            j += 1
        if not isfinite(G):
            out.append(nan)
            continue
        if rem == 0.0:
            out.append(G)
        else:
            tj = j * h
            D0 = _digestive(tj, K, c, th2)
            Dm = _digestive(tj + 0.5 * rem, K, c, th2)
            D1 = _digestive(t, K, c, th2)
            Gp, _, _ = _forced_step(G, I, L, D0, Dm, D1, rem, th0, th1, inv_th2, inv_a, inv_b, gb)
            out.append(Gp)
    return out


def forced_glucose(th0, th1, th2, g0, a, b, c, gb, v0, h, times):
    """Blood glucose at ``times`` via RK4 on (G, I, L) forced by analytic D(t)."""
    times = np.ascontiguousarray(times, dtype=np.float64)
    return np.array(_forced_core(th0, th1, th2, g0, a, b, c, gb, v0, h, times.tolist()),
                    dtype=np.float64)


def forced_states(th0, th1, th2, g0, a, b, c, gb, v0, h, n_steps):
    """Grid states (n_steps + 1, 5); D and V columns are the closed forms."""
    inv_th2 = 1.0 / th2
    inv_a = 1.0 / a
    inv_b = 1.0 / b
    K = v0 / (c / (2.0 * th2) - 1.0)
    r1 = exp(-h / c)
    r2 = exp(-(0.5 * h) / th2)
    e1 = 1.0
    e2 = 1.0
    out = np.empty((n_steps + 1, 5))
    G, I, L = g0, 0.0, 0.0
    out[0] = (G, I, L, 0.0, v0)
    for j in range(n_steps):
        D0 = K * (e1 - e2)
        e1 = e1 * r1
        e2 = e2 * r2
        Dm = K * (e1 - e2)
        e1 = e1 * r1
        e2 = e2 * r2
        D1 = K * (e1 - e2)
        G, I, L = _forced_step(G, I, L, D0, Dm, D1, h, th0, th1, inv_th2, inv_a, inv_b, gb)
        t = (j + 1) * h
        out[j + 1, 0] = G
        out[j + 1, 1] = I
        out[j + 1, 2] = L
        out[j + 1, 3] = _digestive(t, K, c, th2)
        out[j + 1, 4] = v0 * exp(-2.0 * t / c)
    return out


def _full_rate(G, I, L, D, V, th0, th1, inv_th2, inv_a, inv_b, two_c, gb):
    ex = G - gb
    sub = gb - G
    dG = L - I + D * inv_th2
    dI = th0 * (ex if ex > 0.0 else 0.0) - I * inv_a
    dL = th1 * (sub if sub > 0.0 else 0.0) - L * inv_b
    dD = -D * inv_th2 + two_c * V
    dV = -two_c * V
    return dG, dI, dL, dD, dV


def full_states(th0, th1, th2, g0, a, b, c, gb, v0, h, n_steps):
    """Grid states (n_steps + 1, 5) from RK4 on all five equations."""
    inv_th2 = 1.0 / th2
    inv_a = 1.0 / a
    inv_b = 1.0 / b
    two_c = 2.0 / c
    h2 = 0.5 * h
    h6 = h / 6.0
    args = (th0, th1, inv_th2, inv_a, inv_b, two_c, gb)
    y = (g0, 0.0, 0.0, 0.0, v0)
    out = np.empty((n_steps + 1, 5))
    out[0] = y
    for j in range(n_steps):
        k1 = _full_rate(*y, *args)
        k2 = _full_rate(*[y[q] + h2 * k1[q] for q in range(5)], *args)
        k3 = _full_rate(*[y[q] + h2 * k2[q] for q in range(5)], *args)
        k4 = _full_rate(*[y[q] + h * k3[q] for q in range(5)], *args)
        y = tuple(y[q] + h6 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]) for q in range(5))
        out[j + 1] = y
    return out


class OGTTTarget:
    """Unnormalized log-posterior over (theta0, theta1, theta2, g0).

    All constants (prior normalizers, likelihood normalizer) are computed by
    the caller so this class only does arithmetic.
    """

    def __init__(self, times, values, fixed, prior, h, inv_two_sigma2, lik_const,
                 lik_sign=1.0):
        self.times = [float(t) for t in times]
        self.values = [float(d) for d in values]
        self.a, self.b, self.c, self.gb, self.v0 = (float(v) for v in fixed)
        (self.s0, self.r0, self.k0,
         self.s1, self.r1, self.k1,
         self.s2, self.r2, self.k2, self.lo2, self.hi2,
         self.m_g, self.sd_g, self.k_g) = (float(v) for v in prior)
        self.h = float(h)
        self.inv_two_sigma2 = float(inv_two_sigma2)
        self.lik_const = float(lik_const)
        self.lik_sign = float(lik_sign)

    def log_prior(self, x):
        th0, th1, th2, g0 = x[0], x[1], x[2], x[3]
        if not (th0 > 0.0 and th1 > 0.0 and th2 >= self.lo2 and th2 <= self.hi2
                and th2 > 0.5 * self.c and g0 > 0.0):
            return -inf
        zg = (g0 - self.m_g) / self.sd_g
        lp = ((self.s0 - 1.0) * log(th0) - self.r0 * th0 + self.k0)
        lp = lp + ((self.s1 - 1.0) * log(th1) - self.r1 * th1 + self.k1)
        lp = lp + ((self.s2 - 1.0) * log(th2) - self.r2 * th2 + self.k2)
        lp = lp + (-0.5 * zg * zg + self.k_g)
        return lp

    def __call__(self, x):
        lp = self.log_prior(x)
        if lp == -inf:
            return -inf
        g = _forced_core(float(x[0]), float(x[1]), float(x[2]), float(x[3]),
                         self.a, self.b, self.c, self.gb, self.v0, self.h, self.times)
        ss = 0.0
        for d, gk in zip(self.values, g):
            r = d - gk
            ss = ss + r * r
        val = lp + (self.lik_const - self.lik_sign * ss * self.inv_two_sigma2)
        if not isfinite(val):
            return -inf
        return val


class _Uniforms:
    """Buffered PCG64 ``next_double`` stream, identical in sequence to the C path."""

    def __init__(self, bitgen, block=4096):
        self._gen = np.random.Generator(bitgen)
        self._block = block
        self._buf = []
        self._pos = 0

    def __call__(self):
        if self._pos == len(self._buf):
            self._buf = self._gen.random(self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


def _normal(rand):
    u1 = rand()
    u2 = rand()
    return sqrt(-2.0 * log(1.0 - u1)) * cos(2.0 * pi * u2)


def _sim_beta(rand):
    u1 = rand()
    u2 = 1.0 - rand()
    if u1 < (AT - 1.0) / (2.0 * AT):
        return exp(log(u2) / (AT + 1.0))
    return exp(log(u2) / (1.0 - AT))


def twalk(target, x0, xp0, n_iter, bitgen):
    """Run the t-walk; returns (chain, logp, accepted, moves).

    ``chain`` and ``logp`` have ``n_iter + 1`` rows, the first being the
    initial point. Only the first of the two coupled points is recorded.
    """
    n = len(x0)
    x = [float(v) for v in x0]
    xp = [float(v) for v in xp0]
    ux = float(target(np.array(x)))
    uxp = float(target(np.array(xp)))
    chain = np.empty((n_iter + 1, n))
    logp = np.empty(n_iter + 1)
    accepted = np.zeros(n_iter, dtype=np.int8)
    moves = np.empty(n_iter, dtype=np.int8)
    chain[0] = x
    logp[0] = ux
    pphi = min(float(n), N1PHI) / n
    rand = _Uniforms(bitgen)
    y = [0.0] * n
    phi = [False] * n

    for it in range(n_iter):
        ker = rand()
        side = rand()
        nphi = 0
        for j in range(n):
            phi[j] = rand() < pphi
            if phi[j]:
                nphi += 1
        if side < 0.5:
            mv, an, lmv = xp, x, uxp
        else:
            mv, an, lmv = x, xp, ux

        ok = nphi > 0
        extra = 0.0
        if ker < F_TRAVERSE:
            move = MOVE_TRAVERSE
            beta = _sim_beta(rand)
            for j in range(n):
                y[j] = an[j] + beta * (an[j] - mv[j]) if phi[j] else mv[j]
            extra = (nphi - 2.0) * log(beta)
        elif ker < F_WALK:
            move = MOVE_WALK
            for j in range(n):
                if phi[j]:
                    u = rand()
                    z = (AW / (1.0 + AW)) * (AW * u * u + 2.0 * u - 1.0)
                    y[j] = mv[j] + (mv[j] - an[j]) * z
                else:
                    y[j] = mv[j]
            for j in range(n):
                if y[j] == an[j]:
                    ok = False
        else:
            blow = ker < F_BLOW
            move = MOVE_BLOW if blow else MOVE_HOP
            sig = 0.0
            for j in range(n):
                if phi[j]:
                    dj = abs(mv[j] - an[j])
                    if dj > sig:
                        sig = dj
            if not blow:
                sig = sig / 3.0
            for j in range(n):
                if phi[j]:
                    zj = _normal(rand)
                    y[j] = (an[j] if blow else mv[j]) + sig * zj
                else:
                    y[j] = mv[j]
            if sig > 0.0 and ok:
                sig_r = 0.0
                for j in range(n):
                    if phi[j]:
                        dj = abs(y[j] - an[j])
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
                    # log q(mv | y) - log q(y | mv)
                    extra = (nphi * log(sig) - nphi * log(sig_r)
                             + 0.5 * fwd / (sig * sig) - 0.5 * rev / (sig_r * sig_r))
                else:
                    ok = False
            else:
                ok = False

        u_acc = rand()
        moves[it] = move
        if ok:
            ly = float(target(np.array(y)))
            if ly > -inf:
                log_a = ly - lmv + extra
                if u_acc == 0.0 or log(u_acc) < log_a:
                    accepted[it] = 1
                    if side < 0.5:
                        xp = list(y)
                        uxp = ly
                    else:
                        x = list(y)
                        ux = ly
        chain[it + 1] = x
        logp[it + 1] = ux
    return chain, logp, accepted, moves
