"""Compiled kernels: control-law evaluation and the accelerated integrator."""
from __future__ import annotations

import numba
import numpy as np

from .models import flat_rhs, hovercraft_rhs, submarine_rhs, submarine_velocity_rhs
from .sequences import psi_base_scalar

# Dormand-Prince 5(4) tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40

SAFETY = 0.9
FAC_MIN, FAC_MAX = 0.2, 5.0
ALPHA, BETA = 0.7 / 5.0, 0.4 / 5.0
H_UNDERFLOW = 1e-12

STATUS_OK, STATUS_UNDERFLOW, STATUS_NAN, STATUS_MAXSTEPS = 0, 1, 2, 3


@numba.njit(cache=True)
def eval_law(t, kind, index, part, eps, period, kappa, sp_start, sp_breaks, sp_coefs, sp_nonneg,
             coef, channel, fstart, fatom, fpow, vals, u):
    """Evaluate all channels at time ``t`` into ``u`` (``vals`` is scratch)."""
    for i in range(kind.size):
        k = kind[i]
        if k == 1:
            w = 2.0 * np.pi * index[i] / period[i]
            vals[i] = (2.0 * w / eps[i]) * np.cos(w * t / eps[i])
        elif k == 2:
            s = 2.0 ** (index[i] - 1)
            v = (s / eps[i]) * psi_base_scalar(s * t / eps[i], period[i], kappa[i])
            if part[i] != 0:
                v = max(part[i] * v, 0.0)
            vals[i] = v
        else:
            a, b = sp_start[i], sp_start[i + 1]
            x = min(max(t, sp_breaks[a]), sp_breaks[b - 1])
            j = a + np.searchsorted(sp_breaks[a:b], x, side="right") - 1
            if j > b - 2:
                j = b - 2
            if j < a:
                j = a
            dx = x - sp_breaks[j]
            v = ((sp_coefs[0, j] * dx + sp_coefs[1, j]) * dx + sp_coefs[2, j]) * dx + sp_coefs[3, j]
            if sp_nonneg[i] != 0:
                v = max(v, 0.0)
            vals[i] = v
    u[:] = 0.0
    for m in range(coef.size):
        acc = coef[m]
        for f in range(fstart[m], fstart[m + 1]):
            v = vals[fatom[f]]
            p = fpow[f]
            if p == 1.0:
                acc *= v
            elif p == np.floor(p):
                acc *= v ** p
            elif v > 0.0:
                acc *= v ** p
            else:
                acc = 0.0
        u[channel[m]] += acc


@numba.njit(cache=True)
def _drift(code, y, params, out):
    # codes follow models.DRIFT_CODES
    if code == 0:
        hovercraft_rhs(y, params, out)
    elif code == 1:
        submarine_rhs(y, params, out)
    elif code == 2:
        submarine_velocity_rhs(y, params, out)
    else:
        flat_rhs(y, params, out)


@numba.njit(cache=True)
def _rhs(drift, params, Bmat, t, y, out, law, vals, u):
    _drift(drift, y, params, out)
    if Bmat.shape[1] > 0:
        eval_law(t, law[0], law[1], law[2], law[3], law[4], law[5], law[6], law[7], law[8], law[9],
                 law[10], law[11], law[12], law[13], law[14], vals, u)
        for a in range(Bmat.shape[1]):
            ua = u[a]
            if ua != 0.0:
                for i in range(y.size):
                    out[i] += Bmat[i, a] * ua


@numba.njit(cache=True)
def dopri_fixed_fields(drift, params, Bmat, law, y0, t0, t1, rtol, atol, hmax, h0, tgrid, max_steps):
    """Integrate ``y' = drift(y) + Bmat u(t)`` on ``[t0, t1]``.

    ``drift`` is an integer drift code.

    Returns the dense-output samples at ``tgrid`` and the statistics
    ``(accepted, rejected, min step, status, final t)``.
    """
    n = y0.size
    vals = np.empty(law[0].size)
    u = np.zeros(max(Bmat.shape[1], 1))
    y = y0.copy()
    t = t0
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    tmp = np.empty(n)
    ynew = np.empty(n)
    out = np.full((tgrid.size, n), np.nan)
    stats = np.zeros(5)
    _rhs(drift, params, Bmat, t, y, k1, law, vals, u)
    h = min(hmax, h0)
    gi = 0
    while gi < tgrid.size and tgrid[gi] <= t:
        out[gi] = y
        gi += 1
    nacc = 0
    nrej = 0
    hmin = np.inf
    errold = 1e-4
    last_rejected = False
    status = 0
    while t < t1:
        if nacc + nrej >= max_steps:
            status = 3
            break
        if h < 1e-12 and t + h < t1:
            status = 1
            break
        if t + h > t1:
            h = t1 - t
        for i in range(n):
            tmp[i] = y[i] + h * A21 * k1[i]
        _rhs(drift, params, Bmat, t + C2 * h, tmp, k2, law, vals, u)
        for i in range(n):
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        _rhs(drift, params, Bmat, t + C3 * h, tmp, k3, law, vals, u)
        for i in range(n):
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        _rhs(drift, params, Bmat, t + C4 * h, tmp, k4, law, vals, u)
        for i in range(n):
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        _rhs(drift, params, Bmat, t + C5 * h, tmp, k5, law, vals, u)
        for i in range(n):
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        _rhs(drift, params, Bmat, t + h, tmp, k6, law, vals, u)
        for i in range(n):
            ynew[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
        _rhs(drift, params, Bmat, t + h, ynew, k7, law, vals, u)
        acc = 0.0
        finite = True
        for i in range(n):
            e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            acc += (e / sc) ** 2
            if not np.isfinite(ynew[i]):
                finite = False
        if not finite:
            status = 2
            break
        err = np.sqrt(acc / n)
        if err <= 1.0:
            tn = t + h
            while gi < tgrid.size and tgrid[gi] <= tn:
                th = (tgrid[gi] - t) / h
                h00 = 2 * th ** 3 - 3 * th ** 2 + 1
                h10 = th ** 3 - 2 * th ** 2 + th
                h01 = -2 * th ** 3 + 3 * th ** 2
                h11 = th ** 3 - th ** 2
                for i in range(n):
                    out[gi, i] = h00 * y[i] + h10 * h * k1[i] + h01 * ynew[i] + h11 * h * k7[i]
                gi += 1
            if h < hmin:
                hmin = h
            t = tn
            y[:] = ynew
            k1[:] = k7
            nacc += 1
            if err > 0.0:
                fac = SAFETY * err ** (-ALPHA) * errold ** BETA
            else:
                fac = FAC_MAX
            fac = min(FAC_MAX, max(FAC_MIN, fac))
            if last_rejected:
                fac = min(fac, 1.0)
            errold = max(err, 1e-4)
            h = min(h * fac, hmax)
            last_rejected = False
        else:
            nrej += 1
            h = h * max(FAC_MIN, SAFETY * err ** (-0.2))
            last_rejected = True
    stats[0] = nacc
    stats[1] = nrej
    stats[2] = hmin
    stats[3] = status
    stats[4] = t
    return out, stats
