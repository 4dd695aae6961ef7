"""Adaptive Runge-Kutta-Fehlberg 7(8) integrator, numba-compiled.

Used on the hot paths (Poincare-map iteration, Melnikov block sums) where the
integration span in the independent variable is fixed and no event detection
is needed.  Thirteen stages; the eighth-order solution is propagated and the
embedded seventh-order one supplies the error estimate.  Physical-time paths
with section events use scipy's DOP853 instead (see dynamics.py); the two
integrators are cross-validated in the test suite.
"""

import numpy as np
from numba import njit

# Fehlberg 7(8) tableau
_ALPHA = np.array([
    0.0, 2/27, 1/9, 1/6, 5/12, 1/2, 5/6, 1/6, 2/3, 1/3, 1.0, 0.0, 1.0])

_BETA = np.zeros((13, 12))
_BETA[1, 0] = 2/27
_BETA[2, :2] = (1/36, 1/12)
_BETA[3, :3] = (1/24, 0.0, 1/8)
_BETA[4, :4] = (5/12, 0.0, -25/16, 25/16)
_BETA[5, :5] = (1/20, 0.0, 0.0, 1/4, 1/5)
_BETA[6, :6] = (-25/108, 0.0, 0.0, 125/108, -65/27, 125/54)
_BETA[7, :7] = (31/300, 0.0, 0.0, 0.0, 61/225, -2/9, 13/900)
_BETA[8, :8] = (2.0, 0.0, 0.0, -53/6, 704/45, -107/9, 67/90, 3.0)
_BETA[9, :9] = (-91/108, 0.0, 0.0, 23/108, -976/135, 311/54, -19/60, 17/6,
                -1/12)
_BETA[10, :10] = (2383/4100, 0.0, 0.0, -341/164, 4496/1025, -301/82,
                  2133/4100, 45/82, 45/164, 18/41)
_BETA[11, :11] = (3/205, 0.0, 0.0, 0.0, 0.0, -6/41, -3/205, -3/41, 3/41,
                  6/41, 0.0)
_BETA[12, :12] = (-1777/4100, 0.0, 0.0, -341/164, 4496/1025, -289/82,
                  2193/4100, 51/82, 33/164, 12/41, 0.0, 1.0)

# eighth-order weights (propagated solution)
_C8 = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 34/105, 9/35, 9/35, 9/280, 9/280,
                0.0, 41/840, 41/840])
_ERRW = 41/840  # err = h * 41/840 * (k1 + k11 - k12 - k13)

OK = 0
ERR_STEP_UNDERFLOW = 1
ERR_MAX_STEPS = 2
ERR_BAD_STATE = 3

_MAX_STEPS = 2_000_000


@njit(cache=False)
def integrate(f, y, s0, s1, pars, rtol, atol, hmax):
    """Integrate dy/ds = f(s, y) from s0 to s1 in place.  Returns a status code.

    `f(s, y, out, pars)` must fill `out` with the derivative.  NaN in the
    derivative rejects the step; persistent NaN aborts with ERR_BAD_STATE.
    """
    n = y.shape[0]
    k = np.empty((13, n))
    ytmp = np.empty(n)
    span = s1 - s0
    if span == 0.0:
        return OK
    direction = 1.0 if span > 0 else -1.0
    h = direction * min(abs(span), hmax if hmax > 0 else abs(span))
    # conservative first step
    h = direction * min(abs(h), 0.1 * abs(span) + 1e-8)
    s = s0
    nbad = 0
    for _ in range(_MAX_STEPS):
        if direction * (s - s1) >= 0.0:
            return OK
        if direction * (s + h - s1) > 0.0:
            h = s1 - s
        f(s, y, k[0], pars)
        failed = False
        for i in range(1, 13):
            for j in range(n):
                acc = 0.0
                for l in range(i):
                    b = _BETA[i, l]
                    if b != 0.0:
                        acc += b * k[l, j]
                ytmp[j] = y[j] + h * acc
            f(s + _ALPHA[i] * h, ytmp, k[i], pars)
        # error estimate and eighth-order update
        errnorm = 0.0
        for j in range(n):
            e = h * _ERRW * (k[0, j] + k[10, j] - k[11, j] - k[12, j])
            sc = atol + rtol * abs(y[j])
            q = e / sc
            errnorm += q * q
            if e != e:  # NaN
                failed = True
        errnorm = np.sqrt(errnorm / n)
        if failed:
            nbad += 1
            if nbad > 60:
                return ERR_BAD_STATE
            h *= 0.25
            continue
        if errnorm <= 1.0:
            s += h
            for j in range(n):
                acc = 0.0
                for i in range(13):
                    c = _C8[i]
                    if c != 0.0:
                        acc += c * k[i, j]
                y[j] += h * acc
            fac = 5.0 if errnorm == 0.0 else min(5.0, 0.9 * errnorm ** (-1.0 / 8.0))
            h *= fac
        else:
            h *= max(0.1, 0.9 * errnorm ** (-1.0 / 8.0))
        if hmax > 0 and abs(h) > hmax:
            h = direction * hmax
        if abs(h) < 1e-14 * max(1.0, abs(s)):
            return ERR_STEP_UNDERFLOW
    return ERR_MAX_STEPS


@njit(cache=False)
def integrate_path(f, y, s_nodes, pars, rtol, atol, hmax, out):
    """Integrate through the monotone nodes `s_nodes`, sampling y at each.

    out must have shape (len(s_nodes), len(y)); y starts at s_nodes[0].
    """
    for j in range(y.shape[0]):
        out[0, j] = y[j]
    for i in range(1, s_nodes.shape[0]):
        status = integrate(f, y, s_nodes[i - 1], s_nodes[i], pars,
                           rtol, atol, hmax)
        if status != OK:
            return status
        for j in range(y.shape[0]):
            out[i, j] = y[j]
    return OK
