"""Dormand-Prince 8(5,3) integrator with dense output.

Step control bounds the local error *per unit time*: a step of size ``h`` is
accepted when ``|err| / h <= atol + rtol |y|`` (RMS over components).  The
tableau and interpolant coefficients are the published DOP853 ones (taken
from scipy).

The same kernel runs compiled under numba when the right-hand side is a
numba function, and as plain numpy otherwise.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _c

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional accelerator
    numba = None

__all__ = ["make_integrator", "njit", "HAVE_NUMBA"]

HAVE_NUMBA = numba is not None

N_STAGES = _c.N_STAGES
N_EXT = _c.N_STAGES_EXTENDED
A = np.ascontiguousarray(_c.A[:N_EXT, :N_EXT], dtype=complex)
B = np.ascontiguousarray(_c.B, dtype=complex)
C = np.ascontiguousarray(_c.C[:N_EXT], dtype=float)
E3 = np.ascontiguousarray(_c.E3, dtype=complex)
E5 = np.ascontiguousarray(_c.E5, dtype=complex)
D = np.ascontiguousarray(_c.D, dtype=complex)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
# err/h of an order-8 pair with a 7th-order estimator scales like h^7
EXPONENT = -1.0 / 7.0

STATUS_OK = 0
STATUS_STEP_UNDERFLOW = 1


def njit(fn):
    """``numba.njit`` when available, identity otherwise."""
    if numba is None:
        return fn
    return numba.njit(cache=True, fastmath=False)(fn)


def _kernel_source(rhs):
    def integrate(t_eval, y0, params, rtol, atol, h0):
        n = y0.shape[0]
        n_out = t_eval.shape[0]
        out = np.empty((n_out, n), dtype=np.complex128)
        K = np.zeros((N_EXT, n), dtype=np.complex128)
        F = np.empty((7, n), dtype=np.complex128)
        t = t_eval[0]
        t_end = t_eval[n_out - 1]
        y = y0.copy()
        f = rhs(t, y, params)
        nfev = 1
        out[0] = y
        i_out = 1
        h = h0
        if h <= 0.0:
            # simple initial guess from the derivative scale
            sc = atol + rtol * np.abs(y)
            d0 = np.sqrt(np.mean(np.abs(y / sc) ** 2))
            d1 = np.sqrt(np.mean(np.abs(f / sc) ** 2))
            if d0 < 1e-5 or d1 < 1e-5:
                h = 1e-6
            else:
                h = 0.01 * d0 / d1
            h = min(h, t_end - t)
        rejected = False
        while i_out < n_out:
            min_step = 10.0 * abs(np.nextafter(t, np.inf) - t)
            if h < min_step:
                return out[:i_out], nfev, STATUS_STEP_UNDERFLOW
            if t + h > t_end:
                h = t_end - t
            K[0] = f
            for s in range(1, N_STAGES):
                dy = np.dot(A[s, :s], K[:s])
                K[s] = rhs(t + C[s] * h, y + h * dy, params)
            y_new = y + h * np.dot(B, K[:N_STAGES])
            f_new = rhs(t + h, y_new, params)
            K[N_STAGES] = f_new
            nfev += N_STAGES
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err5 = np.dot(E5, K[: N_STAGES + 1]) / scale
            err3 = np.dot(E3, K[: N_STAGES + 1]) / scale
            e5 = np.sum(np.abs(err5) ** 2)
            e3 = np.sum(np.abs(err3) ** 2)
            if e5 == 0.0 and e3 == 0.0:
                err = 0.0
            else:
                # local error estimate is h * (...); divide by h for per-unit-time
                err = e5 / np.sqrt((e5 + 0.01 * e3) * n)
            if err < 1.0:
                t_new = t + h
                if t_eval[i_out] <= t_new:
                    for s in range(N_STAGES + 1, N_EXT):
                        dy = np.dot(A[s, :s], K[:s])
                        K[s] = rhs(t + C[s] * h, y + h * dy, params)
                    nfev += N_EXT - N_STAGES - 1
                    dyt = y_new - y
                    F[0] = dyt
                    F[1] = h * f - dyt
                    F[2] = 2.0 * dyt - h * (f_new + f)
                    for j in range(4):
                        F[3 + j] = h * np.dot(D[j], K)
                    while i_out < n_out and t_eval[i_out] <= t_new:
                        x = (t_eval[i_out] - t) / h
                        yi = np.zeros(n, dtype=np.complex128)
                        for j in range(7):
                            yi += F[6 - j]
                            if j % 2 == 0:
                                yi *= x
                            else:
                                yi *= 1.0 - x
                        out[i_out] = yi + y
                        i_out += 1
                if err == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = min(MAX_FACTOR, SAFETY * err**EXPONENT)
                if rejected:
                    factor = min(1.0, factor)
                rejected = False
                t = t_new
                y = y_new
                f = f_new
                h *= factor
            else:
                h *= max(MIN_FACTOR, SAFETY * err**EXPONENT)
                rejected = True
        return out, nfev, STATUS_OK

    return integrate


_CACHE = {}


def make_integrator(rhs):
    """Integrator ``(t_eval, y0, params, rtol, atol, h0) -> (Y, nfev, status)``.

    ``rhs(t, y, params)`` returns ``dy/dt``.  If ``rhs`` is a numba dispatcher
    the whole loop is compiled once per ``rhs``; otherwise the same
    algorithm runs as plain numpy.
    """
    if numba is None or not isinstance(rhs, numba.core.dispatcher.Dispatcher):
        return _kernel_source(rhs)
    key = id(rhs)
    if key not in _CACHE:
        _CACHE[key] = (rhs, numba.njit(_kernel_source(rhs)))
    return _CACHE[key][1]
