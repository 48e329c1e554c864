"""Adaptive Dormand-Prince 5(4) integrator for batches of linear complex ODEs.

The state has shape ``(d, N)``: ``d`` equations for each of ``N`` independent
members (one per spectral parameter k). All members share the step sequence;
error control is the max-norm over every component so a single member can
never hide behind the others.

Rows listed in ``linear_rows`` are renormalized to unit max-modulus after every
accepted step; the discarded factor is accumulated in ``log_scale``. This
keeps exponentially growing solutions (|Im k| large) representable.
"""
from __future__ import annotations

import numba
import numpy as np

from .errors import StiffnessFailure

# Dormand & Prince (1980), the RK5(4)7M pair
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
_E = (-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40)
(_A21,), (_A31, _A32), (_A41, _A42, _A43), (_A51, _A52, _A53, _A54), (_A61, _A62, _A63, _A64, _A65) = _A[1:]
_B1, _, _B3, _B4, _B5, _B6 = _B
_E1, _, _E3, _E4, _E5, _E6, _E7 = _E

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
MAX_STEPS = 500_000


class Integration:
    """Result of :func:`dopri54`: final state, log scale and optional path."""

    __slots__ = ("y", "log_scale", "h", "t", "path_t", "path_y", "path_log", "nsteps")

    def __init__(self, y, log_scale, h, t):
        self.y = y
        self.log_scale = log_scale
        self.h = h
        self.t = t
        self.path_t = []
        self.path_y = []
        self.path_log = []
        self.nsteps = 0


def _err_norm(err, y0, y1, rtol, atol):
    sc = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.max(np.abs(err) / sc))


def _initial_step(rhs, t0, y0, f0, direction, rtol, atol, span):
    sc = atol + rtol * np.abs(y0)
    d0 = float(np.max(np.abs(y0) / sc))
    d1 = float(np.max(np.abs(f0) / sc))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + direction * h0 * f0
    f1 = rhs(t0 + direction * h0, y1)
    d2 = float(np.max(np.abs(f1 - f0) / sc)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def _normalize(y, log_scale, rows):
    s = np.max(np.abs(y[rows]), axis=0)
    s = np.where(s > 0, s, 1.0)
    y[rows] /= s
    log_scale += np.log(s)


def dopri54(rhs, t0, t1, y0, *, rtol=1e-9, atol=1e-11, h=None, log_scale=None,
            linear_rows=None, record=False, max_steps=MAX_STEPS):
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t1`` (either direction).

    ``h`` seeds the first step magnitude; the last accepted magnitude is
    returned on the result so piecewise callers can chain intervals.
    """
    y = np.array(y0, dtype=complex, copy=True)
    n_members = y.shape[1]
    log_scale = np.zeros(n_members) if log_scale is None else np.array(log_scale, dtype=float)
    rows = slice(None) if linear_rows is None else linear_rows
    _normalize(y, log_scale, rows)
    out = Integration(y, log_scale, h, t0)
    span = abs(t1 - t0)
    if span == 0:
        return out
    direction = 1.0 if t1 > t0 else -1.0
    t = t0
    f = rhs(t, y)
    if h is None or h <= 0:
        h = _initial_step(rhs, t, y, f, direction, rtol, atol, span)
    h = min(abs(h), span)
    if record:
        out.path_t.append(t)
        out.path_y.append(y.copy())
        out.path_log.append(log_scale.copy())
    nsteps = 0
    h_last = h
    while True:
        remaining = abs(t1 - t)
        if remaining <= 1e-14 * max(1.0, abs(t1)):
            break
        h_req = h
        last = h >= remaining
        if last:
            h = remaining
        min_h = 1e-14 * max(1.0, abs(t))
        while True:
            if h < min_h:
                raise StiffnessFailure(f"step size underflow at t={t:.6g}")
            hs = direction * h
            k2 = rhs(t + _C[1] * hs, y + hs * (_A21 * f))
            k3 = rhs(t + _C[2] * hs, y + hs * (_A31 * f + _A32 * k2))
            k4 = rhs(t + _C[3] * hs, y + hs * (_A41 * f + _A42 * k2 + _A43 * k3))
            k5 = rhs(t + _C[4] * hs, y + hs * (_A51 * f + _A52 * k2 + _A53 * k3 + _A54 * k4))
            k6 = rhs(t + hs, y + hs * (_A61 * f + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
            y_new = y + hs * (_B1 * f + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
            f_new = rhs(t + hs, y_new)
            err = hs * (_E1 * f + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * f_new)
            en = _err_norm(err, y, y_new, rtol, atol)
            if en <= 1.0:
                factor = MAX_FACTOR if en == 0 else min(MAX_FACTOR, SAFETY * en ** -0.2)
                break
            h *= max(MIN_FACTOR, SAFETY * en ** -0.2)
            last = False
        nsteps += 1
        if nsteps > max_steps:
            raise StiffnessFailure(f"step budget {max_steps} exhausted at t={t:.6g}")
        t = t1 if last else t + hs
        y = y_new
        f = f_new
        h_last = h_req if (last and h < h_req) else h
        scale_before = log_scale.copy()
        _normalize(y, log_scale, rows)
        if not np.array_equal(scale_before, log_scale):
            # keep the FSAL derivative consistent with the rescaled state
            ratio = np.exp(scale_before - log_scale)
            f = f.copy()
            f[rows] = f[rows] * ratio
        if record:
            out.path_t.append(t)
            out.path_y.append(y.copy())
            out.path_log.append(log_scale.copy())
        h = h_req if (last and h < h_req) else h * factor
    out.y = y
    out.log_scale = log_scale
    out.h = h_last
    out.t = t
    out.nsteps = nsteps
    return out


def sin_over(k, x):
    """sin(k x) / k with the analytic limit x at k = 0."""
    k = np.asarray(k, dtype=complex)
    safe = np.where(k == 0, 1.0, k)
    return np.where(k == 0, x, np.sin(safe * x) / safe)


# -- compiled kernel for the radial equation ----------------------------------
#
# y'' = (L / t^2 - k^2 n(t)) y with n a polynomial on each segment. One member
# (one k) at a time, each with its own step-size control; the state is kept at
# unit max-modulus and the discarded factor accumulates in a log scale.

@numba.njit(cache=True)
def _radial_member(k2, L, y, dy, log, seg_a, seg_b, seg_lo, seg_coef, seg_deg, rtol, atol, max_steps):
    h = 0.0
    nsteps = 0
    for s in range(seg_a.size):
        a = seg_a[s]
        b = seg_b[s]
        lo = seg_lo[s]
        deg = seg_deg[s]
        span = abs(b - a)
        if span == 0.0:
            continue
        direction = 1.0 if b > a else -1.0
        t = a
        c = seg_coef[s]

        def accel(tt, yy):
            x = tt - lo
            n = c[deg]
            for j in range(deg - 1, -1, -1):
                n = n * x + c[j]
            return (L / (tt * tt) - k2 * n) * yy

        f0 = dy
        f1 = accel(t, y)
        if h == 0.0:
            # crude start; the controller adapts within a few steps
            h = min(span, 0.01 / (abs(k2) ** 0.5 + 1.0))
        h = min(h, span)
        while True:
            remaining = abs(b - t)
            if remaining <= 1e-14 * max(1.0, abs(b)):
                break
            h_req = h
            last = h >= remaining
            if last:
                h = remaining
            while True:
                if h < 1e-14 * max(1.0, abs(t)):
                    return y, dy, log, -1
                hs = direction * h
                # stage k_i = (y-slope, dy-slope)
                p2 = f0 * _A21
                q2 = f1 * _A21
                u2 = dy + hs * q2
                v2 = accel(t + _C[1] * hs, y + hs * p2)
                u3 = dy + hs * (_A31 * f1 + _A32 * v2)
                v3 = accel(t + _C[2] * hs, y + hs * (_A31 * f0 + _A32 * u2))
                u4 = dy + hs * (_A41 * f1 + _A42 * v2 + _A43 * v3)
                v4 = accel(t + _C[3] * hs, y + hs * (_A41 * f0 + _A42 * u2 + _A43 * u3))
                u5 = dy + hs * (_A51 * f1 + _A52 * v2 + _A53 * v3 + _A54 * v4)
                v5 = accel(t + _C[4] * hs, y + hs * (_A51 * f0 + _A52 * u2 + _A53 * u3 + _A54 * u4))
                u6 = dy + hs * (_A61 * f1 + _A62 * v2 + _A63 * v3 + _A64 * v4 + _A65 * v5)
                v6 = accel(t + hs, y + hs * (_A61 * f0 + _A62 * u2 + _A63 * u3 + _A64 * u4 + _A65 * u5))
                yn = y + hs * (_B1 * f0 + _B3 * u3 + _B4 * u4 + _B5 * u5 + _B6 * u6)
                dyn = dy + hs * (_B1 * f1 + _B3 * v3 + _B4 * v4 + _B5 * v5 + _B6 * v6)
                g0 = dyn
                g1 = accel(t + hs, yn)
                e0 = hs * (_E1 * f0 + _E3 * u3 + _E4 * u4 + _E5 * u5 + _E6 * u6 + _E7 * g0)
                e1 = hs * (_E1 * f1 + _E3 * v3 + _E4 * v4 + _E5 * v5 + _E6 * v6 + _E7 * g1)
                en = max(abs(e0) / (atol + rtol * max(abs(y), abs(yn))),
                         abs(e1) / (atol + rtol * max(abs(dy), abs(dyn))))
                if en <= 1.0:
                    factor = MAX_FACTOR if en == 0.0 else min(MAX_FACTOR, SAFETY * en ** -0.2)
                    break
                h *= max(MIN_FACTOR, SAFETY * en ** -0.2)
                last = False
            nsteps += 1
            if nsteps > max_steps:
                return y, dy, log, -2
            t = b if last else t + hs
            sc = max(abs(yn), abs(dyn))
            if sc > 0.0:
                yn /= sc
                dyn /= sc
                g0 /= sc
                g1 /= sc
                log += np.log(sc)
            y, dy, f0, f1 = yn, dyn, g0, g1
            h = h_req if (last and h < h_req) else h * factor
    return y, dy, log, nsteps


@numba.njit(cache=True)
def _radial_batch(ks, L, y0, dy0, log0, seg_a, seg_b, seg_lo, seg_coef, seg_deg, rtol, atol, max_steps):
    n = ks.size
    y = np.empty(n, np.complex128)
    dy = np.empty(n, np.complex128)
    log = np.empty(n)
    status = np.empty(n, np.int64)
    for i in range(n):
        sc = max(abs(y0[i]), abs(dy0[i]))
        if sc == 0.0:
            sc = 1.0
        y[i], dy[i], log[i], status[i] = _radial_member(
            ks[i] * ks[i], L, y0[i] / sc, dy0[i] / sc, log0[i] + np.log(sc),
            seg_a, seg_b, seg_lo, seg_coef, seg_deg, rtol, atol, max_steps)
    return y, dy, log, status


def radial_propagate(ks, L, y, dy, log, segments, *, rtol=1e-9, atol=1e-11, max_steps=MAX_STEPS):
    """Integrate the radial equation for each k over ``segments``.

    ``segments`` is a list of ``(a, b, lo, coeffs)``: integrate from a to b
    with n(t) = sum coeffs[j] (t - lo)^j. Returns ``(y, dy, log_scale)``.
    """
    ks = np.ascontiguousarray(ks, dtype=np.complex128)
    shape = ks.shape
    ks = ks.ravel()
    bc = lambda v, dt: np.ascontiguousarray(np.broadcast_to(v, shape), dtype=dt).ravel()
    deg = max(len(s[3]) for s in segments) if segments else 1
    coef = np.zeros((max(len(segments), 1), deg))
    for i, s in enumerate(segments):
        coef[i, :len(s[3])] = s[3]
    seg = np.array([s[:3] for s in segments], dtype=float).reshape(-1, 3)
    degs = np.array([len(s[3]) - 1 for s in segments], dtype=np.int64)
    y, dy, log, status = _radial_batch(ks, float(L), bc(y, np.complex128), bc(dy, np.complex128),
                                       bc(log, float), np.ascontiguousarray(seg[:, 0]),
                                       np.ascontiguousarray(seg[:, 1]), np.ascontiguousarray(seg[:, 2]),
                                       coef, degs, float(rtol), float(atol), int(max_steps))
    bad = status < 0
    if bad.any():
        i = int(np.nonzero(bad)[0][0])
        why = "step size underflow" if status[i] == -1 else f"step budget {max_steps} exhausted"
        raise StiffnessFailure(f"{why} for k={ks[i]}")
    return y.reshape(shape), dy.reshape(shape), log.reshape(shape)
