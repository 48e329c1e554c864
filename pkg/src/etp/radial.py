"""Radial solutions of y'' + (k^2 n(r) - l(l+1)/r^2) y = 0.

Three constructions of the regular solution are available:

* ``origin``: Frobenius start at r0 = 1e-6 and integration outward;
* ``interface``: exact cavity solution r j_l(kr) on [0, R] (n = 1 there),
  then integration in r from R using the transmission data;
* ``liouville``: the same transmission data, integrated in the Liouville
  variable xi for z = n^(1/4) y (smooth profiles only).

Batched helpers return values as ``(mantissa, log_scale)`` so that callers
far from the real k axis do not overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import OutOfRange, ProfileError, QuadratureFailure
from .ode import dopri54, radial_propagate, sin_over
from .profile import LiouvilleMap, _horner, full_potential
from .specfun import sph_bessel_j, sph_bessel_j_prime, sph_bessel_j_scaled

RTOL = 1e-9
ATOL = 1e-11
ORIGIN_START = 1e-6
XI_MIN = 1e-3

METHODS = ("interface", "origin", "liouville")


@dataclass(frozen=True)
class SpectralParam:
    k: complex

    def __complex__(self):
        return complex(self.k)


@dataclass
class SolutionTrace:
    """A radial solution and its r-derivative sampled on the integrator's steps.

    For Liouville-variable traces ``xi``, ``z`` and ``dz`` hold the
    transformed quantities and ``y``/``dy`` are mapped back.
    """

    l: int
    k: complex
    grid: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    direction: str
    ic: dict
    xi: np.ndarray | None = None
    z: np.ndarray | None = None
    dz: np.ndarray | None = None

    def at(self, r):
        """Value and derivative at a grid radius (nearest sample)."""
        i = int(np.argmin(np.abs(self.grid - r)))
        return self.y[i], self.dy[i]


@dataclass
class ErrorEnvelope:
    value: float
    side: str
    interval: tuple
    integral: float = field(default=0.0)


@dataclass
class EstimateReport:
    max_ratio: float
    ratios: np.ndarray
    grid: np.ndarray
    passed: bool
    normalization: float


# -- batched propagation in r -------------------------------------------

def _segments(profile, r_from, r_to):
    """Piece-aligned sub-intervals from r_from to r_to (either direction)."""
    knots = [p.lo for p in profile.pieces[1:]]
    lo, hi = min(r_from, r_to), max(r_from, r_to)
    cuts = [lo] + [x for x in knots if lo < x < hi] + [hi]
    segs = []
    for a, b in zip(cuts, cuts[1:]):
        i = profile.piece_index(0.5 * (a + b))
        segs.append((a, b, i))
    if r_to < r_from:
        segs = [(b, a, i) for a, b, i in reversed(segs)]
    return segs


def _r_rhs(coeffs, lo, L, k2):
    if len(coeffs) == 1:
        n0 = coeffs[0]

        def rhs(t, Y):
            out = np.empty_like(Y)
            out[0] = Y[1]
            out[1] = (L / (t * t) - k2 * n0) * Y[0]
            return out
    else:
        def rhs(t, Y):
            out = np.empty_like(Y)
            out[0] = Y[1]
            out[1] = (L / (t * t) - k2 * _horner(coeffs, t - lo)) * Y[0]
            return out
    return rhs


def propagate(profile, l, ks, r_from, r_to, y, dy, log_scale=None, *, rtol=RTOL, atol=ATOL,
              record=False):
    """Integrate the radial ODE for every k in ``ks`` from r_from to r_to.

    Returns ``(y, dy, log_scale, path)``; true values are mantissa * exp(log_scale).
    ``path`` is a list of ``(r, Y, log_scale)`` samples when ``record`` is set.
    """
    ks = np.atleast_1d(np.asarray(ks, dtype=complex))
    k2 = ks * ks
    L = l * (l + 1)
    Y = np.vstack([np.broadcast_to(y, ks.shape), np.broadcast_to(dy, ks.shape)]).astype(complex)
    log = np.zeros(ks.shape) if log_scale is None else np.array(np.broadcast_to(log_scale, ks.shape), float)
    if not record:
        segs = [(a, b, profile.pieces[i].lo, profile.pieces[i].coeffs)
                for a, b, i in _segments(profile, r_from, r_to)]
        if not segs:
            return Y[0], Y[1], log, []
        y, dy, log = radial_propagate(ks, L, Y[0], Y[1], log, segs, rtol=rtol, atol=atol)
        return y, dy, log, []
    path = []
    h = None
    for a, b, i in _segments(profile, r_from, r_to):
        p = profile.pieces[i]
        res = dopri54(_r_rhs(p.coeffs, p.lo, L, k2), a, b, Y, rtol=rtol, atol=atol, h=h,
                      log_scale=log, record=record)
        Y, log, h = res.y, res.log_scale, res.h
        if record:
            start = 1 if path else 0
            path.extend(zip(res.path_t[start:], res.path_y[start:], res.path_log[start:]))
    return Y[0], Y[1], log, path


def cavity_solution(l, ks, r):
    """Scaled r j_l(kr) and its r-derivative: exact regular solution where n = 1."""
    ks = np.atleast_1d(np.asarray(ks, dtype=complex))
    J, Jp = sph_bessel_j_scaled(l, ks * r)
    y = r * J
    dy = J + ks * r * Jp
    return y, dy, np.abs((ks * r).imag)


def frobenius_start(profile, l, ks, r0=ORIGIN_START):
    """Two-term Frobenius data y = c r^(l+1) (1 + alpha r^2) with y/r = j_l(k r0) at r0."""
    ks = np.atleast_1d(np.asarray(ks, dtype=complex))
    n0 = profile.n(0.0)
    alpha = -ks * ks * n0 / (2.0 * (2 * l + 3))
    J, _ = sph_bessel_j_scaled(l, ks * r0)
    shape = r0**l * (1.0 + alpha * r0 * r0)
    c = J / shape
    y = c * r0 ** (l + 1) * (1.0 + alpha * r0 * r0)
    dy = c * ((l + 1) * r0**l + (l + 3) * alpha * r0 ** (l + 2))
    return y, dy, np.abs((ks * r0).imag)


def regular_solution(profile, l, ks, r, method="interface", *, rtol=RTOL, atol=ATOL):
    """Regular solution y(r; k) and y'(r; k) for each k, as mantissas plus log scale."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    ks = np.atleast_1d(np.asarray(ks, dtype=complex))
    if method == "origin":
        y, dy, log = frobenius_start(profile, l, ks)
        y, dy, log, _ = propagate(profile, l, ks, ORIGIN_START, r, y, dy, log, rtol=rtol, atol=atol)
        return y, dy, log
    if profile.is_trivial or r <= profile.R:
        return cavity_solution(l, ks, r)
    y, dy, log = cavity_solution(l, ks, profile.R)
    if method == "interface":
        y, dy, log, _ = propagate(profile, l, ks, profile.R, r, y, dy, log, rtol=rtol, atol=atol)
        return y, dy, log
    return _liouville_regular(profile, l, ks, r, y, dy, log, rtol, atol)


def _liouville_regular(profile, l, ks, r, y, dy, log, rtol, atol):
    lmap = LiouvilleMap(profile)
    # n(R) = 1 and n'(R) = 0, so z = y and z' = y' at the interface
    zs, dzs, log, _ = _propagate_xi(profile, lmap, l, ks, profile.R, float(lmap(r)), y, dy, log,
                                    rtol=rtol, atol=atol)
    n, dn, _ = profile.derivs(r)
    yv = zs * n**-0.25
    dyv = n**0.25 * dzs - dn / (4.0 * n**1.25) * zs
    return yv, dyv, log


# -- Liouville variable -------------------------------------------------

def _xi_rhs(profile, i, l, k2):
    coeffs, d1, d2 = profile.piece_functions(i)
    lo = profile.pieces[i].lo
    L = l * (l + 1)

    def rhs(t, Y):
        r = Y[2, 0].real
        u = r - lo
        n = _horner(coeffs, u)
        dn = _horner(d1, u)
        d2n = _horner(d2, u)
        V = d2n / (4.0 * n * n) - 5.0 / 16.0 * dn * dn / n**3 + L / (r * r * n)
        out = np.empty_like(Y)
        out[0] = Y[1]
        out[1] = (V - k2) * Y[0]
        out[2] = 1.0 / math.sqrt(n)
        return out

    return rhs


def _xi_segments(profile, lmap, xi_from, xi_to):
    knots = list(lmap.grid_xi[1:])
    lo, hi = min(xi_from, xi_to), max(xi_from, xi_to)
    cuts = [lo] + [x for x in knots if lo < x < hi] + [hi]
    segs = []
    for a, b in zip(cuts, cuts[1:]):
        i = int(np.searchsorted(lmap.grid_xi, 0.5 * (a + b), side="right")) - 1
        segs.append((a, b, i))
    if xi_to < xi_from:
        segs = [(b, a, i) for a, b, i in reversed(segs)]
    return segs


def _propagate_xi(profile, lmap, l, ks, xi_from, xi_to, z, dz, log=None, *, rtol=RTOL, atol=ATOL,
                  record=False):
    if not profile.smooth:
        raise ProfileError("blend_width", "Liouville-variable integration needs a C^2 profile")
    ks = np.atleast_1d(np.asarray(ks, dtype=complex))
    k2 = ks * ks
    r_start = float(lmap.inverse(xi_from))
    Y = np.vstack([np.broadcast_to(z, ks.shape), np.broadcast_to(dz, ks.shape),
                   np.full(ks.shape, r_start)]).astype(complex)
    log = np.zeros(ks.shape) if log is None else np.array(np.broadcast_to(log, ks.shape), float)
    path = []
    h = None
    for a, b, i in _xi_segments(profile, lmap, xi_from, xi_to):
        # re-anchor r at piece boundaries to stop drift of the auxiliary row
        Y[2] = float(lmap.inverse(a))
        res = dopri54(_xi_rhs(profile, i, l, k2), a, b, Y, rtol=rtol, atol=atol, h=h, log_scale=log,
                      linear_rows=slice(0, 2), record=record)
        Y, log, h = res.y, res.log_scale, res.h
        if record:
            start = 1 if path else 0
            path.extend(zip(res.path_t[start:], res.path_y[start:], res.path_log[start:]))
    return Y[0], Y[1], log, path


def interface_ic_from_matching(l, k, R):
    """Transmission data at the cavity boundary as (a, b) with z(R) = -b, z'(R) = a.

    y(R) = R j_l(Rk) and y'(R) = j_l(Rk) + Rk j_l'(Rk); z = y there since n(R) = 1.
    """
    k = complex(k)
    j = complex(sph_bessel_j(l, R * k))
    jp = complex(sph_bessel_j_prime(l, R * k))
    a = j + R * k * jp
    b = -R * j
    return a, b


def solve_regular_from_origin(profile, l, k, r_max=None, *, r0=ORIGIN_START, rtol=RTOL, atol=ATOL):
    """Regular solution with y(r)/r -> j_l(kr) as r -> 0, integrated on [r0, r_max]."""
    r_max = profile.R0 if r_max is None else float(r_max)
    if r_max <= r0:
        raise OutOfRange(f"r_max must exceed the start radius {r0}")
    k = complex(k)
    y, dy, log = frobenius_start(profile, l, [k], r0)
    *_, path = propagate(profile, l, [k], r0, r_max, y, dy, log, rtol=rtol, atol=atol, record=True)
    return _trace_from_path(l, k, path, "from-origin", {"regular_origin": True, "r0": r0})


def solve_from_interface(profile, l, k, a, b, direction="outward", *, xi_end=None, rtol=RTOL,
                         atol=ATOL, lmap=None):
    """Integrate -z'' + (l(l+1)/xi^2 + q) z = k^2 z from xi(R) with z = -b, z' = a.

    ``direction`` is ``"outward"`` (toward xi(R0)) or ``"inward"`` (toward the origin,
    stopping at ``XI_MIN`` for l >= 1 where the centrifugal term is singular).
    """
    lmap = lmap or LiouvilleMap(profile)
    xi_R = float(lmap(profile.R))
    if direction == "outward":
        xi_end = float(lmap(profile.R0)) if xi_end is None else xi_end
        if xi_end < xi_R:
            raise OutOfRange("outward integration needs xi_end >= xi(R)")
    elif direction == "inward":
        xi_end = (XI_MIN if l else 0.0) if xi_end is None else xi_end
        if xi_end > xi_R or xi_end < 0 or (l and xi_end <= 0):
            raise OutOfRange("inward integration needs 0 < xi_end <= xi(R)")
    else:
        raise ValueError(f"direction must be 'outward' or 'inward', got {direction!r}")
    k = complex(k)
    if xi_end == 0.0:
        # l = 0 reaches the origin; the potential is bounded there (n = 1 in the cavity)
        xi_end = 1e-300
    *_, path = _propagate_xi(profile, lmap, l, [k], xi_R, xi_end, -b, a, rtol=rtol, atol=atol,
                             record=True)
    xi = np.array([p[0] for p in path])
    Y = np.array([p[1][:, 0] for p in path])
    scale = np.exp(np.array([p[2][0] for p in path]))
    z = Y[:, 0] * scale
    dz = Y[:, 1] * scale
    r = Y[:, 2].real
    nv = np.array([profile.derivs(x)[:2] for x in r])
    n, dn = nv[:, 0], nv[:, 1]
    y = z * n**-0.25
    dy = n**0.25 * dz - dn / (4.0 * n**1.25) * z
    name = "outward-from-R" if direction == "outward" else "inward-from-R"
    return SolutionTrace(l, k, r, y, dy, name, {"a": a, "b": b}, xi=xi, z=z, dz=dz)


def _trace_from_path(l, k, path, direction, ic):
    grid = np.array([p[0] for p in path])
    Y = np.array([p[1][:, 0] for p in path])
    scale = np.exp(np.array([p[2][0] for p in path]))
    return SolutionTrace(l, k, grid, Y[:, 0] * scale, Y[:, 1] * scale, direction, ic)


# -- asymptotics and error envelopes --------------------------------------

def asymptotic_y(profile, l, k, r, lmap=None):
    """[j_l(Rk) + Rk j_l'(Rk)] sin(k(xi(r)-R))/k + R j_l(Rk) cos(k(xi(r)-R)) for r >= R."""
    R = profile.R
    if np.any(np.asarray(r) < R):
        raise OutOfRange("asymptotic form holds for r >= R")
    lmap = lmap or LiouvilleMap(profile)
    delta = np.asarray(lmap(r)) - R
    k = np.asarray(k, dtype=complex)
    j = sph_bessel_j(l, R * k)
    jp = sph_bessel_j_prime(l, R * k)
    return (j + R * k * jp) * sin_over(k, delta) + R * j * np.cos(k * delta)


def _envelope_integrand(profile, lmap, l, r):
    """(l(l+1)/xi^2 + |q(xi)|) * dxi/dr as a function of r."""
    n = profile.n(r)
    xi = float(lmap.xi_scalar(r))
    L = l * (l + 1)
    q = full_potential(profile, l, r) - L / (xi * xi)
    return (L / (xi * xi) + abs(q)) * math.sqrt(n)


def _envelope_integral(profile, lmap, l, r_a, r_b, tol=1e-10):
    if r_b <= r_a:
        return 0.0
    total = 0.0
    err_total = 0.0
    for a, b, i in _segments(profile, r_a, r_b):
        p = profile.pieces[i]
        if p.background and p.lo == 0.0:
            # cavity: q = 0 and xi = r
            total += l * (l + 1) * (1.0 / a - 1.0 / b) if l else 0.0
            continue
        val, err = integrate.quad(lambda r: _envelope_integrand(profile, lmap, l, r), a, b,
                                  epsabs=tol * 1e-2, epsrel=1e-10, limit=200)
        total += val
        err_total += err
    if err_total > tol * max(1.0, total):
        raise QuadratureFailure(f"envelope quadrature error {err_total:.2e}")
    return total


def error_envelope(profile, l, interval, *, xi_min=XI_MIN, lmap=None):
    """K = exp(int over interval of |l(l+1)|/t^2 + |q(t)| dt), xi-interval given as a pair.

    The side is ``exterior`` when the interval lies beyond xi(R), else ``interior``.
    For l >= 1 the integrand diverges at the origin; intervals reaching below
    ``xi_min`` report K = inf.
    """
    if not profile.smooth:
        raise ProfileError("blend_width", "the envelope needs q, which needs a C^2 profile")
    lmap = lmap or LiouvilleMap(profile)
    lo, hi = sorted(float(x) for x in interval)
    if lo < 0:
        raise OutOfRange("interval must lie in xi >= 0")
    side = "exterior" if lo >= float(lmap(profile.R)) - 1e-14 else "interior"
    if l and lo < xi_min:
        return ErrorEnvelope(math.inf, side, (lo, hi), math.inf)
    I = _envelope_integral(profile, lmap, l, float(lmap.inverse(lo)), float(lmap.inverse(hi)))
    return ErrorEnvelope(math.exp(I), side, (lo, hi), I)


def envelope_on_grid(profile, l, xi_grid, *, lmap=None):
    """K at each grid point, integrating from xi(R) toward the point."""
    lmap = lmap or LiouvilleMap(profile)
    xi_R = float(lmap(profile.R))
    xi_grid = np.asarray(xi_grid, dtype=float)
    out = np.empty_like(xi_grid)
    for side_mask, sign in ((xi_grid >= xi_R, 1), (xi_grid < xi_R, -1)):
        idx = np.nonzero(side_mask)[0]
        if not idx.size:
            continue
        order = idx[np.argsort(sign * xi_grid[idx])]
        acc = 0.0
        prev = xi_R
        r_prev = float(lmap.inverse(prev))
        for j in order:
            x = xi_grid[j]
            if l and x < XI_MIN:
                out[j] = math.inf
                continue
            r_x = float(lmap.inverse(x))
            acc += _envelope_integral(profile, lmap, l, min(r_prev, r_x), max(r_prev, r_x))
            prev, r_prev = x, r_x
            out[j] = math.exp(acc)
    return out


def check_estimate(trace, a, b, envelope=None, *, profile=None, tol=0.0):
    """Ratio of the two-way remainder to its bound along a Liouville trace.

    remainder = |z + b cos k(xi-R) - a sin k(xi-R)/k|
    bound     = c * K(xi)/|k| * exp(|Im k| |xi - R|),   c = |b| + |a|/|k|

    The envelope bound is stated for unit Cauchy data; ``c`` is the size of
    the actual data, so a ratio above 1 means the estimate is violated.
    ``envelope`` may be an array of K values on the trace grid; otherwise it is
    computed from ``profile``.
    """
    if trace.xi is None:
        raise ValueError("check_estimate needs a Liouville-variable trace")
    k = complex(trace.k)
    if abs(k) < 1:
        raise OutOfRange("the estimate holds for |k| >= 1")
    R_xi = trace.xi[0]
    delta = trace.xi - R_xi
    approx = -b * np.cos(k * delta) + a * sin_over(k, delta)
    rem = np.abs(trace.z - approx)
    if envelope is None:
        if profile is None:
            raise ValueError("pass either envelope values or the profile")
        envelope = envelope_on_grid(profile, trace.l, trace.xi)
    elif isinstance(envelope, ErrorEnvelope):
        envelope = np.full(trace.xi.shape, envelope.value)
    c = abs(b) + abs(a) / abs(k)
    bound = c * np.asarray(envelope) / abs(k) * np.exp(abs(k.imag) * np.abs(delta))
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(rem == 0, 0.0, rem / bound)
    mx = float(np.max(ratios)) if ratios.size else 0.0
    return EstimateReport(mx, ratios, trace.xi, mx <= 1.0 + tol, c)
