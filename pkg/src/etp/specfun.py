"""Spherical Bessel functions of complex argument and spherical harmonics.

Bessel values are produced in *scaled* form, ``j_l(z) * exp(-|Im z|)``, so that
callers working far from the real axis can keep track of the exponential
factor separately (see :func:`sph_bessel_j_scaled`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

L_MAX_DEFAULT = 40
TAYLOR_RADIUS = 0.5
TAYLOR_TERMS = 25

_RESCALE = 1e250


@dataclass(frozen=True)
class SphericalOrder:
    l: int
    m: int = 0

    def __post_init__(self):
        if self.l < 0:
            raise ValueError(f"l must be nonnegative, got {self.l}")
        if abs(self.m) > self.l:
            raise ValueError(f"|m| must not exceed l, got l={self.l}, m={self.m}")


def _double_factorial(n):
    out = 1.0
    while n > 1:
        out *= n
        n -= 2
    return out


def _scaled_trig(z):
    """Return (sin z, cos z) multiplied by exp(-|Im z|)."""
    damp = np.abs(z.imag)
    ep = np.exp(1j * z - damp)
    em = np.exp(-1j * z - damp)
    return (ep - em) / 2j, (ep + em) / 2


def _taylor(l, z, deriv=False):
    # j_l(z) = sum_m (-1)^m z^(2m+l) / (2^m m! (2l+2m+1)!!)
    coef = 1.0 / _double_factorial(2 * l + 1)
    z2 = -0.5 * z * z
    val = np.zeros_like(z)
    der = np.zeros_like(z)
    term = np.full_like(z, coef)  # a_m * z^(2m) with the z^l factor pulled out
    for m in range(TAYLOR_TERMS):
        if m:
            term = term * z2 / (m * (2 * l + 2 * m + 1))
        val = val + term
        if deriv:
            der = der + (2 * m + l) * term
    zl = z**l
    if not deriv:
        return zl * val
    # d/dz z^(2m+l) = (2m+l) z^(2m+l-1); guard l=0, m=0 where the term vanishes
    if l == 0:
        with np.errstate(invalid="ignore", divide="ignore"):
            d = np.where(z == 0, 0.0, der / np.where(z == 0, 1.0, z))
    else:
        d = z ** (l - 1) * der
    return zl * val, d


def _miller(lmax, z):
    """Scaled j_0..j_lmax by normalized downward recurrence (|z| >= TAYLOR_RADIUS)."""
    az = float(np.max(np.abs(z))) if z.size else 0.0
    top = max(lmax, int(az))
    start = top + 20 + int(3.0 * math.sqrt(top + 1))
    out = np.zeros((lmax + 1,) + z.shape, dtype=complex)
    f_next = np.zeros_like(z)
    f_cur = np.full_like(z, 1e-30)
    for n in range(start, 0, -1):
        f_prev = (2 * n + 1) / z * f_cur - f_next
        f_next, f_cur = f_cur, f_prev
        if n - 1 <= lmax:
            out[n - 1] = f_cur
        big = np.abs(f_cur) > _RESCALE
        if np.any(big):
            s = np.where(big, 1.0 / _RESCALE, 1.0)
            f_cur = f_cur * s
            f_next = f_next * s
            out *= s
    if lmax >= 1 and start <= lmax:
        raise AssertionError("recurrence start below requested order")
    # n == 0 loop exit leaves f_cur = f_0; f_1 stored in out[1] only if lmax >= 1
    sn, cs = _scaled_trig(z)
    j0 = sn / z
    j1 = sn / z**2 - cs / z
    f0 = out[0]
    if lmax >= 1:
        f1 = out[1]
    else:
        f1 = f_next
    use0 = np.abs(j0) >= np.abs(j1)
    with np.errstate(invalid="ignore", divide="ignore"):
        norm = np.where(use0, j0 / f0, j1 / f1)
    return out * norm


def _orders_scaled(lmax, z):
    """Scaled values of j_0 .. j_lmax at array z, shape (lmax+1,) + z.shape."""
    z = np.asarray(z, dtype=complex)
    out = np.empty((lmax + 1,) + z.shape, dtype=complex)
    small = np.abs(z) < TAYLOR_RADIUS
    big = ~small
    if np.any(small):
        zs = z[small]
        damp = np.exp(-np.abs(zs.imag))
        for l in range(lmax + 1):
            out[l][small] = _taylor(l, zs) * damp
    if np.any(big):
        zb = z[big]
        if lmax <= 1:
            sn, cs = _scaled_trig(zb)
            out[0][big] = sn / zb
            if lmax == 1:
                out[1][big] = sn / zb**2 - cs / zb
        else:
            vals = _miller(lmax, zb)
            for l in range(lmax + 1):
                out[l][big] = vals[l]
    return out


def sph_bessel_j_scaled(l, z):
    """Return ``(j_l(z), j_l'(z))`` both multiplied by ``exp(-|Im z|)``."""
    if l < 0:
        raise ValueError("order must be nonnegative")
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    orders = _orders_scaled(l + 1, z)
    val = orders[l]
    if l == 0:
        der = -orders[1]
    else:
        der = (l * orders[l - 1] - (l + 1) * orders[l + 1]) / (2 * l + 1)
    small = np.abs(z) < TAYLOR_RADIUS
    if np.any(small):
        zs = z[small]
        _, d = _taylor(l, zs, deriv=True)
        der[small] = d * np.exp(-np.abs(zs.imag))
    if scalar:
        return val[0], der[0]
    return val, der


def sph_bessel_j(l, z):
    """Spherical Bessel function of the first kind, complex argument."""
    val, _ = sph_bessel_j_scaled(l, z)
    return val * np.exp(np.abs(np.imag(z)))


def sph_bessel_j_prime(l, z):
    """Derivative ``d j_l / dz``."""
    _, der = sph_bessel_j_scaled(l, z)
    return der * np.exp(np.abs(np.imag(z)))


def assoc_legendre(l, m, t):
    """P_l^m(t) = (1-t^2)^(m/2) d^m P_l/dt^m, without the Condon-Shortley phase."""
    if m < 0 or m > l:
        raise ValueError("need 0 <= m <= l")
    t = np.asarray(t, dtype=float)
    pmm = _double_factorial(2 * m - 1) * (1.0 - t * t) ** (0.5 * m)
    if l == m:
        return pmm
    pm1 = t * (2 * m + 1) * pmm
    if l == m + 1:
        return pm1
    for ll in range(m + 2, l + 1):
        pmm, pm1 = pm1, (t * (2 * ll - 1) * pm1 - (ll + m - 1) * pmm) / (ll - m)
    return pm1


def sph_harmonic(l, m, theta, phi):
    """Orthonormal Y_l^m(theta, phi); theta is the colatitude."""
    order = SphericalOrder(l, m)
    am = abs(order.m)
    log_ratio = math.lgamma(l - am + 1) - math.lgamma(l + am + 1)
    norm = math.sqrt((2 * l + 1) / (4 * math.pi) * math.exp(log_ratio))
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return norm * assoc_legendre(l, am, np.cos(theta)) * np.exp(1j * m * phi)
