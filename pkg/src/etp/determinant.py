"""The transmission determinant

    D_l(k; r) = det [[ j_l(kr),      -y(r)/r      ],
                     [ d/dr j_l(kr), -d/dr(y(r)/r) ]]

with y the regular radial solution, and the factorization diagnostic
alpha_l(k) = 1 - (1/k) (j_l/j_l') (y'/y) at r = R0.
"""
from __future__ import annotations

import csv
import threading
from dataclasses import dataclass

import numpy as np

from .errors import NearPole
from .radial import ATOL, RTOL, METHODS, regular_solution
from .specfun import sph_bessel_j_scaled

POLE_RADIUS = 1e-3
MEMO_DECIMALS = 14


def _key(k):
    return (round(k.real, MEMO_DECIMALS), round(k.imag, MEMO_DECIMALS))


class DeterminantFn:
    """Evaluatable k -> D_l(k; r_eval), vectorized over k and memoized.

    ``method`` selects the construction of the regular solution (see
    :mod:`etp.radial`). Calls accept scalars or arrays; :meth:`scaled`
    returns ``(mantissa, log_scale)`` for arguments where D overflows.
    The memo is guarded by a lock, so one instance may be shared by threads.
    """

    def __init__(self, profile, l, r_eval=None, *, method="interface", rtol=RTOL, atol=ATOL,
                 memo=True):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        self.profile = profile
        self.l = int(l)
        self.r_eval = profile.R0 if r_eval is None else float(r_eval)
        self.method = method
        self.rtol = rtol
        self.atol = atol
        self._memo = {} if memo else None
        self._lock = threading.Lock()
        self.n_evals = 0

    @property
    def rel_noise(self):
        """Relative accuracy of D, set by the integrator tolerance."""
        return 10.0 * self.rtol

    def __repr__(self):
        return f"DeterminantFn(l={self.l}, r_eval={self.r_eval}, method={self.method!r})"

    def _compute(self, ks):
        r = self.r_eval
        J, Jp = sph_bessel_j_scaled(self.l, ks * r)
        bessel_log = np.abs((ks * r).imag)
        if self.profile.is_trivial:
            # y = r j_l(kr) identically, so both columns coincide
            return np.zeros(ks.shape, dtype=complex), 2 * bessel_log
        y, dy, log = regular_solution(self.profile, self.l, ks, r, self.method,
                                      rtol=self.rtol, atol=self.atol)
        f = y / r
        fp = (dy * r - y) / (r * r)
        return (ks * Jp) * f - J * fp, log + bessel_log

    def scaled(self, k):
        """D(k) as ``(mantissa, log_scale)`` arrays; D = mantissa * exp(log_scale)."""
        ks = np.atleast_1d(np.asarray(k, dtype=complex)).ravel()
        mant = np.empty(ks.shape, dtype=complex)
        logs = np.empty(ks.shape)
        todo = []
        if self._memo is not None:
            with self._lock:
                for i, kk in enumerate(ks):
                    hit = self._memo.get(_key(kk))
                    if hit is None:
                        todo.append(i)
                    else:
                        mant[i], logs[i] = hit
        else:
            todo = list(range(ks.size))
        if todo:
            idx = np.array(todo)
            m, lg = self._compute(ks[idx])
            mant[idx] = m
            logs[idx] = lg
            self.n_evals += idx.size
            if self._memo is not None:
                with self._lock:
                    for i, a, b in zip(idx, m, lg):
                        self._memo[_key(ks[i])] = (a, b)
        shape = np.shape(k)
        return mant.reshape(shape), logs.reshape(shape)

    def __call__(self, k):
        mant, logs = self.scaled(k)
        with np.errstate(over="ignore"):
            val = mant * np.exp(logs)
        return val if np.ndim(val) else complex(val)

    def log_abs(self, k):
        mant, logs = self.scaled(k)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(mant)) + logs

    def at_radius(self, r_eval):
        """Same determinant evaluated at another radius (no shared memo)."""
        return DeterminantFn(self.profile, self.l, r_eval, method=self.method, rtol=self.rtol,
                             atol=self.atol)


def eval_determinant(df, k):
    return df(k)


@dataclass
class FactorDiag:
    """alpha_l(k) and its ingredients at r = R0."""

    alpha: complex
    near_pole: bool
    pole_distance: float
    prefactor: complex  # k j_l'(kR0) y(R0)/R0
    remainder: complex  # D - prefactor * alpha = j_l(kR0) y(R0) / R0^2
    determinant: complex


def _regular_values(df, ks):
    y, dy, log = regular_solution(df.profile, df.l, ks, df.r_eval, df.method, rtol=df.rtol,
                                  atol=df.atol)
    scale = np.exp(log)
    return y * scale, dy * scale


def eval_alpha(df, k, *, pole_radius=POLE_RADIUS, strict=True):
    """Factorization diagnostic; raises :class:`NearPole` close to its poles.

    The poles are the zeros of j_l'(kR0) and of y(R0; k). Distance to them is
    estimated by one Newton step |g/g'| for each factor.
    """
    k = complex(k)
    R0 = df.r_eval
    h = 1e-5 * max(1.0, abs(k))
    ks = np.array([k, k + h, k - h, k + 1j * h, k - 1j * h])
    J, Jp = sph_bessel_j_scaled(df.l, ks * R0)
    bl = np.exp(np.abs((ks * R0).imag))
    J, Jp = J * bl, Jp * bl
    y, dy = _regular_values(df, ks)
    dist = np.inf
    for g in (Jp, y):
        dg = (g[1] - g[2]) / (2 * h)
        if dg != 0:
            dist = min(dist, abs(g[0] / dg))
        elif g[0] == 0:
            dist = 0.0
    near = dist < pole_radius
    jp0, j0, y0, dy0 = Jp[0], J[0], y[0], dy[0]
    D = complex(df(k))
    prefactor = k * jp0 * y0 / R0
    if near:
        if strict:
            raise NearPole(f"k={k} lies within {dist:.2e} of a pole of alpha")
        return FactorDiag(complex("nan"), True, dist, prefactor, complex("nan"), D)
    alpha = 1.0 - (1.0 / k) * (j0 / jp0) * (dy0 / y0)
    remainder = j0 * y0 / R0**2
    return FactorDiag(complex(alpha), False, dist, complex(prefactor), complex(remainder), D)


def grid_points(rect, nx, ny):
    re0, re1, im0, im1 = rect
    xs = np.linspace(re0, re1, nx) if nx > 1 else np.array([re0])
    ys = np.linspace(im0, im1, ny) if ny > 1 else np.array([im0])
    return xs[None, :] + 1j * ys[:, None]


def grid_eval(df, rect, nx, ny):
    """Values of D on an ny-by-nx grid (row = fixed Im k), row-major."""
    if nx < 1 or ny < 1:
        raise ValueError("grid needs nx, ny >= 1")
    K = grid_points(rect, nx, ny)
    return K, np.asarray(df(K.ravel())).reshape(K.shape)


def export_grid_csv(path, K, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re_k", "im_k", "re_D", "im_D", "abs_D"])
        for k, d in zip(np.ravel(K), np.ravel(values)):
            w.writerow([repr(float(x)) for x in (k.real, k.imag, d.real, d.imag, abs(d))])
