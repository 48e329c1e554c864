"""Radial refractive index n(r) along a fixed direction, its Liouville
transform xi(r) = int_0^r sqrt(n), and the transformed potential q(xi).

Profiles are piecewise polynomials. Coefficients of each user piece are
ascending powers of the local variable ``t = r - from``. Wherever n is not
supplied it equals the background value 1. A nonzero ``blend_width`` joins
adjacent pieces with a quintic smoothstep so that n is C^2; each blend is
placed on the perturbed side of its knot, which keeps n = 1 on [0, R] and
beyond the declared support.
"""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate

from .errors import OutOfRange, ProfileError, QuadratureFailure

MAX_DEGREE = 5
C2_RTOL = 1e-9
XI_TOL = 1e-10

# smoothstep 6t^5 - 15t^4 + 10t^3: value 0->1, first and second derivatives vanish at both ends
_SMOOTHSTEP = (0.0, 0.0, 0.0, 10.0, -15.0, 6.0)


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    coeffs: tuple  # ascending powers of (r - lo)
    background: bool = False

    def poly(self):
        return Polynomial(self.coeffs, domain=[self.lo, self.lo + 1.0], window=[0.0, 1.0])


def _local(poly, lo):
    """Coefficients of ``poly`` in powers of (r - lo)."""
    c = poly.convert(domain=[lo, lo + 1.0], window=[0.0, 1.0]).coef
    return tuple(float(x) for x in c)


def _horner(c, t):
    acc = 0.0
    for a in reversed(c):
        acc = acc * t + a
    return acc


def _deriv(c):
    return tuple(i * c[i] for i in range(1, len(c))) or (0.0,)


class RadialProfile:
    """Refractive index n(r) = n(r x) for one fixed direction x.

    Parameters
    ----------
    R : float
        Cavity radius along the direction (n = 1 on [0, R]).
    R0 : float
        Outer matching radius; must contain the perturbation support.
    pieces : sequence of (from, to, coeffs)
        Perturbed pieces, sorted and non-overlapping, inside [R, R0].
    blend_width : float
        Width of the C^2 blends at knots; 0 leaves the profile sharp.
    """

    def __init__(self, R, R0, pieces=(), blend_width=0.0, name=None):
        self.R = float(R)
        self.R0 = float(R0)
        self.blend_width = float(blend_width)
        self.name = name
        if not (self.R > 0 and math.isfinite(self.R)):
            raise ProfileError("R", f"must be a positive finite radius, got {R!r}")
        if not (self.R0 >= self.R and math.isfinite(self.R0)):
            raise ProfileError("R0", f"must be finite and >= R={self.R}, got {R0!r}")
        if self.blend_width < 0 or not math.isfinite(self.blend_width):
            raise ProfileError("blend_width", f"must be >= 0, got {blend_width!r}")
        self.user_pieces = tuple(self._validate_pieces(pieces))
        self.pieces = tuple(self._assemble())
        self._los = [p.lo for p in self.pieces]
        self._d1 = tuple(_deriv(p.coeffs) for p in self.pieces)
        self._d2 = tuple(_deriv(d) for d in self._d1)
        perturbed = [p for p in self.pieces if not p.background]
        self.is_trivial = not perturbed
        if self.is_trivial:
            self.support_lo = self.support_hi = None
        else:
            self.support_lo = perturbed[0].lo
            self.support_hi = perturbed[-1].hi
        self._check_positive()
        self.smooth = self._c2_mismatch() <= C2_RTOL
        if self.blend_width > 0 and not self.smooth:
            raise ProfileError("blend_width", "blended profile failed the C^2 knot check")

    # -- construction ---------------------------------------------------
    def _validate_pieces(self, pieces):
        out = []
        prev_hi = self.R
        for i, raw in enumerate(pieces):
            try:
                lo, hi, coeffs = raw
            except (TypeError, ValueError):
                raise ProfileError(f"pieces[{i}]", "expected (from, to, coeffs)") from None
            lo, hi = float(lo), float(hi)
            coeffs = tuple(float(c) for c in np.atleast_1d(coeffs))
            if not coeffs or not all(math.isfinite(c) for c in coeffs):
                raise ProfileError(f"pieces[{i}].coeffs", "must be a nonempty list of finite numbers")
            if len(coeffs) - 1 > MAX_DEGREE:
                raise ProfileError(f"pieces[{i}].coeffs", f"degree exceeds {MAX_DEGREE}")
            if not hi > lo:
                raise ProfileError(f"pieces[{i}].to", f"must exceed from={lo}")
            if lo < prev_hi - 1e-15:
                field = "from" if i else "from (support must lie outside the cavity, r >= R)"
                raise ProfileError(f"pieces[{i}].{field}", f"{lo} overlaps [0, {prev_hi}]")
            if hi > self.R0:
                raise ProfileError(f"pieces[{i}].to", f"{hi} exceeds R0={self.R0}")
            out.append(Piece(lo, hi, coeffs))
            prev_hi = hi
        return out

    def _assemble(self):
        seq = []
        r = 0.0
        for p in self.user_pieces:
            if p.lo > r:
                seq.append(Piece(r, p.lo, (1.0,), background=True))
            seq.append(p)
            r = p.hi
        seq.append(Piece(r, math.inf, (1.0,), background=True))
        if self.blend_width == 0 or len(seq) == 1:
            return seq
        return self._blend(seq)

    def _blend(self, seq):
        w = self.blend_width
        polys = [p.poly() for p in seq]
        cuts = []  # (index of knot, a, b)
        for i in range(1, len(seq)):
            left, right = seq[i - 1], seq[i]
            x = right.lo
            if _matches_c2(polys[i - 1], polys[i], x):
                continue
            if left.background:
                a, b = x, x + w
            elif right.background:
                a, b = x - w, x
            else:
                a, b = x - w / 2, x + w / 2
            cuts.append((i, a, b))
        # room check: blends must stay inside perturbed pieces and not overlap
        used = {}
        for i, a, b in cuts:
            for j in (i - 1, i):
                p = seq[j]
                lo, hi = max(a, p.lo), min(b, p.hi)
                if hi > lo:
                    used.setdefault(j, []).append((lo, hi))
        for j, spans in used.items():
            p = seq[j]
            if p.background:
                continue
            spans.sort()
            if spans[0][0] < p.lo - 1e-12 or spans[-1][1] > p.hi + 1e-12:
                raise ProfileError("blend_width", f"blend leaves piece [{p.lo}, {p.hi}]")
            for (a0, b0), (a1, b1) in zip(spans, spans[1:]):
                if a1 < b0 - 1e-12:
                    raise ProfileError("blend_width", f"blends overlap inside piece [{p.lo}, {p.hi}]")
        out = []
        bounds = {i: (a, b) for i, a, b in cuts}
        for j, p in enumerate(seq):
            lo = bounds[j][1] if j in bounds else p.lo
            hi = bounds[j + 1][0] if (j + 1) in bounds else p.hi
            if j in bounds:
                a, b = bounds[j]
                pa = polys[j - 1].convert(domain=[a, a + 1.0], window=[0.0, 1.0])
                pb = polys[j].convert(domain=[a, a + 1.0], window=[0.0, 1.0])
                step = Polynomial(_SMOOTHSTEP, domain=[a, b], window=[0.0, 1.0])
                step = step.convert(domain=[a, a + 1.0], window=[0.0, 1.0])
                blend = pa + (pb - pa) * step
                out.append(Piece(a, b, tuple(float(c) for c in blend.coef)))
            if hi > lo:
                out.append(Piece(lo, hi, _local(polys[j], lo), background=p.background))
        return out

    def _c2_mismatch(self):
        worst = 0.0
        for i in range(1, len(self.pieces)):
            x = self.pieces[i].lo
            for c_left, c_right in zip(
                (self.pieces[i - 1].coeffs, self._d1[i - 1], self._d2[i - 1]),
                (self.pieces[i].coeffs, self._d1[i], self._d2[i]),
            ):
                vl = _horner(c_left, x - self.pieces[i - 1].lo)
                vr = _horner(c_right, 0.0)
                scale = max(1.0, abs(vl), abs(vr))
                worst = max(worst, abs(vl - vr) / scale)
        return worst

    def _check_positive(self):
        for i, p in enumerate(self.pieces):
            hi = p.hi if math.isfinite(p.hi) else p.lo + 1.0
            t = np.linspace(0.0, hi - p.lo, 401)
            vals = Polynomial(p.coeffs)(t)
            if not np.all(vals > 0):
                raise ProfileError(self._field_of(p), "n must stay positive")

    def _field_of(self, piece):
        for i, p in enumerate(self.user_pieces):
            if p.lo <= piece.lo < p.hi or p.lo < piece.hi <= p.hi:
                return f"pieces[{i}].coeffs"
        return "blend_width"

    # -- constructors ---------------------------------------------------
    @classmethod
    def constant(cls, R=1.0, R0=3.0):
        """The unperturbed medium n = 1."""
        return cls(R, R0, (), name="background")

    @classmethod
    def shell(cls, n0, lo=1.0, hi=2.0, R=None, R0=3.0, blend_width=0.0):
        """Constant index n0 on [lo, hi]; sharp unless ``blend_width`` > 0."""
        R = lo if R is None else R
        return cls(R, R0, [(lo, hi, [n0])], blend_width=blend_width, name=f"shell(n0={n0})")

    @classmethod
    def from_dict(cls, cfg):
        if not isinstance(cfg, dict):
            raise ProfileError("<root>", "profile config must be a JSON object")
        for key in ("R", "R0"):
            if key not in cfg:
                raise ProfileError(key, "missing required field")
            if not isinstance(cfg[key], (int, float)) or isinstance(cfg[key], bool):
                raise ProfileError(key, f"must be a number, got {cfg[key]!r}")
        raw = cfg.get("pieces", [])
        if not isinstance(raw, list):
            raise ProfileError("pieces", "must be a list")
        pieces = []
        for i, item in enumerate(raw):
            if not isinstance(item, dict):
                raise ProfileError(f"pieces[{i}]", "must be an object with from/to/coeffs")
            for key in ("from", "to", "coeffs"):
                if key not in item:
                    raise ProfileError(f"pieces[{i}].{key}", "missing required field")
            coeffs = item["coeffs"]
            if not isinstance(coeffs, list) or not all(
                isinstance(c, (int, float)) and not isinstance(c, bool) for c in coeffs
            ):
                raise ProfileError(f"pieces[{i}].coeffs", "must be a list of numbers")
            for key in ("from", "to"):
                if not isinstance(item[key], (int, float)) or isinstance(item[key], bool):
                    raise ProfileError(f"pieces[{i}].{key}", f"must be a number, got {item[key]!r}")
            pieces.append((item["from"], item["to"], coeffs))
        bw = cfg.get("blend_width", 0.0)
        if not isinstance(bw, (int, float)) or isinstance(bw, bool):
            raise ProfileError("blend_width", f"must be a number, got {bw!r}")
        return cls(cfg["R"], cfg["R0"], pieces, blend_width=bw, name=cfg.get("name"))

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self):
        return {
            "R": self.R,
            "R0": self.R0,
            "blend_width": self.blend_width,
            "pieces": [{"from": p.lo, "to": p.hi, "coeffs": list(p.coeffs)} for p in self.user_pieces],
            **({"name": self.name} if self.name else {}),
        }

    # -- evaluation -----------------------------------------------------
    def piece_index(self, r):
        return bisect.bisect_right(self._los, r) - 1

    def knots(self):
        """Finite piece boundaries (including 0)."""
        return [p.lo for p in self.pieces]

    def n(self, r):
        return self.derivs(r)[0]

    def derivs(self, r):
        """(n, n', n'') at scalar r, derivatives exact from the piece polynomials."""
        i = self.piece_index(r)
        t = r - self.pieces[i].lo
        return (
            _horner(self.pieces[i].coeffs, t),
            _horner(self._d1[i], t),
            _horner(self._d2[i], t),
        )

    def piece_functions(self, i):
        """Local coefficient tuples (n, n', n'') for piece i."""
        return self.pieces[i].coeffs, self._d1[i], self._d2[i]


def _matches_c2(p, q, x):
    for _ in range(3):
        a, b = p(x), q(x)
        if abs(a - b) > C2_RTOL * max(1.0, abs(a), abs(b)):
            return False
        p, q = p.deriv(), q.deriv()
    return True


def eval_n(profile, r):
    """n(r) for scalar or array r >= 0; total (1 outside all pieces)."""
    r = np.asarray(r, dtype=float)
    if r.ndim == 0:
        return profile.n(float(r))
    return np.array([profile.n(float(x)) for x in r.ravel()]).reshape(r.shape)


class LiouvilleMap:
    """xi(r) = int_0^r sqrt(n(rho)) d rho, cached at the profile knots."""

    def __init__(self, profile, tol=XI_TOL):
        self.profile = profile
        self.tol = tol
        knots = [p.lo for p in profile.pieces]
        cum = [0.0]
        for p in profile.pieces[:-1]:
            cum.append(cum[-1] + self._piece_integral(p, p.lo, p.hi))
        self.grid_r = np.array(knots)
        self.grid_xi = np.array(cum)
        # beyond the last knot n == 1, xi(r) = r + offset
        self.offset = self.grid_xi[-1] - self.grid_r[-1]

    def _piece_integral(self, piece, a, b):
        if b <= a:
            return 0.0
        c = piece.coeffs
        if len(c) == 1:
            return math.sqrt(c[0]) * (b - a)
        lo = piece.lo
        val, err = integrate.quad(
            lambda r: math.sqrt(_horner(c, r - lo)), a, b, epsabs=self.tol * 1e-2, epsrel=1e-13, limit=200
        )
        if err > self.tol:
            raise QuadratureFailure(f"xi quadrature on [{a}, {b}] reached error {err:.2e} > {self.tol:.1e}")
        return val

    def __call__(self, r):
        return eval_xi(self, r)

    def xi_scalar(self, r):
        if r < 0:
            raise OutOfRange(f"radius must be >= 0, got {r}")
        i = self.profile.piece_index(r)
        p = self.profile.pieces[i]
        return self.grid_xi[i] + self._piece_integral(p, p.lo, r)

    def inverse(self, xi):
        return invert_xi(self, xi)


def eval_xi(lmap, r):
    """Transformed radius xi(r)."""
    r = np.asarray(r, dtype=float)
    if r.ndim == 0:
        return lmap.xi_scalar(float(r))
    return np.array([lmap.xi_scalar(float(x)) for x in r.ravel()]).reshape(r.shape)


def invert_xi(lmap, xi, tol=1e-13):
    """Radius r with xi(r) = xi, by safeguarded Newton inside the bracketing piece."""
    xi_arr = np.asarray(xi, dtype=float)
    if xi_arr.ndim:
        return np.array([invert_xi(lmap, float(x), tol) for x in xi_arr.ravel()]).reshape(xi_arr.shape)
    xi = float(xi)
    if xi < 0 or not math.isfinite(xi):
        raise OutOfRange(f"xi must be finite and >= 0, got {xi}")
    i = int(np.searchsorted(lmap.grid_xi, xi, side="right")) - 1
    prof = lmap.profile
    p = prof.pieces[i]
    base = lmap.grid_xi[i]
    if not math.isfinite(p.hi):
        return p.lo + (xi - base)
    c = p.coeffs
    if len(c) == 1:
        return p.lo + (xi - base) / math.sqrt(c[0])
    a, b = p.lo, p.hi
    r = a + (xi - base) / math.sqrt(_horner(c, 0.5 * (b - a)))
    r = min(max(r, a), b)
    for _ in range(100):
        g = base + lmap._piece_integral(p, p.lo, r) - xi
        if g > 0:
            b = r
        else:
            a = r
        step = g / math.sqrt(_horner(c, r - p.lo))
        r_new = r - step
        if not (a < r_new < b):
            r_new = 0.5 * (a + b)
        if abs(r_new - r) < tol * max(1.0, abs(r)):
            return r_new
        r = r_new
    raise OutOfRange(f"xi inversion did not converge at xi={xi}")


class TransformedPotential:
    """q(xi) for the Liouville-normal form z'' + (k^2 - q - l(l+1)/xi^2) z = 0, z = n^(1/4) y.

    Derivatives of n are taken with respect to r and evaluated at r(xi).
    """

    def __init__(self, profile, l, lmap=None):
        if not profile.smooth:
            raise ProfileError("blend_width", "q requires a C^2 profile; use blend_width > 0")
        self.profile = profile
        self.l = int(l)
        self.lmap = lmap or LiouvilleMap(profile)

    def components_at_r(self, r, xi):
        n, dn, d2n = self.profile.derivs(r)
        L = self.l * (self.l + 1)
        return {
            "n2": d2n / (4.0 * n * n),
            "n1": -5.0 / 16.0 * dn * dn / n**3,
            "centrifugal": L / (r * r * n) - L / (xi * xi),
        }

    def components(self, xi):
        if xi <= 0:
            raise OutOfRange(f"q needs xi > 0, got {xi}")
        r = invert_xi(self.lmap, xi)
        return self.components_at_r(r, xi)

    def __call__(self, xi):
        return eval_q(self, xi)


def eval_q(pot, xi, l=None):
    """Transformed potential q(xi) for order ``l`` (defaults to ``pot.l``)."""
    if l is not None and l != pot.l:
        pot = TransformedPotential(pot.profile, l, pot.lmap)
    xi_arr = np.asarray(xi, dtype=float)
    if xi_arr.ndim:
        return np.array([eval_q(pot, float(x)) for x in xi_arr.ravel()]).reshape(xi_arr.shape)
    c = pot.components(float(xi))
    # centrifugal difference cancels exactly where xi == r
    return c["n2"] + c["n1"] + c["centrifugal"]


def full_potential(profile, l, r):
    """q + l(l+1)/xi^2 as a function of r; singular only at r = 0."""
    n, dn, d2n = profile.derivs(r)
    return d2n / (4.0 * n * n) - 5.0 / 16.0 * dn * dn / n**3 + l * (l + 1) / (r * r * n)
