"""Value distribution of entire functions of exponential type.

Indicator h(theta) = lim ln|f(r e^{i theta})| / r, the width of the indicator
diagram d = h(pi/2) + h(-pi/2), and the counting function of zeros in angular
sectors. For Cartwright-class functions the zeros near the positive real
axis have density d / (2 pi); this module measures both sides of that
statement.

Functions are given either as callables returning values, or as objects with
a ``log_abs(k)`` method (e.g. :class:`etp.determinant.DeterminantFn`) so that
evaluations far off the real axis do not overflow.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .profile import LiouvilleMap
from .radial import regular_solution
from .zerofind import Rect, locate_zeros

LADDER_RATIO = 1.15
WINDOW = 10
DEFAULT_TOP = 150.0


def geometric_ladder(r0, r_top, ratio=LADDER_RATIO):
    """Radii r0 * ratio**j up to and including r_top."""
    if not (0 < r0 < r_top) or ratio <= 1:
        raise ValueError("need 0 < r0 < r_top and ratio > 1")
    n = int(math.floor(math.log(r_top / r0) / math.log(ratio)))
    radii = r0 * ratio ** np.arange(n + 1)
    if radii[-1] < r_top * (1 - 1e-12):
        radii = np.append(radii, r_top)
    return radii


def log_abs_of(f):
    """Vectorized k -> ln|f(k)| using the log-scaled evaluation when offered."""
    if hasattr(f, "log_abs"):
        return lambda ks: np.asarray(f.log_abs(np.asarray(ks, dtype=complex)), dtype=float)

    def la(ks):
        ks = np.asarray(ks, dtype=complex)
        try:
            vals = np.asarray(f(ks), dtype=complex)
            if vals.shape != ks.shape:
                raise ValueError
        except (TypeError, ValueError):
            vals = np.array([complex(f(complex(k))) for k in ks.ravel()]).reshape(ks.shape)
        with np.errstate(divide="ignore", over="ignore"):
            return np.log(np.abs(vals))

    return la


class RegularSolutionAt:
    """k -> y_l(r; k), the regular solution at a fixed radius, log-scaled."""

    def __init__(self, profile, l, r=None, method="interface"):
        self.profile = profile
        self.l = l
        self.r = profile.R0 if r is None else r
        self.method = method

    def log_abs(self, ks):
        ks = np.atleast_1d(np.asarray(ks, dtype=complex))
        y, _, log = regular_solution(self.profile, self.l, ks.ravel(), self.r, self.method)
        with np.errstate(divide="ignore"):
            return (np.log(np.abs(y)) + log).reshape(ks.shape)

    def __call__(self, ks):
        ks = np.atleast_1d(np.asarray(ks, dtype=complex))
        y, _, log = regular_solution(self.profile, self.l, ks.ravel(), self.r, self.method)
        return (y * np.exp(log)).reshape(ks.shape)


# -- indicator ----------------------------------------------------------------

@dataclass
class IndicatorEstimate:
    thetas: np.ndarray
    h: np.ndarray
    radii: np.ndarray
    ratios: np.ndarray  # ln|f(r e^{i theta})| / r, shape (n_theta, n_r)
    window_max: np.ndarray  # sliding-window maxima, shape (n_theta, n_windows)
    oscillation: np.ndarray  # rms residual of the extrapolation fit per theta
    tail: np.ndarray  # |last two window maxima| difference per theta

    def at(self, theta, atol=1e-9):
        i = np.nonzero(np.abs(self.thetas - theta) <= atol)[0]
        if not i.size:
            raise KeyError(f"theta={theta} not on the grid")
        return float(self.h[i[0]])

    def to_dict(self):
        return {"thetas": self.thetas.tolist(), "h": _jsonable(self.h), "radii": self.radii.tolist(),
                "oscillation": _jsonable(self.oscillation), "tail": _jsonable(self.tail)}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "h"])
            for t, h in zip(self.thetas, self.h):
                w.writerow([repr(float(t)), repr(float(h))])


def _jsonable(a):
    return [None if not np.isfinite(x) else float(x) for x in np.ravel(a)]


def _extrapolate(radii, row, window):
    """Window maxima of ``row`` and their linear extrapolation in 1/r to r = inf."""
    n = row.size
    win = min(window, n)
    starts = range(n - win + 1)
    vals, rs = [], []
    for s in starts:
        seg = row[s:s + win]
        j = int(np.argmax(seg))
        vals.append(seg[j])
        rs.append(radii[s + j])
    vals, rs = np.array(vals), np.array(rs)
    if not np.all(np.isfinite(vals)):
        if np.all(vals == -np.inf):
            return vals, -np.inf, 0.0
        keep = np.isfinite(vals)
        vals, rs = vals[keep], rs[keep]
    x = 1.0 / rs
    if np.ptp(x) == 0 or vals.size < 2:
        return vals, float(vals[-1]), 0.0
    coef = np.polyfit(x, vals, 1)
    resid = vals - np.polyval(coef, x)
    return vals, float(coef[1]), float(np.sqrt(np.mean(resid ** 2)))


def estimate_indicator(f, thetas, radii, *, window=WINDOW):
    """Indicator h(theta) of an order-one entire function on a ray grid.

    ln|f| dips towards -inf at zeros close to a ray, so each ratio sequence is
    replaced by maxima over sliding windows of ``window`` consecutive radii
    before extrapolating linearly in 1/r.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    radii = np.asarray(radii, dtype=float)
    la = log_abs_of(f)
    K = radii[None, :] * np.exp(1j * thetas[:, None])
    ratios = la(K.ravel()).reshape(K.shape) / radii[None, :]
    h = np.empty(thetas.size)
    osc = np.empty(thetas.size)
    tail = np.empty(thetas.size)
    maxima = []
    for i in range(thetas.size):
        vals, h[i], osc[i] = _extrapolate(radii, ratios[i], window)
        tail[i] = abs(vals[-1] - vals[-2]) if vals.size > 1 and np.all(np.isfinite(vals[-2:])) else 0.0
        maxima.append(vals)
    width = max(len(m) for m in maxima)
    wm = np.full((thetas.size, width), np.nan)
    for i, m in enumerate(maxima):
        wm[i, :len(m)] = m
    return IndicatorEstimate(thetas, h, radii, ratios, wm, osc, tail)


@dataclass
class IndicatorWidth:
    h_up: float
    h_down: float
    d: float
    predicted_density: float

    def to_dict(self):
        return {"h(pi/2)": self.h_up, "h(-pi/2)": self.h_down, "d": self.d,
                "predicted_density": self.predicted_density}


def width_and_prediction(ind):
    """d = h(pi/2) + h(-pi/2) and the predicted density d / (2 pi)."""
    try:
        up, down = ind.at(math.pi / 2), ind.at(-math.pi / 2)
    except KeyError:
        raise ValueError("indicator must be estimated at theta = +-pi/2") from None
    d = up + down
    return IndicatorWidth(up, down, d, d / (2 * math.pi))


def determinant_width_predictions(profile):
    """Candidate indicator widths for D_l(k; R0) of a perturbed profile.

    ``stated``: d = xi(R0) + R0. ``composed``: summing the indicators of
    j_l'(k R0) and y_l(R0; k), each of the form sigma |sin theta|, gives
    d = 2 (xi(R0) + R0). ``support``: outside the support D is a Wronskian
    of two exterior solutions, whose type is max over the support of
    r + xi(r), reached at the outer support edge; d = 2 (s + xi(s)).
    """
    lmap = LiouvilleMap(profile)
    xi0 = float(lmap(profile.R0))
    out = {"xi(R0)": xi0, "R0": profile.R0,
           "stated": {"d": xi0 + profile.R0}, "composed": {"d": 2 * (xi0 + profile.R0)}}
    if profile.support_hi is not None:
        s = profile.support_hi
        out["support"] = {"d": 2 * (s + float(lmap(s))), "support_hi": s}
    for v in out.values():
        if isinstance(v, dict):
            v["density"] = v["d"] / (2 * math.pi)
    return out


# -- zero density ---------------------------------------------------------------

def in_sector(k, alpha, beta):
    """arg k in [alpha, beta] (angles in (-pi, pi]); k = 0 counts for any sector containing 0."""
    a = np.angle(k)
    return (a >= alpha) & (a <= beta)


class TiledZeroProvider:
    """Zeros of f in the part of the disk |k| <= r_top lying in a sector.

    The sector's bounding box (optionally clipped to |Im k| <= im_cap, for
    functions whose zeros are known to stay in a strip) is covered by tiles
    whose edges are shifted by a seeded offset so they avoid lattice-like zero
    sets. Zeros are computed once and filtered for each radius.
    """

    def __init__(self, f, *, tile=10.0, im_cap=None, target_tol=1e-8, seed=0, r_min=0.0,
                 spacing=None):
        self.f = f
        self.tile = tile
        self.im_cap = im_cap
        self.target_tol = target_tol
        self.seed = seed
        self.r_min = r_min
        self.spacing = spacing
        self.zeros = None  # list of (k, multiplicity)
        self.unresolved = []
        self._box = None

    def _bbox(self, sector, r_top):
        alpha, beta = sector
        angles = [alpha, beta] + [t for t in (-math.pi / 2, 0.0, math.pi / 2, math.pi) if alpha <= t <= beta]
        pts = [0j] + [r_top * complex(math.cos(t), math.sin(t)) for t in angles]
        re0, re1 = min(p.real for p in pts), max(p.real for p in pts)
        im0, im1 = min(p.imag for p in pts), max(p.imag for p in pts)
        if self.im_cap is not None:
            im0, im1 = max(im0, -self.im_cap), min(im1, self.im_cap)
        re0 = max(re0, self.r_min) if self.r_min > 0 and alpha >= -math.pi / 2 and beta <= math.pi / 2 else re0
        return re0, re1, im0, im1

    def tiles(self, sector, r_top):
        rng = np.random.default_rng(self.seed)
        re0, re1, im0, im1 = self._bbox(sector, r_top)
        off = self.tile * rng.uniform(0.013, 0.037, size=4)
        re0, re1, im0, im1 = re0 - off[0], re1 + off[1], im0 - off[2], im1 + off[3]
        nx = max(1, int(math.ceil((re1 - re0) / self.tile)))
        ny = max(1, int(math.ceil((im1 - im0) / self.tile)))
        xs = np.linspace(re0, re1, nx + 1)
        ys = np.linspace(im0, im1, ny + 1)
        return [Rect(xs[i], xs[i + 1], ys[j], ys[j + 1]) for i in range(nx) for j in range(ny)]

    def collect(self, sector, r_top):
        zeros, unresolved = [], []
        for n, rect in enumerate(self.tiles(sector, r_top)):
            zs = locate_zeros(self.f, rect, self.target_tol, seed=self.seed + n, spacing=self.spacing)
            zeros.extend((z.k, z.multiplicity) for z in zs.zeros)
            unresolved.extend(zs.unresolved)
        self.zeros, self.unresolved = zeros, unresolved
        self._box = (tuple(sector), r_top)
        return zeros

    def count(self, sector, r):
        if self.zeros is None or self._box[1] < r or not _covers(self._box[0], sector):
            self.collect(sector, r)
        return sum(m for k, m in self.zeros if abs(k) <= r and in_sector(k, *sector))


def _covers(outer, inner):
    return outer[0] <= inner[0] and inner[1] <= outer[1]


@dataclass
class DensityEstimate:
    sector: tuple
    radii: np.ndarray
    counts: np.ndarray
    slope: float
    intercept: float
    fit_from: int  # index of the first radius used in the fit
    unresolved: list = field(default_factory=list)

    def to_dict(self):
        return {"sector": list(self.sector), "radii": self.radii.tolist(),
                "counts": self.counts.tolist(), "slope": self.slope, "intercept": self.intercept,
                "fit_from": self.fit_from, "unresolved": [list(r.as_tuple()) for r in self.unresolved]}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "N", "N_over_r"])
            for r, n in zip(self.radii, self.counts):
                w.writerow([repr(float(r)), int(n), repr(float(n / r))])


def estimate_density(provider, sector, radii):
    """Zero counts N(r) in a sector and the least-squares slope of N against r
    over the upper half of the ladder.

    ``provider`` is either a :class:`TiledZeroProvider` or any callable
    ``(sector, r) -> count``.
    """
    radii = np.asarray(radii, dtype=float)
    sector = (float(sector[0]), float(sector[1]))
    if sector[0] > sector[1]:
        raise ValueError("sector needs alpha <= beta")
    count = provider.count if hasattr(provider, "count") else provider
    if hasattr(provider, "collect"):
        provider.collect(sector, float(radii.max()))
    counts = np.array([count(sector, r) for r in radii], dtype=int)
    start = radii.size // 2
    if radii.size - start < 2:
        start = 0
    slope, intercept = np.polyfit(radii[start:], counts[start:], 1)
    return DensityEstimate(sector, radii, counts, float(slope), float(intercept), start,
                           list(getattr(provider, "unresolved", [])))


# -- indicator algebra ------------------------------------------------------------

@dataclass
class AlgebraReport:
    thetas: np.ndarray
    product_gap: np.ndarray  # h_f + h_g - h_fg, must be >= -slack
    sum_gap: np.ndarray  # max(h_f, h_g) - h_{f+g}, must be >= -slack
    slack: float
    product_ok: bool
    sum_ok: bool

    @property
    def passed(self):
        return self.product_ok and self.sum_ok

    def rows(self):
        return [(float(t), float(p), float(s), p >= -self.slack, s >= -self.slack)
                for t, p, s in zip(self.thetas, self.product_gap, self.sum_gap)]

    def to_dict(self):
        return {"thetas": self.thetas.tolist(), "product_gap": _jsonable(self.product_gap),
                "sum_gap": _jsonable(self.sum_gap), "slack": self.slack,
                "product_ok": self.product_ok, "sum_ok": self.sum_ok}


def _gap(upper, lower):
    # -inf (identically zero function) satisfies any upper bound
    out = np.where(lower == -np.inf, np.inf, upper - lower)
    return np.where(np.isnan(out), np.inf, out)


def check_indicator_algebra(h_f, h_g, h_fg, h_fplusg, *, slack=0.05):
    """h_fg <= h_f + h_g and h_{f+g} <= max(h_f, h_g) on a common theta grid.

    Arguments are IndicatorEstimates (or plain arrays on the same grid). An
    identically vanishing function has indicator -inf; the inequalities then
    hold trivially. Gaps are reported so equality cases can be inspected.
    """
    def arr(x):
        return np.asarray(x.h if isinstance(x, IndicatorEstimate) else x, dtype=float)

    thetas = h_f.thetas if isinstance(h_f, IndicatorEstimate) else np.arange(arr(h_f).size, dtype=float)
    f, g, fg, fpg = arr(h_f), arr(h_g), arr(h_fg), arr(h_fplusg)
    pg = _gap(f + g, fg)
    sg = _gap(np.maximum(f, g), fpg)
    return AlgebraReport(np.asarray(thetas), pg, sg, slack,
                         bool(np.all(pg >= -slack)), bool(np.all(sg >= -slack)))


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj.to_dict() if hasattr(obj, "to_dict") else obj, fh, indent=2)
