"""Zeros of analytic functions in rectangles via the argument principle.

The winding number of f along a rectangle boundary is accumulated from
phase increments between consecutive samples; segments whose increment
reaches ``max_dphase`` (pi/2 by default) are bisected until it does not.
Rectangles with winding > 1 are quadrisected (bisected if elongated) at
jittered split lines.
Cells holding a single zero are polished by Newton's method; a cell whose
zeros stay together under shrinking circles is reported as one zero of that
multiplicity, located by the contour moment (centroid of the cluster).

Functions are passed as callables accepting a complex ndarray; plain scalar
callables are wrapped automatically.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryZero, NoConvergence

MAX_DPHASE = math.pi / 2
MAX_MULTIPLICITY = 4
CASCADE = (1.0, 0.25, 1 / 16)
MAX_DLOGMOD = 3.0
ASPECT = 2.0
DIFF_STEP = 1e-6  # relative step of the edge log-derivative
REL_NOISE = 1e-13  # default relative accuracy of f


@dataclass(frozen=True)
class Rect:
    re0: float
    re1: float
    im0: float
    im1: float

    def __post_init__(self):
        if not (self.re1 > self.re0 and self.im1 > self.im0):
            raise ValueError(f"rectangle has zero area: {self}")

    @classmethod
    def of(cls, r):
        return r if isinstance(r, Rect) else cls(*map(float, r))

    @property
    def width(self):
        return self.re1 - self.re0

    @property
    def height(self):
        return self.im1 - self.im0

    @property
    def diameter(self):
        return math.hypot(self.width, self.height)

    @property
    def center(self):
        return complex(0.5 * (self.re0 + self.re1), 0.5 * (self.im0 + self.im1))

    def corners(self):
        return (complex(self.re0, self.im0), complex(self.re1, self.im0),
                complex(self.re1, self.im1), complex(self.re0, self.im1))

    def contains(self, k, pad=0.0):
        return (self.re0 - pad <= k.real <= self.re1 + pad) and (self.im0 - pad <= k.imag <= self.im1 + pad)

    def split(self, fx=0.5, fy=0.5):
        """Quadrisect; elongated cells (aspect > 2) are bisected across the long side."""
        if self.width > ASPECT * self.height:
            x = self.re0 + fx * self.width
            return (Rect(self.re0, x, self.im0, self.im1), Rect(x, self.re1, self.im0, self.im1))
        if self.height > ASPECT * self.width:
            y = self.im0 + fy * self.height
            return (Rect(self.re0, self.re1, self.im0, y), Rect(self.re0, self.re1, y, self.im1))
        x = self.re0 + fx * self.width
        y = self.im0 + fy * self.height
        return (Rect(self.re0, x, self.im0, y), Rect(x, self.re1, self.im0, y),
                Rect(x, self.re1, y, self.im1), Rect(self.re0, x, y, self.im1))

    def dilate(self, d):
        return Rect(self.re0 - d, self.re1 + d, self.im0 - d, self.im1 + d)

    def as_tuple(self):
        return (self.re0, self.re1, self.im0, self.im1)


@dataclass
class Zero:
    k: complex
    multiplicity: int
    residual: float
    cell: Rect
    note: str = ""


@dataclass
class ZeroSet:
    zeros: list
    rect: Rect
    winding: int
    unresolved: list = field(default_factory=list)
    n_evals: int = 0

    @property
    def total_multiplicity(self):
        return sum(z.multiplicity for z in self.zeros)

    def points(self, expand=False):
        """Zero locations; with ``expand`` each appears ``multiplicity`` times."""
        if expand:
            return np.array([z.k for z in self.zeros for _ in range(z.multiplicity)], dtype=complex)
        return np.array([z.k for z in self.zeros], dtype=complex)

    def sorted(self):
        self.zeros.sort(key=lambda z: (round(z.k.real, 9), round(z.k.imag, 9)))
        return self

    def to_rows(self):
        return [(z.k.real, z.k.imag, z.multiplicity, z.residual) for z in self.zeros]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["re", "im", "multiplicity", "residual"])
            for re_, im_, m, res in self.to_rows():
                w.writerow([repr(float(re_)), repr(float(im_)), m, repr(float(res))])

    def to_dict(self):
        return {
            "rect": list(self.rect.as_tuple()),
            "winding": self.winding,
            "zeros": [{"re": z.k.real, "im": z.k.imag, "multiplicity": z.multiplicity,
                       "residual": z.residual, "cell": list(z.cell.as_tuple()),
                       **({"note": z.note} if z.note else {})} for z in self.zeros],
            "unresolved": [list(c.as_tuple()) for c in self.unresolved],
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def as_batch(f):
    """Wrap ``f`` so it maps a 1-D complex array to a complex array."""
    if getattr(f, "_etp_batch", False):
        return f

    def g(ks):
        ks = np.asarray(ks, dtype=complex)
        try:
            out = np.asarray(f(ks), dtype=complex)
            if out.shape == ks.shape:
                return out
        except (TypeError, ValueError):
            pass
        return np.array([complex(f(complex(k))) for k in ks.ravel()]).reshape(ks.shape)

    g._etp_batch = True
    g.__wrapped__ = f
    return g


# -- contour tracing ------------------------------------------------------

def _dphase(fa, fb):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.angle(fb / fa)



def _edge_key(a, b):
    pa, pb = (a.real, a.imag), (b.real, b.imag)
    return (pa, pb) if pa <= pb else (pb, pa)


class _Tracer:
    """Samples rectangle edges so consecutive phase increments stay below
    ``max_dphase`` and |f| changes by less than a factor e**MAX_DLOGMOD.

    Each sample also carries the log-derivative f'/f along the edge, and a
    segment of length h is split while h |f'/f| >= ``max_dphase`` at either
    end. Without it, a zero of even multiplicity close to an edge turns the
    phase by a multiple of 2 pi between two samples and is missed.

    Edges are cached by their endpoints so lines shared by neighbouring cells
    are sampled once. All edges requested together are refined in lockstep,
    one batched evaluation per round. ``level`` doubles the initial density
    per step and is used to re-count cells whose counts disagree.
    """

    def __init__(self, g, spacing, max_dphase=MAX_DPHASE, min_len=1e-12):
        self.g = g
        self.spacing = spacing
        self.max_dphase = max_dphase
        self.min_len = min_len
        self.edges = {}

    def trace(self, pairs, level=0):
        jobs = {}
        for a, b in pairs:
            key = _edge_key(a, b)
            hit = self.edges.get(key)
            if key in jobs or (hit is not None and hit[2] >= level):
                continue
            lo, hi = complex(*key[0]), complex(*key[1])
            n0 = max(8, int(math.ceil(abs(hi - lo) / self.spacing))) << level
            jobs[key] = [lo, hi, np.linspace(0.0, 1.0, n0 + 1), None, None]
        if not jobs:
            return
        self._eval(jobs.values(), [j[2] for j in jobs.values()], fresh=True)
        live = dict(jobs)
        while live:
            todo, mids = [], []
            for key, job in list(live.items()):
                lo, hi, t, fs, ld = job
                if np.any(fs == 0) or not np.all(np.isfinite(fs)) or not np.all(np.isfinite(ld)):
                    self.edges[key] = (None, None, level, f"f vanishes or is not finite on edge {lo}->{hi}")
                    del live[key]
                    continue
                with np.errstate(divide="ignore"):
                    dmod = np.abs(np.log(np.abs(fs[1:] / fs[:-1])))
                reach = np.diff(t) * abs(hi - lo) * np.maximum(ld[1:], ld[:-1])
                bad = np.nonzero((np.abs(_dphase(fs[:-1], fs[1:])) >= self.max_dphase)
                                 | (dmod > MAX_DLOGMOD) | (reach >= self.max_dphase))[0]
                if not bad.size:
                    self.edges[key] = (lo + (hi - lo) * t, fs, level, None)
                    del live[key]
                    continue
                if np.any(np.diff(t)[bad] * abs(hi - lo) < self.min_len):
                    k_bad = lo + (hi - lo) * t[bad[0]]
                    self.edges[key] = (None, None, level, f"unresolvable phase jump near {k_bad}")
                    del live[key]
                    continue
                todo.append((job, bad))
                mids.append(0.5 * (t[bad] + t[bad + 1]))
            if not todo:
                break
            fm = self._eval([j for j, _ in todo], mids)
            for (job, bad), tm, (f_new, ld_new) in zip(todo, mids, fm):
                job[2] = np.insert(job[2], bad + 1, tm)
                job[3] = np.insert(job[3], bad + 1, f_new)
                job[4] = np.insert(job[4], bad + 1, ld_new)

    def _eval(self, jobs, ts, fresh=False):
        """Values and |f'/f| along the edge (forward difference) at parameters ``ts``."""
        jobs = list(jobs)
        ks = [j[0] + (j[1] - j[0]) * t for j, t in zip(jobs, ts)]
        steps = [DIFF_STEP * np.maximum(1.0, np.abs(k)) * (j[1] - j[0]) / abs(j[1] - j[0])
                 for j, k in zip(jobs, ks)]
        n = sum(k.size for k in ks)
        vals = self.g(np.concatenate(ks + [k + h for k, h in zip(ks, steps)]))
        out, i = [], 0
        for k, h in zip(ks, steps):
            f0, f1 = vals[i:i + k.size], vals[n + i:n + i + k.size]
            with np.errstate(divide="ignore", invalid="ignore"):
                out.append((f0, np.abs((f1 - f0) / (h * f0))))
            i += k.size
        if fresh:
            for j, (f, ld) in zip(jobs, out):
                j[3], j[4] = f, ld
        return out

    def edge(self, a, b):
        key = _edge_key(a, b)
        ks, fs, _, err = self.edges[key]
        if err:
            raise BoundaryZero(err)
        if (a.real, a.imag) == key[0]:
            return ks, fs
        return ks[::-1], fs[::-1]

    @staticmethod
    def sides(rect):
        c = rect.corners()
        return [(c[i], c[(i + 1) % 4]) for i in range(4)]

    def contour(self, rect, level=0):
        self.trace(self.sides(rect), level)
        parts = [self.edge(a, b) for a, b in self.sides(rect)]
        ks = np.concatenate([p[0][:-1] for p in parts] + [parts[0][0][:1]])
        fs = np.concatenate([p[1][:-1] for p in parts] + [parts[0][1][:1]])
        return ks, fs

    def winding(self, rect, level=0):
        return _winding(self.contour(rect, level)[1])


def _winding(fs):
    w = float(np.sum(_dphase(fs[:-1], fs[1:]))) / (2 * math.pi)
    wr = round(w)
    if abs(w - wr) > 1e-6:
        raise BoundaryZero(f"non-integer winding {w:.6f}")
    return int(wr)


def _moment(ks, fs):
    """First contour moment (1/2 pi i) ∮ k f'/f dk by the midpoint rule."""
    with np.errstate(divide="ignore", invalid="ignore"):
        dlog = np.log(np.abs(fs[1:] / fs[:-1])) + 1j * _dphase(fs[:-1], fs[1:])
    km = 0.5 * (ks[1:] + ks[:-1])
    return complex(np.sum(km * dlog) / (2j * math.pi))


# -- circles ----------------------------------------------------------------

def _circles(g, circles, n=64, max_n=8192, max_dphase=MAX_DPHASE):
    """Winding and zero centroid for each circle (c, rho); None where unresolvable.

    The centroid applies the trapezoid rule to the periodic function
    log f(k) - w log(k - c), which converges geometrically.
    """
    out = [None] * len(circles)
    pending = [(i, n) for i in range(len(circles))]
    while pending:
        phis = [2 * math.pi * np.arange(m) / m for _, m in pending]
        ks = np.concatenate([circles[i][0] + circles[i][1] * np.exp(1j * p)
                             for (i, _), p in zip(pending, phis)])
        vals = g(ks)
        nxt, pos = [], 0
        for (i, m), phi in zip(pending, phis):
            fs = vals[pos:pos + m]
            pos += m
            if np.any(fs == 0) or not np.all(np.isfinite(fs)):
                continue
            closed = np.append(fs, fs[0])
            dph = _dphase(closed[:-1], closed[1:])
            with np.errstate(divide="ignore"):
                dmod = np.abs(np.log(np.abs(closed[1:] / closed[:-1])))
            if np.max(np.abs(dph)) >= max_dphase or np.max(dmod) > MAX_DLOGMOD:
                if 2 * m <= max_n:
                    nxt.append((i, 2 * m))
                continue
            c, rho = circles[i]
            w = int(round(float(np.sum(dph)) / (2 * math.pi)))
            if w == 0:
                out[i] = (0, None)
                continue
            arg = np.angle(fs[0]) + np.concatenate([[0.0], np.cumsum(dph[:-1])])
            gper = np.log(np.abs(fs)) + 1j * (arg - w * phi)
            # Fourier coefficient p of gper is -sum_i ((z_i - c) / rho)^p / p
            sums = [-p * rho**p * np.mean(gper * np.exp(1j * p * phi)) for p in range(1, w + 1)]
            out[i] = (w, c + sums[0] / w, _spread(sums), float(np.max(np.abs(fs))))
        pending = nxt
    return out


def _spread(sums):
    """Largest distance from the centroid among the zeros with power sums ``sums``."""
    w = len(sums)
    if w < 2:
        return 0.0
    e = [1.0 + 0j]
    for p in range(1, w + 1):  # Newton's identities
        e.append(sum((-1) ** (i - 1) * e[p - i] * sums[i - 1] for i in range(1, p + 1)) / p)
    roots = np.roots([(-1) ** p * e[p] for p in range(w + 1)])
    return float(np.max(np.abs(roots - sums[0] / w)))


def circle_winding_and_centroid(f, c, rho, n=64):
    """Zeros (with multiplicity) inside |k - c| < rho and their centroid."""
    hit = _circles(as_batch(f), [(complex(c), float(rho))], n)[0]
    if hit is None:
        raise BoundaryZero(f"cannot resolve the phase on |k-{c}|={rho}")
    return hit[:2]


# -- Newton -------------------------------------------------------------------

_OMEGA = np.exp(2j * math.pi * np.arange(8) / 8)


def _value_and_derivative(g, k, h):
    """f(k) and f'(k) for arrays k; f' from the Cauchy integral on radius h."""
    pts = k[:, None] + h[:, None] * _OMEGA[None, :]
    vals = g(np.concatenate([k, pts.ravel()]))
    n = k.size
    return vals[:n], np.mean(vals[n:].reshape(n, -1) / _OMEGA, axis=1) / h


def newton_batch(f, seeds, tol=1e-12, h=None, *, maxiter=60, multiplicity=1):
    """Damped Newton for many seeds at once.

    Returns ``(k, residual, ok)``. A member converges when its step is below
    ``tol`` or, at the evaluation noise floor, when a step shorter than 1e-7
    (relative) no longer decreases |f|.
    """
    g = as_batch(f)
    k = np.array(seeds, dtype=complex).ravel()
    n = k.size
    h = np.full(n, np.nan) if h is None else np.broadcast_to(np.asarray(h, float), (n,)).copy()
    h = np.where(np.isfinite(h), h, 1e-3 * np.maximum(1.0, np.abs(k)))
    status = np.zeros(n, dtype=int)
    lam = np.ones(n)
    iters = np.zeros(n, dtype=int)
    fk, dk = _value_and_derivative(g, k, h)
    with np.errstate(divide="ignore", invalid="ignore"):
        step = multiplicity * fk / dk
    step[fk == 0] = 0
    while True:
        act = status == 0
        conv = act & (np.abs(step) < tol)
        k[conv] -= step[conv]
        status[conv] = 1
        status[(status == 0) & ~np.isfinite(step)] = -1
        status[(status == 0) & (iters >= maxiter)] = -1
        idx = np.nonzero(status == 0)[0]
        if not idx.size:
            break
        trial = k[idx] - lam[idx] * step[idx]
        ft, dt = _value_and_derivative(g, trial, h[idx])
        iters[idx] += 1
        better = np.abs(ft) < np.abs(fk[idx])
        tiny = lam[idx] * np.abs(step[idx]) < 1e-7 * np.maximum(1.0, np.abs(k[idx]))
        acc = idx[better]
        k[acc], fk[acc], dk[acc] = trial[better], ft[better], dt[better]
        with np.errstate(divide="ignore", invalid="ignore"):
            step[acc] = multiplicity * ft[better] / dt[better]
        step[acc[ft[better] == 0]] = 0
        lam[acc] = 1.0
        status[idx[~better & tiny]] = 1
        rej = idx[~better & ~tiny]
        lam[rej] *= 0.5
        status[rej[lam[rej] < 2.0 ** -30]] = -1
    ok = status == 1
    res = np.full(n, np.nan)
    if ok.any():
        res[ok] = np.abs(g(k[ok]))
    return k, res, ok


def refine_zero(f, seed, tol=1e-12, *, maxiter=60, multiplicity=1, h=None):
    """Polish one zero from ``seed``; returns (k, |f(k)|)."""
    k, res, ok = newton_batch(f, [seed], tol, h, maxiter=maxiter, multiplicity=multiplicity)
    if not ok[0]:
        raise NoConvergence(f"Newton did not converge from {seed}")
    return complex(k[0]), float(res[0])


# -- driver -------------------------------------------------------------------

def _top_level(tracer, rect, rng, attempts=6):
    for i in range(attempts):
        try:
            return rect, tracer.winding(rect)
        except BoundaryZero:
            if i == attempts - 1:
                raise
            rect = rect.dilate(1e-3 * rect.diameter * rng.uniform(0.5, 1.5))
    raise AssertionError("unreachable")


def count_zeros_rect(f, rect, *, spacing=None, seed=0):
    """Number of zeros (with multiplicity) inside ``rect``.

    If f vanishes on the boundary the rectangle is dilated by a small random
    amount (at most a few tries) before giving up with BoundaryZero.
    """
    rect = Rect.of(rect)
    tracer = _Tracer(as_batch(f), spacing or max(rect.width, rect.height) / 32)
    return _top_level(tracer, rect, np.random.default_rng(seed))[1]


def _seed(cell, ks, fs, w):
    c = _moment(ks, fs) / w
    return c if cell.contains(c) else cell.center


def _resolve_simple(g, tracer, cells, tol):
    if not cells:
        return []
    seeds, hs = [], []
    for cell, _, lv in cells:
        ks, fs = tracer.contour(cell, lv)
        s = _seed(cell, ks, fs, 1)
        seeds.append(s)
        hs.append(min(1e-3 * max(1.0, abs(s)), 0.25 * min(cell.width, cell.height)))
    k, res, ok = newton_batch(g, seeds, tol, np.array(hs))
    return [Zero(complex(kk), 1, float(r), cell) if good and cell.contains(kk, pad=tol) else None
            for (cell, _, _), kk, r, good in zip(cells, k, res, ok)]


def _resolve_multiple(g, tracer, cells, min_cell, noise):
    """Cells whose w zeros stay inside shrinking circles form one multiple zero.

    An error of size ``noise * S`` in f, with S the largest |f| on the cell
    boundary, splits a w-fold zero into a cluster of spread about
    rho * (noise * S / M)**(1/w), where M is the largest |f| on a circle of
    radius rho. Clusters measurably wider than that (from contour power sums)
    are distinct zeros and the cell is split further instead.
    """
    if not cells:
        return []
    centers, radii, scales = [], [], []
    for cell, w, lv in cells:
        ks, fs = tracer.contour(cell, lv)
        scales.append(float(np.max(np.abs(fs))))
        c = _seed(cell, ks, fs, w)
        # a circle inside the cell with the cell's winding holds exactly its zeros
        centers.append(c)
        radii.append(0.9 * min(c.real - cell.re0, cell.re1 - c.real, c.imag - cell.im0, cell.im1 - c.imag))
    alive = [i for i in range(len(cells)) if radii[i] > 0]
    for frac in CASCADE:
        hits = _circles(g, [(centers[i], radii[i] * frac) for i in alive])
        nxt = []
        for i, hit in zip(alive, hits):
            if hit is None or hit[0] != cells[i][1]:
                continue
            rho = radii[i] * frac
            if hit[2] > rho * (10 * noise * scales[i] / hit[3]) ** (1.0 / hit[0]):
                continue
            centers[i] = hit[1]
            nxt.append(i)
        alive = nxt
    out = [None] * len(cells)
    alive = [i for i in alive if cells[i][0].contains(centers[i])]
    if alive:
        ks = np.array([centers[i] for i in alive])
        res = np.abs(g(ks))
        for i, r in zip(alive, res):
            cell, w, _ = cells[i]
            out[i] = Zero(complex(centers[i]), w, float(r), cell,
                          "multiple" if cell.diameter > min_cell else "cluster")
    return out


def _split(tracer, cells, rng, unresolved, attempts=6):
    """Quadrisect at jittered lines; cells whose child counts do not add up are
    re-counted at a higher sampling level with fresh split lines."""
    out = []
    pending = list(cells)
    for _ in range(attempts):
        if not pending:
            break
        plans = []
        for cell, w, lv in pending:
            fx, fy = 0.5 + rng.uniform(-0.05, 0.05, size=2)
            plans.append((cell, w, lv, cell.split(fx, fy)))
        for lv in sorted({p[2] for p in plans}):
            pairs = []
            for cell, _, plv, kids in plans:
                if plv == lv:
                    for r in (cell, *kids):
                        pairs.extend(tracer.sides(r))
            tracer.trace(pairs, lv)
        pending = []
        for cell, w, lv, kids in plans:
            try:
                w = tracer.winding(cell, lv)
                ws = [tracer.winding(c, lv) for c in kids]
            except BoundaryZero:
                pending.append((cell, w, lv))
                continue
            if sum(ws) == w:
                out.extend((c, wc, lv) for c, wc in zip(kids, ws) if wc)
            else:
                pending.append((cell, w, lv + 1))
    unresolved.extend(cell for cell, _, _ in pending)
    return out


def locate_zeros(f, rect, target_tol=1e-10, *, spacing=None, min_cell=None, seed=0,
                 max_dphase=MAX_DPHASE, max_cells=20000, rel_noise=None):
    """All zeros of ``f`` inside ``rect`` with multiplicities.

    ``spacing`` is the initial sample spacing along edges (adaptive refinement
    follows); ``min_cell`` is the cell diameter below which a cell is no longer
    split. ``rel_noise`` is the relative accuracy of f (default: the
    attribute ``f.rel_noise`` if present, else REL_NOISE); it sets how tight
    a cluster must be to count as one multiple zero. Cells that cannot be
    resolved are listed in ``unresolved`` rather than guessed at.
    """
    noise = rel_noise if rel_noise is not None else getattr(f, "rel_noise", REL_NOISE)
    rect = Rect.of(rect)
    g = as_batch(f)
    rng = np.random.default_rng(seed)
    spacing = spacing or max(rect.width, rect.height) / 32
    min_cell = min_cell or max(1e4 * target_tol, 1e-7 * rect.diameter)
    tracer = _Tracer(g, spacing, max_dphase, min_len=1e-3 * min_cell)
    rect, w_total = _top_level(tracer, rect, rng)
    zeros, unresolved = [], []
    active = [(rect, w_total, 0)] if w_total else []
    n_cells = 0
    while active:
        n_cells += len(active)
        if n_cells > max_cells:
            unresolved.extend(c for c, _, _ in active)
            break
        simple = [a for a in active if a[1] == 1]
        multi = [a for a in active if 1 < a[1] <= MAX_MULTIPLICITY]
        found = dict(zip(map(id, simple), _resolve_simple(g, tracer, simple, target_tol)))
        found.update(zip(map(id, multi), _resolve_multiple(g, tracer, multi, min_cell, noise)))
        rest = []
        for a in active:
            z = found.get(id(a))
            if z is not None:
                zeros.append(z)
            elif a[0].diameter < min_cell:
                unresolved.append(a[0])
            else:
                rest.append(a)
        active = _split(tracer, rest, rng, unresolved)
    out = ZeroSet(_dedup(zeros, 10 * target_tol), rect, w_total, unresolved)
    out.n_evals = getattr(f, "n_evals", 0)
    return out.sorted()


def _dedup(zeros, radius):
    out = []
    for z in sorted(zeros, key=lambda z: (z.k.real, z.k.imag)):
        for o in out:
            if abs(o.k - z.k) <= radius:
                o.multiplicity += z.multiplicity
                o.note = (o.note + " merged").strip()
                break
        else:
            out.append(z)
    return out
