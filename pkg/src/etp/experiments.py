"""Reproducible experiments on the transmission determinant.

A :class:`SpectrumJob` describes a profile, the angular orders to scan and a
search rectangle. :func:`run_spectrum_job` finds the zeros of D_l(k; R0) for
every l, :func:`compare_profiles` matches the spectra of two jobs, and the
remaining helpers check structural properties of D (dependence on the
evaluation radius, behaviour inside the cavity at an eigenvalue).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cartwright import determinant_width_predictions, estimate_density
from .determinant import DeterminantFn
from .errors import EtpError, OutOfRange
from .profile import RadialProfile
from .radial import ATOL, METHODS, RTOL, propagate
from .specfun import sph_bessel_j, sph_bessel_j_prime, sph_bessel_j_scaled
from .zerofind import Rect, locate_zeros, newton_batch

K_MAX = 200.0
DEFAULT_RECT = (0.3, 30.0, -3.0, 3.0)
DISTINGUISHABLE = "DISTINGUISHABLE"
INDISTINGUISHABLE = "INDISTINGUISHABLE-AT-SCALE"
DEGENERATE = "DEGENERATE"


@dataclass
class SpectrumJob:
    profile: dict
    l_values: list = field(default_factory=lambda: [0])
    rect: tuple = DEFAULT_RECT
    tol: float = 1e-8
    rtol: float = RTOL
    atol: float = ATOL
    method: str = "interface"
    seed: int = 0
    out: str | None = None
    formats: tuple = ("csv", "json")
    density_sector: float = 0.1  # half-angle of the near-real-axis sector

    def __post_init__(self):
        self.rect = tuple(float(x) for x in self.rect)
        Rect.of(self.rect)
        corners = [complex(self.rect[i], self.rect[j]) for i in (0, 1) for j in (2, 3)]
        if max(abs(c) for c in corners) > K_MAX:
            raise OutOfRange(f"search rectangle leaves the audited range |k| <= {K_MAX:g}")
        self.l_values = sorted({int(l) for l in self.l_values})
        if not self.l_values or self.l_values[0] < 0:
            raise ValueError("l_values must be non-negative integers")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        self.formats = tuple(self.formats)

    @classmethod
    def from_dict(cls, cfg):
        cfg = dict(cfg)
        if "profile" not in cfg:
            raise ValueError("job config needs a 'profile' object")
        if "l_max" in cfg:
            cfg["l_values"] = list(range(int(cfg.pop("l_max")) + 1))
        if "l" in cfg:
            l = cfg.pop("l")
            cfg["l_values"] = list(l) if isinstance(l, (list, tuple)) else [l]
        known = set(cls.__dataclass_fields__)
        extra = set(cfg) - known
        if extra:
            raise ValueError(f"unknown job fields: {sorted(extra)}")
        return cls(**cfg)

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self):
        d = asdict(self)
        d["rect"] = list(self.rect)
        d["formats"] = list(self.formats)
        return d

    def build_profile(self):
        return RadialProfile.from_dict(self.profile)


@dataclass
class SpectrumResult:
    job: SpectrumJob
    degenerate: bool
    zero_sets: dict  # l -> ZeroSet
    errors: dict  # l -> message
    densities: dict  # l -> DensityEstimate
    predictions: dict | None

    def merged(self):
        """All zeros as (l, k, multiplicity, residual), sorted."""
        rows = [(l, z.k, z.multiplicity, z.residual) for l, zs in self.zero_sets.items() for z in zs.zeros]
        return sorted(rows, key=lambda r: (r[0], round(r[1].real, 9), round(r[1].imag, 9)))

    def summary(self):
        return {
            "verdict": DEGENERATE if self.degenerate else "OK",
            "rect": list(self.job.rect),
            "per_l": {str(l): {"zeros": len(zs.zeros), "with_multiplicity": zs.total_multiplicity,
                               "winding": zs.winding, "unresolved": len(zs.unresolved)}
                      for l, zs in self.zero_sets.items()},
            "errors": {str(l): m for l, m in self.errors.items()},
            "density": {str(l): d.to_dict() for l, d in self.densities.items()},
            "width_predictions": self.predictions,
        }


def _zero_density(zs, half_angle, r_top):
    """Counting function of the zeros already found, in |arg k| <= half_angle."""
    pts = [(z.k, z.multiplicity) for z in zs.zeros]

    def count(sector, r):
        return sum(m for k, m in pts if abs(k) <= r and sector[0] <= math.atan2(k.imag, k.real) <= sector[1])

    r0 = max(1.0, r_top / 8)
    radii = np.linspace(r0, r_top, 16)
    return estimate_density(count, (-half_angle, half_angle), radii)


def run_spectrum_job(job, *, write=True):
    """Zero sets of D_l(k; R0) for each l in the job.

    A profile with n = 1 everywhere makes D vanish identically; the job is then
    flagged DEGENERATE without calling the root finder. Failures for one l are
    recorded and the remaining orders still run.
    """
    profile = job.build_profile()
    result = SpectrumResult(job, profile.is_trivial, {}, {}, {}, None)
    if not profile.is_trivial:
        result.predictions = determinant_width_predictions(profile)
        for i, l in enumerate(job.l_values):
            df = DeterminantFn(profile, l, method=job.method, rtol=job.rtol, atol=job.atol)
            try:
                zs = locate_zeros(df, job.rect, job.tol, seed=job.seed + i)
            except EtpError as exc:
                result.errors[l] = f"{type(exc).__name__}: {exc}"
                continue
            result.zero_sets[l] = zs
            if zs.zeros and job.rect[1] > 0:
                result.densities[l] = _zero_density(zs, job.density_sector, job.rect[1])
    if write and job.out:
        write_spectrum(result, job.out)
    return result


def write_spectrum(result, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    fmts = result.job.formats
    for l, zs in result.zero_sets.items():
        if "csv" in fmts:
            zs.to_csv(out / f"zeros_l{l}.csv")
        if "json" in fmts:
            zs.to_json(out / f"zeros_l{l}.json")
    if "csv" in fmts:
        with open(out / "zeros_merged.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["l", "re", "im", "multiplicity", "residual"])
            for l, k, m, res in result.merged():
                w.writerow([l, repr(float(k.real)), repr(float(k.imag)), m, repr(float(res))])
    with open(out / "report.json", "w") as fh:
        json.dump(result.summary(), fh, indent=2)


# -- locality in the evaluation radius -------------------------------------------

@dataclass
class LocalityReport:
    k: complex
    radii: np.ndarray
    values: np.ndarray  # D(k; r)
    variation: float  # max |D(r) - D(r_0)| / |D(r_0)|
    scaled_variation: float  # same for r^2 D(r)
    transition_radius: float | None  # smallest r beyond which r^2 D is constant
    support_hi: float | None

    def to_dict(self):
        return {"k": [self.k.real, self.k.imag], "radii": self.radii.tolist(),
                "re_D": self.values.real.tolist(), "im_D": self.values.imag.tolist(),
                "variation": self.variation, "scaled_variation": self.scaled_variation,
                "transition_radius": self.transition_radius, "support_hi": self.support_hi}


def _rel_variation(v):
    ref = v[0]
    if np.all(v == 0):
        return 0.0
    if ref == 0:
        return math.inf
    return float(np.max(np.abs(v - ref)) / abs(ref))


def locality_scan(profile, l, k, r_range, *, n=41, const_tol=1e-6, method="interface",
                  rtol=RTOL, atol=ATOL):
    """D_l(k; r) for r across ``r_range`` and how much it changes.

    Where n = 1 both columns of D solve the same equation, so D(r) r^2 is a
    Wronskian and exactly constant; D itself then decays like 1/r^2. Both
    variations are reported. The transition radius is the smallest grid
    radius from which r^2 D stays within ``const_tol`` (relative) of its value
    at the top of the range.
    """
    k = complex(k)
    radii = np.linspace(float(r_range[0]), float(r_range[1]), n)
    vals = np.array([complex(DeterminantFn(profile, l, r, method=method, rtol=rtol, atol=atol,
                                           memo=False)(k)) for r in radii])
    scaled = vals * radii ** 2
    transition = None
    if not np.all(vals == 0):
        top = scaled[-1]
        dev = np.abs(scaled - top) / max(abs(top), 1e-300)
        flat = dev <= const_tol
        i = n - 1
        while i > 0 and flat[i - 1]:
            i -= 1
        transition = float(radii[i])
    return LocalityReport(k, radii, vals, _rel_variation(vals), _rel_variation(scaled), transition,
                          profile.support_hi)


# -- behaviour inside the cavity ----------------------------------------------------

@dataclass
class InteriorReport:
    k: complex
    radii: np.ndarray
    mismatch: float  # max |y/r - c j_l(kr)| / max |c j_l(kr)| on the grid
    wronskian: float  # |W(y/r, j_l(kr))| at r = R over the norms of both Cauchy data
    coefficient: complex

    def to_dict(self):
        return {"k": [self.k.real, self.k.imag], "mismatch": self.mismatch,
                "wronskian": self.wronskian, "coefficient": [self.coefficient.real, self.coefficient.imag]}


def interior_vanishing_check(profile, l, k, *, n=40, r_min_frac=0.1, rtol=RTOL, atol=ATOL):
    """Carry the exterior solution r j_l(kr) at R0 inward to the cavity.

    At an eigenvalue, D(k; R0) = 0 makes this the regular solution up to a
    constant, so inside the cavity it equals c r j_l(kr); otherwise an
    irregular r y_l(kr) component appears. Reports the relative deviation from
    the best-fitting c j_l on r in [r_min_frac R, R], and the normalized
    Wronskian of y/r against j_l(kr) at r = R.
    """
    k = complex(k)
    R, R0 = profile.R, profile.R0
    radii = np.linspace(R, r_min_frac * R, n)
    if profile.is_trivial:
        return InteriorReport(k, radii, 0.0, 0.0, complex(1.0))
    ks = np.array([k])
    J, Jp = sph_bessel_j_scaled(l, ks * R0)
    y, dy = R0 * J, J + k * R0 * Jp
    log = np.abs((ks * R0).imag)
    ys, dys = [], []
    r_prev = R0
    for r in radii:
        y, dy, log, _ = propagate(profile, l, ks, r_prev, r, y, dy, log, rtol=rtol, atol=atol)
        ys.append(y[0] * math.exp(log[0]))
        dys.append(dy[0] * math.exp(log[0]))
        r_prev = r
    ys, dys = np.array(ys), np.array(dys)
    f = ys / radii
    j = sph_bessel_j(l, k * radii)
    c = complex(np.vdot(j, f) / np.vdot(j, j))
    scale = np.max(np.abs(c * j))
    mismatch = float(np.max(np.abs(f - c * j)) / scale) if scale > 0 else math.inf
    # sine of the angle between the Cauchy data (f, f'/k) and (j_l, j_l') at r = R
    u = np.array([ys[0] / R, (dys[0] * R - ys[0]) / (k * R ** 2)])
    v = np.array([complex(sph_bessel_j(l, k * R)), complex(sph_bessel_j_prime(l, k * R))])
    wr = abs(u[0] * v[1] - u[1] * v[0]) / (np.linalg.norm(u) * np.linalg.norm(v))
    return InteriorReport(k, radii, mismatch, float(wr), c)


# -- comparing two spectra --------------------------------------------------------------

@dataclass
class ComparisonReport:
    results: tuple  # the two SpectrumResults
    unmatched: dict  # l -> (count only in first, count only in second)
    near_edge: dict  # l -> zeros ignored because they sit within the match radius of the boundary
    density_gap: dict  # l -> slope difference
    verdict: str
    radius: float

    @property
    def symmetric_difference(self):
        return sum(a + b for a, b in self.unmatched.values())

    def to_dict(self):
        return {"verdict": self.verdict, "match_radius": self.radius,
                "symmetric_difference": self.symmetric_difference,
                "unmatched": {str(l): list(v) for l, v in self.unmatched.items()},
                "near_edge": {str(l): v for l, v in self.near_edge.items()},
                "density_gap": {str(l): v for l, v in self.density_gap.items()},
                "first": self.results[0].summary(), "second": self.results[1].summary()}


def _unmatched(a, b, radius, rect):
    """Multiplicity-weighted count of zeros of ``a`` with no partner in ``b``."""
    pts_b = np.array([z.k for z in b], dtype=complex)
    mult_b = np.array([z.multiplicity for z in b])
    count, edge = 0, 0
    for z in a:
        if (z.k.real - rect.re0 < radius or rect.re1 - z.k.real < radius
                or z.k.imag - rect.im0 < radius or rect.im1 - z.k.imag < radius):
            edge += 1
            continue
        if pts_b.size:
            d = np.abs(pts_b - z.k)
            i = int(np.argmin(d))
            if d[i] <= radius:
                count += max(0, z.multiplicity - int(mult_b[i]))
                continue
        count += z.multiplicity
    return count, edge


def compare_profiles(job1, job2, *, results=None):
    """Match the zero sets of two jobs order by order.

    The verdict is DISTINGUISHABLE when some zero of one job has no partner
    within 10 tol in the other (zeros within that distance of the rectangle
    boundary are ignored). A degenerate job (n = 1) differs from any
    non-degenerate one.
    """
    if tuple(job1.rect) != tuple(job2.rect) or job1.l_values != job2.l_values:
        raise ValueError("compared jobs need identical rectangles and l-ranges")
    r1, r2 = results or (run_spectrum_job(job1, write=False), run_spectrum_job(job2, write=False))
    radius = 10 * max(job1.tol, job2.tol)
    rect = Rect.of(job1.rect)
    unmatched, edge, gap = {}, {}, {}
    if r1.degenerate or r2.degenerate:
        verdict = INDISTINGUISHABLE if r1.degenerate and r2.degenerate else DISTINGUISHABLE
        return ComparisonReport((r1, r2), unmatched, edge, gap, verdict, radius)
    for l in job1.l_values:
        z1 = r1.zero_sets[l].zeros if l in r1.zero_sets else []
        z2 = r2.zero_sets[l].zeros if l in r2.zero_sets else []
        a, ea = _unmatched(z1, z2, radius, rect)
        b, eb = _unmatched(z2, z1, radius, rect)
        unmatched[l] = (a, b)
        edge[l] = ea + eb
        if l in r1.densities and l in r2.densities:
            gap[l] = r1.densities[l].slope - r2.densities[l].slope
    verdict = DISTINGUISHABLE if any(a or b for a, b in unmatched.values()) else INDISTINGUISHABLE
    return ComparisonReport((r1, r2), unmatched, edge, gap, verdict, radius)


# -- invariant suite -------------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def conjugate_closure(zs, radius):
    """Zeros whose mirror image lies in the rectangle but has no partner."""
    rect = zs.rect
    pts = zs.points()
    missing = []
    for z in zs.zeros:
        m = z.k.conjugate()
        if not rect.contains(m, pad=-radius):
            continue
        if not pts.size or np.min(np.abs(pts - m)) > radius:
            missing.append(z.k)
    return missing


def stability_audit(profile, l, zeros, *, method="interface", rtol=RTOL, atol=ATOL, factor=10.0):
    """Re-polish zeros with integrator tolerances tightened by ``factor``.

    Returns the largest displacement relative to max(1, |k|); simple zeros only
    (multiple zeros are located by contour centroids, not Newton).
    """
    ks = np.array([z.k for z in zeros if z.multiplicity == 1], dtype=complex)
    if not ks.size:
        return 0.0
    tight = DeterminantFn(profile, l, method=method, rtol=rtol / factor, atol=atol / factor)
    new, _, ok = newton_batch(tight, ks, 1e-13)
    moved = np.abs(new - ks) / np.maximum(1.0, np.abs(ks))
    return float(np.max(np.where(ok, moved, np.inf)))


def validate_job(job, result=None):
    """Invariant checks for a job: count conservation, residuals, conjugate
    symmetry, stability under tightened tolerances and locality in r."""
    result = result or run_spectrum_job(job, write=False)
    profile = job.build_profile()
    checks = []
    if result.degenerate:
        df = DeterminantFn(profile, job.l_values[0])
        ks = np.linspace(job.rect[0], job.rect[1], 7) + 1j * np.linspace(job.rect[2], job.rect[3], 7)
        vmax = float(np.max(np.abs(df(ks))))
        checks.append(Check("degenerate determinant vanishes", vmax == 0.0, f"max |D| = {vmax:.3g}"))
        return checks
    radius = 10 * job.tol
    for l in job.l_values:
        if l in result.errors:
            checks.append(Check(f"l={l} solver", False, result.errors[l]))
            continue
        zs = result.zero_sets[l]
        checks.append(Check(f"l={l} count conservation", zs.total_multiplicity == zs.winding and not zs.unresolved,
                            f"sum of multiplicities {zs.total_multiplicity}, winding {zs.winding}, "
                            f"unresolved cells {len(zs.unresolved)}"))
        inside = all(z.cell.contains(z.k, pad=job.tol) for z in zs.zeros)
        checks.append(Check(f"l={l} zeros inside provenance cells", inside, ""))
        missing = conjugate_closure(zs, max(radius, 1e-6))
        checks.append(Check(f"l={l} conjugate closure", not missing, f"{len(missing)} unpaired"))
        moved = stability_audit(profile, l, zs.zeros, method=job.method, rtol=job.rtol, atol=job.atol)
        checks.append(Check(f"l={l} stability under 10x tighter tolerances", moved < 10 * job.rtol,
                            f"max relative displacement {moved:.3g}"))
    if profile.support_hi is not None:
        k = complex(0.5 * (job.rect[0] + job.rect[1]), 0.25 * (job.rect[2] + job.rect[3]))
        rep = locality_scan(profile, job.l_values[0], k, (profile.support_hi, profile.R0 + 1), n=9)
        checks.append(Check("r^2 D constant outside the support", rep.scaled_variation < 1e-6,
                            f"r^2 D variation {rep.scaled_variation:.3g}, raw D variation {rep.variation:.3g}"))
    return checks
