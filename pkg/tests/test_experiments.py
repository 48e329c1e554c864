import filecmp
import math

import numpy as np
import pytest

import etp.experiments as ex
from etp.errors import OutOfRange, StiffnessFailure
from etp.experiments import (DEGENERATE, DISTINGUISHABLE, INDISTINGUISHABLE, SpectrumJob, compare_profiles,
                             interior_vanishing_check, locality_scan, run_spectrum_job, validate_job)
from etp.profile import RadialProfile

from oracles import shell4_exact_zeros

SHARP4 = {"R": 1.0, "R0": 3.0, "pieces": [{"from": 1.0, "to": 2.0, "coeffs": [4.0]}]}
BLENDED4 = dict(SHARP4, blend_width=0.1)
TRIVIAL = {"R": 1.0, "R0": 3.0}
SHELL_RECT = (0.5, 15, -1.5, 1.5)


def shell(n0, lo=1.0, hi=2.0):
    return {"R": 1.0, "R0": 3.0, "pieces": [{"from": lo, "to": hi, "coeffs": [n0]}]}


def test_job_validation():
    with pytest.raises(OutOfRange):
        SpectrumJob(SHARP4, rect=(0.3, 250, -3, 3))
    with pytest.raises(ValueError):
        SpectrumJob.from_dict({"profile": SHARP4, "colour": 1})
    with pytest.raises(ValueError):
        SpectrumJob.from_dict({"l": 0})
    with pytest.raises(ValueError):
        SpectrumJob(SHARP4, rect=(1, 1, 0, 1))
    assert SpectrumJob.from_dict({"profile": SHARP4, "l_max": 2}).l_values == [0, 1, 2]
    assert SpectrumJob.from_dict({"profile": SHARP4, "l": 3}).l_values == [3]


def test_degenerate_job(tmp_path):
    res = run_spectrum_job(SpectrumJob(TRIVIAL, l_values=[0, 1], out=str(tmp_path)))
    assert res.degenerate and not res.zero_sets
    assert res.summary()["verdict"] == DEGENERATE
    assert (tmp_path / "report.json").exists()
    checks = validate_job(SpectrumJob(TRIVIAL))
    assert all(c.passed for c in checks)


def test_sharp_shell_job_matches_oracle():
    res = run_spectrum_job(SpectrumJob(SHARP4, rect=SHELL_RECT, tol=1e-10))
    zs = res.zero_sets[0]
    exact = shell4_exact_zeros(SHELL_RECT)
    assert len(zs.zeros) == len(exact)
    for k, m in exact:
        d = np.abs(zs.points() - k)
        assert d.min() < 1e-7 and zs.zeros[int(np.argmin(d))].multiplicity == m


def test_blended_multi_l_outputs(tmp_path):
    job = SpectrumJob(BLENDED4, l_values=[0, 1, 2, 3], rect=(0.3, 12, -2, 2), out=str(tmp_path))
    res = run_spectrum_job(job)
    assert not res.errors
    for l in range(4):
        assert (tmp_path / f"zeros_l{l}.csv").exists() and (tmp_path / f"zeros_l{l}.json").exists()
        zs = res.zero_sets[l]
        assert zs.total_multiplicity == zs.winding
        assert not ex.conjugate_closure(zs, 1e-6)
    assert (tmp_path / "zeros_merged.csv").exists()
    merged = res.merged()
    assert len(merged) == sum(len(res.zero_sets[l].zeros) for l in range(4))


def test_reproducible_outputs(tmp_path):
    cfg = dict(profile=BLENDED4, l_values=[0, 1], rect=(0.3, 10, -2, 2))
    run_spectrum_job(SpectrumJob(**cfg, out=str(tmp_path / "a")))
    run_spectrum_job(SpectrumJob(**cfg, out=str(tmp_path / "b")))
    for name in ("zeros_l0.csv", "zeros_l1.csv", "zeros_merged.csv", "zeros_l0.json"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)


def test_per_l_failures_are_aggregated(monkeypatch):
    real = ex.locate_zeros

    def flaky(df, *a, **kw):
        if df.l == 1:
            raise StiffnessFailure("step size underflow")
        return real(df, *a, **kw)

    monkeypatch.setattr(ex, "locate_zeros", flaky)
    res = run_spectrum_job(SpectrumJob(BLENDED4, l_values=[0, 1, 2], rect=(0.3, 6, -1, 1)))
    assert set(res.zero_sets) == {0, 2} and "StiffnessFailure" in res.errors[1]


def test_locality_outside_support():
    prof = RadialProfile.shell(4.0, 1.0, 2.0, R0=3.0, blend_width=0.1)
    rep = locality_scan(prof, 0, 3 + 0.5j, (2.0, 4.0), n=9)
    # r^2 D is a Wronskian of two solutions of the same equation where n = 1
    assert rep.scaled_variation < 1e-8
    assert rep.variation > 0.1  # D itself decays like 1 / r^2
    assert rep.transition_radius == pytest.approx(2.0)


def test_locality_trivial():
    rep = locality_scan(RadialProfile.constant(), 0, 2 + 1j, (2.0, 4.0), n=5)
    assert rep.variation == 0.0 and rep.scaled_variation == 0.0


def test_locality_transition_at_support_edge():
    prof = RadialProfile.shell(4.0, 1.0, 2.0, R0=3.0, blend_width=0.1)
    rep = locality_scan(prof, 0, 3 + 0.5j, (1.0, 4.0), n=61)
    assert rep.scaled_variation > 1e-2
    assert abs(rep.transition_radius - prof.support_hi) <= 0.05 + 1e-12


def test_interior_trivial():
    rep = interior_vanishing_check(RadialProfile.constant(), 0, 2.0)
    assert rep.mismatch == 0.0 and rep.wronskian == 0.0


def test_interior_at_roots_and_controls():
    prof = RadialProfile.shell(4.0, 1.0, 2.0, R0=3.0)
    root = complex(math.pi / 2, 0.3976827306119528)
    assert interior_vanishing_check(prof, 0, root).mismatch < 1e-6
    ctrl = interior_vanishing_check(prof, 0, root + 0.5)
    assert ctrl.mismatch > 1e-3 and ctrl.wronskian > 1e-3


def test_compare_identical():
    job = SpectrumJob(BLENDED4, rect=(0.3, 12, -2, 2))
    rep = compare_profiles(job, job)
    assert rep.verdict == INDISTINGUISHABLE and rep.symmetric_difference == 0


def test_compare_requires_same_setup():
    with pytest.raises(ValueError):
        compare_profiles(SpectrumJob(SHARP4, rect=(0.3, 5, -1, 1)), SpectrumJob(SHARP4, rect=(0.3, 6, -1, 1)))


def test_compare_degenerate():
    rect = (0.3, 6, -1, 1)
    rep = compare_profiles(SpectrumJob(TRIVIAL, rect=rect), SpectrumJob(SHARP4, rect=rect))
    assert rep.verdict == DISTINGUISHABLE
    assert compare_profiles(SpectrumJob(TRIVIAL, rect=rect), SpectrumJob(TRIVIAL, rect=rect)).verdict == INDISTINGUISHABLE


def test_compare_different_shells():
    rect = (0.3, 15, -3, 3)
    rep = compare_profiles(SpectrumJob(shell(2.0), rect=rect), SpectrumJob(shell(3.0), rect=rect))
    assert rep.verdict == DISTINGUISHABLE
    a, b = rep.unmatched[0]
    assert a + b >= 3


@pytest.mark.slow
def test_compare_equal_optical_length(capsys):
    # same integral of sqrt(n) - 1 (= 0.25), different shapes; outcome recorded
    rect = (0.3, 30, -3, 3)
    tall = SpectrumJob(shell(4.0, 1.5, 1.75), rect=rect)
    wide = SpectrumJob(shell(1.5625, 1.0, 2.0), rect=rect)
    rep = compare_profiles(tall, wide)
    with capsys.disabled():
        print(f"\nequal optical length shells: {rep.verdict}, unmatched {rep.unmatched[0]}, "
              f"density gap {rep.density_gap.get(0)}")
    assert rep.verdict in (DISTINGUISHABLE, INDISTINGUISHABLE)


def test_validate_sharp_shell():
    checks = validate_job(SpectrumJob(SHARP4, rect=SHELL_RECT, tol=1e-10))
    failed = [c for c in checks if not c.passed]
    assert not failed, failed


def test_stability_audit_small():
    prof = RadialProfile.shell(4.0, 1.0, 2.0, R0=3.0, blend_width=0.1)
    zs = run_spectrum_job(SpectrumJob(BLENDED4, rect=(0.3, 8, -2, 2)), write=False).zero_sets[0]
    assert ex.stability_audit(prof, 0, zs.zeros) < 1e-8
