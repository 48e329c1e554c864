"""Command line entry point: ``etp run|compare|density|validate``.

Exit codes: 0 success, 2 invalid input or failed validation, 3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .cartwright import (TiledZeroProvider, determinant_width_predictions, estimate_density,
                         estimate_indicator, geometric_ladder, width_and_prediction)
from .determinant import DeterminantFn
from .errors import EtpError
from .experiments import SpectrumJob, compare_profiles, run_spectrum_job, validate_job, write_spectrum

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3


def _rect(text):
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("expected four numbers re0,re1,im0,im1") from None
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("expected four numbers re0,re1,im0,im1")
    return tuple(vals)


def _load(path, args):
    cfg = json.loads(Path(path).read_text())
    if args.tol is not None:
        cfg["tol"] = args.tol
    if args.l_max is not None:
        cfg.pop("l", None)
        cfg.pop("l_values", None)
        cfg["l_max"] = args.l_max
    if args.rect is not None:
        cfg["rect"] = list(args.rect)
    if args.out is not None:
        cfg["out"] = args.out
    if args.format is not None:
        cfg["formats"] = [args.format]
    return SpectrumJob.from_dict(cfg)


def _dump(obj, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)


def cmd_run(args):
    job = _load(args.job, args)
    res = run_spectrum_job(job)
    summary = res.summary()
    print(json.dumps(summary["per_l"] if not res.degenerate else {"verdict": "DEGENERATE"}, indent=2))
    return EXIT_SOLVER if res.errors else EXIT_OK


def cmd_compare(args):
    j1, j2 = _load(args.job1, args), _load(args.job2, args)
    rep = compare_profiles(j1, j2)
    print(f"verdict: {rep.verdict}  symmetric difference: {rep.symmetric_difference}")
    if j1.out:
        _dump(rep.to_dict(), Path(j1.out) / "comparison.json")
    errors = rep.results[0].errors or rep.results[1].errors
    return EXIT_SOLVER if errors else EXIT_OK


def cmd_density(args):
    job = _load(args.job, args)
    profile = job.build_profile()
    if profile.is_trivial:
        print("profile is trivial (n = 1): the determinant vanishes identically")
        return EXIT_OK
    thetas = np.array([-math.pi / 2, -math.pi / 4, 0.0, math.pi / 4, math.pi / 2])
    radii = geometric_ladder(5.0, args.r_top)
    report = {}
    for l in job.l_values:
        df = DeterminantFn(profile, l, method=job.method, rtol=job.rtol, atol=job.atol)
        ind = estimate_indicator(df, thetas, radii)
        width = width_and_prediction(ind)
        provider = TiledZeroProvider(df, tile=job.rect[1], im_cap=max(abs(job.rect[2]), abs(job.rect[3])),
                                     target_tol=job.tol, seed=job.seed, r_min=job.rect[0])
        dens = estimate_density(provider, (-job.density_sector, job.density_sector),
                                geometric_ladder(max(1.0, job.rect[1] / 8), job.rect[1]))
        report[str(l)] = {"indicator": ind.to_dict(), "width": width.to_dict(), "density": dens.to_dict()}
        print(f"l={l}: measured density {dens.slope:.4f}, indicator width d={width.d:.4f} "
              f"-> d/2pi = {width.predicted_density:.4f}")
        if job.out:
            out = Path(job.out)
            out.mkdir(parents=True, exist_ok=True)
            ind.to_csv(out / f"indicator_l{l}.csv")
            dens.to_csv(out / f"density_l{l}.csv")
    if job.out:
        report["predictions"] = determinant_width_predictions(profile)
        _dump(report, Path(job.out) / "density.json")
    return EXIT_OK


def cmd_validate(args):
    job = _load(args.job, args)
    res = run_spectrum_job(job, write=False)
    checks = validate_job(job, res)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  {c.detail}")
    if job.out:
        write_spectrum(res, job.out)
        _dump([c.__dict__ for c in checks], Path(job.out) / "validation.json")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_INVALID


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, help="zero refinement tolerance")
    common.add_argument("--l-max", type=int, help="scan l = 0..L")
    common.add_argument("--rect", type=_rect, help="search rectangle re0,re1,im0,im1")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), help="zero set output format")

    ap = argparse.ArgumentParser(prog="etp", description="Transmission eigenvalues of radial refractive profiles")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="locate zeros of the determinant for a job")
    p.add_argument("job")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("compare", parents=[common], help="compare the spectra of two jobs")
    p.add_argument("job1")
    p.add_argument("job2")
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("density", parents=[common], help="indicator and zero density report")
    p.add_argument("job")
    p.add_argument("--r-top", type=float, default=150.0, help="top of the indicator ladder")
    p.set_defaults(func=cmd_density)
    p = sub.add_parser("validate", parents=[common], help="run the invariant suite on a job")
    p.add_argument("job")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        # ProfileError and OutOfRange are ValueErrors too
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except EtpError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
