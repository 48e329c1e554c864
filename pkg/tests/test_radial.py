import math

import numpy as np
import pytest
from scipy import integrate

from etp.errors import OutOfRange
from etp.profile import LiouvilleMap, RadialProfile, eval_xi
from etp.radial import (asymptotic_y, check_estimate, error_envelope, interface_ic_from_matching,
                        regular_solution, solve_from_interface, solve_regular_from_origin)
from etp.determinant import DeterminantFn
from etp.specfun import sph_bessel_j, sph_bessel_j_prime

from oracles import shell_layers, transfer_D


@pytest.fixture(scope="module")
def blended():
    return RadialProfile.shell(4.0, 1.0, 2.0, R0=3.0, blend_width=0.1)


@pytest.mark.parametrize("l", [0, 1, 3])
@pytest.mark.parametrize("k", [2.0, 7.5 + 1.5j, 0.4 - 2j])
def test_origin_trivial_matches_bessel(l, k):
    tr = solve_regular_from_origin(RadialProfile.constant(), l, k)
    mask = tr.grid > 0.05
    exact = tr.grid * sph_bessel_j(l, k * tr.grid)
    err = np.abs(tr.y - exact)[mask] / np.max(np.abs(exact))
    assert np.max(err) < 1e-8


def test_origin_constant_index():
    # n = n0 from (almost) the origin: y0 = sin(sqrt(n0) k r) / (sqrt(n0) k)
    n0, k = 2.25, 3.0 + 0.5j
    prof = RadialProfile(1e-8, 2.0, [(1e-8, 2.0, [n0])])
    tr = solve_regular_from_origin(prof, 0, k)
    c = math.sqrt(n0) * k
    exact = np.sin(c * tr.grid) / c
    assert np.max(np.abs(tr.y - exact)) < 1e-8 * np.max(np.abs(exact))


def test_origin_zero_frequency():
    tr = solve_regular_from_origin(RadialProfile.constant(), 0, 0.0)
    assert np.allclose(tr.y, tr.grid, rtol=1e-10)


def test_origin_rejects_bad_range():
    with pytest.raises(OutOfRange):
        solve_regular_from_origin(RadialProfile.constant(), 0, 1.0, r_max=1e-7)


def test_interface_free_outward():
    k = 4.0 + 0.3j
    tr = solve_from_interface(RadialProfile.constant(), 0, k, 0.0, -1.0, "outward")
    assert np.max(np.abs(tr.z - np.cos(k * (tr.xi - 1.0)))) < 1e-8


def test_interface_free_inward():
    k = 4.0 - 0.7j
    a, b = 1.0, 0.0
    tr = solve_from_interface(RadialProfile.constant(), 0, k, a, b, "inward")
    R = 1.0
    resid = tr.z + b * np.cos(k * (R - tr.xi)) + a * np.sin(k * (R - tr.xi)) / k
    assert np.max(np.abs(resid)) < 1e-8


def test_interface_bad_direction():
    with pytest.raises(ValueError):
        solve_from_interface(RadialProfile.constant(), 0, 1.0, 1.0, 0.0, "sideways")


def test_blended_matches_sharp_oracle_by_extrapolation():
    # D converges linearly in the blend width; a cubic fit in w extrapolates to the sharp limit
    ks = np.array([2.3 + 0.4j, 5.1 - 0.2j])
    ref = transfer_D(ks, shell_layers(4.0), 3.0)
    ws = np.array([0.02, 0.01, 0.005, 0.0025])
    vals = np.array([DeterminantFn(RadialProfile.shell(4.0, blend_width=w), 0)(ks) for w in ws])
    for i, k in enumerate(ks):
        ext = np.polyfit(ws, vals[:, i].real, 3)[-1] + 1j * np.polyfit(ws, vals[:, i].imag, 3)[-1]
        assert abs(ext - ref[i]) < 1e-6 * abs(ref[i])


def test_matching_data():
    k, R = 2.7, 1.0
    a, b = interface_ic_from_matching(0, k, R)
    assert a == pytest.approx(sph_bessel_j(0, R * k) + R * k * sph_bessel_j_prime(0, R * k))
    assert b == pytest.approx(-R * sph_bessel_j(0, R * k))
    a, b = interface_ic_from_matching(0, 0.0, 1.5)
    assert (a, b) == (pytest.approx(1.0), pytest.approx(-1.5))
    a, b = interface_ic_from_matching(1, 1.0, 1.0)
    j1 = math.sin(1) - math.cos(1)
    j1p = math.sin(1) - 2 * j1  # j1'(z) = j0 - 2 j1 / z at z = 1
    assert a == pytest.approx(j1 + j1p, rel=1e-13)
    assert b == pytest.approx(-j1, rel=1e-13)


def test_two_routes_from_interface_agree(blended):
    k = 6.0 + 0.8j
    a, b = interface_ic_from_matching(0, k, blended.R)
    tr = solve_from_interface(blended, 0, k, a, b, "outward")
    y_ref, dy_ref, log = regular_solution(blended, 0, [k], blended.R0)
    s = math.exp(log[0])
    assert tr.y[-1] == pytest.approx(y_ref[0] * s, rel=1e-7)
    assert tr.dy[-1] == pytest.approx(dy_ref[0] * s, rel=1e-7)


def _term_scale(profile, l, ks):
    # |k j' f| + |j f'|: D is their difference and cancels deeply off the real axis
    y, dy, log = regular_solution(profile, l, ks, profile.R0)
    y, dy = y * np.exp(log), dy * np.exp(log)
    R0 = profile.R0
    J, Jp = sph_bessel_j(l, ks * R0), sph_bessel_j_prime(l, ks * R0)
    return np.abs(ks * Jp * y / R0) + np.abs(J * (dy * R0 - y) / R0**2)


@pytest.mark.parametrize("method", ["origin", "liouville"])
def test_construction_equivalence(blended, method):
    rng = np.random.default_rng(4)
    ks = 20 * np.sqrt(rng.uniform(0, 1, 40)) * np.exp(2j * np.pi * rng.uniform(0, 1, 40))
    base = DeterminantFn(blended, 1)(ks)
    other = DeterminantFn(blended, 1, method=method)(ks)
    scale = _term_scale(blended, 1, ks)
    assert np.max(np.abs(base - other) / scale) < 1e-8
    # plain relative agreement wherever D is not a deep cancellation of its two terms
    ok = np.abs(base) > 1e-4 * scale
    assert ok.sum() >= 5
    assert np.max(np.abs(base - other)[ok] / np.abs(base[ok])) < 1e-8


def test_asymptotic_exact_for_trivial_l0():
    prof = RadialProfile.constant()
    ks = np.linspace(1, 60, 30)
    r = 2.4
    exact = np.sin(ks * r) / ks
    assert np.max(np.abs(asymptotic_y(prof, 0, ks, r) - exact)) < 1e-13


def test_asymptotic_bounded_on_real_axis(blended):
    ks = np.linspace(1, 100, 400)
    vals = np.abs(asymptotic_y(blended, 0, ks, blended.R0))
    assert np.all(np.isfinite(vals)) and vals.max() < 10


def test_asymptotic_rejects_inside():
    with pytest.raises(OutOfRange):
        asymptotic_y(RadialProfile.constant(), 0, 1.0, 0.5)


def test_envelope_closed_forms():
    prof = RadialProfile.constant()
    assert error_envelope(prof, 0, (1.0, 3.0)).value == 1.0
    assert error_envelope(prof, 1, (1.0, 2.0)).value == pytest.approx(math.e, rel=1e-12)
    assert error_envelope(prof, 1, (0.0, 2.0)).value == math.inf


def test_envelope_blended_quadrature_oracle(blended):
    # independent: ||q||_L1 in xi equals int |q(r)| sqrt(n) dr with n, n', n'' of the smoothstep
    def n_parts(r):
        t = (r - 1) / 0.1 if r < 1.5 else (2 - r) / 0.1
        sgn = 10.0 if r < 1.5 else -10.0
        s = 10 * t**3 - 15 * t**4 + 6 * t**5
        ds = (30 * t**2 - 60 * t**3 + 30 * t**4) * sgn
        d2s = (60 * t - 180 * t**2 + 120 * t**3) * 100.0
        return 1 + 3 * s, 3 * ds, 3 * d2s

    def integrand(r):
        n, dn, d2n = n_parts(r)
        return abs(d2n / (4 * n * n) - 5 / 16 * dn * dn / n**3) * math.sqrt(n)

    total = sum(integrate.quad(integrand, a, b, epsabs=1e-13, limit=400)[0] for a, b in ((1, 1.1), (1.9, 2)))
    lm = LiouvilleMap(blended)
    env = error_envelope(blended, 0, (1.0, float(eval_xi(lm, 3.0))))
    assert env.side == "exterior"
    assert env.value == pytest.approx(math.exp(total), rel=1e-8)


def test_estimate_trivial_is_zero():
    prof = RadialProfile.constant()
    k = 5.0
    a, b = interface_ic_from_matching(0, k, 1.0)
    tr = solve_from_interface(prof, 0, k, a, b, "outward")
    rep = check_estimate(tr, a, b, profile=prof)
    assert rep.max_ratio < 1e-6 and rep.passed


@pytest.mark.parametrize("k", [5.0, 5.0 + 2.0j])
@pytest.mark.parametrize("direction", ["outward", "inward"])
def test_estimate_holds_on_blended(blended, k, direction):
    a, b = interface_ic_from_matching(0, k, blended.R)
    tr = solve_from_interface(blended, 0, k, a, b, direction)
    rep = check_estimate(tr, a, b, profile=blended)
    assert rep.passed, rep.max_ratio


def test_estimate_needs_large_k(blended):
    tr = solve_from_interface(blended, 0, 0.5, 1.0, 0.0, "outward")
    with pytest.raises(OutOfRange):
        check_estimate(tr, 1.0, 0.0, profile=blended)


def test_conjugate_symmetry(blended):
    k = 4.2 + 1.3j
    t1 = solve_regular_from_origin(blended, 2, k)
    t2 = solve_regular_from_origin(blended, 2, k.conjugate())
    assert np.array_equal(t1.grid, t2.grid)
    assert np.allclose(t2.y, t1.y.conj(), rtol=1e-12, atol=0)


def test_wronskian_constant(blended):
    k = 3.3 + 0.6j
    t1 = solve_from_interface(blended, 1, k, 1.0, 0.0, "outward", rtol=1e-11, atol=1e-13)
    t2 = solve_from_interface(blended, 1, k, 0.0, -1.0, "outward", rtol=1e-11, atol=1e-13)
    # adaptive grids differ between traces, so compare the z-Wronskian at the shared endpoints
    w_start = t1.z[0] * t2.dz[0] - t2.z[0] * t1.dz[0]
    w_end = t1.z[-1] * t2.dz[-1] - t2.z[-1] * t1.dz[-1]
    assert t1.xi[-1] == t2.xi[-1]
    assert abs(w_end - w_start) < 1e-8 * abs(w_start)


def test_two_way_consistency(blended):
    k = 7.0 - 0.4j
    a, b = 0.3 + 0.1j, -1.2
    out = solve_from_interface(blended, 0, k, a, b, "outward", rtol=1e-11, atol=1e-13)
    # integrate the endpoint data back from xi(R0) to xi(R)
    back = _reverse(blended, LiouvilleMap(blended), k, out.z[-1], out.dz[-1], out.xi[-1], out.xi[0])
    assert abs(back[0] - (-b)) < 1e-8 and abs(back[1] - a) < 1e-8


def _reverse(profile, lmap, k, z, dz, xi_from, xi_to):
    from etp.radial import _propagate_xi

    zs, dzs, log, _ = _propagate_xi(profile, lmap, 0, [k], xi_from, xi_to, np.array([z]), np.array([dz]),
                                    rtol=1e-11, atol=1e-13)
    s = np.exp(log[0])
    return zs[0] * s, dzs[0] * s


def test_analytic_in_k(blended):
    # Cauchy integral of y(R0; k) over a small circle vanishes
    c, rho, m = 4.0 + 0.5j, 0.3, 64
    ks = c + rho * np.exp(2j * np.pi * np.arange(m) / m)
    y, _, log = regular_solution(blended, 1, ks, blended.R0)
    vals = y * np.exp(log)
    integral = np.mean(vals * (ks - c))  # (1 / 2 pi i) * contour integral, trapezoid rule
    assert abs(integral) < 1e-8 * np.max(np.abs(vals))
