import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etp.specfun import SphericalOrder, assoc_legendre, sph_bessel_j, sph_bessel_j_prime, sph_harmonic

# reference values from mpmath at 30 digits
FROZEN = [
    (0, 2.5, 0.2393888576415826),
    (1, 0.3 + 0.2j, 0.1002929026794487 + 0.06513480014155021j),
    (3, 12 - 4j, 1.8399288249817773 + 0.40775672375626565j),
    (10, 1e-3, 7.273091787446731e-41),
    (25, 60 + 25j, 47981079.181991145 + 61742497.43084132j),
]


@pytest.mark.parametrize("l,z,ref", FROZEN)
def test_frozen_values(l, z, ref):
    assert abs(sph_bessel_j(l, z) - ref) <= 1e-12 * abs(ref)


def test_closed_forms():
    assert sph_bessel_j(0, 1.0) == pytest.approx(math.sin(1.0), rel=1e-14)
    assert sph_bessel_j(1, 1.0) == pytest.approx(math.sin(1.0) - math.cos(1.0), rel=1e-13)
    assert sph_bessel_j(0, 0.0) == 1.0
    for l in range(1, 6):
        assert sph_bessel_j(l, 0.0) == 0.0


def test_derivative_values():
    assert sph_bessel_j_prime(0, math.pi) == pytest.approx(-1 / math.pi, rel=1e-13)
    assert sph_bessel_j_prime(0, 0.0) == 0.0
    z, h = 1 + 2j, 1e-5
    for l in range(6):
        fd = (sph_bessel_j(l, z + h) - sph_bessel_j(l, z - h)) / (2 * h)
        assert abs(sph_bessel_j_prime(l, z) - fd) < 1e-7


def test_against_mpmath_grid():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 30
    rng = np.random.default_rng(1)
    for _ in range(40):
        l = int(rng.integers(0, 41))
        z = complex(rng.uniform(-150, 150), rng.uniform(-30, 30))
        ref = complex(mpmath.sqrt(mpmath.pi / (2 * z)) * mpmath.besselj(l + 0.5, z))
        assert abs(sph_bessel_j(l, z) - ref) <= 1e-12 * abs(ref) + 1e-300


def test_vectorized_matches_scalar():
    z = np.array([0.1, 0.49 + 0.01j, 0.51, 3 - 2j, 40 + 10j])
    vec = sph_bessel_j(4, z)
    assert np.allclose(vec, [sph_bessel_j(4, x) for x in z], rtol=1e-15, atol=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 30), st.floats(-80, 80), st.floats(-20, 20))
def test_conjugate_symmetry(l, x, y):
    z = complex(x, y)
    assert sph_bessel_j(l, z.conjugate()) == pytest.approx(sph_bessel_j(l, z).conjugate(), rel=1e-13, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 20), st.floats(0.05, 60), st.floats(-10, 10))
def test_bessel_ode_residual(l, x, y):
    # z^2 j'' + 2 z j' + (z^2 - l(l+1)) j = 0, with j'' from a Cauchy integral of j'
    z = complex(x, y)
    w = np.exp(2j * np.pi * np.arange(32) / 32)
    rho = 0.02
    d2 = np.mean(sph_bessel_j_prime(l, z + rho * w) / w) / rho
    j, dj = sph_bessel_j(l, z), sph_bessel_j_prime(l, z)
    terms = [z * z * d2, 2 * z * dj, (z * z - l * (l + 1)) * j]
    assert abs(sum(terms)) < 1e-10 * max(abs(t) for t in terms)


def test_harmonic_values():
    assert sph_harmonic(0, 0, 0.3, 1.1) == pytest.approx(math.sqrt(1 / (4 * math.pi)))
    assert sph_harmonic(1, 0, 0.0, 0.0) == pytest.approx(math.sqrt(3 / (4 * math.pi)))


def _gauss_sphere(n):
    t, w = np.polynomial.legendre.leggauss(n)
    phi = np.linspace(0, 2 * np.pi, 2 * n, endpoint=False)
    T, P = np.meshgrid(np.arccos(t), phi, indexing="ij")
    W = np.outer(w, np.full(phi.size, 2 * np.pi / phi.size))
    return T, P, W


def test_orthonormality_up_to_8():
    T, P, W = _gauss_sphere(24)
    orders = [(l, m) for l in range(9) for m in range(-l, l + 1)]
    Y = np.array([sph_harmonic(l, m, T, P).ravel() for l, m in orders])
    G = (Y * W.ravel()) @ Y.conj().T
    assert np.max(np.abs(G - np.eye(len(orders)))) < 1e-8
    y11 = sph_harmonic(1, 1, T, P)
    assert abs(np.sum(W * y11 * y11.conj()) - 1) < 1e-10


def test_legendre_low_orders():
    t = np.linspace(-1, 1, 7)
    assert np.allclose(assoc_legendre(2, 0, t), 0.5 * (3 * t**2 - 1))
    assert np.allclose(assoc_legendre(2, 1, t), 3 * t * np.sqrt(1 - t**2))


def test_order_validation():
    with pytest.raises(ValueError):
        SphericalOrder(2, 3)
    with pytest.raises(ValueError):
        SphericalOrder(-1, 0)
    with pytest.raises(ValueError):
        sph_bessel_j(-1, 1.0)
