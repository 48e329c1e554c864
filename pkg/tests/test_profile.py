import json
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from etp.errors import OutOfRange, ProfileError
from etp.profile import (LiouvilleMap, RadialProfile, TransformedPotential, eval_n, eval_q, eval_xi,
                         invert_xi)

# xi of the blended n0 = 4 shell, from an independent mpmath quadrature at 30 digits
XI_BLEND_2 = 2.907278917063215
XI_BLEND_105 = 1.0598935067823507


@pytest.fixture(scope="module")
def blended():
    return RadialProfile.shell(4.0, 1.0, 2.0, R0=3.0, blend_width=0.1)


@pytest.fixture(scope="module")
def sharp():
    return RadialProfile.shell(4.0, 1.0, 2.0, R0=3.0)


def _blend_oracle():
    r = sp.symbols("r")
    t = (r - 1) / sp.Rational(1, 10)
    return r, 1 + 3 * (10 * t**3 - 15 * t**4 + 6 * t**5)


def test_eval_n(blended):
    assert eval_n(RadialProfile.constant(), 0.7) == 1.0
    assert eval_n(blended, 1.5) == pytest.approx(4.0, abs=1e-14)
    r, n = _blend_oracle()
    assert eval_n(blended, 1.05) == pytest.approx(float(n.subs(r, 1.05)), rel=1e-14)
    assert eval_n(blended, 1.05) == pytest.approx(2.5, rel=1e-14)
    assert eval_n(blended, 0.2) == 1.0 and eval_n(blended, 7.0) == 1.0


def test_eval_n_array(blended):
    r = np.array([[0.5, 1.05], [1.5, 2.5]])
    assert eval_n(blended, r).shape == (2, 2)


def test_support_and_smoothness(blended, sharp):
    assert (blended.support_lo, blended.support_hi) == (1.0, 2.0)
    assert blended.smooth and not sharp.smooth
    assert RadialProfile.constant().is_trivial


def test_xi_values(blended, sharp):
    assert eval_xi(LiouvilleMap(RadialProfile.constant()), 3.0) == pytest.approx(3.0, abs=1e-15)
    assert eval_xi(LiouvilleMap(sharp), 2.0) == pytest.approx(3.0, abs=1e-14)
    lm = LiouvilleMap(blended)
    assert eval_xi(lm, 2.0) == pytest.approx(XI_BLEND_2, abs=1e-10)
    assert eval_xi(lm, 1.05) == pytest.approx(XI_BLEND_105, abs=1e-10)
    assert eval_xi(lm, 1.0) == 1.0


def test_xi_locality(blended):
    lm = LiouvilleMap(blended)
    offset = eval_xi(lm, 2.0) - 2.0
    r = np.linspace(2.0, 6.0, 9)
    assert np.allclose(eval_xi(lm, r) - r, offset, atol=1e-12)


def test_invert_xi(blended, sharp):
    assert invert_xi(LiouvilleMap(RadialProfile.constant()), 2.5) == pytest.approx(2.5)
    assert invert_xi(LiouvilleMap(sharp), 3.0) == pytest.approx(2.0, abs=1e-14)
    lm = LiouvilleMap(blended)
    assert abs(invert_xi(lm, eval_xi(lm, 1.5)) - 1.5) < 1e-10
    with pytest.raises(OutOfRange):
        invert_xi(lm, -1.0)


def test_round_trip_grid(blended):
    lm = LiouvilleMap(blended)
    r = np.linspace(0.0, 3.0, 61)
    assert np.max(np.abs(invert_xi(lm, eval_xi(lm, r)) - r)) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_xi_monotone(a, b):
    lm = LiouvilleMap(RadialProfile.shell(4.0, 1.0, 2.0, R0=3.0, blend_width=0.1))
    if a < b:
        assert eval_xi(lm, b) > eval_xi(lm, a)


def test_q_trivial():
    pot = TransformedPotential(RadialProfile.constant(), 0)
    xi = np.linspace(0.1, 5.0, 50)
    for l in range(4):
        assert np.max(np.abs(eval_q(pot, xi, l))) < 1e-12
    assert eval_q(pot, 2.0, 1) == 0.0


@pytest.mark.parametrize("r0", [1.02, 1.05, 1.08, 1.93])
@pytest.mark.parametrize("l", [0, 2])
def test_q_symbolic_oracle(blended, r0, l):
    r, n = _blend_oracle()
    if r0 > 1.5:
        t = (2 - r) / sp.Rational(1, 10)
        n = 1 + 3 * (10 * t**3 - 15 * t**4 + 6 * t**5)
    lm = LiouvilleMap(blended)
    xi = float(eval_xi(lm, r0))
    L = l * (l + 1)
    expr = sp.diff(n, r, 2) / (4 * n**2) - sp.Rational(5, 16) * sp.diff(n, r) ** 2 / n**3 + L / (r**2 * n)
    ref = float(expr.subs(r, r0)) - L / xi**2
    assert eval_q(TransformedPotential(blended, l), xi) == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_q_requires_smooth(sharp):
    with pytest.raises(ProfileError):
        TransformedPotential(sharp, 0)


def test_q_rejects_nonpositive_xi(blended):
    with pytest.raises(OutOfRange):
        eval_q(TransformedPotential(blended, 0), 0.0)


@pytest.mark.parametrize("cfg,field", [
    ({"R0": 3}, "R"),
    ({"R": 1, "R0": 3, "pieces": [{"from": 0.5, "to": 2, "coeffs": [2]}]}, "pieces[0].from"),
    ({"R": 1, "R0": 3, "pieces": [{"from": 1, "to": 4, "coeffs": [2]}]}, "pieces[0].to"),
    ({"R": 1, "R0": 3, "pieces": [{"from": 1, "to": 2, "coeffs": [-1]}]}, "pieces[0]"),
    ({"R": 1, "R0": 3, "pieces": [{"from": 1, "to": 2, "coeffs": [1, 0, 0, 0, 0, 0, 1]}]}, "pieces[0].coeffs"),
    ({"R": 1, "R0": 3, "pieces": [{"from": 1, "to": 2}]}, "pieces[0].coeffs"),
    ({"R": 1, "R0": 3, "blend_width": "x"}, "blend_width"),
    ({"R": 1, "R0": 3, "pieces": [{"from": 1, "to": 2, "coeffs": [4]}], "blend_width": 0.8}, "blend_width"),
])
def test_config_errors_name_field(cfg, field):
    with pytest.raises(ProfileError) as exc:
        RadialProfile.from_dict(cfg)
    assert exc.value.field.startswith(field)


def test_config_round_trip(tmp_path, blended):
    path = tmp_path / "p.json"
    path.write_text(json.dumps(blended.to_dict()))
    again = RadialProfile.from_json(path)
    r = np.linspace(0, 3, 31)
    assert np.array_equal(eval_n(again, r), eval_n(blended, r))


def test_c2_at_knots(blended):
    for p, q in zip(blended.pieces, blended.pieces[1:]):
        x = q.lo
        left = blended.derivs(math.nextafter(x, -math.inf))
        right = blended.derivs(x)
        assert np.allclose(left, right, rtol=1e-9, atol=1e-9)
