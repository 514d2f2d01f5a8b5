import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persistkit.harmonic import (H_RATIO_HIGH, H_RATIO_LOW, DerivativeOrder, HarmonicDomainError, alpha, c_sequence,
                                 h_bound_check, h_eval, h_partial)
from persistkit.verify import pde_grid, pde_residuals, scaling_residuals

# mpmath at 30 digits through the hyperu closed form
H_REF = {
    (1.0, 0.0): 0.61839168856680861,
    (1.0, 1.0): 1.0625661010816168,
    (2.0, 1.0): 1.0961168935028345,
    (0.5, -1.0): 0.10815430334824168,
    (8.0, 2.0): 1.5026953910675235,
    (100.0, -3.0): 0.70674574355441779,
    (0.01, 2.0): 1.4144339334693728,
}


def fd_step_y(x, y):
    return max(1e-4 * float(alpha(x, y)), 1e-6)


def test_alpha_examples():
    assert alpha(0, 0) == 0
    assert alpha(8, 1) == pytest.approx(2)
    assert alpha(1, -3) == 3


@pytest.mark.parametrize("z,ref", list(H_REF.items()))
def test_h_frozen_values(z, ref):
    assert h_eval(*z) == pytest.approx(ref, rel=1e-12)


def test_h_at_y0_limit():
    val = (4.5) ** (1 / 6) * math.gamma(1 / 3) / math.gamma(1 / 6)
    assert h_eval(1.0, 0.0) == pytest.approx(val, rel=1e-14)
    for x in np.logspace(-2, 3, 11):
        assert h_eval(x, 0.0) == pytest.approx(val * x ** (1 / 6), rel=1e-13)


def test_zero_extension():
    assert h_eval(-1, 5) == 0.0
    assert h_eval(0, 3) == 0.0
    assert h_eval(0, -3) == 0.0
    assert np.all(h_eval(np.array([-2.0, -1e-9, 0.0]), np.array([1.0, 4.0, -1.0])) == 0)


def test_array_evaluation_matches_scalar():
    xs = np.array([[1.0, 2.0], [0.5, 100.0]])
    ys = np.array([[0.0, 1.0], [-1.0, -3.0]])
    out = h_eval(xs, ys)
    assert out.shape == (2, 2)
    for idx in np.ndindex(2, 2):
        assert out[idx] == h_eval(xs[idx], ys[idx])


def test_positivity_on_grid():
    for x, y in pde_grid():
        # below the axis h carries exp(2 y^3 / 9x), which underflows far out
        if 2 * abs(y) ** 3 / (9 * x) < 700:
            assert h_eval(x, y) > 0
        else:
            assert h_eval(x, y) >= 0


def test_scaling_examples():
    for x, y in [(1.0, 0.5), (0.3, 2.0), (5.0, 0.1)]:
        assert h_eval(8 * x, 2 * y) == pytest.approx(math.sqrt(2) * h_eval(x, y), rel=1e-12)


def test_scaling_invariant_grid():
    assert scaling_residuals() <= 1e-9


@settings(max_examples=80, deadline=None)
@given(x=st.floats(1e-2, 1e3), y=st.floats(-20, 20), lam=st.sampled_from([0.5, 2.0, 5.0]))
def test_scaling_property(x, y, lam):
    base = h_eval(x, y)
    if base < 1e-250:
        return
    assert abs(h_eval(lam**3 * x, lam * y) - math.sqrt(lam) * base) <= 1e-9 * math.sqrt(lam) * base


def test_continuity_across_y0():
    for x in np.logspace(-2, 3, 21):
        lo, hi = h_eval(x, -1e-12), h_eval(x, 1e-12)
        assert abs(hi - lo) <= 1e-8 * h_eval(x, 0.0)


def test_c_sequence():
    c = c_sequence(4)
    assert c[0] == 1.0
    assert c[1] == pytest.approx(1 / 36, rel=1e-15)
    assert c[2] == pytest.approx(-c[1] * (7 / 6) * (5 / 6), rel=1e-15)
    assert c[3] == pytest.approx(-c[2] * (13 / 6) * (11 / 6), rel=1e-15)


def test_h_partial_zeroth_is_h():
    for z in H_REF:
        assert h_partial(*z, (0, 0)) == pytest.approx(h_eval(*z), rel=1e-14)


def test_h_partial_x_fd_example():
    d = 1e-5
    fd = (h_eval(1 + d, 1) - h_eval(1 - d, 1)) / (2 * d)
    assert h_partial(1.0, 1.0, DerivativeOrder(1, 0)) == pytest.approx(fd, rel=1e-5)


FD_POINTS = [(1.0, 1.0), (2.0, -0.7), (0.3, 2.5), (50.0, 1.5), (20.0, -4.0), (1.0, 0.3), (7.0, -0.4)]


def _fd(f, x, y, axis):
    if axis == 0:
        d = max(1e-4 * float(alpha(x, y)) ** 3, 1e-6)
        d = min(d, 1e-3 * x)
        return (f(x + d, y) - f(x - d, y)) / (2 * d)
    d = fd_step_y(x, y)
    return (f(x, y + d) - f(x, y - d)) / (2 * d)


@pytest.mark.parametrize("z", FD_POINTS)
@pytest.mark.parametrize("i", [0, 1, 2, 3])
@pytest.mark.parametrize("j", [0, 1, 2, 3])
def test_closed_forms_against_finite_differences(z, i, j):
    """Each order is the FD derivative of the next lower one, down to h_eval."""
    if i == 0 and j == 0:
        return
    x, y = z
    if j > 0:
        lower = (lambda u, v: h_partial(u, v, (i, j - 1))) if (i, j - 1) != (0, 0) else h_eval
        fd = _fd(lower, x, y, 1)
    else:
        lower = (lambda u, v: h_partial(u, v, (i - 1, 0))) if i > 1 else h_eval
        fd = _fd(lower, x, y, 0)
    exact = h_partial(x, y, (i, j))
    scale = max(abs(exact), 1e-12 * abs(h_eval(x, y)) / float(alpha(x, y)) ** (3 * i + j))
    assert abs(exact - fd) <= 1e-4 * scale


def test_pde_generator_form_holds():
    rows = pde_residuals()
    worst = max(r / b for _, _, r, b in rows)
    assert worst <= 1.0


def test_pde_half_coefficient_variant_fails():
    """``h_yy + 0.5 y h_x = 0`` is off by a factor of four in the y h_x term."""
    checked = 0
    for x, y in pde_grid(9, 8):
        d = fd_step_y(x, y)
        hx = h_partial(x, y, (1, 0))
        if abs(y * hx) < 1e-6:
            continue
        hyy = (h_partial(x, y + d, (0, 1)) - h_partial(x, y - d, (0, 1))) / (2 * d)
        assert abs(hyy + 0.5 * y * hx) > 1e-6 * abs(y * hx) + 1e-8
        assert abs(hyy + 2 * y * hx) <= 1e-6 * abs(y * hx) + 1e-8
        checked += 1
    assert checked > 30


def test_pde_reduction_for_yy_and_yyy():
    for x, y in FD_POINTS:
        d = fd_step_y(x, y)
        hyy_fd = (h_partial(x, y + d, (0, 1)) - h_partial(x, y - d, (0, 1))) / (2 * d)
        assert h_partial(x, y, (0, 2)) == pytest.approx(hyy_fd, rel=1e-6, abs=1e-12)
        hyyy_fd = (h_partial(x, y + d, (0, 2)) - h_partial(x, y - d, (0, 2))) / (2 * d)
        assert h_partial(x, y, (0, 3)) == pytest.approx(hyyy_fd, rel=1e-5, abs=1e-12)


@pytest.mark.parametrize("i", [0, 1, 2])
def test_mixed_coefficient_is_product_not_quotient(i):
    """For y > 0 the mixed derivative carries ``-3 (i - 1/6) C_i``; the quotient form disagrees with FD."""
    x, y = 2.0, 0.8
    lower = (lambda u, v: h_partial(u, v, (i, 0))) if i else h_eval
    fd = _fd(lower, x, y, 1)
    ours = h_partial(x, y, (i, 1))
    assert ours == pytest.approx(fd, rel=1e-6)
    c = c_sequence(i + 1)[i]
    prod = -3 * (i - 1 / 6) * c
    quot = -3 / (i - 1 / 6) * c
    assert ours * quot / prod != pytest.approx(fd, rel=1e-2)


def test_derivative_domain_errors():
    with pytest.raises(HarmonicDomainError):
        h_partial(0.0, 1.0, (1, 0))
    with pytest.raises(HarmonicDomainError):
        h_partial(-1.0, 1.0, (0, 0))
    with pytest.raises(HarmonicDomainError):
        h_partial(np.array([1.0, -1.0]), 1.0, (0, 1))
    with pytest.raises(HarmonicDomainError):
        h_partial(1.0, 1.0, (0, 4))
    with pytest.raises(HarmonicDomainError):
        h_partial(1.0, 1.0, (-1, 0))


def test_derivative_one_sided_limits_at_y0():
    for i in range(3):
        for j in range(2):
            at = h_partial(3.0, 0.0, (i, j))
            lo = h_partial(3.0, -1e-9, (i, j))
            hi = h_partial(3.0, 1e-9, (i, j))
            assert at == pytest.approx(hi, rel=1e-6)
            assert at == pytest.approx(lo, rel=1e-6)


# exponents from the derivative bounds: |D h| <= C alpha^e
DERIV_EXPONENTS = {
    (1, 0): -2.5, (2, 0): -5.5, (3, 0): -8.5,
    (0, 1): -0.5, (1, 1): -3.5, (2, 1): -6.5,
    (1, 2): -4.5, (0, 2): -1.5, (0, 3): -2.5,
}


def _profile_max(order, e, scale):
    worst = 0.0
    for u in np.linspace(-1, 1, 81):
        for x, y in ((scale**3, u * scale), (abs(u) * scale**3 + 1e-9, np.sign(u or 1) * scale)):
            if x <= 0:
                continue
            worst = max(worst, abs(h_partial(x, y, order)) * float(alpha(x, y)) ** (-e))
    return worst


@pytest.mark.parametrize("order,e", list(DERIV_EXPONENTS.items()))
def test_derivative_magnitude_bounds(order, e):
    sups = [_profile_max(order, e, s) for s in (2.0, 5.0, 20.0, 100.0)]
    assert all(np.isfinite(sups))
    # homogeneity makes the weighted sup scale-free
    assert max(sups) <= 1.05 * min(sups) + 1e-12
    assert max(sups) < 100.0


def test_bound_band_calibration():
    prof = [h_eval(1.0, u) / math.sqrt(float(alpha(1.0, u))) for u in np.linspace(0, 60, 6001)]
    prof += [h_eval(v, 1.0) / math.sqrt(float(alpha(v, 1.0))) for v in np.linspace(1e-6, 1.0, 4001)]
    assert min(prof) == pytest.approx(H_RATIO_LOW, abs=1e-4)
    assert max(prof) == pytest.approx(H_RATIO_HIGH, abs=1e-4)


def test_bound_band_on_grid():
    xs, ys = np.meshgrid(np.linspace(1, 100, 40), np.linspace(1, 100, 40))
    r = h_eval(xs, ys) / np.sqrt(alpha(xs, ys))
    assert r.min() >= H_RATIO_LOW and r.max() <= H_RATIO_HIGH


def test_h_bound_check():
    assert h_bound_check(0, 0) == (0.0, 0.0, 0.0)
    lo, val, hi = h_bound_check(-2.0, 3.0)
    assert val == 0.0 and val <= hi
    for z in [(1.0, 1.0), (50.0, 3.0), (8.0, 0.0)]:
        lo, val, hi = h_bound_check(*z)
        assert 0 < lo <= val <= hi
    for y in np.linspace(-30, -0.1, 20):
        lo, val, hi = h_bound_check(1.0, y)
        assert lo == 0.0 and val <= hi


def test_h_decays_below_axis():
    assert h_eval(1.0, -5.0) < 1e-6
    assert h_eval(1.0, -30.0) == 0.0 or h_eval(1.0, -30.0) < 1e-300
