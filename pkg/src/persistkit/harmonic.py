"""
Harmonic function of the killed Kolmogorov diffusion.

``h(x, y)`` is positive on the half-plane ``x > 0`` and extended by zero to
``x <= 0``.  It is harmonic for the generator ``y d/dx + 1/2 d^2/dy^2`` and
homogeneous: ``h(l^3 x, l y) = l^(1/2) h(x, y)``.

Scalar kernels are numba-compiled (``h_kernel``, ``h_partial_kernel``) and
reused by the simulation code; the public functions accept scalars or numpy
arrays.
"""
import math
from typing import NamedTuple

import numba as nb
import numpy as np

from .specfun import tricomi_u_kernel

__all__ = [
    "PlanePoint",
    "DerivativeOrder",
    "HarmonicDomainError",
    "H_RATIO_LOW",
    "H_RATIO_HIGH",
    "c_sequence",
    "alpha",
    "h_eval",
    "h_partial",
    "h_bound_check",
    "h_kernel",
    "h_partial_kernel",
]

_K = (2.0 / 9.0) ** (1.0 / 6.0)
_NINE_HALVES_CBRT = 4.5 ** (1.0 / 3.0)
_G13 = math.gamma(1.0 / 3.0)
_G23 = math.gamma(2.0 / 3.0)

# Band for h / sqrt(alpha) on the quadrant x > 0, y >= 0; the upper value is
# also a global bound since h decays for y < 0.  Calibrated once by scanning the scale-free
# profile h(1, u) / sqrt(alpha(1, u)) and h(v, 1) / sqrt(alpha(v, 1)); see
# tests/test_harmonic.py::test_bound_band_calibration.
H_RATIO_LOW = 0.6183
H_RATIO_HIGH = 1.0626


class PlanePoint(NamedTuple):
    """State ``(x, y)``: ``x`` the integrated (area) coordinate, ``y`` the walk."""

    x: float
    y: float


class DerivativeOrder(NamedTuple):
    """``i`` derivatives in x and ``j`` in y.

    ``j`` in {0, 1} uses closed forms; ``j`` in {2, 3} uses the PDE
    ``h_yy = -2 y h_x``.
    """

    i: int
    j: int


class HarmonicDomainError(ValueError):
    pass


def c_sequence(n):
    """C_0 .. C_{n-1} with C_0 = 1 and C_{i+1} = -C_i (i + 1/6)(i - 1/6)."""
    out = [1.0]
    for i in range(n - 1):
        out.append(-out[i] * (i + 1.0 / 6.0) * (i - 1.0 / 6.0))
    return out[:n]


@nb.njit(cache=True)
def _c_coef(i):
    c = 1.0
    for k in range(i):
        c = -c * (k + 1.0 / 6.0) * (k - 1.0 / 6.0)
    return c


@nb.njit(cache=True)
def alpha_kernel(x, y):
    return max(abs(x) ** (1.0 / 3.0), abs(y))


@nb.njit(cache=True)
def _dx_closed(x, y, i):
    """d^i h / dx^i for x > 0 (closed form, branch by sign of y)."""
    if y > 0.0:
        s = 2.0 * y * y * y / (9.0 * x)
        if s > 0.0:
            return _c_coef(i) * _K * y * x ** (-1.0 / 6.0 - i) * tricomi_u_kernel(1.0 / 6.0 + i, 4.0 / 3.0, s)
    elif y < 0.0:
        sig = -2.0 * y * y * y / (9.0 * x)
        if sig > 0.0:
            e = math.exp(-sig)
            if e == 0.0:
                return 0.0
            return -_K / 6.0 * y * x ** (-1.0 / 6.0 - i) * e * tricomi_u_kernel(7.0 / 6.0 - i, 4.0 / 3.0, sig)
    # y == 0 (or s underflowed): limit from the y > 0 side
    return _c_coef(i) * _K * _NINE_HALVES_CBRT * x ** (1.0 / 6.0 - i) * _G13 / math.gamma(i + 1.0 / 6.0)


@nb.njit(cache=True)
def _dxy_closed(x, y, i):
    """d^(i+1) h / dx^i dy for x > 0."""
    s = 2.0 * y * y * y / (9.0 * x)
    if s < 0.0:
        e = math.exp(s)
        if e == 0.0:
            return 0.0
        return 0.5 * _K * x ** (-1.0 / 6.0 - i) * e * tricomi_u_kernel(1.0 / 6.0 - i, 1.0 / 3.0, -s)
    coef = -3.0 * (i - 1.0 / 6.0) * _c_coef(i)
    if s > 0.0:
        return coef * _K * x ** (-1.0 / 6.0 - i) * tricomi_u_kernel(1.0 / 6.0 + i, 1.0 / 3.0, s)
    return coef * _K * x ** (-1.0 / 6.0 - i) * _G23 / math.gamma(i + 5.0 / 6.0)


@nb.njit(cache=True)
def h_kernel(x, y):
    """h(x, y) with the zero extension to x <= 0."""
    if not x > 0.0:
        return 0.0
    return _dx_closed(x, y, 0)


@nb.njit(cache=True)
def h_partial_kernel(x, y, i, j):
    """d^(i+j) h / dx^i dy^j for x > 0; j <= 3."""
    if j == 0:
        return _dx_closed(x, y, i)
    if j == 1:
        return _dxy_closed(x, y, i)
    if j == 2:
        return -2.0 * y * _dx_closed(x, y, i + 1)
    # j == 3
    return -2.0 * _dx_closed(x, y, i + 1) - 2.0 * y * _dxy_closed(x, y, i + 1)


@nb.njit(cache=True)
def _h_array(xs, ys, out):
    for k in range(xs.size):
        out[k] = h_kernel(xs[k], ys[k])


@nb.njit(cache=True)
def _h_partial_array(xs, ys, i, j, out):
    for k in range(xs.size):
        out[k] = h_partial_kernel(xs[k], ys[k], i, j)


def _broadcast(x, y):
    xa, ya = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return xa, ya


def alpha(x, y):
    """Gauge ``max(|x|^(1/3), |y|)``."""
    return np.maximum(np.abs(x) ** (1.0 / 3.0), np.abs(y))


def h_eval(x, y):
    """
    Harmonic function h of the killed Kolmogorov diffusion.

    For ``x > 0`` this is (with ``s = 2 y^3 / 9x``)

    * ``(2/9)^(1/6) y x^(-1/6) U(1/6, 4/3, s)`` for ``y > 0``,
    * ``-(2/9)^(1/6) (1/6) y x^(-1/6) e^s U(7/6, 4/3, -s)`` for ``y < 0``,
    * the continuous limit ``(9/2)^(1/6) G(1/3)/G(1/6) x^(1/6)`` at ``y = 0``,

    and zero for ``x <= 0``.  Accepts scalars or broadcastable arrays.
    """
    xa, ya = _broadcast(x, y)
    if xa.ndim == 0:
        return h_kernel(float(xa), float(ya))
    if np.isnan(xa).any() or np.isnan(ya).any():
        raise HarmonicDomainError("NaN coordinate")
    xf = np.ascontiguousarray(xa).ravel()
    yf = np.ascontiguousarray(ya).ravel()
    out = np.empty(xf.size)
    _h_array(xf, yf, out)
    return out.reshape(xa.shape)


def h_partial(x, y, order):
    """
    Partial derivative ``d^(i+j) h / dx^i dy^j`` on the open half-plane.

    ``order`` is a :class:`DerivativeOrder` or an ``(i, j)`` pair with
    ``i >= 0`` and ``0 <= j <= 3``.  At ``y = 0`` the limit of the ``y > 0``
    branch is returned; the ``y < 0`` branch has the same limit.

    Raises
    ------
    HarmonicDomainError
        If any ``x <= 0``.
    """
    i, j = order
    if i < 0 or not 0 <= j <= 3:
        raise HarmonicDomainError(f"unsupported derivative order {(i, j)}")
    xa, ya = _broadcast(x, y)
    if np.any(xa <= 0.0):
        raise HarmonicDomainError("derivatives of h are only defined for x > 0")
    if xa.ndim == 0:
        return h_partial_kernel(float(xa), float(ya), int(i), int(j))
    xf = np.ascontiguousarray(xa).ravel()
    yf = np.ascontiguousarray(ya).ravel()
    out = np.empty(xf.size)
    _h_partial_array(xf, yf, int(i), int(j), out)
    return out.reshape(xa.shape)


def h_bound_check(x, y):
    """
    ``(H_RATIO_LOW * sqrt(alpha), h, H_RATIO_HIGH * sqrt(alpha))`` at ``(x, y)``.

    The lower bound only holds for ``x > 0, y >= 0``; elsewhere (including
    the killed region, where h vanishes) the returned lower value is 0 and
    only the upper bound is meaningful.
    """
    r = math.sqrt(alpha_kernel(x, y))
    low = H_RATIO_LOW * r if (x > 0 and y >= 0) else 0.0
    return low, h_kernel(x, y), H_RATIO_HIGH * r
