"""
Real-argument special functions: gamma, Kummer's M and Tricomi's U.

The scalar kernels are numba-compiled so that they can be called from the
Monte Carlo loops in :mod:`persistkit.harmonic` and :mod:`persistkit.potential`.
The thin Python wrappers (:func:`gamma`, :func:`kummer_m`, :func:`tricomi_u`)
validate arguments and raise the documented errors.

Evaluation strategy for ``U(a, b, s)`` with ``a > 0``:

* ``s <= CONNECTION_MAX_S``: the connection formula

      U = G(1-b)/G(a+1-b) M(a,b,s) + G(b-1)/G(a) s^(1-b) M(a-b+1,2-b,s)

* ``s >= ASYMPTOTIC_MIN_S``: the divergent asymptotic series in ``1/s``,
  truncated at its smallest term;
* in between: Taylor continuation of Kummer's equation
  ``s U'' + (b - s) U' - a U = 0`` downward in ``s``, starting from the
  asymptotic values of ``U`` and ``U' = -a U(a+1, b+1, s)``.  ``U`` is the
  dominant solution in that direction, so the continuation is stable.

For ``a <= 0`` the value is obtained from ``U(a+n)`` and ``U(a+n+1)`` with
``a + n`` in ``(0, 1]`` by the backward three-term recurrence

      U(a-1) = (s + 2a - b) U(a) - a (a-b+1) U(a+1).
"""
import math
import warnings

import numba as nb
import numpy as np
from scipy import integrate

__all__ = [
    "CONNECTION_MAX_S",
    "ASYMPTOTIC_MIN_S",
    "CANCELLATION_WARN_RATIO",
    "PrecisionLossWarning",
    "SpecialFunctionError",
    "gamma",
    "kummer_m",
    "tricomi_u",
    "u_oracle",
]

# Crossovers between the three evaluation regimes for a > 0.  Calibrated
# against u_oracle (see tests/test_specfun.py::test_crossover_calibration).
CONNECTION_MAX_S = 1.0
ASYMPTOTIC_MIN_S = 50.0

# (|first term| + |second term|) / |U| above which the connection formula is
# considered to have lost more than ~4 digits.
CANCELLATION_WARN_RATIO = 1e4

KUMMER_MAX_TERMS = 20000

_EPS = 2.220446049250313e-16


class SpecialFunctionError(ValueError):
    """Raised for poles, domain violations and non-convergent series."""


class PrecisionLossWarning(RuntimeWarning):
    """Cancellation in the connection formula exceeded CANCELLATION_WARN_RATIO."""


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@nb.njit(cache=True)
def _is_nonpos_int(v):
    return v <= 0.0 and v == math.floor(v)


@nb.njit(cache=True)
def _kummer_m(a, b, s):
    """Power series of M(a, b, s); NaN when the term cap is hit."""
    term = 1.0
    total = 1.0
    for k in range(KUMMER_MAX_TERMS):
        term *= (a + k) / (b + k) * s / (k + 1.0)
        total += term
        if term == 0.0:
            return total
        # past the turning point terms only shrink
        if k > abs(a) + s and abs(term) < _EPS * 0.25 * abs(total):
            return total
    return np.nan


@nb.njit(cache=True)
def _u_connection(a, b, s):
    """Connection formula; returns (U, |t1| + |t2|)."""
    t1 = 0.0
    if not _is_nonpos_int(a + 1.0 - b):
        t1 = math.gamma(1.0 - b) / math.gamma(a + 1.0 - b) * _kummer_m(a, b, s)
    t2 = 0.0
    if not _is_nonpos_int(a):
        t2 = (math.gamma(b - 1.0) / math.gamma(a)
              * s ** (1.0 - b) * _kummer_m(a - b + 1.0, 2.0 - b, s))
    return t1 + t2, abs(t1) + abs(t2)


@nb.njit(cache=True)
def _u_asymptotic(a, b, s):
    """s^-a * sum (a)_k (a-b+1)_k / k! (-1/s)^k, cut at the smallest term."""
    term = 1.0
    total = 1.0
    c = a - b + 1.0
    prev = 1.0
    for k in range(400):
        nxt = term * -(a + k) * (c + k) / ((k + 1.0) * s)
        if abs(nxt) > prev and k > 1:
            break
        term = nxt
        total += term
        prev = abs(term)
        if prev < _EPS * 0.25 * abs(total):
            break
    return total * s ** (-a)


@nb.njit(cache=True)
def _u_taylor(a, b, s_target, s0, u0, du0):
    """Continue U from s0 down to s_target by Taylor steps of Kummer's ODE."""
    s = s0
    u = u0
    du = du0
    while s > s_target:
        step = max(s_target - s, -0.5 * s)
        # c_{k+2} s (k+1)(k+2) = (s - b - k)(k+1) c_{k+1} + (k + a) c_k
        c_prev = u
        c_cur = du
        val = u + du * step
        dval = du
        hk = step  # step**(k+1) for c_cur
        for k in range(0, 400):
            c_next = ((s - b - k) * (k + 1.0) * c_cur + (k + a) * c_prev) / (s * (k + 1.0) * (k + 2.0))
            dval += (k + 2.0) * c_next * hk
            hk *= step
            val += c_next * hk
            c_prev = c_cur
            c_cur = c_next
            if abs(c_next * hk) < 1e-18 * abs(val) and abs(c_prev * hk / step) < 1e-18 * abs(val) + 1e-300:
                break
        s = s + step
        u = val
        du = dval
    return u


@nb.njit(cache=True)
def _u_regimes(a, b, s, conn_max, asym_min):
    if s <= conn_max:
        return _u_connection(a, b, s)[0]
    if s >= asym_min:
        return _u_asymptotic(a, b, s)
    u0 = _u_asymptotic(a, b, asym_min)
    du0 = -a * _u_asymptotic(a + 1.0, b + 1.0, asym_min)
    return _u_taylor(a, b, s, asym_min, u0, du0)


@nb.njit(cache=True)
def _u_positive_a(a, b, s):
    return _u_regimes(a, b, s, CONNECTION_MAX_S, ASYMPTOTIC_MIN_S)


@nb.njit(cache=True)
def tricomi_u_kernel(a, b, s):
    """U(a, b, s) for s > 0 and non-integer b.  No argument checks."""
    if a == 0.0:
        return 1.0
    if a > 0.0:
        return _u_positive_a(a, b, s)
    # a < 0: start from a0 = a + n in (0, 1] and recur downward
    n = int(math.ceil(-a))
    if a + n == 0.0:
        n += 1
    a0 = a + n
    u_hi = _u_positive_a(a0 + 1.0, b, s)
    u_cur = _u_positive_a(a0, b, s)
    ak = a0
    for _ in range(n):
        u_lo = (s + 2.0 * ak - b) * u_cur - ak * (ak - b + 1.0) * u_hi
        u_hi = u_cur
        u_cur = u_lo
        ak -= 1.0
    return u_cur


# ---------------------------------------------------------------------------
# public wrappers
# ---------------------------------------------------------------------------


def gamma(x):
    """Gamma function for real ``x``; raises at the poles 0, -1, -2, ..."""
    x = float(x)
    if x <= 0.0 and x == math.floor(x):
        raise SpecialFunctionError(f"gamma has a pole at {x}")
    return math.gamma(x)


def kummer_m(a, b, s):
    """Kummer's confluent hypergeometric function M(a, b, s) for s >= 0."""
    a, b, s = float(a), float(b), float(s)
    if b <= 0.0 and b == math.floor(b):
        raise SpecialFunctionError(f"M(a, b, s) undefined for b = {b}")
    if s < 0.0:
        raise SpecialFunctionError("kummer_m requires s >= 0")
    val = _kummer_m(a, b, s)
    if math.isnan(val):
        raise SpecialFunctionError(
            f"Kummer series did not converge in {KUMMER_MAX_TERMS} terms "
            f"(a={a}, b={b}, s={s})")
    return val


def tricomi_u(a, b, s):
    """
    Tricomi's confluent hypergeometric function U(a, b, s).

    Parameters
    ----------
    a : float
        First parameter; any real value.  Non-positive ``a`` is reached by
        the backward recurrence in ``a``.
    b : float
        Second parameter, non-integer.
    s : float
        Argument, ``s > 0``.

    Raises
    ------
    SpecialFunctionError
        If ``s <= 0``, ``b`` is an integer, or any argument is complex.

    Warns
    -----
    PrecisionLossWarning
        When the connection formula is used and its two terms cancel by more
        than ``CANCELLATION_WARN_RATIO``.
    """
    for v in (a, b, s):
        if isinstance(v, complex) or np.iscomplexobj(v):
            raise SpecialFunctionError("complex arguments are not supported")
    a, b, s = float(a), float(b), float(s)
    if not s > 0.0:
        raise SpecialFunctionError(f"tricomi_u requires s > 0, got {s}")
    if b == math.floor(b):
        raise SpecialFunctionError(f"integer b = {b} is not supported")
    val = tricomi_u_kernel(a, b, s)
    if a > 0.0 and s <= CONNECTION_MAX_S:
        mag = _u_connection(a, b, s)[1]
        if val == 0.0 or mag / abs(val) > CANCELLATION_WARN_RATIO:
            warnings.warn(
                f"connection formula cancellation {mag / abs(val) if val else np.inf:.3g} "
                f"at (a={a}, b={b}, s={s})", PrecisionLossWarning, stacklevel=2)
    return val


def u_oracle(a, b, s):
    """
    Brute-force reference for U(a, b, s), ``a > 0``, by adaptive quadrature of

        U = 1/G(a) int_0^inf exp(-s t) t^(a-1) (1+t)^(b-a-1) dt.

    Only meant for tests.  After t = tau/s the integrand is
    exp(-tau) tau^(a-1) (1 + tau/s)^(b-a-1); the algebraic endpoint
    singularity is handled by QUADPACK's QAWS weight.
    """
    if a <= 0:
        raise SpecialFunctionError("u_oracle needs a > 0")
    c = b - a - 1.0

    def smooth(tau):
        return math.exp(-tau) * (1.0 + tau / s) ** c

    opts = dict(epsabs=0.0, epsrel=1e-13, limit=500)
    pieces = []
    cut = min(s, 1.0)
    pieces.append(integrate.quad(smooth, 0.0, cut, weight="alg", wvar=(a - 1.0, 0.0), **opts)[0])
    if cut < 1.0:
        pieces.append(integrate.quad(lambda t: smooth(t) * t ** (a - 1.0), cut, 1.0, **opts)[0])
    pieces.append(integrate.quad(lambda t: smooth(t) * t ** (a - 1.0), 1.0, np.inf, **opts)[0])
    return math.fsum(pieces) * s ** (-a) / math.gamma(a)
