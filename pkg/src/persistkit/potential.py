"""
Discrete potential theory of the killed integrated walk.

The corrector ``f(z) = E_z h(Z_1) - h(z)`` (with ``h`` extended by zero to
``x <= 0``) measures how far ``h`` is from being harmonic for the walk.
Summing it along the killed path turns ``h`` into the discrete harmonic
function

    V(z) = h(z) + E_z sum_{l=0}^{tau-1} f(Z_l),

which is also the limit ``lim_n E_z[h(Z_n); tau > n]``.  At any finite
horizon ``H`` the two estimators have the same mean,

    E_z[h(Z_H); tau > H] = h(z) + E_z sum_{l=0}^{min(tau,H)-1} f(Z_l),

since ``h(Z_{n ^ tau}) - sum_{l < n ^ tau} f(Z_l)`` is a martingale.
"""
import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numba as nb
import numpy as np
from scipy import integrate

from .harmonic import HarmonicDomainError, PlanePoint, h_eval, h_kernel
from .rng import chunk_key, next_normal, reset_stream, splitmix64
from .stats import DEFAULT_CHUNK_SIZE, McEstimate, Tally, run_chunks
from .walk import (GAUSSIAN, LAPLACE, RADEMACHER, UNIFORM, IncrementDistribution, draw_increment,
                   survival_tally, survivor_endpoints)
from .diffusion import transition_density

__all__ = [
    "CorrectorSpec",
    "MartingaleProbe",
    "HarmonicityCheck",
    "ConditionalSample",
    "QuadratureError",
    "InsufficientSurvivorsError",
    "corrector_f",
    "corrector_reference",
    "corrector_visitor",
    "estimate_V_series",
    "estimate_V0_limit",
    "check_harmonicity",
    "martingale_probe",
    "martingale_exact",
    "amplitude_C",
    "limit_density_marginals",
    "conditional_limit_sample",
    "DEFAULT_SERIES_HORIZON",
]

TAG_SERIES = 3
TAG_ONESTEP = 4
TAG_MARTINGALE = 5

DEFAULT_SERIES_HORIZON = 2**14
CORRECTOR_ABS_TOL = 1e-10

# |u| beyond which the increment density times h is below ~1e-16 max(1, h)
DEFAULT_TAIL_CUT = {"gaussian": 9.0, "laplace": 26.0, "uniform": math.sqrt(3.0)}

_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT3 = math.sqrt(3.0)
_LAPLACE_B = 1.0 / math.sqrt(2.0)

_GK_X = np.array([0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                  0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                  0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                  0.207784955007898467600689403773245, 0.0])
_GK_WK = np.array([0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                   0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                   0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                   0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_GK_WG = np.array([0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                   0.381830050505118944950369775488975, 0.417959183673469387755102040816327])

_STACK = 4096
_MAX_INTERVALS = 20000

# Fixed rules used away from the boundary corner, where the integrand is
# analytic in a wide strip: either x is large, or both the seam u = -y and the
# kill point u = -(x+y) lie far outside the bulk of the increment law.
# Thresholds from comparisons with QUADPACK.
_GH_U, _GH_W = np.polynomial.hermite_e.hermegauss(24)
_GH_W = _GH_W / _GH_W.sum()
_GL_T, _GL_W = np.polynomial.laguerre.laggauss(32)
_GH_FAR_SUM, _GH_FAR_X = 19.0, 16.0
_GL_FAR_SUM, _GL_FAR_X = 36.0, 32.0


class QuadratureError(RuntimeError):
    """The corrector quadrature did not reach its tolerance."""


class InsufficientSurvivorsError(RuntimeError):
    """Too few surviving paths for the requested statistic."""


@dataclass(frozen=True)
class CorrectorSpec:
    """
    How to evaluate the corrector for one increment law.

    ``quadrature`` is ``"exact-sum"`` (finite lattice laws only) or
    ``"adaptive-quadrature"``; ``None`` picks the natural choice.
    ``tail_cut`` bounds the integration range ``|u| <= tail_cut``.
    """

    dist: IncrementDistribution
    quadrature: str = None
    tail_cut: float = None
    abs_tol: float = CORRECTOR_ABS_TOL

    def __post_init__(self):
        q = self.quadrature
        if q is None:
            q = "exact-sum" if self.dist.is_lattice else "adaptive-quadrature"
            object.__setattr__(self, "quadrature", q)
        if q not in ("exact-sum", "adaptive-quadrature"):
            raise ValueError(f"unknown quadrature {q!r}")
        if q == "exact-sum" and not self.dist.is_lattice:
            raise ValueError("exact-sum requires a finite lattice law")
        if q == "adaptive-quadrature" and self.dist.is_lattice:
            raise ValueError("lattice laws have no density; use exact-sum")
        if self.tail_cut is None and not self.dist.is_lattice:
            object.__setattr__(self, "tail_cut", DEFAULT_TAIL_CUT[self.dist.kind])
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")

    def kernel_args(self):
        kind, sup, cdf = self.dist.kernel_args()
        probs = np.asarray(self.dist.probs, float) if self.dist.is_lattice else np.ones(1)
        cut = float(self.tail_cut) if self.tail_cut is not None else 0.0
        return kind, sup, cdf, probs, cut, float(self.abs_tol)

    def to_dict(self):
        return {"dist": self.dist.to_dict(), "quadrature": self.quadrature,
                "tail_cut": self.tail_cut, "abs_tol": self.abs_tol}


class MartingaleProbe(NamedTuple):
    start: PlanePoint
    ns: list
    means: list


class HarmonicityCheck(NamedTuple):
    """``lhs`` estimates ``E_z[V(Z_1); tau > 1]``, ``rhs`` estimates ``V(z)``."""

    lhs: McEstimate
    rhs: McEstimate
    zscore: float


# ---------------------------------------------------------------------------
# corrector kernels
# ---------------------------------------------------------------------------


@nb.njit(cache=True)
def _pdf(kind, u):
    if kind == GAUSSIAN:
        return _INV_SQRT2PI * math.exp(-0.5 * u * u)
    if kind == UNIFORM:
        return 0.5 / _SQRT3 if abs(u) <= _SQRT3 else 0.0
    return 0.5 / _LAPLACE_B * math.exp(-abs(u) / _LAPLACE_B)


@nb.njit(cache=True)
def _gk15(kind, x, y, a, b):
    c = 0.5 * (a + b)
    r = 0.5 * (b - a)
    fc = h_kernel(x + y + c, y + c) * _pdf(kind, c)
    kk = _GK_WK[7] * fc
    gg = _GK_WG[3] * fc
    for j in range(7):
        d = r * _GK_X[j]
        u1 = c - d
        u2 = c + d
        f1 = h_kernel(x + y + u1, y + u1) * _pdf(kind, u1)
        f2 = h_kernel(x + y + u2, y + u2) * _pdf(kind, u2)
        kk += _GK_WK[j] * (f1 + f2)
        if j % 2 == 1:
            gg += _GK_WG[j // 2] * (f1 + f2)
    return kk * r, abs(kk - gg) * r


@nb.njit(cache=True)
def _expect_h_continuous(kind, x, y, cut, tol):
    """E h(x+y+X, y+X) by adaptive Gauss-Kronrod; returns (value, error estimate, ok)."""
    lo = max(-(x + y), -cut)
    hi = cut
    if lo >= hi:
        return 0.0, 0.0, True
    brk = np.empty(6)
    nb_ = 0
    brk[nb_] = lo
    nb_ += 1
    for p in (-y, 0.0 if kind == LAPLACE else hi, -(x + y) + 1.0):
        if lo < p < hi:
            brk[nb_] = p
            nb_ += 1
    brk[nb_] = hi
    nb_ += 1
    brk = np.sort(brk[:nb_])
    total_len = hi - lo
    sa = np.empty(_STACK)
    sb = np.empty(_STACK)
    top = 0
    for i in range(nb_ - 1):
        if brk[i + 1] > brk[i]:
            sa[top] = brk[i]
            sb[top] = brk[i + 1]
            top += 1
    val = 0.0
    err = 0.0
    ok = True
    used = 0
    while top > 0:
        top -= 1
        a = sa[top]
        b = sb[top]
        v, e = _gk15(kind, x, y, a, b)
        used += 1
        if e <= tol * (b - a) / total_len or (b - a) < 1e-13 * (1.0 + abs(a)):
            val += v
            err += e
        elif top + 2 > _STACK or used >= _MAX_INTERVALS:
            ok = False
            val += v
            err += e
        else:
            m = 0.5 * (a + b)
            sa[top] = a
            sb[top] = m
            sa[top + 1] = m
            sb[top + 1] = b
            top += 2
    return val, err, ok


@nb.njit(cache=True)
def corrector_kernel(kind, support, probs, cut, tol, x, y):
    """f(x, y) including states with x <= 0 (unkilled walk); NaN on quadrature failure."""
    hz = h_kernel(x, y)
    if kind == RADEMACHER:
        return 0.5 * (h_kernel(x + y + 1.0, y + 1.0) + h_kernel(x + y - 1.0, y - 1.0)) - hz
    if support.size > 1 or kind > LAPLACE:
        acc = 0.0
        for i in range(support.size):
            s = support[i]
            acc += probs[i] * h_kernel(x + y + s, y + s)
        return acc - hz
    if kind == GAUSSIAN and (x >= _GH_FAR_X or (abs(y) >= _GH_FAR_SUM and abs(x + y) >= _GH_FAR_SUM)):
        acc = 0.0
        for i in range(_GH_U.size):
            u = _GH_U[i]
            acc += _GH_W[i] * h_kernel(x + y + u, y + u)
        return acc - hz
    if kind == LAPLACE and (x >= _GL_FAR_X or (abs(y) >= _GL_FAR_SUM and abs(x + y) >= _GL_FAR_SUM)):
        acc = 0.0
        for i in range(_GL_T.size):
            u = _LAPLACE_B * _GL_T[i]
            acc += _GL_W[i] * (h_kernel(x + y + u, y + u) + h_kernel(x + y - u, y - u))
        return 0.5 * acc - hz
    v, e, ok = _expect_h_continuous(kind, x, y, cut, tol * max(1.0, hz))
    if not ok:
        return np.nan
    return v - hz


def corrector_f(spec, z, allow_killed=False):
    """
    Corrector ``f(z) = E h(x + y + X, y + X) - h(x, y)``.

    Lattice laws use the exact finite sum; continuous laws use adaptive
    Gauss-Kronrod quadrature split at the kill point ``x + y + X = 0`` and
    the branch seam ``y + X = 0``, with absolute tolerance
    ``spec.abs_tol * max(1, h(z))``.

    Raises
    ------
    HarmonicDomainError
        If ``x <= 0`` and ``allow_killed`` is false (killed states are never
        visited by the killed walk).
    QuadratureError
        If the quadrature does not converge.
    """
    x, y = float(z[0]), float(z[1])
    if not x > 0 and not allow_killed:
        raise HarmonicDomainError("corrector_f is only evaluated at alive states x > 0")
    kind, sup, _, probs, cut, tol = spec.kernel_args()
    if spec.quadrature == "exact-sum":
        return corrector_kernel(kind, sup, probs, cut, tol, x, y)
    v = corrector_kernel(kind, sup, probs, cut, tol, x, y)
    if math.isfinite(v):
        return v
    hz = h_kernel(x, y)
    v, e, ok = _expect_h_continuous(kind, x, y, cut, tol * max(1.0, hz))
    if not ok or not math.isfinite(v):
        raise QuadratureError(f"corrector quadrature failed at z=({x}, {y}): value {v}, error estimate {e}")
    return v - hz


def corrector_reference(dist, z, tail_cut=None):
    """Independent reference for ``f`` via QUADPACK (or plain summation for lattice laws)."""
    x, y = float(z[0]), float(z[1])
    hz = h_kernel(x, y)
    if dist.is_lattice:
        terms = [p * h_kernel(x + y + s, y + s) for s, p in zip(dist.support, dist.probs)]
        return math.fsum(terms) - hz
    if dist.kind == "gaussian":
        pdf = lambda u: math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
        lo, hi = -12.0, 12.0
    elif dist.kind == "uniform":
        pdf = lambda u: 0.5 / _SQRT3
        lo, hi = -_SQRT3, _SQRT3
    else:
        pdf = lambda u: math.exp(-abs(u) / _LAPLACE_B) / (2 * _LAPLACE_B)
        lo, hi = -40.0, 40.0
    if tail_cut is not None:
        lo, hi = max(lo, -tail_cut), min(hi, tail_cut)
    lo = max(lo, -(x + y))
    if lo >= hi:
        return -hz
    pts = sorted({p for p in (-y, 0.0) if lo < p < hi})
    edges = [lo] + pts + [hi]
    parts = []
    for a, b in zip(edges[:-1], edges[1:]):
        v, _ = integrate.quad(lambda u: h_kernel(x + y + u, y + u) * pdf(u), a, b,
                              epsabs=1e-14, epsrel=1e-13, limit=500)
        parts.append(v)
    return math.fsum(parts) - hz


def corrector_visitor(spec):
    """Visitor for :func:`persistkit.walk.simulate_exit` returning ``f`` at each visited state."""
    kind, sup, _, probs, cut, tol = spec.kernel_args()
    return lambda k, x, y: corrector_kernel(kind, sup, probs, cut, tol, x, y)


# ---------------------------------------------------------------------------
# path kernels
# ---------------------------------------------------------------------------


@nb.njit(cache=True)
def _series_chunk(kind, sup, cdf, probs, cut, tol, x0, y0, horizon, n_paths, k0, k1, tag, first_step):
    """
    Per-path sums along the killed walk; returns (sum, sumsq, censored, failures).

    ``first_step = False``: sample is ``sum_{l=0}^{min(tau,H)-1} f(Z_l)``.
    ``first_step = True``: sample is ``1{tau > 1} (h(Z_1) + sum_{l=1}^{min(tau,H)-1} f(Z_l))``,
    an unbiased single-path estimate of ``E_z[V_{H-1}(Z_1); tau > 1]``.
    """
    st = np.zeros(6, np.uint64)
    buf = np.zeros(4, np.uint64)
    gc = np.zeros(2)
    s1 = 0.0
    s2 = 0.0
    censored = 0
    failures = 0
    for p in range(n_paths):
        reset_stream(st, buf, gc, k0, k1, np.uint64(p), np.uint64(tag))
        x = x0
        y = y0
        acc = 0.0
        alive = True
        l0 = 0
        if first_step:
            y += draw_increment(kind, sup, cdf, st, buf, gc)
            x += y
            if x <= 0.0:
                alive = False
            else:
                acc = h_kernel(x, y)
            l0 = 1
        if alive:
            for l in range(l0, horizon):
                fv = corrector_kernel(kind, sup, probs, cut, tol, x, y)
                if fv != fv:
                    failures += 1
                    fv = 0.0
                acc += fv
                y += draw_increment(kind, sup, cdf, st, buf, gc)
                x += y
                if x <= 0.0:
                    alive = False
                    break
            if alive:
                censored += 1
        s1 += acc
        s2 += acc * acc
    return s1, s2, censored, failures


@nb.njit(cache=True)
def _martingale_chunk(kind, sup, cdf, probs, cut, tol, x0, y0, ns, n_paths, k0, k1):
    """Unkilled Y_n = h(Z_n) - sum_{k<n} f(Z_k): sums and sums of squares at each n in ns."""
    m = ns.size
    s1 = np.zeros(m)
    s2 = np.zeros(m)
    st = np.zeros(6, np.uint64)
    buf = np.zeros(4, np.uint64)
    gc = np.zeros(2)
    nmax = ns[m - 1]
    for p in range(n_paths):
        reset_stream(st, buf, gc, k0, k1, np.uint64(p), np.uint64(TAG_MARTINGALE))
        x = x0
        y = y0
        acc = 0.0
        idx = 0
        for k in range(nmax + 1):
            while idx < m and ns[idx] == k:
                yv = h_kernel(x, y) - acc
                s1[idx] += yv
                s2[idx] += yv * yv
                idx += 1
            if k == nmax:
                break
            acc += corrector_kernel(kind, sup, probs, cut, tol, x, y)
            y += draw_increment(kind, sup, cdf, st, buf, gc)
            x += y
    return s1, s2


def _series_worker(chunk, m, seed, spec, z, horizon, tag, first_step):
    k0, k1 = chunk_key(seed, chunk)
    kind, sup, cdf, probs, cut, tol = spec.kernel_args()
    return _series_chunk(kind, sup, cdf, probs, cut, tol, float(z[0]), float(z[1]), int(horizon), m,
                         np.uint64(k0), np.uint64(k1), tag, first_step)


def _martingale_worker(chunk, m, seed, spec, z, ns):
    k0, k1 = chunk_key(seed, chunk)
    kind, sup, cdf, probs, cut, tol = spec.kernel_args()
    return _martingale_chunk(kind, sup, cdf, probs, cut, tol, float(z[0]), float(z[1]), ns, m,
                             np.uint64(k0), np.uint64(k1))


def _chunk_counts(n_paths, chunk_size):
    full, rest = divmod(int(n_paths), int(chunk_size))
    return [int(chunk_size)] * full + ([rest] if rest else [])


def _series_tally(spec, z, horizon, n_paths, seed, chunk_size, workers, chunk_offset, tag, first_step):
    ids, res = run_chunks(_series_worker, n_paths, chunk_size, workers, chunk_offset,
                          (int(seed), spec, (float(z[0]), float(z[1])), int(horizon), tag, first_step))
    tally = Tally(1)
    censored = failures = 0
    for c, m, (s1, s2, cen, fail) in zip(ids, _chunk_counts(n_paths, chunk_size), res):
        tally.add_chunk(c, [s1], [s2], m)
        censored += cen
        failures += fail
    if failures:
        raise QuadratureError(f"{failures} corrector evaluations failed along the simulated paths")
    return tally, censored


def _subseed(seed, *labels):
    s = int(seed)
    for lab in labels:
        s = splitmix64((s + int(lab) + 1) & ((1 << 64) - 1))
    return s


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def estimate_V_series(spec, z, horizon=DEFAULT_SERIES_HORIZON, n_paths=10_000, seed=0,
                      chunk_size=DEFAULT_CHUNK_SIZE, workers=None, chunk_offset=0):
    """
    Corrector-series estimate of ``V(z) = h(z) + E_z sum_{l=0}^{tau-1} f(Z_l)``.

    The sum starts at ``l = 0`` (it includes ``f(z)``) and each path is cut at
    ``horizon`` steps.  Censored paths contribute their partial sums; the
    censored fraction is reported in ``info["censored_fraction"]`` since it
    bounds the visible truncation.  Expectation equals
    ``E_z[h(Z_H); tau > H]`` exactly.
    """
    x, y = float(z[0]), float(z[1])
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    tally, censored = _series_tally(spec, (x, y), horizon, n_paths, seed, chunk_size, workers,
                                    chunk_offset, TAG_SERIES, False)
    return tally.estimate(0, seed=seed, shift=h_kernel(x, y), horizon=int(horizon),
                          censored_fraction=censored / tally.n, estimator="series")


def series_tally(spec, z, horizon, n_paths, seed, chunk_size=DEFAULT_CHUNK_SIZE, workers=None, chunk_offset=0):
    """Raw :class:`Tally` of the corrector sums (for merging partial runs)."""
    return _series_tally(spec, z, horizon, n_paths, seed, chunk_size, workers, chunk_offset, TAG_SERIES, False)[0]


def estimate_V0_limit(spec, z, ns, n_paths=100_000, seed=0, chunk_size=DEFAULT_CHUNK_SIZE, workers=None):
    """
    ``E_z[h(Z_n); tau > n]`` for each ``n`` in ``ns`` (one sweep per path).

    ``n = 0`` gives ``h(z)`` exactly.  The sequence converges to ``V(z)``.
    """
    dist = spec.dist if isinstance(spec, CorrectorSpec) else spec
    ns_arr, alive, hval = survival_tally(dist, z, ns, n_paths, seed, chunk_size, workers, record_h=True)
    out = []
    for q, n in enumerate(ns_arr):
        if n == 0:
            hz = h_kernel(float(z[0]), float(z[1]))
            out.append(McEstimate(hz, 0.0, hval.n, int(seed), len(hval.chunk_ids), {"n": 0, "estimator": "limit"}))
        else:
            out.append(hval.estimate(q, seed=seed, n=int(n), estimator="limit"))
    return out


def _v_series_nested(spec, z, horizon, n_paths, seed, workers):
    if not float(z[0]) > 0:
        return McEstimate(0.0, 0.0, n_paths, seed, 0, {"killed": True})
    return estimate_V_series(spec, z, horizon, n_paths, seed, workers=workers)


def check_harmonicity(spec, z, n_paths=10_000, seed=0, horizon=256, workers=None, chunk_size=DEFAULT_CHUNK_SIZE):
    """
    Compare ``E_z[V(Z_1); tau > 1]`` with ``V(z)``.

    ``rhs`` is the series estimate at horizon ``H``.  ``lhs`` uses horizon
    ``H - 1`` after the first step, which makes the identity exact at finite
    ``H``.  For lattice laws ``lhs`` is the exact probability-weighted sum of
    independent nested estimates at the successors; for continuous laws each
    outer draw of ``Z_1`` is followed by one independent inner path.
    """
    x, y = float(z[0]), float(z[1])
    if not x > 0:
        raise HarmonicDomainError("check_harmonicity needs an alive state x > 0")
    if horizon < 2:
        raise ValueError("horizon must be >= 2")
    rhs = estimate_V_series(spec, (x, y), horizon, n_paths, _subseed(seed, 0), workers=workers)
    dist = spec.dist
    if dist.is_lattice:
        vals, ses = [], []
        for i, (s, p) in enumerate(zip(dist.support, dist.probs)):
            z1 = (x + y + s, y + s)
            e = _v_series_nested(spec, z1, horizon - 1, n_paths, _subseed(seed, i + 1), workers)
            vals.append(p * e.value)
            ses.append(p * e.stderr)
        lhs = McEstimate(math.fsum(vals), math.sqrt(math.fsum(v * v for v in ses)), n_paths * len(vals),
                         int(seed), 0, {"method": "exact-sum"})
    else:
        tally, _ = _series_tally(spec, (x, y), horizon, n_paths, _subseed(seed, 1), chunk_size, workers, 0,
                                 TAG_ONESTEP, True)
        lhs = tally.estimate(0, seed=seed, method="nested-single-path")
    return HarmonicityCheck(lhs, rhs, lhs.zscore(rhs))


def martingale_probe(spec, z, ns, n_paths=10_000, seed=0, chunk_size=DEFAULT_CHUNK_SIZE, workers=None):
    """
    Monte Carlo means of ``Y_n = h(Z_n) - sum_{k<n} f(Z_k)`` for the unkilled walk.

    ``f`` is evaluated with the zero-extended ``h`` at every state, including
    ``x <= 0``.  Every mean should equal ``h(z)``.
    """
    ns = np.asarray(sorted(int(n) for n in ns), np.int64)
    if ns.size == 0 or ns[0] < 0 or np.any(np.diff(ns) <= 0):
        raise ValueError("ns must be distinct non-negative integers")
    ids, res = run_chunks(_martingale_worker, n_paths, chunk_size, workers, 0,
                          (int(seed), spec, (float(z[0]), float(z[1])), ns))
    tally = Tally(ns.size)
    for c, m, (s1, s2) in zip(ids, _chunk_counts(n_paths, chunk_size), res):
        tally.add_chunk(c, s1, s2, m)
    hz = h_kernel(float(z[0]), float(z[1]))
    means = []
    for q, n in enumerate(ns):
        if n == 0:
            means.append(McEstimate(hz, 0.0, tally.n, int(seed), len(ids), {"n": 0}))
        else:
            means.append(tally.estimate(q, seed=seed, n=int(n)))
    return MartingaleProbe(PlanePoint(float(z[0]), float(z[1])), [int(n) for n in ns], means)


def martingale_exact(dist, z, n):
    """``E Y_n`` for a finite lattice law by enumerating all ``len(support)^n`` paths."""
    if not dist.is_lattice:
        raise ValueError("exact enumeration needs a finite lattice law")
    spec = CorrectorSpec(dist)
    kind, sup, _, probs, cut, tol = spec.kernel_args()
    terms = []
    for path in itertools.product(range(len(sup)), repeat=int(n)):
        x, y = float(z[0]), float(z[1])
        w = 1.0
        acc = 0.0
        for i in path:
            acc += corrector_kernel(kind, sup, probs, cut, tol, x, y)
            y += sup[i]
            x += y
            w *= probs[i]
        terms.append(w * (h_kernel(x, y) - acc))
    return math.fsum(terms)


def amplitude_C(spec, n_paths=10_000, seed=0, horizon=1024, method="series", workers=None,
                chunk_size=DEFAULT_CHUNK_SIZE):
    """
    ``C = E[V((X, X)); X > 0]``.

    ``method="series"``: lattice laws sum ``p_s V((s, s))`` over positive
    atoms with nested series estimates; continuous laws draw ``X`` and follow
    one inner path from ``(X, X)``.  ``method="limit"`` uses
    ``E_0[h(Z_n); tau > n]`` at ``n = horizon``, which has the same limit.
    """
    dist = spec.dist
    if method == "limit":
        est = estimate_V0_limit(spec, (0.0, 0.0), [int(horizon)], n_paths, seed, chunk_size, workers)[0]
        return McEstimate(est.value, est.stderr, est.n_samples, est.seed, est.chunks,
                          {"method": "limit", "horizon": int(horizon)})
    if method != "series":
        raise ValueError(f"unknown method {method!r}")
    if dist.is_lattice:
        vals, ses = [], []
        for i, (s, p) in enumerate(zip(dist.support, dist.probs)):
            if s <= 0 or p == 0:
                continue
            e = estimate_V_series(spec, (s, s), horizon, n_paths, _subseed(seed, i + 1), workers=workers)
            vals.append(p * e.value)
            ses.append(p * e.stderr)
        return McEstimate(math.fsum(vals), math.sqrt(math.fsum(v * v for v in ses)), n_paths * len(vals),
                          int(seed), 0, {"method": "series", "horizon": int(horizon)})
    tally, _ = _series_tally(spec, (0.0, 0.0), horizon + 1, n_paths, seed, chunk_size, workers, 0,
                             TAG_ONESTEP, True)
    return tally.estimate(0, seed=seed, method="series", horizon=int(horizon))


# ---------------------------------------------------------------------------
# conditional limit law
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LimitMarginals:
    """Marginal CDFs of the density proportional to ``h(x, y) g_1(0, 0; x, y)`` on ``x > 0``."""

    xs: np.ndarray
    cdf_x: np.ndarray
    ys: np.ndarray
    cdf_y: np.ndarray
    normalizer: float


_MARGINALS = {}


def limit_density_marginals(nx=900, ny=1201, x_max=6.0, y_max=8.0):
    """Grid quadrature of the limit density; cached per grid."""
    key = (nx, ny, x_max, y_max)
    if key in _MARGINALS:
        return _MARGINALS[key]
    t = np.linspace(0.0, 1.0, nx)
    xs = x_max * t**3
    ys = np.linspace(-y_max, y_max, ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    dens = np.zeros_like(X)
    inner = X > 0
    dens[inner] = h_eval(X[inner], Y[inner]) * transition_density(1.0, (0.0, 0.0), (X[inner], Y[inner]))
    wy = integrate.trapezoid(dens, ys, axis=1)  # x-profile
    wx = integrate.trapezoid(dens, xs, axis=0)  # y-profile
    norm = integrate.trapezoid(wy, xs)
    cdf_x = integrate.cumulative_trapezoid(wy, xs, initial=0.0) / norm
    cdf_y = integrate.cumulative_trapezoid(wx, ys, initial=0.0) / norm
    out = LimitMarginals(xs, cdf_x, ys, cdf_y, float(norm))
    _MARGINALS[key] = out
    return out


def _ks(sample, grid, cdf):
    s = np.sort(sample)
    n = s.size
    f = np.interp(s, grid, cdf, left=0.0, right=1.0)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


@dataclass(frozen=True)
class ConditionalSample:
    """
    Rescaled survivors ``(S_n^(2) / n^(3/2), S_n / n^(1/2))`` given ``tau > n``.

    ``distance`` is the larger of the two marginal Kolmogorov-Smirnov
    distances to the limit density.
    """

    n: int
    points: np.ndarray
    n_paths: int
    distance: float
    ks_x: float
    ks_y: float
    info: dict = field(default_factory=dict, compare=False)


def conditional_limit_sample(dist, z, n, n_paths, seed, min_survivors=500, max_survivors=None,
                             chunk_size=DEFAULT_CHUNK_SIZE, workers=None):
    """
    Survivor cloud at time ``n`` and its distance to the limit law.

    ``max_survivors`` keeps only the first survivors in path order, so that
    statistics at different ``n`` can be compared at equal sample size.

    Raises
    ------
    InsufficientSurvivorsError
        If fewer than ``min_survivors`` (or ``max_survivors``) paths survive.
    """
    pts = survivor_endpoints(dist, z, n, n_paths, seed, chunk_size, workers)
    need = max(min_survivors, max_survivors or 0)
    if pts.shape[0] < need:
        raise InsufficientSurvivorsError(f"{pts.shape[0]} survivors at n={n}, need {need}")
    if max_survivors is not None:
        pts = pts[:max_survivors]
    scaled = np.column_stack([pts[:, 0] / n**1.5, pts[:, 1] / n**0.5])
    lm = limit_density_marginals()
    kx = _ks(scaled[:, 0], lm.xs, lm.cdf_x)
    ky = _ks(scaled[:, 1], lm.ys, lm.cdf_y)
    return ConditionalSample(int(n), scaled, int(n_paths), max(kx, ky), kx, ky,
                             {"survivors": int(scaled.shape[0]), "seed": int(seed)})
