"""
Integrated random walks ``Z_k = (S_k^(2), S_k)``.

One step from ``(x, y)`` with increment ``X`` is ``y <- y + X; x <- x + y``,
and the walk is killed at the first ``k >= 1`` with ``x <= 0``.

Path ``p`` of chunk ``c`` always draws from ``Stream.for_path(seed, c, p)``,
so :func:`simulate_exit` replays any path of the batch estimators exactly.
"""
import json
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .harmonic import PlanePoint, h_kernel
from .rng import Stream, chunk_key, new_state, next_normal, next_u64, next_uniform, reset_stream
from .stats import DEFAULT_CHUNK_SIZE, McEstimate, Tally, run_chunks

__all__ = [
    "IncrementDistribution",
    "ExitSample",
    "SurvivalCurve",
    "sample_increment",
    "sample_increments",
    "simulate_exit",
    "estimate_survival",
    "survivor_endpoints",
    "walk_endpoints",
    "concentration_check",
    "concentration_from_samples",
]

RADEMACHER, GAUSSIAN, UNIFORM, LAPLACE, LATTICE = range(5)
_KIND_NAMES = {"rademacher": RADEMACHER, "gaussian": GAUSSIAN, "uniform": UNIFORM,
               "laplace": LAPLACE, "lattice": LATTICE}

TAG_WALK = 1

_SQRT3 = math.sqrt(3.0)
_LAPLACE_SCALE = 1.0 / math.sqrt(2.0)
_TWO_M53 = 1.0 / 9007199254740992.0


@dataclass(frozen=True)
class IncrementDistribution:
    """
    Centered, unit-variance increment law.

    ``kind`` is one of rademacher, gaussian, uniform, laplace, lattice.
    ``moment_exponent`` is the declared finite moment order ``2 + delta``.
    Lattice laws carry ``support``/``probs``; rademacher is stored as the
    lattice {-1, +1}.
    """

    kind: str
    moment_exponent: float = math.inf
    support: tuple = ()
    probs: tuple = ()
    aperiodic: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.kind not in _KIND_NAMES:
            raise ValueError(f"unknown increment kind {self.kind!r}")
        if not self.moment_exponent > 2:
            raise ValueError("moment_exponent must exceed 2")
        if self.kind in ("lattice", "rademacher"):
            if self.kind == "rademacher":
                object.__setattr__(self, "support", (-1.0, 1.0))
                object.__setattr__(self, "probs", (0.5, 0.5))
            sup = np.asarray(self.support, float)
            pr = np.asarray(self.probs, float)
            if sup.size == 0 or sup.shape != pr.shape:
                raise ValueError("lattice law needs matching support and probs")
            if np.any(pr < 0) or abs(pr.sum() - 1.0) > 1e-12:
                raise ValueError("lattice probabilities must be >= 0 and sum to 1")
            if np.any(np.diff(sup) <= 0):
                raise ValueError("lattice support must be strictly increasing")
            mean = float(np.dot(sup, pr))
            var = float(np.dot(sup * sup, pr))
            if abs(mean) > 1e-12 or abs(var - 1.0) > 1e-12:
                raise ValueError(f"lattice law must have mean 0 and variance 1 (got {mean}, {var})")
            pos = sup[pr > 0]
            steps = np.diff(pos)
            g = 0
            for v in np.rint(steps).astype(int):
                g = math.gcd(g, int(v))
            object.__setattr__(self, "aperiodic", bool(g == 1 and np.allclose(steps, np.rint(steps))))

    @classmethod
    def rademacher(cls):
        return cls("rademacher")

    @classmethod
    def gaussian(cls):
        return cls("gaussian")

    @classmethod
    def uniform(cls):
        return cls("uniform")

    @classmethod
    def laplace(cls):
        return cls("laplace")

    @classmethod
    def lattice(cls, support, probs, moment_exponent=math.inf):
        return cls("lattice", moment_exponent, tuple(float(s) for s in support), tuple(float(p) for p in probs))

    @classmethod
    def from_json(cls, obj):
        """Lattice law from ``{"support": [ints], "probs": [reals]}`` (dict or JSON text)."""
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            support, probs = obj["support"], obj["probs"]
        except (KeyError, TypeError) as exc:
            raise ValueError("lattice pmf needs 'support' and 'probs'") from exc
        if any(int(s) != s for s in support):
            raise ValueError("lattice support must be integers")
        return cls.lattice(support, probs)

    @classmethod
    def from_name(cls, name):
        if name not in ("rademacher", "gaussian", "uniform", "laplace"):
            raise ValueError(f"no built-in increment law named {name!r}")
        return cls(name)

    @property
    def is_lattice(self):
        return self.kind in ("lattice", "rademacher")

    @property
    def code(self):
        return _KIND_NAMES[self.kind]

    def kernel_args(self):
        """(kind code, support array, cumulative probs) for the numba kernels."""
        sup = np.asarray(self.support, float) if self.is_lattice else np.zeros(1)
        cdf = np.cumsum(np.asarray(self.probs, float)) if self.is_lattice else np.ones(1)
        if self.is_lattice:
            cdf[-1] = 1.0
        code = RADEMACHER if self.kind == "rademacher" else self.code
        return code, sup, cdf

    def to_dict(self):
        d = {"kind": self.kind, "moment_exponent": self.moment_exponent}
        if self.kind == "lattice":
            d.update(support=list(self.support), probs=list(self.probs), aperiodic=self.aperiodic)
        return d


@dataclass(frozen=True)
class ExitSample:
    """
    Outcome of one path: ``exit_time`` is ``tau`` or ``horizon + 1`` when censored.

    ``final_state`` is the first killed state, or the state at the horizon.
    """

    exit_time: int
    final_state: PlanePoint
    corrector_sum: float = math.nan
    survived: bool = False


@dataclass(frozen=True)
class SurvivalCurve:
    """Rows ``(n, estimate of P_z(tau > n))`` with ``n`` strictly increasing."""

    start: PlanePoint
    dist: IncrementDistribution
    rows: tuple

    def __post_init__(self):
        ns = [r[0] for r in self.rows]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("survival curve rows must have strictly increasing n")

    @property
    def ns(self):
        return [r[0] for r in self.rows]

    @property
    def estimates(self):
        return [r[1] for r in self.rows]


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@nb.njit(cache=True, inline="always")
def draw_increment(kind, support, cdf, st, buf, gc):
    if kind == RADEMACHER:
        return 1.0 if (next_u64(st, buf) >> np.uint64(63)) else -1.0
    if kind == GAUSSIAN:
        return next_normal(st, buf, gc)
    if kind == UNIFORM:
        return _SQRT3 * (2.0 * next_uniform(st, buf) - 1.0)
    if kind == LAPLACE:
        u = (float(next_u64(st, buf) >> np.uint64(11)) + 0.5) * _TWO_M53 - 0.5
        if u < 0.0:
            return _LAPLACE_SCALE * math.log(1.0 + 2.0 * u)
        return -_LAPLACE_SCALE * math.log(1.0 - 2.0 * u)
    u = next_uniform(st, buf)
    k = np.searchsorted(cdf, u, side="right")
    if k >= support.size:
        k = support.size - 1
    return support[k]


@nb.njit(cache=True)
def _fill_increments(kind, support, cdf, st, buf, gc, out):
    for i in range(out.size):
        out[i] = draw_increment(kind, support, cdf, st, buf, gc)


@nb.njit(cache=True)
def _survival_chunk(kind, support, cdf, x0, y0, ns, n_paths, k0, k1, record_h):
    """Alive counts and h(Z_n) 1{tau > n} sums/sums of squares at each n in ns."""
    m = ns.size
    alive = np.zeros(m)
    hs = np.zeros(m)
    hsq = np.zeros(m)
    nmax = ns[m - 1]
    st = np.zeros(6, np.uint64)
    buf = np.zeros(4, np.uint64)
    gc = np.zeros(2)
    for p in range(n_paths):
        reset_stream(st, buf, gc, k0, k1, np.uint64(p), np.uint64(TAG_WALK))
        x = x0
        y = y0
        idx = 0
        while idx < m and ns[idx] == 0:
            alive[idx] += 1.0
            if record_h:
                v = h_kernel(x, y)
                hs[idx] += v
                hsq[idx] += v * v
            idx += 1
        for k in range(1, nmax + 1):
            y += draw_increment(kind, support, cdf, st, buf, gc)
            x += y
            if x <= 0.0:
                break
            while idx < m and ns[idx] == k:
                alive[idx] += 1.0
                if record_h:
                    v = h_kernel(x, y)
                    hs[idx] += v
                    hsq[idx] += v * v
                idx += 1
    return alive, hs, hsq


@nb.njit(cache=True)
def _survivor_chunk(kind, support, cdf, x0, y0, n, n_paths, k0, k1):
    """Endpoints Z_n of the paths with tau > n (NaN rows for the others)."""
    out = np.full((n_paths, 2), np.nan)
    st = np.zeros(6, np.uint64)
    buf = np.zeros(4, np.uint64)
    gc = np.zeros(2)
    for p in range(n_paths):
        reset_stream(st, buf, gc, k0, k1, np.uint64(p), np.uint64(TAG_WALK))
        x = x0
        y = y0
        ok = True
        for k in range(n):
            y += draw_increment(kind, support, cdf, st, buf, gc)
            x += y
            if x <= 0.0:
                ok = False
                break
        if ok:
            out[p, 0] = x
            out[p, 1] = y
    return out


@nb.njit(cache=True)
def _endpoint_chunk(kind, support, cdf, x0, y0, n, n_paths, k0, k1):
    """Unkilled endpoints (S_n^(2), S_n)."""
    out = np.empty((n_paths, 2))
    st = np.zeros(6, np.uint64)
    buf = np.zeros(4, np.uint64)
    gc = np.zeros(2)
    for p in range(n_paths):
        reset_stream(st, buf, gc, k0, k1, np.uint64(p), np.uint64(TAG_WALK))
        x = x0
        y = y0
        for k in range(n):
            y += draw_increment(kind, support, cdf, st, buf, gc)
            x += y
        out[p, 0] = x
        out[p, 1] = y
    return out


# ---------------------------------------------------------------------------
# single draws and single paths
# ---------------------------------------------------------------------------


def _stream(rng):
    if isinstance(rng, Stream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return Stream.for_path(int(rng), 0, 0, TAG_WALK)
    raise TypeError("rng must be a persistkit.rng.Stream or an integer seed")


def sample_increment(dist, rng):
    """One draw of the increment ``X`` from ``rng`` (a Stream or integer seed)."""
    s = _stream(rng)
    kind, sup, cdf = dist.kernel_args()
    return draw_increment(kind, sup, cdf, s.st, s.buf, s.gc)


def sample_increments(dist, rng, size):
    """``size`` consecutive draws from one stream."""
    s = _stream(rng)
    kind, sup, cdf = dist.kernel_args()
    out = np.empty(int(size))
    _fill_increments(kind, sup, cdf, s.st, s.buf, s.gc, out)
    return out


def simulate_exit(dist, z0, horizon, rng, visitor=None):
    """
    Follow one path from ``z0`` until ``x <= 0`` or ``horizon`` steps.

    If ``visitor`` is given it is called as ``visitor(k, x, y)`` at every
    surviving state ``Z_k``, ``k = 0 .. exit_time - 1``; numeric return values
    are summed into ``corrector_sum``.

    ``rng`` is a :class:`~persistkit.rng.Stream`; use
    ``Stream.for_path(seed, chunk, path, tag=TAG_WALK)`` to replay a path of
    the batch estimators.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    s = _stream(rng)
    kind, sup, cdf = dist.kernel_args()
    x, y = float(z0[0]), float(z0[1])
    total = 0.0
    have_sum = False

    def visit(k, x, y):
        nonlocal total, have_sum
        if visitor is not None:
            r = visitor(k, x, y)
            if r is not None:
                total += float(r)
                have_sum = True

    visit(0, x, y)
    for k in range(1, horizon + 1):
        y += draw_increment(kind, sup, cdf, s.st, s.buf, s.gc)
        x += y
        if x <= 0.0:
            return ExitSample(k, PlanePoint(x, y), total if have_sum else math.nan, False)
        if k < horizon:
            visit(k, x, y)
    return ExitSample(horizon + 1, PlanePoint(x, y), total if have_sum else math.nan, True)


# ---------------------------------------------------------------------------
# batch estimators
# ---------------------------------------------------------------------------


def _survival_worker(chunk, m, seed, dist, z, ns, record_h):
    k0, k1 = chunk_key(seed, chunk)
    kind, sup, cdf = dist.kernel_args()
    return _survival_chunk(kind, sup, cdf, float(z[0]), float(z[1]), ns, m,
                           np.uint64(k0), np.uint64(k1), record_h)


def survival_tally(dist, z, ns, n_paths, seed, chunk_size=DEFAULT_CHUNK_SIZE, workers=None,
                   chunk_offset=0, record_h=False):
    """Tallies (alive indicators, h(Z_n) 1{tau>n}) over chunks; two Tally objects."""
    ns = np.asarray(sorted(int(n) for n in ns), np.int64)
    if ns.size == 0 or ns[0] < 0:
        raise ValueError("ns must be non-empty and non-negative")
    if np.any(np.diff(ns) <= 0):
        raise ValueError("ns must be strictly increasing")
    ids, res = run_chunks(_survival_worker, n_paths, chunk_size, workers, chunk_offset,
                          (int(seed), dist, tuple(z), ns, bool(record_h)))
    alive = Tally(ns.size)
    hval = Tally(ns.size)
    for c, (a, hs, hsq) in zip(ids, res):
        m = _chunk_len(n_paths, chunk_size, c - chunk_offset)
        alive.add_chunk(c, a, a, m)
        hval.add_chunk(c, hs, hsq, m)
    return ns, alive, hval


def _chunk_len(n_paths, chunk_size, local_idx):
    full, rest = divmod(int(n_paths), int(chunk_size))
    return int(chunk_size) if local_idx < full else rest


def estimate_survival(dist, z, ns, n_paths, seed, chunk_size=DEFAULT_CHUNK_SIZE, workers=None,
                      chunk_offset=0):
    """
    ``P_z(tau > n)`` for every ``n`` in ``ns`` from one sweep per path.

    Each path runs to ``max(ns)`` (or its exit) and contributes its survival
    indicator at every checkpoint; ``{tau > n}`` is decreasing in ``n`` so the
    reuse is unbiased.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    ns, alive, _ = survival_tally(dist, z, ns, n_paths, seed, chunk_size, workers, chunk_offset)
    rows = tuple((int(n), alive.estimate(q, seed=seed)) for q, n in enumerate(ns))
    return SurvivalCurve(PlanePoint(float(z[0]), float(z[1])), dist, rows)


def _survivor_worker(chunk, m, seed, dist, z, n):
    k0, k1 = chunk_key(seed, chunk)
    kind, sup, cdf = dist.kernel_args()
    return _survivor_chunk(kind, sup, cdf, float(z[0]), float(z[1]), int(n), m, np.uint64(k0), np.uint64(k1))


def survivor_endpoints(dist, z, n, n_paths, seed, chunk_size=DEFAULT_CHUNK_SIZE, workers=None):
    """Array of ``Z_n`` over the paths with ``tau > n``, shape (k, 2)."""
    _, res = run_chunks(_survivor_worker, n_paths, chunk_size, workers, 0, (int(seed), dist, tuple(z), int(n)))
    pts = np.concatenate(res, axis=0)
    return pts[~np.isnan(pts[:, 0])]


def _endpoint_worker(chunk, m, seed, dist, z, n):
    k0, k1 = chunk_key(seed, chunk)
    kind, sup, cdf = dist.kernel_args()
    return _endpoint_chunk(kind, sup, cdf, float(z[0]), float(z[1]), int(n), m, np.uint64(k0), np.uint64(k1))


def walk_endpoints(dist, n, n_paths, seed, z=(0.0, 0.0), chunk_size=DEFAULT_CHUNK_SIZE, workers=None):
    """Unkilled ``(S_n^(2), S_n)`` samples, shape (n_paths, 2)."""
    _, res = run_chunks(_endpoint_worker, n_paths, chunk_size, workers, 0, (int(seed), dist, tuple(z), int(n)))
    return np.concatenate(res, axis=0)


# ---------------------------------------------------------------------------
# concentration functionals
# ---------------------------------------------------------------------------

CELL_GRID_STEP = 0.125


@nb.njit(cache=True)
def _window_max(sorted_vals, lo_start, step, halfwidth):
    """max over centers c = lo_start + k*step of #{v in [c-h, c+h]}; returns (count, center)."""
    n = sorted_vals.size
    if n == 0:
        return 0, lo_start
    best = 0
    best_c = lo_start
    c = lo_start
    top = sorted_vals[n - 1] + halfwidth
    i = 0
    j = 0
    k = 0
    while c <= top:
        while i < n and sorted_vals[i] < c - halfwidth:
            i += 1
        while j < n and sorted_vals[j] <= c + halfwidth:
            j += 1
        if j - i > best:
            best = j - i
            best_c = c
        k += 1
        c = lo_start + k * step
    return best, best_c


@nb.njit(cache=True)
def _concentration(xs, ys, step):
    """
    Maximizing cells on the grid of spacing ``step``.

    Returns (strip count, strip center, cell count, cell x-center, cell y-center).
    """
    n = xs.size
    order = np.argsort(xs, kind="mergesort")
    xs_s = xs[order]
    ys_s = ys[order]
    start = math.floor(xs_s[0]) - 1.0
    ncent = int((xs_s[n - 1] + 1.0 - start) / step) + 2
    lo = np.empty(ncent, np.int64)
    hi = np.empty(ncent, np.int64)
    for k in range(ncent):
        c = start + k * step
        lo[k] = np.searchsorted(xs_s, c - 1.0, side="left")
        hi[k] = np.searchsorted(xs_s, c + 1.0, side="right")
    counts = hi - lo
    k1 = np.argmax(counts)
    rank = np.argsort(-counts, kind="mergesort")
    best = 0
    bx = start
    by = 0.0
    for r in range(ncent):
        k = rank[r]
        if counts[k] <= best:
            break
        ysub = np.sort(ys_s[lo[k]:hi[k]])
        v, cy = _window_max(ysub, math.floor(ysub[0]) - 1.0, step, 1.0)
        if v > best:
            best = v
            bx = start + k * step
            by = cy
    return counts[k1], start + k1 * step, best, bx, by


def _cell_prob(xs, ys, cx, cy=None):
    m = np.abs(xs - cx) <= 1.0
    if cy is not None:
        m &= np.abs(ys - cy) <= 1.0
    return m.sum() / xs.size


def concentration_from_samples(xs, ys, step=CELL_GRID_STEP, split=False):
    """
    Empirical ``(q2, q1)`` from samples of ``(S_n^(2), S_n)``.

    ``q1 = max_c P(|S^(2) - c| <= 1)`` and
    ``q2 = max_(c, d) P(|S^(2) - c| <= 1, |S - d| <= 1)`` over cell centers on a
    grid of spacing ``step`` anchored at integers (exact for integer data).

    The plain maximum of empirical frequencies is biased upward when the
    maximizing cell holds few samples.  With ``split=True`` the maximizing
    cells are located on the first half of the samples and their
    probabilities are counted on the second half.  ``q1`` is then the larger
    of the strip found on the first half and the strip containing the ``q2``
    cell, which keeps ``q2 <= q1``.
    """
    xs = np.ascontiguousarray(xs, float)
    ys = np.ascontiguousarray(ys, float)
    if not split:
        c1, _, c2, _, _ = _concentration(xs, ys, float(step))
        return c2 / xs.size, c1 / xs.size
    h = xs.size // 2
    _, s1, _, bx, by = _concentration(xs[:h], ys[:h], float(step))
    xb, yb = xs[h:], ys[h:]
    q2 = _cell_prob(xb, yb, bx, by)
    q1 = max(_cell_prob(xb, yb, s1), _cell_prob(xb, yb, bx))
    return q2, q1


def concentration_check(dist, n, n_paths, seed, chunk_size=DEFAULT_CHUNK_SIZE, workers=None, split=True):
    """
    Concentration functionals ``(q2, q1)`` of the walk from the origin at time ``n``.

    See :func:`concentration_from_samples`; the split-sample estimate is the default.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    pts = walk_endpoints(dist, n, n_paths, seed, (0.0, 0.0), chunk_size, workers)
    return concentration_from_samples(pts[:, 0], pts[:, 1], split=split)
