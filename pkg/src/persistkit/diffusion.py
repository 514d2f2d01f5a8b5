"""
Kolmogorov diffusion ``(x + y t + int_0^t B_s ds, y + B_t)``.

The Monte Carlo estimator monitors positivity of the first coordinate on a
uniform grid of ``n_steps`` points.  Far from the boundary several grid steps
are merged into one exact Gaussian step: a block of length ``D`` is taken
whole only when ``x + min(y, 0) D >= SKIP_SIGMAS * D^(3/2)``, in which case
the probability that any grid point inside the block is killed is below
``4 exp(-SKIP_SIGMAS^2 / 2)`` (about 1e-17).  The result is the discretely
monitored estimator, computed at a fraction of the cost.
"""
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .harmonic import HarmonicDomainError, PlanePoint, h_kernel
from .rng import Stream, chunk_key, next_normal, reset_stream
from .specfun import gamma
from .stats import DEFAULT_CHUNK_SIZE, Tally, run_chunks

__all__ = [
    "DiffusionStep",
    "transition_density",
    "step_covariance",
    "exact_step",
    "exact_step_increments",
    "kappa",
    "bm_survival_asymptotic",
    "mc_bm_survival",
    "DEFAULT_STEPS_PER_UNIT",
]

TAG_DIFFUSION = 2
DEFAULT_STEPS_PER_UNIT = 64
SKIP_SIGMAS = 9.0

_SQRT3 = math.sqrt(3.0)
_INV_2SQRT3 = 1.0 / (2.0 * _SQRT3)


@dataclass(frozen=True)
class DiffusionStep:
    dt: float
    state: PlanePoint

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (math.isfinite(self.state[0]) and math.isfinite(self.state[1])):
            raise ValueError("state must be finite")


def transition_density(t, frm, to):
    """
    Density ``g_t(x, y; u, v)`` of the diffusion at time ``t``.

    ``sqrt(3)/(pi t^2) exp(-6 a^2/t^3 + 6 a b/t^2 - 2 b^2/t)`` with
    ``a = u - x - t y`` and ``b = v - y``.  ``to`` may hold arrays.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    x, y = frm
    u, v = to
    a = np.asarray(u, float) - x - t * y
    b = np.asarray(v, float) - y
    out = _SQRT3 / (math.pi * t * t) * np.exp(-6.0 * a * a / t**3 + 6.0 * a * b / t**2 - 2.0 * b * b / t)
    return float(out) if np.ndim(out) == 0 else out


def step_covariance(dt):
    """Covariance of ``(int_0^dt B, B_dt)``."""
    return np.array([[dt**3 / 3.0, dt**2 / 2.0], [dt**2 / 2.0, dt]])


@nb.njit(cache=True)
def _gauss_increment(dt, g1, g2):
    sq = math.sqrt(dt)
    b = sq * g1
    a = dt * sq * (0.5 * g1 + _INV_2SQRT3 * g2)
    return a, b


def exact_step(state, dt, rng):
    """
    One exact transition over ``dt``: ``(x + y dt + A, y + B)``.

    ``(A, B)`` is centered Gaussian with covariance :func:`step_covariance`;
    ``rng`` is a :class:`~persistkit.rng.Stream`.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    g1 = rng.normal()
    g2 = rng.normal()
    a, b = _gauss_increment(float(dt), g1, g2)
    x, y = state
    return PlanePoint(x + y * dt + a, y + b)


@nb.njit(cache=True)
def _fill_steps(dt, st, buf, gc, out):
    for i in range(out.shape[0]):
        g1 = next_normal(st, buf, gc)
        g2 = next_normal(st, buf, gc)
        a, b = _gauss_increment(dt, g1, g2)
        out[i, 0] = a
        out[i, 1] = b


def exact_step_increments(dt, size, rng):
    """``size`` independent draws of ``(A, B)`` as an array of shape (size, 2)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    out = np.empty((int(size), 2))
    _fill_steps(float(dt), rng.st, rng.buf, rng.gc, out)
    return out


def kappa():
    """Amplitude ``3 G(1/4) / (2^(3/4) pi^(3/2))`` of the diffusion survival law."""
    return 3.0 * gamma(0.25) / (2.0**0.75 * math.pi**1.5)


def bm_survival_asymptotic(z, t):
    """Leading-order survival ``kappa h(z) / t^(1/4)``.

    Raises
    ------
    HarmonicDomainError
        If ``z`` lies in the killed region (``x < 0``, or ``x = 0`` with ``y <= 0``).
    """
    x, y = float(z[0]), float(z[1])
    if not t > 0:
        raise ValueError("t must be positive")
    if x < 0 or (x == 0 and y <= 0):
        raise HarmonicDomainError(f"start {z} is in the killed region")
    if x == 0:
        # boundary limit of h along x -> 0+ with y > 0 is sqrt(y)
        hz = math.sqrt(y)
    else:
        hz = h_kernel(x, y)
    return kappa() * hz / t**0.25


@nb.njit(cache=True)
def _bm_chunk(x0, y0, dt, n_steps, n_paths, k0, k1, skip_sigmas):
    """Survival indicators and merged-step counts for one chunk."""
    alive = 0.0
    work = 0
    st = np.zeros(6, np.uint64)
    buf = np.zeros(4, np.uint64)
    gc = np.zeros(2)
    for p in range(n_paths):
        reset_stream(st, buf, gc, k0, k1, np.uint64(p), np.uint64(TAG_DIFFUSION))
        x = x0
        y = y0
        k = 0
        ok = True
        while k < n_steps:
            m = 1
            rem = n_steps - k
            while 2 * m <= rem:
                d = 2 * m * dt
                if x + min(y, 0.0) * d >= skip_sigmas * d * math.sqrt(d):
                    m *= 2
                else:
                    break
            d = m * dt
            g1 = next_normal(st, buf, gc)
            g2 = next_normal(st, buf, gc)
            a, b = _gauss_increment(d, g1, g2)
            x += y * d + a
            y += b
            k += m
            work += 1
            if x <= 0.0:
                ok = False
                break
        if ok:
            alive += 1.0
    return alive, work


def _bm_worker(chunk, m, seed, z, dt, n_steps, skip_sigmas):
    k0, k1 = chunk_key(seed, chunk)
    return _bm_chunk(float(z[0]), float(z[1]), dt, n_steps, m, np.uint64(k0), np.uint64(k1), skip_sigmas)


def mc_bm_survival(z, t, n_steps=None, n_paths=100_000, seed=0, chunk_size=DEFAULT_CHUNK_SIZE,
                   workers=None, chunk_offset=0, skip_sigmas=SKIP_SIGMAS):
    """
    Monte Carlo ``P_z(tau_bm > t)`` with discrete monitoring on ``n_steps`` grid points.

    Parameters
    ----------
    z : PlanePoint or pair
        Start, ``x > 0``.
    t : float
        Time horizon, ``t >= 0``; ``t = 0`` returns 1 with zero error.
    n_steps : int, optional
        Monitoring grid size, default ``DEFAULT_STEPS_PER_UNIT * t`` (at least 100).
    skip_sigmas : float
        Safety margin for merging steps; ``inf`` disables merging.

    Returns
    -------
    McEstimate
        ``info`` records ``t``, ``n_steps``, ``dt`` and the mean number of
        Gaussian draws per path.
    """
    x, y = float(z[0]), float(z[1])
    if not x > 0:
        raise HarmonicDomainError("mc_bm_survival needs x > 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    if t == 0:
        tally = Tally(1)
        tally.add_chunk(chunk_offset, [n_paths], [n_paths], n_paths)
        return tally.estimate(0, seed=seed, t=0.0, n_steps=0, dt=0.0)
    if n_steps is None:
        n_steps = max(100, int(math.ceil(DEFAULT_STEPS_PER_UNIT * t)))
    if n_steps < 100:
        raise ValueError("n_steps must be >= 100")
    dt = float(t) / n_steps
    ids, res = run_chunks(_bm_worker, n_paths, chunk_size, workers, chunk_offset,
                          (int(seed), (x, y), dt, int(n_steps), float(skip_sigmas)))
    tally = Tally(1)
    work = 0
    full, rest = divmod(int(n_paths), int(chunk_size))
    for i, (c, (alive, w)) in enumerate(zip(ids, res)):
        m = chunk_size if i < full else rest
        tally.add_chunk(c, [alive], [alive], m)
        work += w
    return tally.estimate(0, seed=seed, t=float(t), n_steps=int(n_steps), dt=dt,
                          steps_per_path=work / n_paths)
