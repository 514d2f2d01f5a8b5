"""
Monte Carlo bookkeeping: estimates, exact chunk merging and the chunk runner.

Per-chunk sums are kept separately and merged with :func:`math.fsum`, which
is correctly rounded and therefore independent of merge order.  Splitting a
run into several partial runs and merging them reproduces the single run
bit-for-bit.
"""
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

__all__ = ["McEstimate", "Tally", "run_chunks", "resolve_workers", "DEFAULT_CHUNK_SIZE"]

DEFAULT_CHUNK_SIZE = 8192


@dataclass(frozen=True)
class McEstimate:
    """Point estimate with its standard error (sample sd / sqrt(n))."""

    value: float
    stderr: float
    n_samples: int
    seed: int
    chunks: int
    info: dict = field(default_factory=dict, compare=False)

    def zscore(self, other, shift=0.0):
        """|self - other - shift| in units of the combined standard error."""
        if isinstance(other, McEstimate):
            diff = self.value - other.value - shift
            se = math.hypot(self.stderr, other.stderr)
        else:
            diff = self.value - float(other) - shift
            se = self.stderr
        if se == 0.0:
            return 0.0 if diff == 0.0 else math.inf
        return abs(diff) / se

    def to_dict(self):
        d = dict(value=self.value, stderr=self.stderr, n_samples=self.n_samples,
                 seed=self.seed, chunks=self.chunks)
        d.update(self.info)
        return d


class Tally:
    """
    Sums and sums of squares of ``k`` quantities, one row per chunk.

    ``count`` is the number of samples per chunk.
    """

    def __init__(self, n_quantities, chunk_ids=(), sums=None, sumsq=None, counts=None):
        self.k = int(n_quantities)
        self.chunk_ids = list(chunk_ids)
        self.sums = np.zeros((0, self.k)) if sums is None else np.asarray(sums, float).reshape(-1, self.k)
        self.sumsq = np.zeros((0, self.k)) if sumsq is None else np.asarray(sumsq, float).reshape(-1, self.k)
        self.counts = np.zeros(0, np.int64) if counts is None else np.asarray(counts, np.int64)

    def add_chunk(self, chunk_id, sums, sumsq, count):
        self.chunk_ids.append(int(chunk_id))
        self.sums = np.vstack([self.sums, np.asarray(sums, float).reshape(1, self.k)])
        self.sumsq = np.vstack([self.sumsq, np.asarray(sumsq, float).reshape(1, self.k)])
        self.counts = np.append(self.counts, np.int64(count))

    def merge(self, other):
        if other.k != self.k:
            raise ValueError("cannot merge tallies of different width")
        overlap = set(self.chunk_ids) & set(other.chunk_ids)
        if overlap:
            raise ValueError(f"chunks {sorted(overlap)} present in both tallies")
        return Tally(self.k, self.chunk_ids + other.chunk_ids,
                     np.vstack([self.sums, other.sums]), np.vstack([self.sumsq, other.sumsq]),
                     np.concatenate([self.counts, other.counts]))

    @property
    def n(self):
        return int(self.counts.sum())

    def estimate(self, q=0, seed=0, scale=1.0, shift=0.0, **info):
        """McEstimate of ``shift + scale * mean(quantity q)``."""
        n = self.n
        if n == 0:
            raise ValueError("empty tally")
        s = math.fsum(self.sums[:, q])
        ss = math.fsum(self.sumsq[:, q])
        mean = s / n
        if n > 1:
            var = max(ss - n * mean * mean, 0.0) / (n - 1)
            se = math.sqrt(var / n)
        else:
            se = 0.0
        return McEstimate(shift + scale * mean, abs(scale) * se, n, int(seed), len(self.chunk_ids), dict(info))


def resolve_workers(workers=None):
    """Explicit value, else PERSISTKIT_THREADS, else 1."""
    if workers is None:
        env = os.environ.get("PERSISTKIT_THREADS")
        workers = int(env) if env else 1
    return max(1, int(workers))


def chunk_sizes(n_paths, chunk_size):
    n_paths = int(n_paths)
    chunk_size = int(chunk_size)
    if n_paths <= 0 or chunk_size <= 0:
        raise ValueError("n_paths and chunk_size must be positive")
    full, rest = divmod(n_paths, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def run_chunks(fn, n_paths, chunk_size, workers=None, chunk_offset=0, args=()):
    """
    Call ``fn(chunk_id, n_in_chunk, *args)`` for every chunk; results in chunk order.

    ``chunk_offset`` shifts chunk ids, so disjoint partial runs can later be
    merged.  ``fn`` must be a module-level function when ``workers > 1``.
    """
    sizes = chunk_sizes(n_paths, chunk_size)
    ids = [chunk_offset + c for c in range(len(sizes))]
    workers = resolve_workers(workers)
    if workers == 1 or len(sizes) == 1:
        return ids, [fn(c, m, *args) for c, m in zip(ids, sizes)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(fn, c, m, *args) for c, m in zip(ids, sizes)]
        return ids, [f.result() for f in futs]
