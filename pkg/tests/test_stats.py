import math

import numpy as np
import pytest

from persistkit.stats import McEstimate, Tally, chunk_sizes, resolve_workers, run_chunks


def _square(c, m, base):
    return (c, m, base)


def test_estimate_mean_and_stderr():
    x = np.arange(10.0)
    t = Tally(1)
    t.add_chunk(0, [x[:4].sum()], [(x[:4] ** 2).sum()], 4)
    t.add_chunk(1, [x[4:].sum()], [(x[4:] ** 2).sum()], 6)
    e = t.estimate(0, seed=3, scale=2.0, shift=1.0, tag="a")
    assert e.value == pytest.approx(1 + 2 * x.mean())
    assert e.stderr == pytest.approx(2 * x.std(ddof=1) / math.sqrt(10))
    assert e.n_samples == 10 and e.chunks == 2 and e.seed == 3
    assert e.to_dict()["tag"] == "a"


def test_merge_is_order_independent_and_rejects_overlap():
    rng = np.random.default_rng(0)
    parts = []
    for c in range(5):
        v = rng.normal(size=100) * 1e8 + 1
        t = Tally(1)
        t.add_chunk(c, [v.sum()], [(v**2).sum()], 100)
        parts.append(t)
    a = parts[0].merge(parts[1]).merge(parts[2]).merge(parts[3]).merge(parts[4])
    b = parts[4].merge(parts[2]).merge(parts[0].merge(parts[3])).merge(parts[1])
    assert a.estimate().value == b.estimate().value
    assert a.estimate().stderr == b.estimate().stderr
    with pytest.raises(ValueError):
        a.merge(parts[0])
    with pytest.raises(ValueError):
        Tally(2).merge(Tally(1))


def test_empty_tally():
    with pytest.raises(ValueError):
        Tally(1).estimate()


def test_zscore():
    a = McEstimate(1.0, 0.3, 10, 0, 1)
    b = McEstimate(0.5, 0.4, 10, 0, 1)
    assert a.zscore(b) == pytest.approx(1.0)
    assert a.zscore(0.4) == pytest.approx(2.0)
    assert McEstimate(1.0, 0.0, 1, 0, 1).zscore(1.0) == 0.0
    assert McEstimate(1.0, 0.0, 1, 0, 1).zscore(2.0) == math.inf


def test_chunking():
    assert chunk_sizes(10, 4) == [4, 4, 2]
    assert chunk_sizes(8, 4) == [4, 4]
    with pytest.raises(ValueError):
        chunk_sizes(0, 4)
    ids, res = run_chunks(_square, 10, 4, workers=1, chunk_offset=5, args=(7,))
    assert ids == [5, 6, 7]
    assert res == [(5, 4, 7), (6, 4, 7), (7, 2, 7)]
    ids2, res2 = run_chunks(_square, 10, 4, workers=2, chunk_offset=5, args=(7,))
    assert (ids2, res2) == (ids, res)


def test_resolve_workers(monkeypatch):
    monkeypatch.delenv("PERSISTKIT_THREADS", raising=False)
    assert resolve_workers() == 1
    monkeypatch.setenv("PERSISTKIT_THREADS", "3")
    assert resolve_workers() == 3
    assert resolve_workers(2) == 2
    assert resolve_workers(0) == 1
