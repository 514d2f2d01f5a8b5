import math

import numpy as np
import pytest

from persistkit.diffusion import kappa
from persistkit.harmonic import HarmonicDomainError, alpha, h_eval
from persistkit.potential import (TAG_SERIES, CorrectorSpec, InsufficientSurvivorsError, QuadratureError, _subseed,
                                  amplitude_C, check_harmonicity, conditional_limit_sample, corrector_f,
                                  corrector_reference, corrector_visitor, estimate_V0_limit, estimate_V_series,
                                  limit_density_marginals, martingale_exact, martingale_probe, series_tally)
from persistkit.rng import Stream
from persistkit.verify import corrector_decay_table, no_doubling
from persistkit.walk import IncrementDistribution, estimate_survival, simulate_exit

RAD = IncrementDistribution.rademacher()
GAU = IncrementDistribution.gaussian()
ALL = [IncrementDistribution.from_name(n) for n in ("rademacher", "gaussian", "uniform", "laplace")]


def spec(d):
    return CorrectorSpec(d)


# --- corrector -------------------------------------------------------------

def test_rademacher_two_point_formula():
    for z in [(2.0, 1.0), (0.5, -0.2), (10.0, 3.0), (1.0, -3.0)]:
        x, y = z
        expect = 0.5 * (h_eval(x + y + 1, y + 1) + h_eval(x + y - 1, y - 1)) - h_eval(x, y)
        assert corrector_f(spec(RAD), z) == pytest.approx(expect, abs=1e-15)


def test_corrector_frozen_values():
    # mpmath evaluation of the defining expectation (sum / quadrature at 30 digits)
    assert corrector_f(spec(RAD), (2, 1)) == pytest.approx(-0.014500572284395664, abs=1e-14)
    assert corrector_f(spec(GAU), (3, 0.5)) == pytest.approx(-0.0084934322661045756, abs=1e-11)


STATES = [(0.05, 0.0), (1.0, 0.0), (2.0, 1.0), (0.5, -1.0), (3.0, -2.5), (15.0, 0.3), (17.0, -8.0),
          (40.0, 5.0), (1.0, 25.0), (300.0, -20.0), (0.2, 3.0), (8.0, -1.9)]


@pytest.mark.parametrize("name", ["gaussian", "uniform", "laplace"])
def test_corrector_matches_quadpack(name):
    d = IncrementDistribution.from_name(name)
    s = spec(d)
    for z in STATES:
        ours = corrector_f(s, z)
        ref = corrector_reference(d, z, s.tail_cut)
        assert abs(ours - ref) <= 1e-10 * max(1.0, h_eval(*z)), z


def test_corrector_gaussian_far_state_brute_force_mc():
    rng = np.random.default_rng(20240601)
    x, y = 100.0, 0.0
    n = 10**7
    vals = np.empty(n)
    for k in range(10):
        u = rng.standard_normal(n // 10)
        vals[k * n // 10:(k + 1) * n // 10] = h_eval(x + y + u, y + u)
    mc = vals.mean() - h_eval(x, y)
    se = vals.std(ddof=1) / math.sqrt(n)
    assert abs(corrector_f(spec(GAU), (x, y)) - mc) <= 4 * se


def test_corrector_domain_and_failure():
    with pytest.raises(HarmonicDomainError):
        corrector_f(spec(GAU), (0.0, 1.0))
    with pytest.raises(HarmonicDomainError):
        corrector_f(spec(RAD), (-1.0, 1.0))
    # unkilled extension: f = E h(Z_1) when h(z) = 0
    z = (-0.5, 2.0)
    assert corrector_f(spec(RAD), z, allow_killed=True) == pytest.approx(
        0.5 * (h_eval(2.5, 3.0) + h_eval(0.5, 1.0)), abs=1e-15)
    with pytest.raises(QuadratureError):
        corrector_f(CorrectorSpec(GAU, abs_tol=1e-300), (1.0, 0.0))


def test_corrector_spec_validation():
    assert spec(RAD).quadrature == "exact-sum"
    assert spec(GAU).quadrature == "adaptive-quadrature"
    with pytest.raises(ValueError):
        CorrectorSpec(GAU, quadrature="exact-sum")
    with pytest.raises(ValueError):
        CorrectorSpec(RAD, quadrature="adaptive-quadrature")
    with pytest.raises(ValueError):
        CorrectorSpec(GAU, quadrature="simpson")
    with pytest.raises(ValueError):
        CorrectorSpec(GAU, abs_tol=0)
    assert spec(GAU).to_dict()["tail_cut"] == 9.0


@pytest.mark.parametrize("d", ALL, ids=lambda d: d.kind)
def test_corrector_decay_along_rays(d):
    tab = corrector_decay_table(d)
    for ray, vals in tab.items():
        assert all(np.isfinite(vals))
        assert no_doubling(vals), (ray, vals)


def test_no_doubling_helper():
    assert no_doubling([1.0, 1.5, 0.4, 0.7])
    assert not no_doubling([1.0, 0.4, 0.9])


# --- V by series and by limit -----------------------------------------------

def test_series_equals_visitor_replay():
    s = spec(GAU)
    n_paths, H, seed, cs = 40, 20, 3, 16
    est = estimate_V_series(s, (1.0, 0.5), H, n_paths, seed, chunk_size=cs)
    vis = corrector_visitor(s)
    sums = []
    for p in range(n_paths):
        c, local = divmod(p, cs)
        e = simulate_exit(GAU, (1.0, 0.5), H, Stream.for_path(seed, c, local, TAG_SERIES), visitor=vis)
        sums.append(e.corrector_sum)
    assert est.value == pytest.approx(h_eval(1.0, 0.5) + np.mean(sums), abs=1e-12)


def test_series_chunk_additivity():
    s = spec(RAD)
    full = series_tally(s, (2, 1), 128, 3000, seed=5, chunk_size=500)
    a = series_tally(s, (2, 1), 128, 1500, seed=5, chunk_size=500)
    b = series_tally(s, (2, 1), 128, 1500, seed=5, chunk_size=500, chunk_offset=3)
    assert a.merge(b).estimate().value == full.estimate().value
    assert a.merge(b).estimate().stderr == full.estimate().stderr


def test_series_reports_censoring_and_validates():
    e = estimate_V_series(spec(RAD), (2, 1), 64, 2000, seed=1)
    assert 0 < e.info["censored_fraction"] < 1
    assert e.info["estimator"] == "series"
    with pytest.raises(ValueError):
        estimate_V_series(spec(RAD), (2, 1), 0, 100, seed=1)


@pytest.mark.parametrize("d,z,H", [(RAD, (2.0, 1.0), 256), (GAU, (1.0, 0.0), 32),
                                   (IncrementDistribution.laplace(), (2.0, -0.5), 32)], ids=["rad", "gau", "lap"])
def test_series_and_limit_agree(d, z, H):
    s = spec(d)
    ser = estimate_V_series(s, z, H, 2000, seed=11)
    lim = estimate_V0_limit(s, z, [H], 100000, seed=12)[0]
    assert ser.zscore(lim) <= 3


def test_limit_at_zero_is_exact():
    out = estimate_V0_limit(spec(GAU), (1.0, 0.0), [0, 8], 1000, seed=1)
    assert out[0].value == h_eval(1.0, 0.0) and out[0].stderr == 0.0
    assert out[1].stderr > 0


def test_limit_plateau():
    out = estimate_V0_limit(spec(RAD), (2.0, 1.0), [512, 1024], 100000, seed=4)
    # common random numbers: the late-time increments are small and strongly correlated
    assert abs(out[1].value - out[0].value) < 2 * math.hypot(out[0].stderr, out[1].stderr)


def test_limit_monotone_in_start():
    pts = [(1.0, 0.0), (2.0, 0.0), (2.0, 1.0), (4.0, 1.0)]
    ests = [estimate_V0_limit(spec(RAD), z, [256], 60000, seed=20 + i)[0] for i, z in enumerate(pts)]
    for (za, ea), (zb, eb) in zip(zip(pts, ests), zip(pts[1:], ests[1:])):
        assert eb.value >= ea.value - 3 * math.hypot(ea.stderr, eb.stderr)


def test_far_field_ratio_tends_to_one():
    devs = []
    for s_ in (1.0, 3.0, 9.0):
        z = (s_**3, s_)
        v = estimate_V_series(spec(GAU), z, 64, 400, seed=int(s_))
        devs.append(abs(v.value / h_eval(*z) - 1))
    assert devs[-1] < devs[0]
    assert devs[-1] < 5e-3


def test_positivity_on_probed_states():
    for d in ALL:
        e = estimate_V_series(spec(d), (1.0, 1.0), 64, 300, seed=2)
        assert e.value - 3 * e.stderr > 0


# --- harmonicity -------------------------------------------------------------

def test_harmonicity_rademacher():
    chk = check_harmonicity(spec(RAD), (2.0, 1.0), n_paths=3000, seed=7, horizon=256)
    assert chk.zscore <= 3
    assert chk.lhs.info["method"] == "exact-sum"


def test_harmonicity_gaussian():
    chk = check_harmonicity(spec(GAU), (1.0, 0.5), n_paths=1500, seed=8, horizon=24)
    assert chk.zscore <= 3


def test_harmonicity_all_successors_killed():
    # x + y +/- 1 <= 0 for z = (1, -3): both successors die
    chk = check_harmonicity(spec(RAD), (1.0, -3.0), n_paths=100, seed=1, horizon=16)
    assert chk.lhs.value == 0.0
    assert chk.rhs.value == pytest.approx(0.0, abs=1e-15)
    hz = h_eval(1.0, -3.0)
    assert hz + corrector_f(spec(RAD), (1.0, -3.0)) == pytest.approx(0.0, abs=1e-15)


def test_harmonicity_validation():
    with pytest.raises(HarmonicDomainError):
        check_harmonicity(spec(RAD), (0.0, 1.0), n_paths=10)
    with pytest.raises(ValueError):
        check_harmonicity(spec(RAD), (1.0, 1.0), n_paths=10, horizon=1)


# --- martingale --------------------------------------------------------------

def test_martingale_exact_enumeration():
    for z in [(3.0, 0.0), (1.0, 1.0), (0.5, -1.0)]:
        for n in range(9):
            assert martingale_exact(RAD, z, n) == pytest.approx(h_eval(*z), abs=1e-12)
    five = IncrementDistribution.lattice([-2, -1, 0, 1, 2], [1 / 16, 1 / 4, 3 / 8, 1 / 4, 1 / 16])
    assert martingale_exact(five, (1.0, 0.0), 4) == pytest.approx(h_eval(1.0, 0.0), abs=1e-12)
    with pytest.raises(ValueError):
        martingale_exact(GAU, (1, 0), 2)


def test_martingale_probe_gaussian():
    p = martingale_probe(spec(GAU), (5.0, 1.0), [0, 4, 16, 64], n_paths=1500, seed=3)
    assert p.ns == [0, 4, 16, 64]
    assert p.means[0].value == h_eval(5.0, 1.0) and p.means[0].stderr == 0
    for m in p.means[1:]:
        assert m.zscore(h_eval(5.0, 1.0)) <= 3


@pytest.mark.parametrize("d", ALL, ids=lambda d: d.kind)
@pytest.mark.parametrize("z", [(0.5, 0.0), (2.0, -1.0)])
def test_martingale_probe_all_laws(d, z):
    p = martingale_probe(spec(d), z, [3, 12], n_paths=1000, seed=9)
    for m in p.means:
        assert m.zscore(h_eval(*z)) <= 3


def test_martingale_probe_validation():
    with pytest.raises(ValueError):
        martingale_probe(spec(RAD), (1, 0), [4, 4], n_paths=10)


# --- amplitude ---------------------------------------------------------------

def test_amplitude_rademacher_is_half_v11():
    s = spec(RAD)
    c = amplitude_C(s, n_paths=2000, seed=5, horizon=256)
    v = estimate_V_series(s, (1.0, 1.0), 256, 2000, _subseed(5, 2))
    assert c.value == pytest.approx(0.5 * v.value, rel=1e-15)
    assert c.stderr == pytest.approx(0.5 * v.stderr, rel=1e-15)


@pytest.mark.parametrize("d", ALL, ids=lambda d: d.kind)
def test_amplitude_positive(d):
    c = amplitude_C(spec(d), n_paths=400, seed=6, horizon=32)
    assert c.value - 3 * c.stderr > 0


def test_amplitude_methods_agree():
    s = spec(RAD)
    a = amplitude_C(s, n_paths=3000, seed=1, horizon=256)
    b = amplitude_C(s, n_paths=100000, seed=2, horizon=256, method="limit")
    assert a.zscore(b) <= 3
    with pytest.raises(ValueError):
        amplitude_C(s, method="magic")


def test_kappa_sits_with_amplitude():
    """n^(1/4) P_0(A_n) approaches kappa * C, not C."""
    c = amplitude_C(spec(RAD), n_paths=4000, seed=3, horizon=1024)
    p = estimate_survival(RAD, (0, 0), [4096], 200000, seed=4).estimates[0]
    ratio = p.value * 4096**0.25 / c.value
    err = ratio * math.hypot(p.stderr / p.value, c.stderr / c.value)
    assert abs(ratio - kappa()) <= 3 * err + 0.01
    assert abs(ratio - 1.0) > 10 * err


# --- conditional limit law -----------------------------------------------------

def test_limit_density_normalizer():
    lm = limit_density_marginals()
    assert np.isfinite(lm.normalizer) and lm.normalizer > 0
    assert lm.cdf_x[-1] == pytest.approx(1.0, abs=1e-9)
    assert lm.cdf_y[-1] == pytest.approx(1.0, abs=1e-3)
    assert np.all(np.diff(lm.cdf_x) >= 0)


def test_limit_density_normalizer_independent_quadrature():
    from scipy import integrate
    from persistkit.diffusion import transition_density
    val, _ = integrate.dblquad(lambda y, x: h_eval(x, y) * transition_density(1.0, (0, 0), (x, y)),
                               0, 8, -10, 10, epsrel=1e-8)
    assert limit_density_marginals().normalizer == pytest.approx(val, rel=1e-3)


def test_conditional_sample_basics():
    cs = conditional_limit_sample(GAU, (0, 0), 64, 20000, seed=1)
    assert np.all(cs.points[:, 0] > 0)
    assert 0 < cs.distance < 1
    assert cs.distance == max(cs.ks_x, cs.ks_y)
    capped = conditional_limit_sample(GAU, (0, 0), 64, 20000, seed=1, max_survivors=500)
    assert capped.points.shape[0] == 500


def test_insufficient_survivors():
    with pytest.raises(InsufficientSurvivorsError):
        conditional_limit_sample(GAU, (0, 0), 4096, 1000, seed=1)


def test_alpha_helper_sanity():
    assert float(alpha(27.0, 2.0)) == 3.0
