import math

import numpy as np
import pytest
import scipy.stats as ss
from hypothesis import given, settings
from hypothesis import strategies as st

from gradsamp import model, sampler, stats


def fsum_moments(values):
    """Independent oracle: exact-accumulation population moments."""
    n = len(values)
    mean = math.fsum(values) / n
    m2 = math.fsum((x - mean) ** 2 for x in values) / n
    m3 = math.fsum((x - mean) ** 3 for x in values) / n
    m4 = math.fsum((x - mean) ** 4 for x in values) / n
    if m2 == 0:
        return mean, m2, None, None
    return mean, m2, m3 / m2**1.5, m4 / m2**2 - 3.0


# ---------------------------------------------------------------------------
# moments


def test_moments_degenerate():
    m = stats.moments(np.array([1.0, 1.0, 1.0, 1.0]))
    assert (m.n, m.mean, m.var) == (4, 1.0, 0.0)
    assert m.skew is None and m.excess_kurtosis is None


def test_moments_1234():
    m = stats.moments(np.array([1.0, 2.0, 3.0, 4.0]))
    assert m.mean == 2.5
    assert m.var == 1.25
    assert m.skew == pytest.approx(0.0, abs=1e-15)


def test_moments_0001():
    m = stats.moments(np.array([0.0, 0.0, 0.0, 1.0]))
    assert m.mean == 0.25
    assert m.var == 0.1875
    assert m.skew == pytest.approx(1.1547, abs=1e-4)


def test_moments_empty():
    with pytest.raises(ValueError):
        stats.moments(np.array([]))


def test_moments_vs_oracle_large():
    v = np.random.default_rng(17).normal(loc=3.0, scale=2.0, size=1_000_000)
    m = stats.moments(v)
    mean, var, skew, kurt = fsum_moments(v.tolist())
    assert m.mean == pytest.approx(mean, rel=1e-12)
    assert m.var == pytest.approx(var, rel=1e-12)
    assert m.skew == pytest.approx(skew, rel=1e-9, abs=1e-9)
    assert m.excess_kurtosis == pytest.approx(kurt, rel=1e-9, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 500))
def test_moments_vs_scipy(seed, n):
    v = np.random.default_rng(seed).normal(size=n) * 3.1 + 0.7
    m = stats.moments(v)
    assert m.var == pytest.approx(np.var(v), rel=1e-12)
    if m.skew is not None:
        assert m.skew == pytest.approx(ss.skew(v), rel=1e-9, abs=1e-9)
        assert m.excess_kurtosis == pytest.approx(ss.kurtosis(v), rel=1e-9, abs=1e-9)


# ---------------------------------------------------------------------------
# dagostino_k2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(20, 5000))
def test_k2_matches_scipy_normaltest(seed, n):
    rng = np.random.default_rng(seed)
    v = rng.gamma(shape=2.0, scale=1.0, size=n)  # skewed input exercises both Zs
    mine = stats.dagostino_k2(v)
    theirs = ss.normaltest(v)
    assert mine.k2 == pytest.approx(theirs.statistic, rel=1e-10)
    assert mine.p_value == pytest.approx(theirs.pvalue, rel=1e-9, abs=1e-300)


def test_k2_nonnegative_and_p_monotone():
    rng = np.random.default_rng(3)
    results = [stats.dagostino_k2(rng.normal(size=500)) for _ in range(50)]
    assert all(r.k2 >= 0.0 for r in results)
    assert all(0.0 < r.p_value <= 1.0 for r in results)
    by_k2 = sorted(results, key=lambda r: r.k2)
    ps = [r.p_value for r in by_k2]
    assert all(a >= b for a, b in zip(ps, ps[1:]))


def test_k2_calibration_monte_carlo():
    # 1000 pinned trials of n=1e4 standard normal draws: rejection rate at
    # alpha=0.05 must sit in [3%, 7%]
    rng = np.random.default_rng(2024)
    rejections = 0
    for _ in range(1000):
        v = rng.standard_normal(10_000)
        if not stats.dagostino_k2(v, alpha=0.05).passed:
            rejections += 1
    assert 30 <= rejections <= 70


def test_k2_rejects_uniform():
    v = np.random.default_rng(8).uniform(0.0, 1.0, size=5000)
    res = stats.dagostino_k2(v)
    assert res.p_value < 0.001
    assert not res.passed


def test_k2_unsupported_size():
    with pytest.raises(ValueError, match="n >= 20"):
        stats.dagostino_k2(np.arange(19, dtype=float))


def test_k2_degenerate_input():
    with pytest.raises(ValueError, match="zero-variance"):
        stats.dagostino_k2(np.full(100, 3.3))


def test_k2_alpha_one_never_passes():
    v = np.random.default_rng(1).normal(size=1000)
    assert not stats.dagostino_k2(v, alpha=1.0).passed


# ---------------------------------------------------------------------------
# histogram


def test_histogram_even_split():
    h = stats.histogram(np.array([0.0, 1.0, 2.0, 3.0]), bins=2)
    assert h.counts.tolist() == [2, 2]
    assert h.total == 4


def test_histogram_degenerate_input():
    h = stats.histogram(np.full(7, 2.5), bins=5)
    assert h.counts.sum() == 7
    assert (h.counts > 0).sum() == 1  # single effective bin
    assert np.all(np.diff(h.bin_edges) > 0)


def test_histogram_right_edge_inclusive():
    h = stats.histogram(np.array([0.0, 1.0]), bins=4)
    assert h.counts[-1] == 1


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=200),
    st.integers(1, 32),
)
def test_histogram_conservation(values, bins):
    h = stats.histogram(np.array(values), bins=bins)
    assert int(h.counts.sum()) == len(values) == h.total


def test_histogram_errors():
    with pytest.raises(ValueError):
        stats.histogram(np.array([]), bins=3)
    with pytest.raises(ValueError):
        stats.histogram(np.array([1.0]), bins=0)


# ---------------------------------------------------------------------------
# layer_normality_report


def make_error(layer_values):
    slices = []
    parts = []
    off = 0
    for i, vals in enumerate(layer_values):
        slices.append(model.ParamSlice(f"layer{i}", off, len(vals)))
        parts.append(np.asarray(vals, dtype=np.float64))
        off += len(vals)
    partition = model.LayerPartition(tuple(slices))
    return sampler.EpochError(np.concatenate(parts), partition, (0, 1))


def test_report_gaussian_layers_mostly_pass():
    rng = np.random.default_rng(55)
    err = make_error([rng.normal(size=400) for _ in range(50)])
    report = stats.layer_normality_report(err, alpha=0.05)
    assert report.pass_rate >= 0.9


def test_report_uniform_layers_mostly_fail():
    rng = np.random.default_rng(56)
    err = make_error([rng.uniform(-1, 1, size=2000) for _ in range(50)])
    report = stats.layer_normality_report(err, alpha=0.05)
    assert report.pass_rate <= 0.1


def test_report_small_layers_skipped():
    rng = np.random.default_rng(57)
    err = make_error([rng.normal(size=5) for _ in range(4)])
    report = stats.layer_normality_report(err)
    assert all(e.skipped for e in report.entries)
    assert report.pass_rate is None
