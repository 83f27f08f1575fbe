"""Moment summaries, omnibus normality testing, and histograms.

The normality check is the D'Agostino-Pearson K^2 omnibus test: skewness
and kurtosis are each mapped to an approximately standard-normal Z through
the classical small-sample transforms, and K^2 = Z1^2 + Z2^2 is referred
to chi-square with 2 degrees of freedom, whose survival function is simply
exp(-x/2) -- no special-function library needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MIN_TEST_N = 20  # the Z transforms are unreliable below this


@dataclass(frozen=True)
class MomentSummary:
    n: int
    mean: float
    var: float  # population variance (1/n)
    skew: float | None  # g1; None when var == 0
    excess_kurtosis: float | None  # g2; None when var == 0


def moments(v: np.ndarray) -> MomentSummary:
    v = np.asarray(v, dtype=np.float64)
    n = v.size
    if n == 0:
        raise ValueError("moments of an empty vector")
    mean = float(v.mean())
    centered = v - mean
    m2 = float(np.mean(centered**2))
    if m2 == 0.0:
        return MomentSummary(n, mean, 0.0, None, None)
    m3 = float(np.mean(centered**3))
    m4 = float(np.mean(centered**4))
    g1 = m3 / m2**1.5
    g2 = m4 / m2**2 - 3.0
    return MomentSummary(n, mean, m2, g1, g2)


@dataclass(frozen=True)
class NormalityResult:
    k2: float
    p_value: float
    passed: bool  # p_value > alpha


def _skew_z(g1: float, n: int) -> float:
    # D'Agostino (1970) transform of the sample skewness.
    y = g1 * math.sqrt(((n + 1) * (n + 3)) / (6.0 * (n - 2)))
    beta2 = (
        3.0
        * (n**2 + 27 * n - 70)
        * (n + 1)
        * (n + 3)
        / ((n - 2) * (n + 5) * (n + 7) * (n + 9))
    )
    w2 = -1.0 + math.sqrt(2.0 * (beta2 - 1.0))
    delta = 1.0 / math.sqrt(0.5 * math.log(w2))
    alpha = math.sqrt(2.0 / (w2 - 1.0))
    return delta * math.asinh(y / alpha)


def _kurt_z(g2: float, n: int) -> float:
    # Anscombe-Glynn (1983) transform of the sample kurtosis.
    b2 = g2 + 3.0
    mean_b2 = 3.0 * (n - 1) / (n + 1)
    var_b2 = 24.0 * n * (n - 2) * (n - 3) / ((n + 1) ** 2 * (n + 3) * (n + 5))
    x = (b2 - mean_b2) / math.sqrt(var_b2)
    sqrt_beta1 = (
        6.0
        * (n**2 - 5 * n + 2)
        / ((n + 7) * (n + 9))
        * math.sqrt(6.0 * (n + 3) * (n + 5) / (n * (n - 2) * (n - 3)))
    )
    a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + math.sqrt(1.0 + 4.0 / sqrt_beta1**2))
    denom = 1.0 + x * math.sqrt(2.0 / (a - 4.0))
    term = (1.0 - 2.0 / a) / abs(denom)
    root = math.copysign(abs(term) ** (1.0 / 3.0), denom)
    return ((1.0 - 2.0 / (9.0 * a)) - root) / math.sqrt(2.0 / (9.0 * a))


def dagostino_k2(v: np.ndarray, alpha: float = 0.05) -> NormalityResult:
    """Omnibus normality test; requires n >= 20 and nonzero variance."""
    v = np.asarray(v, dtype=np.float64)
    if v.size < MIN_TEST_N:
        raise ValueError(f"normality test needs n >= {MIN_TEST_N}, got {v.size}")
    m = moments(v)
    if m.skew is None:
        raise ValueError("normality test on a zero-variance vector")
    k2 = _skew_z(m.skew, m.n) ** 2 + _kurt_z(m.excess_kurtosis, m.n) ** 2
    p = math.exp(-k2 / 2.0)  # chi-square(2) survival function
    return NormalityResult(k2=k2, p_value=p, passed=p > alpha)


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray  # len B+1, strictly increasing
    counts: np.ndarray  # len B, sums to total
    total: int


def histogram(v: np.ndarray, bins: int) -> Histogram:
    """Equal-width bins over [min, max]; the last bin includes its right edge.

    An all-equal input has zero range; the edges are widened half a unit on
    each side so every value lands in one interior bin.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("histogram of an empty vector")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts, edges = np.histogram(v, bins=bins)
    return Histogram(bin_edges=edges, counts=counts, total=int(v.size))


@dataclass(frozen=True)
class LayerNormality:
    layer: str
    n: int
    skipped: bool  # layer too small to test
    result: NormalityResult | None


@dataclass(frozen=True)
class NormalityReport:
    entries: tuple[LayerNormality, ...]
    alpha: float

    @property
    def eligible(self) -> list[LayerNormality]:
        return [e for e in self.entries if not e.skipped]

    @property
    def pass_rate(self) -> float | None:
        elig = self.eligible
        if not elig:
            return None
        return sum(1 for e in elig if e.result.passed) / len(elig)


def layer_normality_report(err, alpha: float = 0.05) -> NormalityReport:
    """Run the K^2 test on every layer slice big enough to support it."""
    entries = []
    for s in err.partition.slices:
        seg = err.values[s.offset : s.offset + s.length]
        if seg.size < MIN_TEST_N or float(np.var(seg)) == 0.0:
            entries.append(LayerNormality(s.name, int(seg.size), True, None))
        else:
            entries.append(
                LayerNormality(s.name, int(seg.size), False, dagostino_k2(seg, alpha))
            )
    return NormalityReport(tuple(entries), alpha)
