"""Statistical primitives: Pearson correlation, paired t-tests, improvement maps.

The two-sided t-test p-value is computed from the regularized incomplete beta
function, evaluated with a modified-Lentz continued fraction, so the toolkit
carries its own reference implementation rather than depending on a stats
library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTestError, DimensionError

_BETA_EPS = 1e-15
_BETA_FPMIN = 1e-300
_BETA_MAX_ITER = 300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_FPMIN:
        d = _BETA_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_FPMIN:
            d = _BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETA_FPMIN:
            c = _BETA_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_FPMIN:
            d = _BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETA_FPMIN:
            c = _BETA_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b) for a, b > 0, x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc_reg requires a > 0 and b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return betainc_reg(df / 2.0, 0.5, x)


def pearson(x, y) -> float:
    """Sample Pearson correlation; 0 by convention if either vector is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
        raise DimensionError(f"pearson needs equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise DimensionError("pearson needs at least two samples")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        return 0.0
    return float(xc @ yc) / denom


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p_two_sided: float


def paired_t_test(a, b) -> TTestResult:
    """Two-sided paired t-test on equal-length samples.

    Uses the sample standard deviation (n-1 divisor) of the differences; all
    differences equal raises :class:`DegenerateTestError`.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"paired test needs equal-length vectors, got {a.shape} and {b.shape}")
    n = a.size
    if n < 2:
        raise DimensionError("paired test needs at least two pairs")
    d = a - b
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise DegenerateTestError("paired differences have zero variance")
    t = float(d.mean()) / (sd / math.sqrt(n))
    df = n - 1
    return TTestResult(t=t, df=df, p_two_sided=t_sf_two_sided(t, df))


@dataclass(frozen=True)
class ImprovementMap:
    """Per-electrode prediction-accuracy improvement of condition A over B.

    ``delta_r`` holds the mean r-value difference per electrode, zeroed where
    the paired test over folds found no significant difference at ``alpha``.
    """

    delta_r: np.ndarray
    frac_better_a: float
    frac_better_b: float
    alpha: float


def improvement_map(r_a, r_b, alpha: float = 0.05) -> ImprovementMap:
    """Compare per-electrode r-values of two models across folds.

    ``r_a`` and ``r_b`` are (n_electrodes, n_folds) arrays.  A constant
    nonzero difference (zero variance, nonzero mean) counts as significant;
    identical values yield zero.
    """
    r_a = np.asarray(r_a, dtype=np.float64)
    r_b = np.asarray(r_b, dtype=np.float64)
    if r_a.shape != r_b.shape or r_a.ndim != 2:
        raise DimensionError(f"improvement_map needs matching (electrode, fold) arrays, got {r_a.shape} and {r_b.shape}")
    n_e, n_folds = r_a.shape
    if n_folds < 2:
        raise DimensionError("improvement_map needs at least two folds")
    delta = np.zeros(n_e)
    for e in range(n_e):
        diff_mean = float((r_a[e] - r_b[e]).mean())
        try:
            significant = paired_t_test(r_a[e], r_b[e]).p_two_sided <= alpha
        except DegenerateTestError:
            significant = diff_mean != 0.0
        if significant:
            delta[e] = diff_mean
    frac_a = float((delta > 0).sum()) / n_e
    frac_b = float((delta < 0).sum()) / n_e
    return ImprovementMap(delta_r=delta, frac_better_a=frac_a, frac_better_b=frac_b, alpha=alpha)
