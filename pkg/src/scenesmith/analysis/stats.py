"""Evaluation statistics: Cohen's kappa, Cronbach's alpha, paired and
independent t-tests with effect sizes, ANCOVA with partial eta squared, and a
seeded percentile bootstrap.

Variance convention: sample variance (ddof=1) everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats as sps


class DegenerateMargins(ValueError):
    pass


class ZeroTotalVariance(ValueError):
    pass


class ZeroVarianceDifferences(ValueError):
    pass


class ZeroPooledVariance(ValueError):
    pass


class RankDeficientDesign(ValueError):
    pass


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: float
    p_value: float
    effect_size: float
    ci95: tuple[float, float]
    method: str = ""


def cohen_kappa(confusion) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e)."""
    m = np.asarray(confusion, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("confusion matrix must be square")
    total = m.sum()
    if total <= 0:
        raise ValueError("confusion matrix must have positive total count")
    p_o = np.trace(m) / total
    p_e = float((m.sum(axis=1) * m.sum(axis=0)).sum()) / total**2
    if p_e >= 1.0:
        raise DegenerateMargins("expected agreement is 1; kappa undefined")
    return float((p_o - p_e) / (1 - p_e))


def cronbach_alpha(items) -> float:
    """Internal consistency k/(k-1) * (1 - sum item variances / total variance)."""
    m = np.asarray(items, dtype=float)
    if m.ndim != 2:
        raise ValueError("items must be an n x k matrix")
    n, k = m.shape
    if k < 2 or n < 2:
        raise ValueError("need at least 2 items and 2 observations")
    item_vars = m.var(axis=0, ddof=1)
    total_var = m.sum(axis=1).var(ddof=1)
    if total_var <= 0:
        raise ZeroTotalVariance("total score has zero variance")
    return float(k / (k - 1) * (1 - item_vars.sum() / total_var))


def _d_ci_normal_approx(d: float, n: int) -> tuple[float, float]:
    # Large-sample SE of a standardized mean difference (paired / one-sample).
    se = np.sqrt(1 / n + d**2 / (2 * n))
    z = sps.norm.ppf(0.975)
    return (float(d - z * se), float(d + z * se))


def paired_t(x, y) -> TestResult:
    """Paired t-test; effect size is Cohen's d for paired samples, and the
    identity t = d * sqrt(n) holds exactly."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length vectors")
    n = x.size
    if n < 3:
        raise ValueError("need at least 3 pairs")
    diffs = x - y
    s_d = diffs.std(ddof=1)
    if s_d <= 0:
        raise ZeroVarianceDifferences("paired differences have zero variance")
    d = float(diffs.mean() / s_d)
    t = d * np.sqrt(n)
    df = n - 1
    p = float(2 * sps.t.sf(abs(t), df))
    return TestResult(float(t), float(df), p, d, _d_ci_normal_approx(d, n),
                      method="paired t; d = mean(diff)/sd(diff); CI normal approximation")


def independent_t(a, b) -> TestResult:
    """Pooled-variance two-sample t-test; effect size is Cohen's d (pooled sd)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n_a, n_b = a.size, b.size
    if n_a < 2 or n_b < 2:
        raise ValueError("each group needs at least 2 observations")
    df = n_a + n_b - 2
    pooled_var = ((n_a - 1) * a.var(ddof=1) + (n_b - 1) * b.var(ddof=1)) / df
    if pooled_var <= 0:
        raise ZeroPooledVariance("pooled variance is zero")
    sp = np.sqrt(pooled_var)
    diff = a.mean() - b.mean()
    t = diff / (sp * np.sqrt(1 / n_a + 1 / n_b))
    d = float(diff / sp)
    p = float(2 * sps.t.sf(abs(t), df))
    n_eff = n_a * n_b / (n_a + n_b)
    se = np.sqrt((n_a + n_b) / (n_a * n_b) + d**2 / (2 * (n_a + n_b)))
    z = sps.norm.ppf(0.975)
    return TestResult(float(t), float(df), p, d, (float(d - z * se), float(d + z * se)),
                      method="pooled-variance independent t; CI normal approximation")


@dataclass(frozen=True)
class AncovaResult:
    F: float
    df: tuple[int, int]
    p_value: float
    partial_eta_sq: float
    adjusted_means: dict
    coefficients: tuple[float, float, float]  # intercept, condition, covariate


def ancova(post, pre, condition) -> AncovaResult:
    """Least-squares fit of post = b0 + b1*condition + b2*pre.

    F tests the condition term with df (1, N-3); partial eta squared is
    SS_cond / (SS_cond + SS_err); adjusted means are predictions at the
    grand-mean pre-test score.
    """
    post = np.asarray(post, dtype=float)
    pre = np.asarray(pre, dtype=float)
    cond = np.asarray(condition, dtype=float)
    n = post.size
    if not (pre.size == n and cond.size == n):
        raise ValueError("post, pre and condition must be equal length")
    levels = np.unique(cond)
    if levels.size != 2 or min(np.sum(cond == levels[0]), np.sum(cond == levels[1])) < 2:
        raise RankDeficientDesign("need two condition levels with >= 2 observations each")

    X = np.column_stack([np.ones(n), cond, pre])
    if np.linalg.matrix_rank(X) < 3:
        raise RankDeficientDesign("design matrix is rank deficient")

    beta, *_ = np.linalg.lstsq(X, post, rcond=None)
    resid = post - X @ beta
    ss_err = float(resid @ resid)

    X0 = np.column_stack([np.ones(n), pre])
    beta0, *_ = np.linalg.lstsq(X0, post, rcond=None)
    resid0 = post - X0 @ beta0
    ss_cond = float(resid0 @ resid0) - ss_err

    df_err = n - 3
    F = (ss_cond / 1) / (ss_err / df_err)
    p = float(sps.f.sf(F, 1, df_err))
    partial_eta_sq = ss_cond / (ss_cond + ss_err)
    grand_pre = float(pre.mean())
    adjusted = {
        float(level): float(beta[0] + beta[1] * level + beta[2] * grand_pre)
        for level in levels
    }
    return AncovaResult(float(F), (1, df_err), p, float(partial_eta_sq), adjusted,
                        (float(beta[0]), float(beta[1]), float(beta[2])))


def bootstrap_ci(estimator: Callable, data: Sequence, B: int = 2000, seed: int = 0,
                 max_retries: int = 10) -> tuple[float, float]:
    """Percentile 95% CI from B seeded resamples of the given units.

    `data` is a sequence of resampling units (participants, not rows, for
    paired data); the estimator receives a list of units. Per-resample seeds
    are base_seed + index, so results are identical regardless of execution
    order or parallelism. Degenerate resamples are retried up to max_retries
    times with a derived seed, then abort.
    """
    if B < 100:
        raise ValueError("B must be at least 100")
    units = list(data)
    n = len(units)
    estimates = np.empty(B)
    for i in range(B):
        for attempt in range(max_retries + 1):
            rng = np.random.default_rng(seed + i + attempt * 1_000_003)
            idx = rng.integers(0, n, size=n)
            try:
                estimates[i] = estimator([units[j] for j in idx])
                break
            except (ZeroTotalVariance, ZeroVarianceDifferences, ZeroPooledVariance,
                    DegenerateMargins, ZeroDivisionError):
                if attempt == max_retries:
                    raise
    lo, hi = np.percentile(estimates, [2.5, 97.5])
    return (float(lo), float(hi))
