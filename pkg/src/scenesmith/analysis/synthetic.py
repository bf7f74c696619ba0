"""Seeded synthetic crossover-study generator.

Per-condition sample moments are matched exactly (to float precision) by
affine standardization of seeded normal draws. The paired structure is
induced by constructing each participant's condition difference with the
standard deviation back-solved from the target paired effect size
(sd_diff = delta / d), so paired t and d land exactly on their targets.
The learning-gain differences additionally carry prior-knowledge subgroup
means and a small instructional-order offset.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize
from scipy import stats as sps

from .stats import cronbach_alpha
from .study import CONDITIONS, PRIOR_LEVELS, SEQUENCES, TOPICS, StudyDataset, StudyRow

ANIMATION, SLIDES = CONDITIONS
ANIMATION_FIRST, SLIDES_FIRST = SEQUENCES


class InfeasibleTargets(ValueError):
    pass


class _SparseCell(Exception):
    """A subgroup x sequence cell came out too small; redraw the assignment."""


@dataclass(frozen=True)
class PairedTarget:
    mean_a: float
    sd_a: float
    mean_b: float
    sd_b: float
    d: float

    @property
    def delta(self) -> float:
        return self.mean_a - self.mean_b

    @property
    def diff_sd(self) -> float:
        if self.d == 0 or self.delta / self.d <= 0:
            raise InfeasibleTargets(f"d={self.d} incompatible with delta={self.delta}")
        return self.delta / self.d

    @property
    def margin_correlation(self) -> float:
        rho = (self.sd_a**2 + self.sd_b**2 - self.diff_sd**2) / (2 * self.sd_a * self.sd_b)
        if not -1.0 < rho < 1.0:
            raise InfeasibleTargets(f"implied correlation {rho:.3f} outside (-1, 1)")
        return rho


@dataclass(frozen=True)
class StudyTargets:
    """Calibration targets for the synthetic study (descriptive table plus
    paired effect sizes, subgroup means, reliability and order effect)."""

    gain: PairedTarget = PairedTarget(13.91, 4.90, 9.58, 5.51, 0.67)
    imi: PairedTarget = PairedTarget(5.43, 0.44, 4.89, 0.42, 0.94)
    tlx: PairedTarget = PairedTarget(9.99, 1.56, 10.73, 1.21, -0.41)
    satisfaction: PairedTarget = PairedTarget(5.63, 0.41, 4.79, 0.47, 1.64)
    minutes: PairedTarget = PairedTarget(11.25, 1.18, 13.07, 1.31, -0.86)

    pre_mean_a: float = 60.51
    pre_sd_a: float = 9.54
    pre_mean_b: float = 59.47
    pre_sd_b: float = 9.03
    post_sd_a: float = 9.56
    post_sd_b: float = 9.38

    # gain-difference means by prior-knowledge subgroup (low = none+basic),
    # rebalanced around the grand mean implied by the gain table row
    subgroup_low_mean: float = 2.31
    subgroup_high_mean: float = 5.15

    order_effect_p: float = 0.808

    imi_alpha: float = 0.82
    tlx_alpha: float = 0.79

    # prior-knowledge counts for n=100 (none, basic, intermediate, advanced)
    prior_counts: tuple[int, int, int, int] = (6, 37, 42, 15)


DEFAULT_TARGETS = StudyTargets()


def _standardize(x: np.ndarray) -> np.ndarray:
    """Exact sample mean 0 and sample sd 1 (ddof=1)."""
    centered = x - x.mean()
    sd = centered.std(ddof=1)
    if sd == 0:
        raise InfeasibleTargets("degenerate draw with zero variance")
    return centered / sd

def _orthounit(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Standardized residual of x against the standardized vector u, so the
    result has exact sample correlation 0 with u."""
    beta = float((x - x.mean()) @ u) / (len(x) - 1)
    return _standardize(x - beta * u)


def _correlated_unit(rng: np.random.Generator, u: np.ndarray, rho: float) -> np.ndarray:
    w = _orthounit(rng.standard_normal(u.size), u)
    return rho * u + np.sqrt(1 - rho**2) * w


def _paired_measure(rng: np.random.Generator, n: int,
                    target: PairedTarget) -> tuple[np.ndarray, np.ndarray]:
    rho = target.margin_correlation
    u = _standardize(rng.standard_normal(n))
    v = _correlated_unit(rng, u, rho)
    a = target.mean_a + target.sd_a * u
    b = target.mean_b + target.sd_b * v
    return a, b


def _gain_differences(rng: np.random.Generator, low_mask: np.ndarray, seq1_mask: np.ndarray,
                      targets: StudyTargets) -> np.ndarray:
    """Difference vector with exact grand mean/sd, exact subgroup means and a
    small calibrated order offset."""
    n = low_mask.size
    grand = targets.gain.delta
    sd_d = targets.gain.diff_sd
    delta_subgroup = targets.subgroup_high_mean - targets.subgroup_low_mean
    n_low = int(low_mask.sum())
    n_high = n - n_low
    # rebalance the published subgroup means around the gain-table grand mean
    mu_low = grand - (n_high / n) * delta_subgroup
    mu_high = mu_low + delta_subgroup

    # order offset solved for t(n-2) matching the target order-effect p-value
    t_order = sps.t.ppf(1 - targets.order_effect_p / 2, n - 2)
    n1 = int(seq1_mask.sum())
    n2 = n - n1
    delta_seq = t_order * sd_d * np.sqrt(1 / n1 + 1 / n2)

    cells = {
        (True, True): low_mask & seq1_mask,
        (True, False): low_mask & ~seq1_mask,
        (False, True): ~low_mask & seq1_mask,
        (False, False): ~low_mask & ~seq1_mask,
    }
    counts = {key: int(mask.sum()) for key, mask in cells.items()}
    if min(counts.values()) < 2:
        raise _SparseCell

    # cell means: c[g,s] = base[g] + offset * [s == seq1], solving for exact
    # subgroup means and the sequence mean difference
    nl1, nl2 = counts[(True, True)], counts[(True, False)]
    nh1, nh2 = counts[(False, True)], counts[(False, False)]
    A = np.array([
        [nl1 + nl2, 0.0, nl1],                      # low subgroup mean
        [0.0, nh1 + nh2, nh1],                      # high subgroup mean
        [nl1 / n1 - nl2 / n2, nh1 / n1 - nh2 / n2, nl1 / n1 + nh1 / n1],  # seq diff
    ])
    rhs = np.array([n_low * mu_low, n_high * mu_high, delta_seq])
    base_low, base_high, offset = np.linalg.solve(A, rhs)
    cell_means = {
        (True, True): base_low + offset,
        (True, False): base_low,
        (False, True): base_high + offset,
        (False, False): base_high,
    }

    grand_actual = sum(counts[k] * cell_means[k] for k in cells) / n
    between_ss = sum(counts[k] * (cell_means[k] - grand_actual) ** 2 for k in cells)
    total_ss = (n - 1) * sd_d**2
    within_dof = sum(counts[k] - 1 for k in cells)
    w_sq = (total_ss - between_ss) / within_dof
    if w_sq <= 0:
        raise InfeasibleTargets("subgroup/order structure exceeds the paired-difference variance")
    w = np.sqrt(w_sq)

    diffs = np.empty(n)
    for key, mask in cells.items():
        noise = _standardize(rng.standard_normal(counts[key]))
        diffs[mask] = cell_means[key] + w * noise
    return diffs


def _items_matrix(rng: np.random.Generator, scores: np.ndarray, k: int,
                  target_alpha: float, lo: float, hi: float) -> np.ndarray:
    """Per-row items whose pooled Cronbach's alpha hits the target exactly.

    Noise is row-centered so item means track the scores; the noise scale is
    solved numerically after clipping to the scale bounds.
    """
    noise = rng.standard_normal((scores.size, k))
    noise -= noise.mean(axis=1, keepdims=True)

    def alpha_at(c: float) -> float:
        return cronbach_alpha(np.clip(scores[:, None] + c * noise, lo, hi))

    f = lambda c: alpha_at(c) - target_alpha
    lo_c, hi_c = 1e-4, 6.0
    if f(lo_c) < 0 or f(hi_c) > 0:
        raise InfeasibleTargets(f"cannot bracket item-noise scale for alpha={target_alpha}")
    c = optimize.brentq(f, lo_c, hi_c, xtol=1e-12)
    return np.clip(scores[:, None] + c * noise, lo, hi)


def _ranges_ok(pre_a, post_a, pre_b, post_b, sat_a, sat_b, min_a, min_b) -> bool:
    for arr, lo, hi in ((pre_a, 0, 100), (post_a, 0, 100), (pre_b, 0, 100), (post_b, 0, 100),
                        (sat_a, 1, 7), (sat_b, 1, 7)):
        if arr.min() < lo or arr.max() > hi:
            return False
    return min_a.min() > 0 and min_b.min() > 0


def generate_synthetic_study(targets: StudyTargets = DEFAULT_TARGETS, n: int = 100,
                             seed: int = 42, max_redraws: int = 25) -> StudyDataset:
    """Generate a calibrated long-format crossover dataset (2 rows per
    participant). Raises InfeasibleTargets when the requested moments cannot
    coexist."""
    if n < 8 or n % 2 != 0:
        raise InfeasibleTargets("n must be even and at least 8")
    for redraw in range(max_redraws):
        rng = np.random.default_rng(seed + 7919 * redraw)
        try:
            dataset = _generate_once(rng, targets, n, seed)
        except _SparseCell:
            continue
        if dataset is not None:
            return dataset
    raise InfeasibleTargets(f"could not satisfy scale ranges after {max_redraws} redraws")


def _generate_once(rng: np.random.Generator, targets: StudyTargets, n: int,
                   seed: int) -> Optional[StudyDataset]:
    counts = targets.prior_counts
    if sum(counts) != n:
        counts = tuple(int(round(c * n / sum(counts))) for c in counts)
        counts = counts[:3] + (n - sum(counts[:3]),)
    prior = np.repeat(np.arange(4), counts)
    rng.shuffle(prior)
    low_mask = prior <= 1  # none + basic

    seq1_mask = np.zeros(n, dtype=bool)
    seq1_mask[rng.permutation(n)[: n // 2]] = True

    diffs = _gain_differences(rng, low_mask, seq1_mask, targets)

    # animation gains correlated with the differences so the slides margin is
    # exact as well: var(b) = var(a) + var(diff) - 2 cov(a, diff)
    g = targets.gain
    rho_ad = (g.sd_a**2 + g.diff_sd**2 - g.sd_b**2) / (2 * g.sd_a * g.diff_sd)
    if not -1.0 < rho_ad < 1.0:
        raise InfeasibleTargets("gain margins incompatible with the paired-difference sd")
    u_diff = _standardize(diffs)
    gain_a = g.mean_a + g.sd_a * _correlated_unit(rng, u_diff, rho_ad)
    gain_b = gain_a - diffs

    def _pre_for(gain: np.ndarray, pre_mean: float, pre_sd: float, gain_sd: float,
                 post_sd: float) -> np.ndarray:
        cov = (post_sd**2 - pre_sd**2 - gain_sd**2) / 2
        rho = cov / (pre_sd * gain_sd)
        if not -1.0 < rho < 1.0:
            raise InfeasibleTargets("post-test sd incompatible with pre/gain sds")
        return pre_mean + pre_sd * _correlated_unit(rng, _standardize(gain), rho)

    pre_a = _pre_for(gain_a, targets.pre_mean_a, targets.pre_sd_a, g.sd_a, targets.post_sd_a)
    pre_b = _pre_for(gain_b, targets.pre_mean_b, targets.pre_sd_b, g.sd_b, targets.post_sd_b)
    post_a = pre_a + gain_a
    post_b = pre_b + gain_b

    imi_a, imi_b = _paired_measure(rng, n, targets.imi)
    tlx_a, tlx_b = _paired_measure(rng, n, targets.tlx)
    sat_a, sat_b = _paired_measure(rng, n, targets.satisfaction)
    min_a, min_b = _paired_measure(rng, n, targets.minutes)

    if not _ranges_ok(pre_a, post_a, pre_b, post_b, sat_a, sat_b, min_a, min_b):
        return None

    imi_items = _items_matrix(rng, np.concatenate([imi_a, imi_b]), 6, targets.imi_alpha, 1, 7)
    tlx_items = _items_matrix(rng, np.concatenate([tlx_a, tlx_b]), 6, targets.tlx_alpha, 0, 20)

    rows = []
    prior_names = [PRIOR_LEVELS[p] for p in prior]
    for i in range(n):
        participant = f"P{i + 1:03d}"
        sequence = ANIMATION_FIRST if seq1_mask[i] else SLIDES_FIRST
        topic_a = TOPICS[i % len(TOPICS)]
        topic_b = TOPICS[(i + 1) % len(TOPICS)]
        for cond_idx, condition in enumerate(CONDITIONS):
            first = (sequence == ANIMATION_FIRST) == (condition == ANIMATION)
            period = 1 if first else 2
            pre = pre_a[i] if condition == ANIMATION else pre_b[i]
            post = post_a[i] if condition == ANIMATION else post_b[i]
            items_row = imi_items[i] if condition == ANIMATION else imi_items[n + i]
            tlx_row = tlx_items[i] if condition == ANIMATION else tlx_items[n + i]
            rows.append(StudyRow(
                participant_id=participant,
                sequence=sequence,
                condition=condition,
                topic=topic_a if condition == ANIMATION else topic_b,
                period=period,
                pre=float(pre),
                post=float(post),
                gain=float(post - pre),
                imi_items=tuple(float(v) for v in items_row),
                tlx_items=tuple(float(v) for v in tlx_row),
                satisfaction=float(sat_a[i] if condition == ANIMATION else sat_b[i]),
                minutes=float(min_a[i] if condition == ANIMATION else min_b[i]),
                prior_knowledge=prior_names[i],
            ))
    return StudyDataset(rows=tuple(rows), seed=seed)
