"""Study dataset schema, CSV serialization and the analysis driver."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .stats import (
    TestResult,
    ancova,
    bootstrap_ci,
    cronbach_alpha,
    independent_t,
    paired_t,
)

CONDITIONS = ("animation", "slides")
SEQUENCES = ("animation_first", "slides_first")
PRIOR_LEVELS = ("none", "basic", "intermediate", "advanced")
TOPICS = (
    "Linear Transformations",
    "Linear Systems",
    "Eigenvalues and Eigenvectors",
    "Thermodynamics",
)
N_IMI_ITEMS = 6
N_TLX_ITEMS = 6

CSV_HEADER = (
    ["participant_id", "sequence", "condition", "topic", "period", "prior_knowledge",
     "pre", "post", "gain"]
    + [f"imi_{i + 1}" for i in range(N_IMI_ITEMS)]
    + [f"tlx_{i + 1}" for i in range(N_TLX_ITEMS)]
    + ["satisfaction", "minutes"]
)


class SchemaViolation(ValueError):
    pass


@dataclass(frozen=True)
class StudyRow:
    participant_id: str
    sequence: str
    condition: str
    topic: str
    period: int
    pre: float
    post: float
    gain: float
    imi_items: tuple[float, ...]
    tlx_items: tuple[float, ...]
    satisfaction: float
    minutes: float
    prior_knowledge: str

    def __post_init__(self) -> None:
        if self.sequence not in SEQUENCES:
            raise SchemaViolation(f"unknown sequence {self.sequence!r}")
        if self.condition not in CONDITIONS:
            raise SchemaViolation(f"unknown condition {self.condition!r}")
        if self.prior_knowledge not in PRIOR_LEVELS:
            raise SchemaViolation(f"unknown prior_knowledge {self.prior_knowledge!r}")
        if self.period not in (1, 2):
            raise SchemaViolation(f"period must be 1 or 2, got {self.period}")
        if len(self.imi_items) != N_IMI_ITEMS or len(self.tlx_items) != N_TLX_ITEMS:
            raise SchemaViolation("wrong item count")
        if not 0 <= self.pre <= 100 or not 0 <= self.post <= 100:
            raise SchemaViolation("test scores must lie in [0, 100]")
        if abs(self.gain - (self.post - self.pre)) > 1e-9:
            raise SchemaViolation("gain must equal post - pre")
        if any(not 1 <= v <= 7 for v in self.imi_items):
            raise SchemaViolation("IMI items must lie in [1, 7]")
        if any(not 0 <= v <= 20 for v in self.tlx_items):
            raise SchemaViolation("TLX items must lie in [0, 20]")
        if not 1 <= self.satisfaction <= 7:
            raise SchemaViolation("satisfaction must lie in [1, 7]")
        if self.minutes <= 0:
            raise SchemaViolation("minutes must be positive")

    @property
    def imi_score(self) -> float:
        return sum(self.imi_items) / len(self.imi_items)

    @property
    def tlx_score(self) -> float:
        return sum(self.tlx_items) / len(self.tlx_items)


@dataclass(frozen=True)
class StudyDataset:
    rows: tuple[StudyRow, ...]
    seed: int | None = None

    def __post_init__(self) -> None:
        seen = set()
        per_participant: dict[str, set[str]] = {}
        for row in self.rows:
            key = (row.participant_id, row.condition)
            if key in seen:
                raise SchemaViolation(f"duplicate row for {key}")
            seen.add(key)
            per_participant.setdefault(row.participant_id, set()).add(row.condition)
        for pid, conds in per_participant.items():
            if conds != set(CONDITIONS):
                raise SchemaViolation(f"participant {pid} is missing a condition row")

    @property
    def participants(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for row in self.rows:
            seen.setdefault(row.participant_id, None)
        return tuple(seen)

    def by_condition(self, condition: str) -> tuple[StudyRow, ...]:
        ordered = {row.participant_id: row for row in self.rows if row.condition == condition}
        return tuple(ordered[pid] for pid in self.participants)


def save_csv(dataset: StudyDataset, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in dataset.rows:
            writer.writerow(
                [row.participant_id, row.sequence, row.condition, row.topic,
                 row.period, row.prior_knowledge,
                 repr(row.pre), repr(row.post), repr(row.gain)]
                + [repr(v) for v in row.imi_items]
                + [repr(v) for v in row.tlx_items]
                + [repr(row.satisfaction), repr(row.minutes)]
            )


def load_csv(path: str | Path) -> StudyDataset:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise SchemaViolation(f"unexpected CSV header in {path}")
        rows = []
        for lineno, record in enumerate(reader, start=2):
            if len(record) != len(CSV_HEADER):
                raise SchemaViolation(f"{path}:{lineno}: wrong column count")
            named = dict(zip(CSV_HEADER, record))
            try:
                rows.append(StudyRow(
                    participant_id=named["participant_id"],
                    sequence=named["sequence"],
                    condition=named["condition"],
                    topic=named["topic"],
                    period=int(named["period"]),
                    prior_knowledge=named["prior_knowledge"],
                    pre=float(named["pre"]),
                    post=float(named["post"]),
                    gain=float(named["gain"]),
                    imi_items=tuple(float(named[f"imi_{i + 1}"]) for i in range(N_IMI_ITEMS)),
                    tlx_items=tuple(float(named[f"tlx_{i + 1}"]) for i in range(N_TLX_ITEMS)),
                    satisfaction=float(named["satisfaction"]),
                    minutes=float(named["minutes"]),
                ))
            except (ValueError, SchemaViolation) as exc:
                raise SchemaViolation(f"{path}:{lineno}: {exc}") from exc
    return StudyDataset(rows=tuple(rows))


def _descriptives(values: np.ndarray) -> dict[str, float]:
    return {"mean": float(values.mean()), "sd": float(values.std(ddof=1)),
            "n": int(values.size)}


def _result_dict(result: TestResult) -> dict[str, Any]:
    return {
        "statistic": result.statistic,
        "df": result.df,
        "p_value": result.p_value,
        "effect_size": result.effect_size,
        "ci95": list(result.ci95),
        "method": result.method,
    }


def _interaction_regression(gain_diffs: np.ndarray, low: np.ndarray,
                            seq1: np.ndarray) -> dict[str, Any]:
    """OLS on gain differences with subgroup, sequence and their interaction."""
    n = gain_diffs.size
    X = np.column_stack([np.ones(n), low.astype(float), seq1.astype(float),
                         (low & seq1).astype(float)])
    beta, _, rank, _ = np.linalg.lstsq(X, gain_diffs, rcond=None)
    resid = gain_diffs - X @ beta
    dof = n - X.shape[1]
    sigma_sq = float(resid @ resid) / dof
    cov = sigma_sq * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(cov))
    from scipy import stats as sps
    t_vals = beta / se
    p_vals = 2 * sps.t.sf(np.abs(t_vals), dof)
    names = ("intercept", "low_prior", "animation_first", "low_prior_x_animation_first")
    return {
        "df": dof,
        "coefficients": {
            name: {"estimate": float(b), "se": float(s), "t": float(t), "p_value": float(p)}
            for name, b, s, t, p in zip(names, beta, se, t_vals, p_vals)
        },
    }


def analyze_study(dataset: StudyDataset, bootstrap_b: int = 2000,
                  bootstrap_seed: int = 1234) -> dict[str, Any]:
    """Full deterministic analysis: descriptives, paired tests, ANCOVA on
    post-tests, subgroup and order-effect tests, and reliability with
    bootstrap confidence intervals."""
    anim = dataset.by_condition("animation")
    slid = dataset.by_condition("slides")
    n = len(anim)

    measures = {
        "gain": (np.array([r.gain for r in anim]), np.array([r.gain for r in slid])),
        "imi": (np.array([r.imi_score for r in anim]), np.array([r.imi_score for r in slid])),
        "tlx": (np.array([r.tlx_score for r in anim]), np.array([r.tlx_score for r in slid])),
        "satisfaction": (np.array([r.satisfaction for r in anim]),
                         np.array([r.satisfaction for r in slid])),
        "minutes": (np.array([r.minutes for r in anim]), np.array([r.minutes for r in slid])),
    }
    pre_a = np.array([r.pre for r in anim])
    pre_b = np.array([r.pre for r in slid])
    post_a = np.array([r.post for r in anim])
    post_b = np.array([r.post for r in slid])

    descriptives = {
        "pre": {"animation": _descriptives(pre_a), "slides": _descriptives(pre_b)},
        "post": {"animation": _descriptives(post_a), "slides": _descriptives(post_b)},
    }
    paired: dict[str, Any] = {}
    for name, (a, b) in measures.items():
        descriptives[name] = {"animation": _descriptives(a), "slides": _descriptives(b)}
        paired[name] = _result_dict(paired_t(a, b))

    post = np.concatenate([post_a, post_b])
    pre = np.concatenate([pre_a, pre_b])
    cond = np.concatenate([np.ones(n), np.zeros(n)])
    anc = ancova(post, pre, cond)
    ancova_block = {
        "f_statistic": anc.F,
        "df": list(anc.df),
        "p_value": anc.p_value,
        "partial_eta_sq": anc.partial_eta_sq,
        "adjusted_means": {"animation": anc.adjusted_means[1.0],
                          "slides": anc.adjusted_means[0.0]},
    }

    diffs = measures["gain"][0] - measures["gain"][1]
    low = np.array([r.prior_knowledge in ("none", "basic") for r in anim])
    seq1 = np.array([r.sequence == "animation_first" for r in anim])
    subgroup = {
        "low": _descriptives(diffs[low]),
        "high": _descriptives(diffs[~low]),
        "test": _result_dict(independent_t(diffs[low], diffs[~low])),
    }
    order = {
        "animation_first": _descriptives(diffs[seq1]),
        "slides_first": _descriptives(diffs[~seq1]),
        "test": _result_dict(independent_t(diffs[seq1], diffs[~seq1])),
    }
    interaction = _interaction_regression(diffs, low, seq1)

    def _alpha_ci(getter) -> dict[str, Any]:
        # one resampling unit per participant: their item rows from both
        # conditions travel together
        units = [np.array([getter(a), getter(s)]) for a, s in zip(anim, slid)]
        estimator = lambda us: cronbach_alpha(np.vstack(us))
        alpha = estimator(units)
        ci = bootstrap_ci(estimator, units, B=bootstrap_b, seed=bootstrap_seed)
        return {"alpha": alpha, "ci95": list(ci)}

    reliability = {
        "imi": _alpha_ci(lambda r: r.imi_items),
        "tlx": _alpha_ci(lambda r: r.tlx_items),
    }

    return {
        "n_participants": n,
        "descriptives": descriptives,
        "paired": paired,
        "ancova": ancova_block,
        "subgroup": subgroup,
        "order_effect": order,
        "interaction": interaction,
        "reliability": reliability,
    }


def emit_plot_data(dataset: StudyDataset, results: dict[str, Any],
                   out_dir: str | Path) -> list[Path]:
    """CSV series for downstream plotting: pre/post bars, paired-measure box
    summaries and subgroup bars."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    bars = out_dir / "pre_post_bars.csv"
    with bars.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase", "condition", "mean", "sd", "n"])
        for phase in ("pre", "post"):
            for condition in CONDITIONS:
                d = results["descriptives"][phase][condition]
                writer.writerow([phase, condition, f"{d['mean']:.6g}",
                                 f"{d['sd']:.6g}", d["n"]])
    written.append(bars)

    def _box_stats(values: np.ndarray) -> list[str]:
        q1, med, q3 = np.percentile(values, [25, 50, 75])
        return [f"{values.min():.6g}", f"{q1:.6g}", f"{med:.6g}",
                f"{q3:.6g}", f"{values.max():.6g}"]

    boxes = out_dir / "measure_boxes.csv"
    anim = dataset.by_condition("animation")
    slid = dataset.by_condition("slides")
    with boxes.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["measure", "condition", "min", "q1", "median", "q3", "max"])
        for measure, getter in (("imi", lambda r: r.imi_score),
                                ("tlx", lambda r: r.tlx_score),
                                ("satisfaction", lambda r: r.satisfaction)):
            for condition, rows in (("animation", anim), ("slides", slid)):
                values = np.array([getter(r) for r in rows])
                writer.writerow([measure, condition] + _box_stats(values))
    written.append(boxes)

    subgroup = out_dir / "subgroup_bars.csv"
    with subgroup.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subgroup", "mean", "sd", "n"])
        for name in ("low", "high"):
            d = results["subgroup"][name]
            writer.writerow([name, f"{d['mean']:.6g}", f"{d['sd']:.6g}", d["n"]])
    written.append(subgroup)
    return written
