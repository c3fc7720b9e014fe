"""Descriptive statistics, difficulty-tier tables, and paired t-tests.

The Student-t tail probability is computed from the regularized incomplete
beta function (continued-fraction evaluation) so the package carries no
numerical dependency; the test suite checks it against an independent
reference implementation to 1e-9.
"""

import csv
import io
import logging
import math
import statistics
from dataclasses import dataclass
from typing import Optional

from .dataset import DifficultyTier, ProblemRecord, tier_of
from .errors import AlignmentError, AnalysisError, DegenerateSampleError
from .judging import JUDGE_SUBMETRIC_FIELDS, EvaluationRecord, PPSWeights

logger = logging.getLogger(__name__)

# Table row order and display names for the significance report
METRIC_LABELS = {
    "pps": "Overall PPS",
    "mathematical_accuracy": "Mathematical Accuracy",
    "logical_consistency": "Logical Consistency",
    "completeness": "Completeness",
    "clarity_and_coherence": "Clarity And Coherence",
    "formulas_principles": "Formulas Principles",
    "assumptions_made": "Assumptions Made",
}
REPORT_METRICS = tuple(METRIC_LABELS)

_TIERS = (DifficultyTier.EASY, DifficultyTier.MEDIUM, DifficultyTier.HARD)


@dataclass
class DescriptiveStats:
    mean: float
    median: float
    std: float
    min: float
    max: float
    count: int


def descriptive_stats(values: list[float], singleton_std: str = "error") -> DescriptiveStats:
    """Mean, median, sample (n-1) standard deviation, min, max, count.

    A single-element sample has no sample deviation; by default that is an
    error, or pass singleton_std="zero" to get 0.0 with a warning.
    """
    if not values:
        raise AnalysisError("descriptive_stats needs at least one value")
    if len(values) == 1:
        if singleton_std == "zero":
            logger.warning("sample of size 1: reporting std as 0.0")
            std = 0.0
        else:
            raise AnalysisError("sample standard deviation undefined for a single value")
    else:
        std = statistics.stdev(values)
    return DescriptiveStats(
        mean=statistics.fmean(values),
        median=statistics.median(values),
        std=std,
        min=min(values),
        max=max(values),
        count=len(values),
    )


@dataclass
class PairedSample:
    """Two score lists aligned by problem_id."""

    ids: list[str]
    a: list[float]
    b: list[float]

    @classmethod
    def from_maps(cls, a: dict[str, float], b: dict[str, float]) -> tuple["PairedSample", int]:
        """Pair by shared problem_id; returns (sample, dropped_count)."""
        shared = sorted(set(a) & set(b))
        dropped = len(set(a) | set(b)) - len(shared)
        sample = cls(ids=shared, a=[a[i] for i in shared], b=[b[i] for i in shared])
        return sample, dropped


@dataclass
class TTestResult:
    t_statistic: float
    degrees_of_freedom: int
    p_value: float
    significant: bool


def _beta_cf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 3e-14) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        coeff = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + coeff * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + coeff / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        coeff = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + coeff * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + coeff / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise AnalysisError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise AnalysisError("incomplete beta parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise AnalysisError(f"incomplete beta argument {x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: int) -> float:
    """P(|T| >= |t|) for T ~ Student-t with df degrees of freedom."""
    if df < 1:
        raise AnalysisError(f"degrees of freedom must be >= 1, got {df}")
    if t == 0.0:
        return 1.0
    if math.isinf(t):
        return 0.0
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


def paired_t_test(sample: PairedSample, alpha: float = 0.05) -> TTestResult:
    """Two-sided paired t-test on the per-id differences a - b."""
    if len(sample.a) != len(sample.b) or len(sample.a) != len(sample.ids):
        raise AlignmentError(
            f"paired sample sides differ: ids={len(sample.ids)}, a={len(sample.a)}, b={len(sample.b)}"
        )
    n = len(sample.a)
    if n < 2:
        raise AnalysisError(f"paired t-test needs at least 2 pairs, got {n}")
    if not 0 < alpha < 1:
        raise AnalysisError(f"alpha must be in (0, 1), got {alpha}")
    diffs = [x - y for x, y in zip(sample.a, sample.b)]
    std = statistics.stdev(diffs)
    if std == 0.0:
        raise DegenerateSampleError("paired differences have zero variance")
    t = statistics.fmean(diffs) / (std / math.sqrt(n))
    df = n - 1
    p = student_t_two_sided_p(t, df)
    return TTestResult(t_statistic=t, degrees_of_freedom=df, p_value=p, significant=p < alpha)


@dataclass
class TierCell:
    mean: float
    count: int


@dataclass
class TierTable:
    """Mean PPS per strategy per difficulty tier, plus a per-tier average row."""

    rows: dict[str, dict[DifficultyTier, TierCell]]
    average_row: dict[DifficultyTier, TierCell]


def tier_table(evals: list[EvaluationRecord], problems: list[ProblemRecord]) -> TierTable:
    """Aggregate PPS by (strategy, difficulty tier).

    Every evaluation must resolve to a dataset record for its difficulty.
    """
    difficulty_by_id = {p.problem_id: p.problem_difficulty for p in problems}
    unresolved = sorted({e.problem_id for e in evals if e.problem_id not in difficulty_by_id})
    if unresolved:
        raise AnalysisError(
            "evaluations reference unknown problem_ids: " + ", ".join(unresolved)
        )
    buckets: dict[str, dict[DifficultyTier, list[float]]] = {}
    for record in evals:
        tier = tier_of(difficulty_by_id[record.problem_id])
        buckets.setdefault(record.strategy, {}).setdefault(tier, []).append(record.pps)
    rows = {
        strategy: {
            tier: TierCell(mean=statistics.fmean(values), count=len(values))
            for tier, values in tiers.items()
        }
        for strategy, tiers in sorted(buckets.items())
    }
    average_row: dict[DifficultyTier, TierCell] = {}
    for tier in _TIERS:
        means = [cells[tier].mean for cells in rows.values() if tier in cells]
        if means:
            average_row[tier] = TierCell(mean=statistics.fmean(means), count=len(means))
    return TierTable(rows=rows, average_row=average_row)


@dataclass
class SignificanceRow:
    comparison: str
    metric: str
    weight: float
    t: Optional[float]
    p: Optional[float]
    significant: bool
    degenerate: bool
    pairs: int


def _metric_values(record: EvaluationRecord, metric: str) -> float:
    if metric == "pps":
        return record.pps
    return float(getattr(record.judge_scores, metric))


def significance_report(
    evals_by_strategy: dict[str, list[EvaluationRecord]],
    baseline: str,
    alpha: float = 0.05,
    weights: Optional[PPSWeights] = None,
) -> list[SignificanceRow]:
    """Paired t-tests of every strategy against the baseline.

    One row per comparison per metric: overall PPS plus the six judge
    sub-metrics, paired by problem_id. Zero-variance differences are
    reported as degenerate rows rather than fabricated statistics.
    """
    weights = weights or PPSWeights()
    if baseline not in evals_by_strategy:
        raise AnalysisError(f"baseline strategy {baseline!r} not among the evaluations")
    metric_weights = {"pps": 1.0, **weights.as_dict()}
    base_by_metric = {
        metric: {e.problem_id: _metric_values(e, metric) for e in evals_by_strategy[baseline]}
        for metric in REPORT_METRICS
    }
    rows: list[SignificanceRow] = []
    for strategy in sorted(evals_by_strategy):
        if strategy == baseline:
            continue
        comparison = f"{strategy} vs. {baseline}"
        for metric in REPORT_METRICS:
            side = {e.problem_id: _metric_values(e, metric) for e in evals_by_strategy[strategy]}
            sample, dropped = PairedSample.from_maps(side, base_by_metric[metric])
            if dropped:
                logger.info("%s/%s: dropped %d unpaired problems", comparison, metric, dropped)
            if len(sample.ids) < 2:
                raise AlignmentError(
                    f"{comparison}: only {len(sample.ids)} shared problem_ids, need >= 2"
                )
            try:
                result = paired_t_test(sample, alpha=alpha)
                rows.append(SignificanceRow(
                    comparison=comparison, metric=METRIC_LABELS[metric],
                    weight=metric_weights[metric], t=result.t_statistic,
                    p=result.p_value, significant=result.significant,
                    degenerate=False, pairs=len(sample.ids),
                ))
            except DegenerateSampleError:
                rows.append(SignificanceRow(
                    comparison=comparison, metric=METRIC_LABELS[metric],
                    weight=metric_weights[metric], t=None, p=None,
                    significant=False, degenerate=True, pairs=len(sample.ids),
                ))
    return rows


# ---------------------------------------------------------------------------
# renderers


def render_tier_table_csv(table: TierTable) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    header = ["strategy"]
    for tier in _TIERS:
        header += [f"{tier.value.lower()}_mean_pps", f"{tier.value.lower()}_count"]
    writer.writerow(header)
    for strategy, cells in table.rows.items():
        row = [strategy]
        for tier in _TIERS:
            cell = cells.get(tier)
            row += ["" if cell is None else f"{cell.mean:.4f}", "" if cell is None else cell.count]
        writer.writerow(row)
    row = ["average"]
    for tier in _TIERS:
        cell = table.average_row.get(tier)
        row += ["" if cell is None else f"{cell.mean:.4f}", "" if cell is None else cell.count]
    writer.writerow(row)
    return out.getvalue()


def render_tier_table_text(table: TierTable) -> str:
    names = list(table.rows) + ["average"]
    width = max([len("strategy")] + [len(n) for n in names]) + 2
    lines = ["strategy".ljust(width) + "".join(f"{t.value:>18}" for t in _TIERS)]
    def fmt(cells) -> str:
        parts = []
        for tier in _TIERS:
            cell = cells.get(tier)
            parts.append(f"{'-':>18}" if cell is None else f"{cell.mean:>10.2f} (n={cell.count:<3d})")
        return "".join(parts)
    for strategy, cells in table.rows.items():
        lines.append(strategy.ljust(width) + fmt(cells))
    lines.append("average".ljust(width) + fmt(table.average_row))
    return "\n".join(lines) + "\n"


def render_significance_csv(rows: list[SignificanceRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["comparison", "metric", "weight", "t", "p", "significant"])
    for row in rows:
        writer.writerow([
            row.comparison, row.metric, f"{row.weight:.2f}",
            "nan" if row.t is None else f"{row.t:.4f}",
            "nan" if row.p is None else f"{row.p:.3e}",
            row.significant,
        ])
    return out.getvalue()


def render_significance_text(rows: list[SignificanceRow]) -> str:
    header = (
        f"{'Comparison':<34} {'Metric':<24} {'Weight':>6} {'t':>9} {'p':>11} {'Significant':>12}"
    )
    lines = [header, "-" * len(header)]
    for row in rows:
        if row.degenerate:
            t_txt, p_txt, sig_txt = "n/a", "n/a", "zero-variance (degenerate)"
        else:
            t_txt, p_txt = f"{row.t:.2f}", f"{row.p:.2e}"
            sig_txt = str(row.significant)
        lines.append(
            f"{row.comparison:<34} {row.metric:<24} {row.weight:>6.2f} {t_txt:>9} {p_txt:>11} {sig_txt:>12}"
        )
    return "\n".join(lines) + "\n"
