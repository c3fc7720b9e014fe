"""Run stages shared by the HTTP service: solve, judge, report, stats.

Stages communicate through files (attempt/v1 and eval/v1 JSONL) so an
expensive solve run can be re-judged or re-analyzed offline. Solve and judge
are resumable: problem_ids already present in the output file are skipped.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import analysis
from .config import RunConfig, write_frozen_config
from .dataset import ProblemRecord, category_summary, load_dataset, tier_of
from .errors import ConfigError, HarnessError, SchemaVersionError
from .gateway import HttpBackend, LlmGateway, MockBackend
from .judging import EVAL_SCHEMA, EvaluationRecord, judge_attempt
from .strategies import ATTEMPT_SCHEMA, Attempt, StrategyKind, run_batch

logger = logging.getLogger(__name__)


@dataclass
class SolveOutcome:
    attempts_path: str
    completed: int
    failed: int
    skipped: int
    completions_issued: int
    transcript_path: str
    failures_path: Optional[str]


@dataclass
class JudgeOutcome:
    evaluations_path: str
    judged: int
    failed: int
    skipped: int
    coverage: float
    failures_path: Optional[str]


@dataclass
class ReportOutcome:
    tier_table_csv_path: str
    tier_table_text: str
    category_summary_csv_path: str
    category_summary_text: str
    significance_csv_path: Optional[str]
    significance_text: Optional[str]
    comparisons: int


@dataclass
class StatsOutcome:
    record_count: int
    fields: dict[str, analysis.DescriptiveStats]
    categories: dict[str, int]
    text: str


def _build_gateway(config: RunConfig, mock_script: Optional[str], transcript_path) -> LlmGateway:
    if mock_script:
        backend = MockBackend.from_script_file(mock_script)
        # scripted failures should not stall test runs with backoff sleeps
        base_delay = 0.0
    else:
        backend = HttpBackend()
        base_delay = config.retry_base_delay
    return LlmGateway(
        backend,
        cache_dir=config.cache_dir or None,
        transcript_path=transcript_path,
        retry_limit=config.retry_limit,
        retry_base_delay=base_delay,
        concurrency_limit=config.gateway_concurrency,
    )


def _filter_problems(problems, category: Optional[str], tier: Optional[str], limit: Optional[int]):
    selected = problems
    if category:
        selected = [p for p in selected if p.category == category]
    if tier:
        wanted = tier.strip().capitalize()
        selected = [p for p in selected if tier_of(p.problem_difficulty).value == wanted]
    if limit is not None:
        if limit < 1:
            raise ConfigError(f"limit must be >= 1, got {limit}")
        selected = selected[:limit]
    return selected


def _existing_ids(path: Path, expected_schema: str) -> set[str]:
    ids: set[str] = set()
    if not path.exists():
        return ids
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            entry = json.loads(line)
            if entry.get("schema") != expected_schema:
                raise SchemaVersionError(
                    f"{path}: line {lineno}: expected schema {expected_schema!r}, "
                    f"got {entry.get('schema')!r}"
                )
            ids.add(entry["problem_id"])
    return ids


def _append_jsonl(path: Path, dicts) -> None:
    with path.open("a", encoding="utf-8") as handle:
        for item in dicts:
            handle.write(json.dumps(item, ensure_ascii=False) + "\n")


def solve_stage(
    config: RunConfig,
    strategy: StrategyKind,
    limit: Optional[int] = None,
    category: Optional[str] = None,
    tier: Optional[str] = None,
    mock_script: Optional[str] = None,
    output_path: Optional[str] = None,
    dataset_path: Optional[str] = None,
) -> SolveOutcome:
    """Run one strategy over the (filtered) dataset, appending attempt/v1 lines."""
    config.validate_for_strategy(strategy, require_secrets=mock_script is None)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    attempts_path = Path(output_path) if output_path else out_dir / f"attempts_{strategy.value}.jsonl"
    attempts_path.parent.mkdir(parents=True, exist_ok=True)
    transcript_path = out_dir / "transcripts.jsonl"

    problems = load_dataset(dataset_path or config.dataset)
    problems = _filter_problems(problems, category, tier, limit)
    done = _existing_ids(attempts_path, ATTEMPT_SCHEMA)
    todo = [p for p in problems if p.problem_id not in done]
    skipped = len(problems) - len(todo)
    if skipped:
        logger.info("resume: skipping %d already-solved problems", skipped)

    gateway = _build_gateway(config, mock_script, transcript_path)
    attempts, failures = ([], [])
    if todo:
        attempts, failures = run_batch(
            todo, strategy, config.roles, gateway,
            parallelism=config.parallelism,
            aggregation_weights=config.aggregation_weights,
            rubric_weights=config.rubric_weights,
            feedback_rounds=config.feedback_rounds,
            on_result=lambda pid, ok: logger.info("solved %s: %s", pid, "ok" if ok else "FAILED"),
        )
    _append_jsonl(attempts_path, (a.to_json_dict() for a in attempts))
    failures_path = None
    if failures:
        failures_path = attempts_path.with_suffix(".failures.jsonl")
        _append_jsonl(failures_path, (f.to_json_dict() for f in failures))
    write_frozen_config(
        config,
        attempts_path.with_suffix(".config.json"),
        {
            "stage": "solve", "strategy": strategy.value, "limit": limit,
            "category": category, "tier": tier, "mock_script": mock_script,
        },
    )
    return SolveOutcome(
        attempts_path=str(attempts_path),
        completed=len(attempts),
        failed=len(failures),
        skipped=skipped,
        completions_issued=gateway.completions_issued,
        transcript_path=str(transcript_path),
        failures_path=str(failures_path) if failures_path else None,
    )


def load_attempts(path) -> list[Attempt]:
    path = Path(path)
    if not path.is_file():
        raise HarnessError(f"attempts file not found: {path}")
    attempts = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            entry = json.loads(line)
            if entry.get("schema") != ATTEMPT_SCHEMA:
                raise SchemaVersionError(
                    f"{path}: line {lineno}: expected schema {ATTEMPT_SCHEMA!r}, "
                    f"got {entry.get('schema')!r}"
                )
            attempts.append(Attempt.from_json_dict(entry))
    return attempts


def load_evaluations(path) -> list[EvaluationRecord]:
    path = Path(path)
    if not path.is_file():
        raise HarnessError(f"evaluations file not found: {path}")
    records = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            entry = json.loads(line)
            if entry.get("schema") != EVAL_SCHEMA:
                raise SchemaVersionError(
                    f"{path}: line {lineno}: expected schema {EVAL_SCHEMA!r}, "
                    f"got {entry.get('schema')!r}"
                )
            records.append(EvaluationRecord.from_json_dict(entry))
    return records


def judge_stage(
    config: RunConfig,
    attempts_path: str,
    mock_script: Optional[str] = None,
    output_path: Optional[str] = None,
    dataset_path: Optional[str] = None,
) -> JudgeOutcome:
    """Judge every attempt in a file, appending eval/v1 lines."""
    config.validate()
    if "judge" not in config.roles:
        raise ConfigError("judging requires a 'judge' role in the config")
    if mock_script is None:
        config.check_secrets(["judge"])
    attempts = load_attempts(attempts_path)
    problems = {p.problem_id: p for p in load_dataset(dataset_path or config.dataset)}
    unknown = sorted({a.problem_id for a in attempts if a.problem_id not in problems})
    if unknown:
        raise HarnessError("attempts reference unknown problem_ids: " + ", ".join(unknown))

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(attempts_path).stem
    evals_path = Path(output_path) if output_path else out_dir / f"evals_{stem}.jsonl"
    evals_path.parent.mkdir(parents=True, exist_ok=True)

    done = _existing_ids(evals_path, EVAL_SCHEMA)
    todo = [a for a in attempts if a.problem_id not in done]
    skipped = len(attempts) - len(todo)

    gateway = _build_gateway(config, mock_script, out_dir / "transcripts.jsonl")
    judge = config.roles["judge"]
    slots: list[Optional[EvaluationRecord]] = [None] * len(todo)
    failures: list[dict] = []
    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        futures = {
            pool.submit(
                judge_attempt, attempt, problems[attempt.problem_id], judge, gateway,
                config.pps_weights, config.pps_normalization,
            ): i
            for i, attempt in enumerate(todo)
        }
        for future in as_completed(futures):
            index = futures[future]
            attempt = todo[index]
            try:
                slots[index] = future.result()
            except Exception as exc:
                logger.error("judging %s failed: %s", attempt.problem_id, exc)
                failures.append({
                    "schema": "failure/v1",
                    "problem_id": attempt.problem_id,
                    "strategy": attempt.strategy.value,
                    "stage": "judge",
                    "error": str(exc),
                })
    evaluations = [e for e in slots if e is not None]
    _append_jsonl(evals_path, (e.to_json_dict() for e in evaluations))
    failures_path = None
    if failures:
        failures_path = evals_path.with_suffix(".failures.jsonl")
        _append_jsonl(failures_path, failures)
    write_frozen_config(
        config,
        evals_path.with_suffix(".config.json"),
        {"stage": "judge", "attempts_path": str(attempts_path), "mock_script": mock_script},
    )
    total = len(attempts)
    coverage = (len(evaluations) + skipped) / total if total else 0.0
    return JudgeOutcome(
        evaluations_path=str(evals_path),
        judged=len(evaluations),
        failed=len(failures),
        skipped=skipped,
        coverage=coverage,
        failures_path=str(failures_path) if failures_path else None,
    )


def report_stage(
    evaluations_paths: list[str],
    output_dir: str,
    dataset_path: str,
    baseline: Optional[str] = None,
    alpha: float = 0.05,
    weights=None,
) -> ReportOutcome:
    """Tier table and category summary; significance report when >= 2 strategies."""
    if not evaluations_paths:
        raise HarnessError("report needs at least one evaluations file")
    evals: list[EvaluationRecord] = []
    for path in evaluations_paths:
        evals.extend(load_evaluations(path))
    if not evals:
        raise HarnessError("evaluations files contain no records")
    problems = load_dataset(dataset_path)
    by_strategy: dict[str, list[EvaluationRecord]] = {}
    for record in evals:
        by_strategy.setdefault(record.strategy, []).append(record)

    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    table = analysis.tier_table(evals, problems)
    tier_csv_path = out_dir / "tier_table.csv"
    tier_csv_path.write_text(analysis.render_tier_table_csv(table), encoding="utf-8")
    tier_text = analysis.render_tier_table_text(table)
    (out_dir / "tier_table.txt").write_text(tier_text, encoding="utf-8")

    problem_by_id = {p.problem_id: p for p in problems}
    covered = sorted({e.problem_id for e in evals})
    summary = category_summary([problem_by_id[pid] for pid in covered if pid in problem_by_id])
    category_csv_path = out_dir / "category_summary.csv"
    category_csv_path.write_text(
        "category,count\n" + "".join(f"{name},{count}\n" for name, count in summary.items()),
        encoding="utf-8",
    )
    category_text = "\n".join(f"{name}: {count}" for name, count in summary.items()) + "\n"

    (out_dir / "report.request.json").write_text(
        json.dumps(
            {
                "evaluations_paths": [str(p) for p in evaluations_paths],
                "dataset": str(dataset_path),
                "baseline": baseline,
                "alpha": alpha,
                "pps_weights": (weights.as_dict() if weights is not None else None),
            },
            indent=2, sort_keys=True,
        ) + "\n",
        encoding="utf-8",
    )

    significance_csv_path = None
    significance_text = None
    comparisons = 0
    if len(by_strategy) >= 2:
        chosen_baseline = baseline or StrategyKind.BASELINE.value
        if chosen_baseline not in by_strategy:
            raise HarnessError(
                f"baseline strategy {chosen_baseline!r} not present in the evaluations "
                f"(found: {', '.join(sorted(by_strategy))})"
            )
        rows = analysis.significance_report(by_strategy, chosen_baseline, alpha=alpha, weights=weights)
        comparisons = len(by_strategy) - 1
        significance_csv_path = out_dir / "significance.csv"
        significance_csv_path.write_text(analysis.render_significance_csv(rows), encoding="utf-8")
        significance_text = analysis.render_significance_text(rows)
        (out_dir / "significance.txt").write_text(significance_text, encoding="utf-8")

    return ReportOutcome(
        tier_table_csv_path=str(tier_csv_path),
        tier_table_text=tier_text,
        category_summary_csv_path=str(category_csv_path),
        category_summary_text=category_text,
        significance_csv_path=str(significance_csv_path) if significance_csv_path else None,
        significance_text=significance_text,
        comparisons=comparisons,
    )


_NUMERIC_FIELDS = ("problem_difficulty", "steps", "problem_tokens", "solution_tokens")


def stats_stage(dataset_path: str) -> StatsOutcome:
    """Descriptive statistics over the dataset's numeric fields."""
    problems = load_dataset(dataset_path)
    fields = {
        name: analysis.descriptive_stats(
            [float(getattr(p, name)) for p in problems], singleton_std="zero"
        )
        for name in _NUMERIC_FIELDS
    }
    categories = category_summary(problems)
    lines = [f"records: {len(problems)}", ""]
    header = f"{'field':<20} {'count':>7} {'mean':>12} {'median':>12} {'std':>12} {'min':>10} {'max':>10}"
    lines += [header, "-" * len(header)]
    for name, stats in fields.items():
        lines.append(
            f"{name:<20} {stats.count:>7} {stats.mean:>12.4f} {stats.median:>12.4f} "
            f"{stats.std:>12.4f} {stats.min:>10.1f} {stats.max:>10.1f}"
        )
    lines += ["", "categories:"]
    lines += [f"  {name}: {count}" for name, count in categories.items()]
    return StatsOutcome(
        record_count=len(problems),
        fields=fields,
        categories=categories,
        text="\n".join(lines) + "\n",
    )
