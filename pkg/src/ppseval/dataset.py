"""Benchmark dataset records: loading, validation, splitting, summaries.

Records travel as line-delimited JSON, one problem per line. Unknown fields
are preserved verbatim so dataset revisions round-trip unchanged.
"""

import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path

from .errors import DatasetError


class DifficultyTier(str, Enum):
    EASY = "Easy"
    MEDIUM = "Medium"
    HARD = "Hard"


# problem_difficulty bands: 1-4 easy, 5-7 medium, 8-10 hard
_TIER_BANDS = (
    (1, 4, DifficultyTier.EASY),
    (5, 7, DifficultyTier.MEDIUM),
    (8, 10, DifficultyTier.HARD),
)

_STR_FIELDS = ("problem", "simplified_problem_statement", "category",
               "elaborated_solution_steps", "source")
_LIST_FIELDS = ("soft_labels", "alternative_solutions", "final_answers_in_brief")
_KNOWN_FIELDS = (
    "problem_id", "problem", "simplified_problem_statement", "category",
    "soft_labels", "elaborated_solution_steps", "alternative_solutions",
    "problem_difficulty", "final_answers_in_brief", "steps", "source",
    "problem_tokens", "solution_tokens",
)


@dataclass
class ProblemRecord:
    """One benchmark item with its ground-truth explanation."""

    problem_id: str
    problem: str
    simplified_problem_statement: str
    category: str
    soft_labels: list[str]
    elaborated_solution_steps: str
    alternative_solutions: list[str]
    problem_difficulty: int
    final_answers_in_brief: list[str]
    steps: int
    source: str
    problem_tokens: int
    solution_tokens: int
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not isinstance(self.problem_id, str) or not self.problem_id:
            raise DatasetError("problem_id must be a non-empty string")
        for name in _STR_FIELDS:
            if not isinstance(getattr(self, name), str):
                raise DatasetError(f"{name} must be a string ({self.problem_id})")
        for name in _LIST_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise DatasetError(f"{name} must be a list of strings ({self.problem_id})")
        if not self.problem.strip():
            raise DatasetError(f"problem must be non-empty ({self.problem_id})")
        if not self.elaborated_solution_steps.strip():
            raise DatasetError(f"elaborated_solution_steps must be non-empty ({self.problem_id})")
        if not isinstance(self.problem_difficulty, int) or isinstance(self.problem_difficulty, bool):
            raise DatasetError(f"problem_difficulty must be an integer ({self.problem_id})")
        if not 1 <= self.problem_difficulty <= 10:
            raise DatasetError(
                f"problem_difficulty {self.problem_difficulty} out of range 1-10 ({self.problem_id})"
            )
        if not isinstance(self.steps, int) or self.steps < 0:
            raise DatasetError(f"steps must be a non-negative integer ({self.problem_id})")
        for name in ("problem_tokens", "solution_tokens"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise DatasetError(f"{name} must be a positive integer ({self.problem_id})")

    @classmethod
    def from_json_dict(cls, raw: dict) -> "ProblemRecord":
        data = dict(raw)
        # Some exports capitalize the id field; accept it as an alias.
        if "problem_id" not in data and "Problem_ID" in data:
            data["problem_id"] = data.pop("Problem_ID")
        missing = [name for name in _KNOWN_FIELDS if name not in data]
        if missing:
            raise DatasetError(f"missing fields: {', '.join(missing)}")
        known = {name: data.pop(name) for name in _KNOWN_FIELDS}
        record = cls(**known, extra=data)
        record.validate()
        return record

    def to_json_dict(self) -> dict:
        out = {name: getattr(self, name) for name in _KNOWN_FIELDS}
        out.update(self.extra)
        return out


@dataclass
class DatasetSplit:
    train: list[ProblemRecord]
    test: list[ProblemRecord]
    seed: int


def tier_of(difficulty: int) -> DifficultyTier:
    """Map a 1-10 difficulty rating onto its tier."""
    if not isinstance(difficulty, int) or isinstance(difficulty, bool):
        raise DatasetError(f"difficulty must be an integer, got {difficulty!r}")
    for lo, hi, tier in _TIER_BANDS:
        if lo <= difficulty <= hi:
            return tier
    raise DatasetError(f"difficulty {difficulty} out of range 1-10")


def load_dataset(path, format: str = "jsonl") -> list[ProblemRecord]:
    """Load and validate a JSONL dataset file, preserving line order."""
    if format != "jsonl":
        raise DatasetError(f"unsupported dataset format: {format}")
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")
    records: list[ProblemRecord] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(raw, dict):
                raise DatasetError(f"{path}: line {lineno}: expected a JSON object")
            try:
                record = ProblemRecord.from_json_dict(raw)
            except DatasetError as exc:
                raise DatasetError(f"{path}: line {lineno}: {exc}") from exc
            if record.problem_id in seen:
                raise DatasetError(f"{path}: line {lineno}: duplicate problem_id {record.problem_id}")
            seen.add(record.problem_id)
            records.append(record)
    return records


def serialize_dataset(records: list[ProblemRecord], path) -> None:
    """Write records as JSONL, inverse of load_dataset."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_json_dict(), ensure_ascii=False) + "\n")


def split_dataset(records: list[ProblemRecord], test_fraction, seed: int) -> DatasetSplit:
    """Deterministic train/test split with test size = ceil(n * test_fraction).

    Membership depends only on (records, fraction, seed): records are sorted
    by problem_id before the seeded shuffle, so file order is irrelevant.
    """
    if not records:
        raise DatasetError("cannot split an empty dataset")
    fraction = _as_fraction(test_fraction)
    if not 0 < fraction < 1:
        raise DatasetError(f"test_fraction must be in (0, 1), got {test_fraction}")
    ordered = sorted(records, key=lambda r: r.problem_id)
    rng = random.Random(seed)
    rng.shuffle(ordered)
    test_size = math.ceil(len(records) * fraction)
    return DatasetSplit(train=ordered[test_size:], test=ordered[:test_size], seed=seed)


def _as_fraction(value) -> Fraction:
    # str() of a float recovers the decimal the caller wrote (0.1, not the
    # binary expansion), keeping ceil() exact.
    if isinstance(value, float):
        return Fraction(str(value))
    try:
        return Fraction(value)
    except (TypeError, ValueError) as exc:
        raise DatasetError(f"test_fraction not a number: {value!r}") from exc


def category_summary(records: list[ProblemRecord]) -> dict[str, int]:
    """Count records per category, keyed in sorted category order."""
    counts = Counter(record.category for record in records)
    return {category: counts[category] for category in sorted(counts)}
