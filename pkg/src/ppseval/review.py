"""Verifier and meta-verifier semantics.

Three reviewer models score a proposed solution on a six-criterion rubric
(0-5 each) and list perceived mistakes. The meta stage filters the combined
mistake list for relevance; the scalar verdict is always computed in code as
a fixed weighted sum of the three verifier scores, never delegated to a
model.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

from .errors import OutputParseError, ReviewError
from .gateway import ChatMessage, LlmGateway, ModelEndpoint
from .parsing import extract_json_object, normalize_text, render_template, token_overlap

logger = logging.getLogger(__name__)

VERIFIER_SCORE_FIELDS = (
    "formulation",
    "numerical_correctness",
    "logical_consistency",
    "completeness",
    "validity_of_assumptions",
    "clarity",
)

# rubric emphasis: formulation/numerics/logic dominate
DEFAULT_RUBRIC_WEIGHTS = {
    "formulation": 0.25,
    "numerical_correctness": 0.30,
    "logical_consistency": 0.25,
    "completeness": 0.10,
    "validity_of_assumptions": 0.05,
    "clarity": 0.05,
}

# verifier-report weights for the final aggregated score, in report order
DEFAULT_AGGREGATION_WEIGHTS = (0.5, 0.3, 0.2)

# minimum token overlap for a retained mistake to count as one of the candidates
RETAINED_MATCH_THRESHOLD = 0.6

_JSON_ONLY_REMINDER = "Your previous reply was not valid JSON. Reply with the JSON object only."


@dataclass(frozen=True)
class VerifierRubricScores:
    formulation: int
    numerical_correctness: int
    logical_consistency: int
    completeness: int
    validity_of_assumptions: int
    clarity: int

    def __post_init__(self):
        for name in VERIFIER_SCORE_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value <= 5:
                raise ReviewError(f"{name} must be an integer in 0-5, got {value!r}")

    def as_dict(self) -> dict[str, int]:
        return {name: getattr(self, name) for name in VERIFIER_SCORE_FIELDS}


@dataclass(frozen=True)
class Mistake:
    description: str
    severity: Optional[str] = None
    locus: Optional[str] = None

    def __post_init__(self):
        if not self.description or not self.description.strip():
            raise ReviewError("mistake description must be non-empty")

    def to_json_dict(self) -> dict:
        out = {"description": self.description}
        if self.severity is not None:
            out["severity"] = self.severity
        if self.locus is not None:
            out["locus"] = self.locus
        return out

    @classmethod
    def from_json_dict(cls, raw: dict) -> "Mistake":
        return cls(
            description=raw.get("description", ""),
            severity=raw.get("severity"),
            locus=raw.get("locus"),
        )


@dataclass
class VerifierReport:
    verifier_name: str
    scores: VerifierRubricScores
    weighted_score: float
    mistakes: list[Mistake]

    def to_json_dict(self) -> dict:
        return {
            "verifier_name": self.verifier_name,
            "scores": self.scores.as_dict(),
            "weighted_score": self.weighted_score,
            "mistakes": [m.to_json_dict() for m in self.mistakes],
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "VerifierReport":
        return cls(
            verifier_name=raw["verifier_name"],
            scores=VerifierRubricScores(**raw["scores"]),
            weighted_score=raw["weighted_score"],
            mistakes=[Mistake.from_json_dict(m) for m in raw["mistakes"]],
        )


@dataclass
class MetaVerdict:
    aggregated_mistakes: list[Mistake]
    aggregated_score: float
    has_mistakes: bool

    def to_json_dict(self) -> dict:
        return {
            "aggregated_mistakes": [m.to_json_dict() for m in self.aggregated_mistakes],
            "aggregated_score": self.aggregated_score,
            "has_mistakes": self.has_mistakes,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "MetaVerdict":
        return cls(
            aggregated_mistakes=[Mistake.from_json_dict(m) for m in raw["aggregated_mistakes"]],
            aggregated_score=raw["aggregated_score"],
            has_mistakes=raw["has_mistakes"],
        )


def verifier_weighted_score(scores: VerifierRubricScores, weights=None) -> float:
    """Collapse the six rubric scores into one scalar in [0, 5]."""
    weights = dict(DEFAULT_RUBRIC_WEIGHTS if weights is None else weights)
    if set(weights) != set(VERIFIER_SCORE_FIELDS):
        raise ReviewError("rubric weights must cover exactly the six score fields")
    total = sum(weights.values())
    if abs(total - 1.0) > 1e-9:
        raise ReviewError(f"rubric weights must sum to 1, got {total}")
    return sum(weights[name] * getattr(scores, name) for name in VERIFIER_SCORE_FIELDS)


def aggregate_final_score(first: float, second: float, third: float, weights=None) -> float:
    """Weighted combination of the three verifier scores (default 0.5/0.3/0.2)."""
    weights = DEFAULT_AGGREGATION_WEIGHTS if weights is None else tuple(weights)
    if len(weights) != 3:
        raise ReviewError("aggregation takes exactly three weights")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ReviewError(f"aggregation weights must sum to 1, got {sum(weights)}")
    values = (first, second, third)
    for value in values:
        if not 0.0 <= value <= 5.0:
            raise ReviewError(f"verifier score {value} out of range 0-5")
    return sum(w * v for w, v in zip(weights, values))


VERIFIER_PROMPT_TEMPLATE = """You are a meticulous physics reviewer. Evaluate the proposed solution strictly against the original problem statement.

Score the solution on each of the following criteria with an integer from 0 to 5 (5 is best):
- formulation: is the problem set up with the right physical model and equations?
- numerical_correctness: are the calculations, numerical results, and units correct?
- logical_consistency: does each step follow soundly from the previous one?
- completeness: are all parts of the problem addressed?
- validity_of_assumptions: are the assumptions stated, justified, and reasonable?
- clarity: is the solution clearly written and easy to follow?

Also list every concrete mistake you find in the solution. If there are no mistakes, use an empty list.

Reply STRICTLY as a JSON object, with no other text:
{"formulation": <0-5>, "numerical_correctness": <0-5>, "logical_consistency": <0-5>, "completeness": <0-5>, "validity_of_assumptions": <0-5>, "clarity": <0-5>, "mistakes": [{"description": "<mistake>"}]}

Problem:
{problem}

Proposed solution:
{solution}"""


def build_verifier_prompt(problem, solution: str) -> list[ChatMessage]:
    """Prompt one verifier to score a proposed solution and list mistakes."""
    if not solution or not solution.strip():
        raise ReviewError("solution must be non-empty")
    text = render_template(
        VERIFIER_PROMPT_TEMPLATE, {"problem": problem.problem, "solution": solution}
    )
    return [ChatMessage(role="user", content=text)]


def parse_verifier_output(text: str, verifier_name: str, rubric_weights=None) -> VerifierReport:
    """Parse a verifier reply into a validated report.

    Tolerates prose and code fences around the JSON object.
    """
    obj = extract_json_object(text)
    missing = [name for name in VERIFIER_SCORE_FIELDS if name not in obj]
    if missing:
        raise ReviewError(f"{verifier_name}: reply missing score fields: {', '.join(missing)}")
    values = {}
    for name in VERIFIER_SCORE_FIELDS:
        value = obj[name]
        if not isinstance(value, int) or isinstance(value, bool):
            raise ReviewError(f"{verifier_name}: {name} must be an integer, got {value!r}")
        if not 0 <= value <= 5:
            raise ReviewError(f"{verifier_name}: {name}={value} outside 0-5")
        values[name] = value
    scores = VerifierRubricScores(**values)
    mistakes = _parse_mistakes(obj.get("mistakes", []), verifier_name)
    return VerifierReport(
        verifier_name=verifier_name,
        scores=scores,
        weighted_score=verifier_weighted_score(scores, rubric_weights),
        mistakes=mistakes,
    )


def _parse_mistakes(raw, source: str) -> list[Mistake]:
    if not isinstance(raw, list):
        raise ReviewError(f"{source}: mistakes must be a list")
    mistakes = []
    for item in raw:
        if isinstance(item, str):
            if item.strip():
                mistakes.append(Mistake(description=item))
        elif isinstance(item, dict) and str(item.get("description", "")).strip():
            mistakes.append(
                Mistake(
                    description=str(item["description"]),
                    severity=item.get("severity"),
                    locus=item.get("locus"),
                )
            )
    return mistakes


META_PROMPT_TEMPLATE = """You are the senior reviewer consolidating feedback from three independent physics reviewers.

Below are the problem, the proposed solution, and each reviewer's scores and mistake list. Some flagged mistakes may be irrelevant to the problem or factually wrong about the solution. Compare the mistakes across reviewers and retain only those that are relevant and consistent. Do not add new mistakes of your own.

Reply STRICTLY as a JSON object, with no other text:
{"retained_mistakes": [{"description": "<mistake kept from the lists below>"}]}

Problem:
{problem}

Proposed solution:
{solution}

Reviewer reports:
{reports}"""


def build_meta_prompt(problem, solution: str, reports: list[VerifierReport]) -> list[ChatMessage]:
    rendered = []
    for report in reports:
        lines = [f"[{report.verifier_name}] scores: " + ", ".join(
            f"{name}={getattr(report.scores, name)}" for name in VERIFIER_SCORE_FIELDS
        )]
        if report.mistakes:
            lines.append("mistakes:")
            lines.extend(f"- {m.description}" for m in report.mistakes)
        else:
            lines.append("mistakes: none")
        rendered.append("\n".join(lines))
    text = render_template(META_PROMPT_TEMPLATE, {
        "problem": problem.problem,
        "solution": solution,
        "reports": "\n\n".join(rendered),
    })
    return [ChatMessage(role="user", content=text)]


def meta_verify(
    problem,
    solution: str,
    reports: list[VerifierReport],
    meta_endpoint: ModelEndpoint,
    gateway: LlmGateway,
    aggregation_weights: Optional[dict[str, float]] = None,
) -> MetaVerdict:
    """Filter the combined mistake list and attach the aggregated score.

    *aggregation_weights* maps verifier_name to its weight; by default the
    three reports get 0.5/0.3/0.2 in order. The model only filters mistakes;
    when every report is clean it is not consulted at all.
    """
    if len(reports) != 3:
        raise ReviewError(f"meta verification needs exactly 3 reports, got {len(reports)}")
    if aggregation_weights is None:
        weights = DEFAULT_AGGREGATION_WEIGHTS
    else:
        try:
            weights = tuple(aggregation_weights[r.verifier_name] for r in reports)
        except KeyError as exc:
            raise ReviewError(f"no aggregation weight for verifier {exc}") from None
    score = aggregate_final_score(*(r.weighted_score for r in reports), weights=weights)

    candidates = [m for report in reports for m in report.mistakes]
    if not candidates:
        return MetaVerdict(aggregated_mistakes=[], aggregated_score=score, has_mistakes=False)

    messages = build_meta_prompt(problem, solution, reports)
    obj = _complete_json(gateway, meta_endpoint, messages, on_fail_reports=reports)
    retained_raw = obj.get("retained_mistakes", [])
    if not isinstance(retained_raw, list):
        raise ReviewError("retained_mistakes must be a list", reports=reports)
    retained = _resolve_retained(retained_raw, candidates)
    return MetaVerdict(
        aggregated_mistakes=retained,
        aggregated_score=score,
        has_mistakes=bool(retained),
    )


def _complete_json(gateway, endpoint, messages, on_fail_reports=None) -> dict:
    """One completion, with a single JSON-only re-prompt before giving up."""
    result = gateway.complete(endpoint, messages)
    try:
        return extract_json_object(result.text)
    except OutputParseError:
        retry_messages = messages + [
            ChatMessage(role="assistant", content=result.text or "(empty reply)"),
            ChatMessage(role="user", content=_JSON_ONLY_REMINDER),
        ]
        retry = gateway.complete(endpoint, retry_messages)
        try:
            return extract_json_object(retry.text)
        except OutputParseError:
            raise ReviewError(
                f"{endpoint.name}: reply unparseable after re-prompt",
                reports=on_fail_reports,
                raw_reply=retry.text,
            ) from None


def _resolve_retained(retained_raw: list, candidates: list[Mistake]) -> list[Mistake]:
    """Map retained descriptions back onto candidate mistakes.

    The meta stage filters, it never invents: retained items that match no
    candidate (normalized containment or >=0.6 token overlap) are dropped
    with a warning.
    """
    resolved: list[Mistake] = []
    seen: set[int] = set()
    for item in retained_raw:
        text = item.get("description", "") if isinstance(item, dict) else str(item)
        if not text.strip():
            continue
        match = _best_candidate(text, candidates)
        if match is None:
            logger.warning("dropping retained mistake with no matching candidate: %r", text[:100])
            continue
        if id(match) not in seen:
            seen.add(id(match))
            resolved.append(match)
    return resolved


def _best_candidate(text: str, candidates: list[Mistake]) -> Optional[Mistake]:
    norm = normalize_text(text)
    best, best_overlap = None, 0.0
    for candidate in candidates:
        cand_norm = normalize_text(candidate.description)
        if norm and (norm in cand_norm or cand_norm in norm):
            return candidate
        overlap = token_overlap(text, candidate.description)
        if overlap > best_overlap:
            best, best_overlap = candidate, overlap
    if best_overlap >= RETAINED_MATCH_THRESHOLD:
        return best
    return None
