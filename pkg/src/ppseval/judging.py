"""LLM-as-judge scoring of final solutions against ground truth.

The judge model receives the scoring rubric, the reference solution, and the
generated solution, and returns seven scores as strict JSON. The Physics
Proficiency Score (PPS) is the weighted average of the six 1-5 sub-metrics,
scaled to a 0-100 range; the 0-10 overall_correctness score is captured for
reporting but never enters the PPS.
"""

import logging
import re
from dataclasses import dataclass
from typing import Optional

from .dataset import ProblemRecord
from .errors import JudgeError, OutputParseError
from .gateway import ChatMessage, LlmGateway, ModelEndpoint
from .parsing import extract_json_object, render_template

logger = logging.getLogger(__name__)

EVAL_SCHEMA = "eval/v1"

JUDGE_SUBMETRIC_FIELDS = (
    "mathematical_accuracy",
    "logical_consistency",
    "completeness",
    "clarity_and_coherence",
    "formulas_principles",
    "assumptions_made",
)

# normalization variants for mapping the 1-5 weighted sum onto 0-100:
#  divide_by_max: (ws / 5) * 100, effective range [20, 100]
#  min_max:       ((ws - 1) / 4) * 100, effective range [0, 100]
PPS_NORMALIZATIONS = ("divide_by_max", "min_max")

_JSON_ONLY_REMINDER = "Your previous reply was not valid JSON. Reply with the JSON object only."


@dataclass(frozen=True)
class JudgeScores:
    mathematical_accuracy: int
    logical_consistency: int
    completeness: int
    clarity_and_coherence: int
    formulas_principles: int
    assumptions_made: int
    overall_correctness: int

    def __post_init__(self):
        for name in JUDGE_SUBMETRIC_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
                raise JudgeError(f"{name} must be an integer in 1-5, got {value!r}")
        oc = self.overall_correctness
        if not isinstance(oc, int) or isinstance(oc, bool) or not 0 <= oc <= 10:
            raise JudgeError(f"overall_correctness must be an integer in 0-10, got {oc!r}")

    def as_dict(self) -> dict[str, int]:
        return {name: getattr(self, name) for name in (*JUDGE_SUBMETRIC_FIELDS, "overall_correctness")}


@dataclass(frozen=True)
class PPSWeights:
    mathematical_accuracy: float = 0.30
    logical_consistency: float = 0.25
    formulas_principles: float = 0.20
    completeness: float = 0.10
    assumptions_made: float = 0.10
    clarity_and_coherence: float = 0.05

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in JUDGE_SUBMETRIC_FIELDS}

    def validate(self) -> None:
        values = self.as_dict()
        if any(v < 0 for v in values.values()):
            raise JudgeError("PPS weights must be non-negative")
        total = sum(values.values())
        if abs(total - 1.0) > 1e-9:
            raise JudgeError(f"PPS weights must sum to 1, got {total}")


@dataclass
class EvaluationRecord:
    problem_id: str
    strategy: str
    judge_scores: JudgeScores
    pps: float
    judge_model: str

    def to_json_dict(self) -> dict:
        return {
            "schema": EVAL_SCHEMA,
            "problem_id": self.problem_id,
            "strategy": self.strategy,
            "judge_scores": self.judge_scores.as_dict(),
            "pps": self.pps,
            "judge_model": self.judge_model,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "EvaluationRecord":
        return cls(
            problem_id=raw["problem_id"],
            strategy=raw["strategy"],
            judge_scores=JudgeScores(**raw["judge_scores"]),
            pps=raw["pps"],
            judge_model=raw["judge_model"],
        )


def compute_pps(scores: JudgeScores, weights: Optional[PPSWeights] = None,
                normalization: str = "divide_by_max") -> float:
    """Weighted average of the six sub-metrics, normalized to 0-100."""
    weights = weights or PPSWeights()
    weights.validate()
    if normalization not in PPS_NORMALIZATIONS:
        raise JudgeError(f"unknown PPS normalization: {normalization}")
    weighted_sum = sum(
        getattr(weights, name) * getattr(scores, name) for name in JUDGE_SUBMETRIC_FIELDS
    )
    if normalization == "divide_by_max":
        return (weighted_sum / 5.0) * 100.0
    return ((weighted_sum - 1.0) / 4.0) * 100.0


JUDGE_PROMPT_TEMPLATE = """You are an expert physics problem evaluator. Your task is to meticulously and STRICTLY compare an AI-generated solution to a manual, ground-truth solution for a given physics problem. The Ground Truth Solution is considered the definitive correct answer and approach for the given problem statement. Deviations by the AI-Generated Solution from the Ground Truth, especially in terms of method, assumptions, interpretation of given data, or parts deemed unsolvable by the Ground Truth, MUST be penalized appropriately according to the guidelines below.

Evaluate the AI-generated solution based on the following categories and scoring guidelines. Provide your evaluation STRICTLY as a JSON object.

Evaluation Categories and Scoring Guidelines:

1.  mathematical_accuracy: (Score 1-5) How correct are the AI's calculations, numerical answers, and units *when compared to the problem defined by the Ground Truth*?
  - 5: All calculations, numerical results, and units are perfectly correct and appropriately presented, AND align with the Ground Truth's final answers if the same method is used, OR are verifiably correct if a different valid method is used.
  - 4: Minor calculation error in the AI solution, or an incorrect/missing unit, but the AI's underlying mathematical method (if aligned with GT or validly alternative) is sound.
  - 3: Several minor errors in the AI solution, or one significant calculation error that impacts the AI's result. Units might be inconsistently handled.
  - 2: Major calculation errors or fundamental misunderstandings of mathematical operations in the AI solution. If the AI solution uses different input data values than implied by the Ground Truth (e.g., different length, mass), leading to numerically different answers, score 2 here even if its internal math is correct for its chosen data, because it's not solving the *Ground Truth's* problem.
  - 1: Almost all calculations in the AI solution are incorrect, non-sensical, or missing. The AI uses drastically different input data leading to completely irrelevant numerical results for the Ground Truth problem.

2.  logical_consistency: (Score 1-5) Does the AI solution follow a logical step-by-step progression? Is the AI's reasoning sound and aligned with physics principles, *ideally mirroring or compatibly extending the Ground Truth's logic*?
  - 5: The AI solution flows perfectly. Each step logically follows from the previous one. The reasoning is impeccable and aligns well with the Ground Truth's approach or a valid alternative.
  - 4: AI solution is mostly logical and well-reasoned. Perhaps one step is slightly unclear or its justification is weak, but it doesn't break the overall logic or significantly deviate from a valid path.
  - 3: Some logical gaps, inconsistencies, or steps in the AI solution that don't clearly follow, making the solution harder to follow or verify, or deviating from the core logic of the Ground Truth without clear justification.
  - 2: Significant logical flaws in the AI solution. Steps are out of order, reasoning is poor or contradictory to established physics or the Ground Truth's interpretation.
  - 1: The AI solution is illogical, incoherent, or internally contradictory.

3.  completeness: (Score 1-5) Does the AI-generated solution address all parts of the problem *as understood and scoped by the Ground Truth*?
  - 5: All parts of the problem (including sub-questions, if any), as addressed or implied as solvable by the Ground Truth, are fully addressed and answered by the AI.
  - 4: A minor aspect of the problem (as per GT) is overlooked by the AI, or one sub-question is not fully answered or is missing.
  - 3: A significant part of the problem (as per GT) is ignored or left unanswered by the AI. If the Ground Truth indicates a part of the problem is unsolvable with given data, but the AI attempts to solve it by making significant unstated/unwarranted assumptions, this is a flaw in understanding problem scope; score 3 or lower.
  - 2: Only a small portion of the problem (as per GT) is addressed by the AI; major components are missing.
  - 1: The problem is largely unaddressed by the AI, or the AI solution is off-topic relative to the Ground Truth.

4.  clarity_and_coherence: (Score 1-5) Is the AI's explanation clear, concise, and easy to understand?
  - 5: The AI explanation is exceptionally clear, concise, well-structured, and very easy to understand. Excellent use of language and terminology.
  - 4: The AI explanation is clear and generally easy to understand, with minor areas for improvement in conciseness, structure, or flow.
  - 3: The AI explanation is generally understandable but may be verbose, unclear in parts, poorly organized, or contain jargon without adequate explanation.
  - 2: The AI explanation is difficult to understand due to ambiguity, poor writing, or convoluted structure.
  - 1: The AI explanation is incomprehensible, extremely poorly written, or nonsensical.

5.  formulas_principles: (Score 1-5) Are correct physical formulas and principles identified and applied correctly by the AI, *and are they appropriate for the problem as framed by the Ground Truth*?
  - 5: All necessary physical formulas and principles are correctly identified, stated, and applied appropriately by the AI, consistent with the Ground Truth's approach or a valid, equally rigorous alternative.
  - 4: Mostly correct formulas/principles used by AI. Perhaps a minor error in recalling a formula, or a slight misapplication of a correct principle that doesn't fundamentally alter the solution path compared to GT.
  - 3: Some incorrect formulas/principles are used by AI, or correct ones are applied incorrectly in a significant way. Or, the AI uses a principle that oversimplifies the problem compared to the level of detail expected by the Ground Truth.
  - 2: Major errors in formula/principle selection or application by AI. Fundamental physics concepts are misunderstood by the AI.
  - 1: Completely inappropriate formulas/principles are used by AI, or relevant physics is entirely ignored.

6.  assumptions_made: (Score 1-5) Are AI assumptions (explicit or implicit) explicit, justified, and reasonable *especially when compared to the Ground Truth's scope and stated/implied assumptions*?
  - 5: All necessary assumptions made by the AI are explicitly stated, well-justified, and perfectly reasonable for the problem context, AND do not contradict or bypass limitations identified by the Ground Truth.
  - 4: Most necessary assumptions made by the AI are stated and reasonable; some minor ones might be implicit but obvious, or lack full justification but are acceptable and align with GT.
  - 3: Some key assumptions in the AI solution are missing, not clearly stated, or questionable in reasonableness. Or, the AI makes assumptions that simplify the problem in a way the Ground Truth does not.
  - 2: Major unreasonable assumptions are made by the AI, or critical assumptions are not stated, leading to an incorrect or flawed solution path. This includes assumptions that allow solving parts the Ground Truth indicates are unsolvable with the given data.
  - 1: Assumptions in the AI solution are entirely inappropriate, absent when clearly needed, or lead to a trivialization/misrepresentation of the problem as defined by the Ground Truth.

7.  overall_correctness: (Score 0-10) How correct and sound is the AI's approach and final answer(s) overall, *primarily judged by its fidelity to the Ground Truth's interpretation, method, and result for the specific problem*?
  - 10: Perfect solution. The AI's method, reasoning, data interpretation, assumptions, and final answer(s) align flawlessly or are an equally valid and rigorous path to the Ground Truth.
  - 8-9: Excellent solution. Fundamentally correct with very minor, inconsequential flaws or slight stylistic deviations from the Ground Truth, but arrives at the same essential understanding and results.
  - 6-7: Good solution. Generally correct approach by the AI, and largely correct answer(s), but with some noticeable errors, omissions, or areas for improvement when compared to the Ground Truth. The AI might use a valid but less ideal method.
  - 4-5: Partially correct. The AI demonstrates some understanding but contains significant flaws in reasoning, calculation, choice of principles, or makes unwarranted assumptions that lead it away from the Ground Truth's solution. This score is appropriate if the AI solves a simplified version of the problem or misses key constraints implied by the Ground Truth.
  - 2-3: Mostly incorrect. The AI shows fundamental misunderstandings of the problem or physics principles as defined by the Ground Truth. A solution that uses *different fundamental input data* than the Ground Truth CANNOT be rated higher than 3, even if its internal logic is sound for its chosen data.
  - 0-1: Completely incorrect, irrelevant, or no meaningful attempt made by the AI to solve the problem as presented and solved by the Ground Truth.

Problem ID: {problem_id}

Ground Truth Solution (this is the reference correct solution):

{ground_truth}

Elaborated Solution Steps (this explains the Ground Truth):

Elaborated Solution Steps (Manual): {elaborated_solution}

AI-Generated Solution to Evaluate (compare this against the Ground Truth and Elaborated Solution): {ai_solution}

Provide your evaluation STRICTLY as a JSON object with the problem_id and scores for each category listed above. Your entire response should be ONLY the JSON object, starting with { and ending with }.

Example JSON format:
{
    "problem_id": "{problem_id}",
    "mathematical_accuracy": <score_1_to_5>,
    "logical_consistency": <score_1_to_5>,
    "completeness": <score_1_to_5>,
    "clarity_and_coherence": <score_1_to_5>,
    "formulas_principles": <score_1_to_5>,
    "assumptions_made": <score_1_to_5>,
    "overall_correctness": <score_0_to_10>
}"""

def build_judge_prompt(problem: ProblemRecord, ai_solution: str) -> list[ChatMessage]:
    """Render the judging rubric with the record's ground truth filled in."""
    if not problem.final_answers_in_brief:
        raise JudgeError(f"{problem.problem_id}: record has no final_answers_in_brief ground truth")
    if not problem.elaborated_solution_steps.strip():
        raise JudgeError(f"{problem.problem_id}: record has no elaborated solution steps")
    if not ai_solution or not ai_solution.strip():
        raise JudgeError(f"{problem.problem_id}: ai_solution must be non-empty")
    text = render_template(
        JUDGE_PROMPT_TEMPLATE,
        {
            "problem_id": problem.problem_id,
            "ground_truth": "\n".join(problem.final_answers_in_brief),
            "elaborated_solution": problem.elaborated_solution_steps,
            "ai_solution": ai_solution,
        },
    )
    return [ChatMessage(role="user", content=text)]


def parse_judge_output(text: str, expected_problem_id: str) -> JudgeScores:
    """Parse and validate the judge's JSON reply."""
    obj = extract_json_object(text)
    echoed = obj.get("problem_id")
    if echoed != expected_problem_id:
        raise JudgeError(
            f"judge echoed problem_id {echoed!r}, expected {expected_problem_id!r}",
            raw_reply=text,
        )
    field_names = (*JUDGE_SUBMETRIC_FIELDS, "overall_correctness")
    missing = [name for name in field_names if name not in obj]
    if missing:
        raise JudgeError(f"judge reply missing fields: {', '.join(missing)}", raw_reply=text)
    return JudgeScores(**{name: obj[name] for name in field_names})


def judge_attempt(
    attempt,
    problem: ProblemRecord,
    judge: ModelEndpoint,
    gateway: LlmGateway,
    weights: Optional[PPSWeights] = None,
    normalization: str = "divide_by_max",
) -> EvaluationRecord:
    """Score one attempt's final solution against its record's ground truth."""
    if not attempt.final_solution or not attempt.final_solution.strip():
        raise JudgeError(f"{problem.problem_id}: attempt has an empty final solution")
    messages = build_judge_prompt(problem, attempt.final_solution)
    result = gateway.complete(judge, messages)
    try:
        scores = _parse_with_retry(gateway, judge, messages, result.text, problem.problem_id)
    except JudgeError as exc:
        raise JudgeError(
            f"{problem.problem_id}/{attempt.strategy.value}: {exc}", raw_reply=exc.raw_reply
        ) from exc
    pps = compute_pps(scores, weights, normalization)
    return EvaluationRecord(
        problem_id=problem.problem_id,
        strategy=attempt.strategy.value,
        judge_scores=scores,
        pps=pps,
        judge_model=judge.model_id,
    )


def _parse_with_retry(gateway, judge, messages, first_reply, problem_id) -> JudgeScores:
    # only extraction failures earn the JSON-only re-prompt; range and
    # problem_id violations are hard errors
    try:
        return parse_judge_output(first_reply, problem_id)
    except OutputParseError:
        retry_messages = messages + [
            ChatMessage(role="assistant", content=first_reply or "(empty reply)"),
            ChatMessage(role="user", content=_JSON_ONLY_REMINDER),
        ]
        retry = gateway.complete(judge, retry_messages)
        try:
            return parse_judge_output(retry.text, problem_id)
        except OutputParseError as exc:
            raise JudgeError("judge reply unparseable after re-prompt", raw_reply=retry.text) from exc
