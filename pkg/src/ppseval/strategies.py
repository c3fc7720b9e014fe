"""The four inference-time solving strategies.

Each strategy is an explicit sequence of gateway calls producing a full
Attempt transcript: every round records the exact messages sent and the
reply received. Review-based strategies re-solve at most once per feedback
iteration, and only when the review stage actually found mistakes.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .dataset import ProblemRecord
from .errors import HarnessError, OutputParseError, ReviewError, StrategyError
from .gateway import ChatMessage, LlmGateway, ModelEndpoint
from .review import (
    MetaVerdict,
    Mistake,
    VerifierReport,
    build_verifier_prompt,
    meta_verify,
    parse_verifier_output,
)

logger = logging.getLogger(__name__)

ATTEMPT_SCHEMA = "attempt/v1"

MULTI_AGENT_VERIFIER_ROLES = ("verifier-1", "verifier-2", "verifier-3")


class StrategyKind(str, Enum):
    BASELINE = "baseline"
    SELF_REFINE = "self_refine"
    SINGLE_AGENT = "single_agent"
    MULTI_AGENT = "multi_agent"


class Trigger(str, Enum):
    INITIAL = "initial"
    SELF_CHECK = "self_check"
    MISTAKES_FEEDBACK = "mistakes_feedback"


SOLVE_PROMPT_TEMPLATE = (
    "You are an expert on Physics. You solve problems step by step while "
    "maintaining logical consistency. Solve the following Physics problem: "
    "{problem}\n"
    "Finally, write the final answers in brief. Make sure you write all "
    "equations in LaTeX."
)

SELF_REFINE_PROMPT = (
    "You are a Physics Professor. Outline the physics principles of the "
    "given problem, and please check your own answers for any mistakes, "
    "then answer again."
)

FEEDBACK_PROMPT_TEMPLATE = (
    "I have some feedback.\n"
    "{mistakes}\n"
    "After taking this into account, please generate the solution once "
    "again. Remember to write all equations in LaTeX."
)


@dataclass
class SolutionRound:
    round_index: int
    prompt_messages: list[ChatMessage]
    response: str
    trigger: Trigger

    def to_json_dict(self) -> dict:
        return {
            "round_index": self.round_index,
            "trigger": self.trigger.value,
            "prompt_messages": [{"role": m.role, "content": m.content} for m in self.prompt_messages],
            "response": self.response,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "SolutionRound":
        return cls(
            round_index=raw["round_index"],
            trigger=Trigger(raw["trigger"]),
            prompt_messages=[ChatMessage(**m) for m in raw["prompt_messages"]],
            response=raw["response"],
        )


@dataclass
class Attempt:
    problem_id: str
    strategy: StrategyKind
    rounds: list[SolutionRound]
    final_solution: str
    verifier_reports: Optional[list[VerifierReport]] = None
    meta_verdict: Optional[MetaVerdict] = None

    def to_json_dict(self) -> dict:
        return {
            "schema": ATTEMPT_SCHEMA,
            "problem_id": self.problem_id,
            "strategy": self.strategy.value,
            "rounds": [r.to_json_dict() for r in self.rounds],
            "verifier_reports": (
                None if self.verifier_reports is None
                else [r.to_json_dict() for r in self.verifier_reports]
            ),
            "meta_verdict": None if self.meta_verdict is None else self.meta_verdict.to_json_dict(),
            "final_solution": self.final_solution,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "Attempt":
        return cls(
            problem_id=raw["problem_id"],
            strategy=StrategyKind(raw["strategy"]),
            rounds=[SolutionRound.from_json_dict(r) for r in raw["rounds"]],
            final_solution=raw["final_solution"],
            verifier_reports=(
                None if raw.get("verifier_reports") is None
                else [VerifierReport.from_json_dict(r) for r in raw["verifier_reports"]]
            ),
            meta_verdict=(
                None if raw.get("meta_verdict") is None
                else MetaVerdict.from_json_dict(raw["meta_verdict"])
            ),
        )


@dataclass
class BatchFailure:
    problem_id: str
    strategy: StrategyKind
    error: str

    def to_json_dict(self) -> dict:
        return {
            "schema": "failure/v1",
            "problem_id": self.problem_id,
            "strategy": self.strategy.value,
            "error": self.error,
        }


def build_solve_prompt(problem: ProblemRecord) -> list[ChatMessage]:
    return [ChatMessage(role="user", content=SOLVE_PROMPT_TEMPLATE.replace("{problem}", problem.problem))]


def build_feedback_message(mistakes: list[Mistake]) -> str:
    listed = "\n".join(f"- {m.description}" for m in mistakes)
    return FEEDBACK_PROMPT_TEMPLATE.replace("{mistakes}", listed)


def _solve_round(problem, solver, gateway) -> SolutionRound:
    messages = build_solve_prompt(problem)
    result = gateway.complete(solver, messages)
    return SolutionRound(
        round_index=0, prompt_messages=messages, response=result.text, trigger=Trigger.INITIAL
    )


def _followup_round(gateway, solver, previous: SolutionRound, followup: str,
                    trigger: Trigger, index: int) -> SolutionRound:
    # continue the conversation: original prompt, the model's solution, feedback
    messages = list(previous.prompt_messages) + [
        ChatMessage(role="assistant", content=previous.response or "(empty solution)"),
        ChatMessage(role="user", content=followup),
    ]
    result = gateway.complete(solver, messages)
    return SolutionRound(
        round_index=index, prompt_messages=messages, response=result.text, trigger=trigger
    )


def run_baseline(problem: ProblemRecord, solver: ModelEndpoint, gateway: LlmGateway) -> Attempt:
    """Single solver pass, no review."""
    try:
        round0 = _solve_round(problem, solver, gateway)
    except HarnessError as exc:
        raise StrategyError(f"{problem.problem_id}: {exc}", problem_id=problem.problem_id) from exc
    return Attempt(
        problem_id=problem.problem_id,
        strategy=StrategyKind.BASELINE,
        rounds=[round0],
        final_solution=round0.response,
    )


def run_self_refine(problem: ProblemRecord, solver: ModelEndpoint, gateway: LlmGateway) -> Attempt:
    """Solve, then have the same model re-check its own answer once.

    The second round always happens; its reply is the final answer.
    """
    try:
        round0 = _solve_round(problem, solver, gateway)
        round1 = _followup_round(
            gateway, solver, round0, SELF_REFINE_PROMPT, Trigger.SELF_CHECK, index=1
        )
    except HarnessError as exc:
        raise StrategyError(f"{problem.problem_id}: {exc}", problem_id=problem.problem_id) from exc
    return Attempt(
        problem_id=problem.problem_id,
        strategy=StrategyKind.SELF_REFINE,
        rounds=[round0, round1],
        final_solution=round1.response,
    )


def run_single_agent(
    problem: ProblemRecord,
    solver: ModelEndpoint,
    reviewer: ModelEndpoint,
    gateway: LlmGateway,
    rubric_weights=None,
    feedback_rounds: int = 1,
) -> Attempt:
    """One external reviewer lists probable mistakes; re-solve only if any."""
    try:
        rounds = [_solve_round(problem, solver, gateway)]
        reports: list[VerifierReport] = []
        for iteration in range(feedback_rounds):
            report = _consult_verifier(
                gateway, reviewer, problem, rounds[-1].response, rubric_weights
            )
            reports.append(report)
            if not report.mistakes:
                break
            rounds.append(
                _followup_round(
                    gateway, solver, rounds[-1],
                    build_feedback_message(report.mistakes),
                    Trigger.MISTAKES_FEEDBACK, index=len(rounds),
                )
            )
    except HarnessError as exc:
        raise StrategyError(f"{problem.problem_id}: {exc}", problem_id=problem.problem_id) from exc
    return Attempt(
        problem_id=problem.problem_id,
        strategy=StrategyKind.SINGLE_AGENT,
        rounds=rounds,
        final_solution=rounds[-1].response,
        verifier_reports=reports,
    )


def run_multi_agent(
    problem: ProblemRecord,
    solver: ModelEndpoint,
    verifiers: list[ModelEndpoint],
    meta: ModelEndpoint,
    gateway: LlmGateway,
    aggregation_weights: Optional[dict[str, float]] = None,
    rubric_weights=None,
    feedback_rounds: int = 1,
) -> Attempt:
    """Three verifiers review concurrently; the meta stage filters their
    mistakes; the solver sees the retained list only when it is non-empty."""
    if len(verifiers) != 3:
        raise StrategyError(
            f"{problem.problem_id}: multi-agent needs exactly 3 verifiers, got {len(verifiers)}",
            problem_id=problem.problem_id,
        )
    try:
        rounds = [_solve_round(problem, solver, gateway)]
        all_reports: list[VerifierReport] = []
        verdict: Optional[MetaVerdict] = None
        for iteration in range(feedback_rounds):
            reports = _fan_out_verifiers(
                gateway, verifiers, problem, rounds[-1].response, rubric_weights
            )
            all_reports.extend(reports)
            verdict = meta_verify(
                problem, rounds[-1].response, reports, meta, gateway,
                aggregation_weights=aggregation_weights,
            )
            if not verdict.has_mistakes:
                break
            rounds.append(
                _followup_round(
                    gateway, solver, rounds[-1],
                    build_feedback_message(verdict.aggregated_mistakes),
                    Trigger.MISTAKES_FEEDBACK, index=len(rounds),
                )
            )
    except HarnessError as exc:
        raise StrategyError(f"{problem.problem_id}: {exc}", problem_id=problem.problem_id) from exc
    return Attempt(
        problem_id=problem.problem_id,
        strategy=StrategyKind.MULTI_AGENT,
        rounds=rounds,
        final_solution=rounds[-1].response,
        verifier_reports=all_reports,
        meta_verdict=verdict,
    )


def _consult_verifier(gateway, endpoint, problem, solution, rubric_weights) -> VerifierReport:
    messages = build_verifier_prompt(problem, solution)
    result = gateway.complete(endpoint, messages)
    try:
        return parse_verifier_output(result.text, endpoint.name, rubric_weights)
    except OutputParseError:
        retry_messages = messages + [
            ChatMessage(role="assistant", content=result.text or "(empty reply)"),
            ChatMessage(role="user", content="Your previous reply was not valid JSON. Reply with the JSON object only."),
        ]
        retry = gateway.complete(endpoint, retry_messages)
        try:
            return parse_verifier_output(retry.text, endpoint.name, rubric_weights)
        except OutputParseError:
            raise ReviewError(
                f"{endpoint.name}: reply unparseable after re-prompt", raw_reply=retry.text
            ) from None


def _fan_out_verifiers(gateway, verifiers, problem, solution, rubric_weights) -> list[VerifierReport]:
    reports: list[Optional[VerifierReport]] = [None] * len(verifiers)
    errors: list[str] = []
    with ThreadPoolExecutor(max_workers=len(verifiers)) as pool:
        futures = {
            pool.submit(_consult_verifier, gateway, endpoint, problem, solution, rubric_weights): i
            for i, endpoint in enumerate(verifiers)
        }
        for future in as_completed(futures):
            index = futures[future]
            try:
                reports[index] = future.result()
            except Exception as exc:
                errors.append(f"{verifiers[index].name}: {exc}")
    if errors:
        raise StrategyError("verifier failures: " + "; ".join(sorted(errors)))
    return [r for r in reports if r is not None]


_STRATEGY_ROLES = {
    StrategyKind.BASELINE: ("solver",),
    StrategyKind.SELF_REFINE: ("solver",),
    StrategyKind.SINGLE_AGENT: ("solver", "reviewer"),
    StrategyKind.MULTI_AGENT: ("solver", *MULTI_AGENT_VERIFIER_ROLES, "meta"),
}


def required_roles(strategy: StrategyKind) -> tuple[str, ...]:
    return _STRATEGY_ROLES[strategy]


def run_one(
    problem: ProblemRecord,
    strategy: StrategyKind,
    roles: dict[str, ModelEndpoint],
    gateway: LlmGateway,
    aggregation_weights=None,
    rubric_weights=None,
    feedback_rounds: int = 1,
) -> Attempt:
    """Dispatch one problem through one strategy."""
    if strategy is StrategyKind.BASELINE:
        return run_baseline(problem, roles["solver"], gateway)
    if strategy is StrategyKind.SELF_REFINE:
        return run_self_refine(problem, roles["solver"], gateway)
    if strategy is StrategyKind.SINGLE_AGENT:
        return run_single_agent(
            problem, roles["solver"], roles["reviewer"], gateway,
            rubric_weights=rubric_weights, feedback_rounds=feedback_rounds,
        )
    if strategy is StrategyKind.MULTI_AGENT:
        return run_multi_agent(
            problem, roles["solver"],
            [roles[name] for name in MULTI_AGENT_VERIFIER_ROLES],
            roles["meta"], gateway,
            aggregation_weights=aggregation_weights,
            rubric_weights=rubric_weights,
            feedback_rounds=feedback_rounds,
        )
    raise StrategyError(f"unknown strategy: {strategy}")


def run_batch(
    problems: list[ProblemRecord],
    strategy: StrategyKind,
    roles: dict[str, ModelEndpoint],
    gateway: LlmGateway,
    parallelism: int = 4,
    aggregation_weights=None,
    rubric_weights=None,
    feedback_rounds: int = 1,
    on_result=None,
) -> tuple[list[Attempt], list[BatchFailure]]:
    """Run every problem, isolating per-problem failures.

    Attempts come back in input order regardless of completion order. The
    batch only raises when every single problem failed.
    """
    missing = [name for name in required_roles(strategy) if name not in roles]
    if missing:
        raise StrategyError(f"strategy {strategy.value} missing roles: {', '.join(missing)}")
    if parallelism < 1:
        raise StrategyError(f"parallelism must be >= 1, got {parallelism}")

    slots: list[Optional[Attempt]] = [None] * len(problems)
    failures_by_index: dict[int, BatchFailure] = {}
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = {
            pool.submit(
                run_one, problem, strategy, roles, gateway,
                aggregation_weights, rubric_weights, feedback_rounds,
            ): i
            for i, problem in enumerate(problems)
        }
        for future in as_completed(futures):
            index = futures[future]
            problem = problems[index]
            try:
                slots[index] = future.result()
            except Exception as exc:
                logger.error("problem %s failed: %s", problem.problem_id, exc)
                failures_by_index[index] = BatchFailure(
                    problem_id=problem.problem_id, strategy=strategy, error=str(exc)
                )
            if on_result is not None:
                on_result(problem.problem_id, failures_by_index.get(index) is None)

    attempts = [a for a in slots if a is not None]
    failures = [failures_by_index[i] for i in sorted(failures_by_index)]
    if problems and not attempts:
        raise StrategyError(f"all {len(problems)} problems failed; first error: {failures[0].error}")
    return attempts, failures
