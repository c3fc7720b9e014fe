import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ppseval.errors import JudgeError, OutputParseError
from ppseval.gateway import LlmGateway, MockBackend, register_script
from ppseval.judging import (
    JUDGE_SUBMETRIC_FIELDS,
    EvaluationRecord,
    JudgeScores,
    PPSWeights,
    build_judge_prompt,
    compute_pps,
    judge_attempt,
    parse_judge_output,
)
from ppseval.strategies import run_baseline

from conftest import judge_reply_json, make_endpoint

ANY = lambda endpoint, messages: True

sub_score = st.integers(min_value=1, max_value=5)


def scores_from(values: dict) -> JudgeScores:
    base = {name: 3 for name in JUDGE_SUBMETRIC_FIELDS}
    base["overall_correctness"] = 6
    base.update(values)
    return JudgeScores(**base)


def make_attempt(problem, text="a solution"):
    mock = MockBackend()
    register_script(mock, ANY, text)
    return run_baseline(problem, make_endpoint("solver"), LlmGateway(mock, retry_base_delay=0.0))


class TestJudgeScores:
    def test_submetric_range(self):
        with pytest.raises(JudgeError, match="1-5"):
            scores_from({"mathematical_accuracy": 0})
        with pytest.raises(JudgeError, match="1-5"):
            scores_from({"clarity_and_coherence": 6})

    def test_overall_range(self):
        scores_from({"overall_correctness": 0})
        scores_from({"overall_correctness": 10})
        with pytest.raises(JudgeError, match="0-10"):
            scores_from({"overall_correctness": 11})

    def test_non_integer_rejected(self):
        with pytest.raises(JudgeError):
            scores_from({"completeness": 3.5})


class TestComputePps:
    def test_all_fives_is_maximum(self):
        assert compute_pps(JudgeScores(5, 5, 5, 5, 5, 5, 10)) == pytest.approx(100.0, abs=1e-12)

    def test_all_fours(self):
        assert compute_pps(JudgeScores(4, 4, 4, 4, 4, 4, 8)) == pytest.approx(80.0, abs=1e-12)

    def test_all_ones_is_floor(self):
        assert compute_pps(JudgeScores(1, 1, 1, 1, 1, 1, 0)) == pytest.approx(20.0, abs=1e-12)

    def test_mixed_vector(self):
        scores = scores_from({
            "mathematical_accuracy": 5, "logical_consistency": 4, "formulas_principles": 3,
            "completeness": 5, "assumptions_made": 2, "clarity_and_coherence": 5,
        })
        assert compute_pps(scores) == pytest.approx(81.0, abs=1e-12)

    def test_min_max_variant(self):
        floor = compute_pps(JudgeScores(1, 1, 1, 1, 1, 1, 0), normalization="min_max")
        ceiling = compute_pps(JudgeScores(5, 5, 5, 5, 5, 5, 10), normalization="min_max")
        assert floor == pytest.approx(0.0, abs=1e-9)
        assert ceiling == pytest.approx(100.0, abs=1e-9)

    def test_unknown_normalization(self):
        with pytest.raises(JudgeError, match="normalization"):
            compute_pps(scores_from({}), normalization="sqrt")

    def test_weights_must_sum_to_one(self):
        bad = PPSWeights(mathematical_accuracy=0.9)
        with pytest.raises(JudgeError, match="sum to 1"):
            compute_pps(scores_from({}), weights=bad)

    def test_negative_weight_rejected(self):
        bad = PPSWeights(mathematical_accuracy=-0.1, logical_consistency=0.65)
        with pytest.raises(JudgeError, match="non-negative"):
            compute_pps(scores_from({}), weights=bad)

    @pytest.mark.parametrize("field", JUDGE_SUBMETRIC_FIELDS)
    def test_unit_bump_moves_pps_by_twenty_weight(self, field):
        weights = PPSWeights()
        low = compute_pps(scores_from({field: 2}))
        high = compute_pps(scores_from({field: 3}))
        assert high - low == pytest.approx(20.0 * getattr(weights, field), abs=1e-9)

    def test_overall_correctness_never_moves_pps(self):
        rng = random.Random(3)
        for _ in range(25):
            values = {name: rng.randint(1, 5) for name in JUDGE_SUBMETRIC_FIELDS}
            a = compute_pps(scores_from({**values, "overall_correctness": 0}))
            b = compute_pps(scores_from({**values, "overall_correctness": 10}))
            assert a == b

    @given(st.lists(sub_score, min_size=6, max_size=6))
    def test_bounds(self, vector):
        scores = JudgeScores(*vector, 5)
        assert 20.0 - 1e-9 <= compute_pps(scores) <= 100.0 + 1e-9

    @given(st.lists(sub_score, min_size=6, max_size=6), st.integers(0, 5))
    def test_monotone(self, vector, which):
        if vector[which] == 5:
            vector = list(vector)
            vector[which] = 4
        bumped = list(vector)
        bumped[which] += 1
        assert compute_pps(JudgeScores(*bumped, 5)) >= compute_pps(JudgeScores(*vector, 5))

    def test_permutation_invariance_of_pairs(self):
        # swapping two metrics' scores along with their weights changes nothing
        scores_a = scores_from({"mathematical_accuracy": 5, "logical_consistency": 2})
        weights_a = PPSWeights()
        scores_b = scores_from({"mathematical_accuracy": 2, "logical_consistency": 5})
        weights_b = PPSWeights(mathematical_accuracy=0.25, logical_consistency=0.30)
        assert compute_pps(scores_a, weights_a) == pytest.approx(compute_pps(scores_b, weights_b))


class TestJudgePrompt:
    def test_contains_strict_json_instruction(self, problem):
        content = build_judge_prompt(problem, "candidate solution")[0].content
        assert "Provide your evaluation STRICTLY as a JSON object" in content

    def test_substitutes_problem_id_in_example(self, problem):
        content = build_judge_prompt(problem, "candidate solution")[0].content
        assert f'"problem_id": "{problem.problem_id}"' in content
        assert "{problem_id}" not in content

    def test_contains_ground_truth_and_solution(self, problem):
        content = build_judge_prompt(problem, "candidate solution")[0].content
        assert problem.final_answers_in_brief[0] in content
        assert problem.elaborated_solution_steps in content
        assert "candidate solution" in content

    def test_missing_ground_truth_rejected(self, problem):
        import dataclasses
        bare = dataclasses.replace(problem, final_answers_in_brief=[])
        with pytest.raises(JudgeError, match="final_answers_in_brief"):
            build_judge_prompt(bare, "solution")

    def test_missing_elaboration_rejected(self, problem):
        import dataclasses
        bare = dataclasses.replace(problem, elaborated_solution_steps="  ")
        with pytest.raises(JudgeError, match="elaborated"):
            build_judge_prompt(bare, "solution")


class TestParseJudgeOutput:
    def test_happy_path(self):
        reply = judge_reply_json("p1", mathematical_accuracy=3, overall_correctness=6)
        scores = parse_judge_output(reply, "p1")
        assert scores.mathematical_accuracy == 3
        assert scores.overall_correctness == 6

    def test_fenced_reply(self):
        scores = parse_judge_output(judge_reply_json("p1", fenced=True), "p1")
        assert scores.completeness == 4

    def test_zero_submetric_is_range_error(self):
        reply = judge_reply_json("p1", mathematical_accuracy=0)
        with pytest.raises(JudgeError, match="1-5"):
            parse_judge_output(reply, "p1")

    def test_wrong_problem_id_is_integrity_error(self):
        reply = judge_reply_json("other-id")
        with pytest.raises(JudgeError, match="echoed problem_id"):
            parse_judge_output(reply, "p1")

    def test_missing_field(self):
        obj = json.loads(judge_reply_json("p1"))
        del obj["assumptions_made"]
        with pytest.raises(JudgeError, match="missing fields"):
            parse_judge_output(json.dumps(obj), "p1")

    def test_no_json(self):
        with pytest.raises(OutputParseError):
            parse_judge_output("cannot comply", "p1")


class TestJudgeAttempt:
    def judge(self):
        return make_endpoint("judge", model_id="mock-judge")

    def test_all_fives_give_pps_100(self, problem):
        attempt = make_attempt(problem)
        mock = MockBackend()
        register_script(mock, ANY, judge_reply_json(
            problem.problem_id,
            **{name: 5 for name in JUDGE_SUBMETRIC_FIELDS}, overall_correctness=10,
        ))
        record = judge_attempt(attempt, problem, self.judge(), LlmGateway(mock, retry_base_delay=0.0))
        assert record.pps == pytest.approx(100.0, abs=1e-12)
        assert record.strategy == "baseline"
        assert record.judge_model == "mock-judge"

    def test_mixed_vector_gives_81(self, problem):
        attempt = make_attempt(problem)
        mock = MockBackend()
        register_script(mock, ANY, judge_reply_json(
            problem.problem_id,
            mathematical_accuracy=5, logical_consistency=4, formulas_principles=3,
            completeness=5, assumptions_made=2, clarity_and_coherence=5,
        ))
        record = judge_attempt(attempt, problem, self.judge(), LlmGateway(mock, retry_base_delay=0.0))
        assert record.pps == pytest.approx(81.0, abs=1e-12)

    def test_unparseable_twice_carries_raw_reply(self, problem):
        attempt = make_attempt(problem)
        mock = MockBackend()
        register_script(mock, ANY, "word salad")
        with pytest.raises(JudgeError, match="unparseable") as excinfo:
            judge_attempt(attempt, problem, self.judge(), LlmGateway(mock, retry_base_delay=0.0))
        assert excinfo.value.raw_reply == "word salad"

    def test_reprompt_recovers(self, problem):
        attempt = make_attempt(problem)
        mock = MockBackend()
        register_script(
            mock, lambda e, msgs: "Reply with the JSON object only." in msgs[-1].content,
            judge_reply_json(problem.problem_id),
        )
        register_script(mock, ANY, "thinking aloud, no json")
        record = judge_attempt(attempt, problem, self.judge(), LlmGateway(mock, retry_base_delay=0.0))
        assert record.pps == pytest.approx(80.0)

    def test_wrong_id_fails_without_reprompt(self, problem):
        attempt = make_attempt(problem)
        mock = MockBackend()
        register_script(mock, ANY, judge_reply_json("not-the-problem"))
        with pytest.raises(JudgeError, match="echoed problem_id"):
            judge_attempt(attempt, problem, self.judge(), LlmGateway(mock, retry_base_delay=0.0))
        assert mock.calls == 1

    def test_empty_final_solution_rejected(self, problem):
        attempt = make_attempt(problem)
        attempt.final_solution = "   "
        with pytest.raises(JudgeError, match="empty final solution"):
            judge_attempt(attempt, problem, self.judge(), LlmGateway(MockBackend()))


class TestEvaluationRecord:
    def test_round_trip(self):
        record = EvaluationRecord(
            problem_id="p1", strategy="multi_agent",
            judge_scores=scores_from({"mathematical_accuracy": 5}),
            pps=81.0, judge_model="m",
        )
        raw = record.to_json_dict()
        assert raw["schema"] == "eval/v1"
        assert EvaluationRecord.from_json_dict(json.loads(json.dumps(raw))) == record
