import json
from pathlib import Path

import pytest

from ppseval.dataset import load_dataset
from ppseval.gateway import ModelEndpoint

FIXTURES = Path(__file__).parent / "fixtures"

ROLE_NAMES = ("solver", "reviewer", "verifier-1", "verifier-2", "verifier-3", "meta", "judge")


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def problems():
    return load_dataset(FIXTURES / "problems_20.jsonl")


@pytest.fixture
def problem(problems):
    return problems[0]


def make_endpoint(name: str, **overrides) -> ModelEndpoint:
    defaults = dict(name=name, base_url="mock://local", model_id=f"mock-{name}")
    defaults.update(overrides)
    return ModelEndpoint(**defaults)


@pytest.fixture
def endpoints():
    return {name: make_endpoint(name) for name in ROLE_NAMES}


def verifier_reply_json(scores=None, mistakes=(), fenced=False, prose=""):
    """Build a verifier-style reply; scores default to straight 4s."""
    base = {
        "formulation": 4, "numerical_correctness": 4, "logical_consistency": 4,
        "completeness": 4, "validity_of_assumptions": 4, "clarity": 4,
    }
    if scores:
        base.update(scores)
    base["mistakes"] = [{"description": m} for m in mistakes]
    text = json.dumps(base)
    if fenced:
        text = f"```json\n{text}\n```"
    if prose:
        text = f"{prose}\n{text}"
    return text


def judge_reply_json(problem_id, fenced=False, **scores):
    base = {
        "problem_id": problem_id,
        "mathematical_accuracy": 4, "logical_consistency": 4, "completeness": 4,
        "clarity_and_coherence": 4, "formulas_principles": 4, "assumptions_made": 4,
        "overall_correctness": 8,
    }
    base.update(scores)
    text = json.dumps(base)
    if fenced:
        text = f"```json\n{text}\n```"
    return text


def write_config(
    tmp_path: Path,
    dataset: Path,
    parallelism: int = 2,
    output_dir: Path = None,
    cache_dir: str = "",
    extra: str = "",
    roles=ROLE_NAMES,
    name: str = "run.toml",
) -> Path:
    """Write a run-config TOML, mock-friendly, covering *roles*."""
    output_dir = output_dir or tmp_path / "out"
    role_tables = "\n".join(
        f'[roles."{role}"]\nbase_url = "mock://local"\nmodel_id = "mock-{role}"\n'
        for role in roles
    )
    text = (
        f'dataset = "{dataset}"\n'
        f'output_dir = "{output_dir}"\n'
        f'cache_dir = "{cache_dir}"\n'
        f"parallelism = {parallelism}\n"
        f"{extra}\n"
        f"{role_tables}\n"
    )
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def e2e_judge_scores(index: int, variant: str) -> dict:
    """Deterministic judge scores per (problem index, strategy variant).

    multi_agent adds +1 clarity over baseline everywhere (+2 on index 0),
    a known positive PPS shift for the significance tests.
    """
    scores = {
        "mathematical_accuracy": 4 + (index % 2),
        "logical_consistency": 4,
        "completeness": 4,
        "clarity_and_coherence": 3,
        "formulas_principles": 3 if index % 3 == 0 else 4,
        "assumptions_made": 3,
        "overall_correctness": 7,
    }
    if variant == "self_refine":
        scores["completeness"] -= 1 if index % 2 == 0 else 0
    elif variant == "single_agent":
        scores["clarity_and_coherence"] -= 1 if index % 5 == 0 else 0
    elif variant == "multi_agent":
        scores["clarity_and_coherence"] += 2 if index == 0 else 1
        scores["overall_correctness"] = 8
    return scores


def build_e2e_script(problems, path: Path, single_agent_mistake_every: int = 2) -> Path:
    """Mock script covering all four strategies plus judging for *problems*.

    Verifiers flag a mistake on every problem (multi-agent always revises);
    the single-agent reviewer flags one on every Nth problem, leaving the
    rest at one round.
    """
    entries = []
    for i, p in enumerate(problems):
        pid = p.problem_id
        base_sol = f"worked solution for {pid}: apply the governing equation and evaluate."
        sr_sol = f"self-checked solution for {pid}: principles restated, result confirmed."
        sa_sol = f"revised-after-review solution for {pid}: unit handling fixed."
        ma_sol = f"consensus-revised solution for {pid}: sign corrected in step 2."
        reviewer_mistake = f"unit conversion slip in the final step of {pid}"
        verifier_mistake = f"sign error in step 2 of {pid}"

        # specific (feedback) solver entries must precede the generic solve entry
        entries.append({"endpoint": "solver", "contains": [p.problem, "Physics Professor"],
                        "response": sr_sol})
        entries.append({"endpoint": "solver", "contains": [p.problem, reviewer_mistake],
                        "response": sa_sol})
        entries.append({"endpoint": "solver", "contains": [p.problem, verifier_mistake],
                        "response": ma_sol})
        entries.append({"endpoint": "solver", "contains": [p.problem], "response": base_sol})

        reviewer_mistakes = [reviewer_mistake] if i % single_agent_mistake_every == 0 else []
        entries.append({
            "endpoint": "reviewer", "contains": [p.problem],
            "response": verifier_reply_json(mistakes=reviewer_mistakes),
        })
        for k, scores in ((1, {"formulation": 4}), (2, {"formulation": 3}), (3, {"formulation": 5})):
            entries.append({
                "endpoint": f"verifier-{k}", "contains": [p.problem],
                "response": verifier_reply_json(scores=scores, mistakes=[verifier_mistake]),
            })
        entries.append({
            "endpoint": "meta", "contains": [p.problem],
            "response": json.dumps({"retained_mistakes": [{"description": verifier_mistake}]}),
        })

        for solution, variant in (
            (base_sol, "baseline"), (sr_sol, "self_refine"),
            (sa_sol, "single_agent"), (ma_sol, "multi_agent"),
        ):
            entries.append({
                "endpoint": "judge", "contains": [solution],
                "response": judge_reply_json(pid, **e2e_judge_scores(i, variant)),
            })

    path.write_text(json.dumps(entries, indent=1), encoding="utf-8")
    return path
