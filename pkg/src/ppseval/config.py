"""Run configuration: TOML loading, validation, and frozen copies.

Secrets never live in config files; endpoints name an environment variable
(api_key_env) and the key is read from the process environment at call time.
"""

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .gateway import ModelEndpoint
from .judging import PPS_NORMALIZATIONS, PPSWeights
from .review import (
    DEFAULT_AGGREGATION_WEIGHTS,
    DEFAULT_RUBRIC_WEIGHTS,
    VERIFIER_SCORE_FIELDS,
)
from .strategies import MULTI_AGENT_VERIFIER_ROLES, StrategyKind, required_roles

KNOWN_ROLES = ("solver", "reviewer", "verifier-1", "verifier-2", "verifier-3", "meta", "judge")


@dataclass
class RunConfig:
    dataset: str
    output_dir: str
    roles: dict[str, ModelEndpoint]
    cache_dir: str = ""
    parallelism: int = 4
    alpha: float = 0.05
    pps_normalization: str = "divide_by_max"
    pps_weights: PPSWeights = field(default_factory=PPSWeights)
    rubric_weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_RUBRIC_WEIGHTS))
    aggregation_weights: dict[str, float] = field(
        default_factory=lambda: dict(zip(MULTI_AGENT_VERIFIER_ROLES, DEFAULT_AGGREGATION_WEIGHTS))
    )
    feedback_rounds: int = 1
    retry_limit: int = 3
    retry_base_delay: float = 0.5
    gateway_concurrency: int = 4

    def validate(self) -> None:
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.pps_normalization not in PPS_NORMALIZATIONS:
            raise ConfigError(
                f"pps_normalization must be one of {PPS_NORMALIZATIONS}, got {self.pps_normalization!r}"
            )
        if self.feedback_rounds < 1:
            raise ConfigError(f"feedback_rounds must be >= 1, got {self.feedback_rounds}")
        try:
            self.pps_weights.validate()
        except Exception as exc:
            raise ConfigError(f"pps_weights: {exc}") from exc
        _check_weights(self.rubric_weights, set(VERIFIER_SCORE_FIELDS), "rubric_weights")
        _check_weights(self.aggregation_weights, set(MULTI_AGENT_VERIFIER_ROLES), "aggregation_weights")
        for name, endpoint in self.roles.items():
            if name != endpoint.name:
                raise ConfigError(f"role {name!r} bound to endpoint named {endpoint.name!r}")

    def validate_for_strategy(self, strategy: StrategyKind, require_secrets: bool) -> None:
        self.validate()
        missing = [name for name in required_roles(strategy) if name not in self.roles]
        if missing:
            raise ConfigError(
                f"strategy {strategy.value} requires roles: {', '.join(missing)}"
            )
        if require_secrets:
            self.check_secrets(required_roles(strategy))

    def check_secrets(self, role_names) -> None:
        """Referenced API-key env vars must resolve before a live run starts."""
        unresolved = []
        for name in role_names:
            endpoint = self.roles.get(name)
            if endpoint and endpoint.api_key_env and not os.environ.get(endpoint.api_key_env):
                unresolved.append(f"{name} ({endpoint.api_key_env})")
        if unresolved:
            raise ConfigError("unset API key environment variables: " + ", ".join(unresolved))

    def resolved_dict(self) -> dict:
        """JSON-serializable copy, written next to every run's outputs."""
        return {
            "dataset": self.dataset,
            "output_dir": self.output_dir,
            "cache_dir": self.cache_dir,
            "parallelism": self.parallelism,
            "alpha": self.alpha,
            "pps_normalization": self.pps_normalization,
            "pps_weights": self.pps_weights.as_dict(),
            "rubric_weights": self.rubric_weights,
            "aggregation_weights": self.aggregation_weights,
            "feedback_rounds": self.feedback_rounds,
            "retry_limit": self.retry_limit,
            "retry_base_delay": self.retry_base_delay,
            "gateway_concurrency": self.gateway_concurrency,
            "roles": {
                name: {
                    "base_url": e.base_url,
                    "model_id": e.model_id,
                    "temperature": e.temperature,
                    "max_tokens": e.max_tokens,
                    "seed": e.seed,
                    "api_key_env": e.api_key_env,
                }
                for name, e in self.roles.items()
            },
        }


def _check_weights(weights: dict[str, float], expected_keys: set, label: str) -> None:
    if set(weights) != expected_keys:
        raise ConfigError(f"{label} must have exactly the keys {sorted(expected_keys)}")
    if any(v < 0 for v in weights.values()):
        raise ConfigError(f"{label} must be non-negative")
    total = sum(weights.values())
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"{label} must sum to 1, got {total}")


def load_config(path) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as handle:
            raw = tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc

    for key in ("dataset", "output_dir"):
        if key not in raw:
            raise ConfigError(f"{path}: missing required key {key!r}")
    roles = {}
    for name, table in raw.get("roles", {}).items():
        if name not in KNOWN_ROLES:
            raise ConfigError(f"{path}: unknown role {name!r} (expected one of {KNOWN_ROLES})")
        if not isinstance(table, dict):
            raise ConfigError(f"{path}: role {name!r} must be a table")
        try:
            roles[name] = ModelEndpoint(
                name=name,
                base_url=table.get("base_url", ""),
                model_id=table["model_id"],
                temperature=float(table.get("temperature", 0.0)),
                max_tokens=int(table.get("max_tokens", 4096)),
                seed=table.get("seed"),
                api_key_env=table.get("api_key_env"),
            )
        except KeyError as exc:
            raise ConfigError(f"{path}: role {name!r} missing field {exc}") from None

    try:
        pps_weights = PPSWeights(**raw["pps_weights"]) if "pps_weights" in raw else PPSWeights()
    except TypeError as exc:
        raise ConfigError(f"{path}: pps_weights: {exc}") from None
    config = RunConfig(
        dataset=raw["dataset"],
        output_dir=raw["output_dir"],
        roles=roles,
        cache_dir=raw.get("cache_dir", ""),
        parallelism=int(raw.get("parallelism", 4)),
        alpha=float(raw.get("alpha", 0.05)),
        pps_normalization=raw.get("pps_normalization", "divide_by_max"),
        pps_weights=pps_weights,
        rubric_weights=raw.get("rubric_weights", dict(DEFAULT_RUBRIC_WEIGHTS)),
        aggregation_weights=raw.get(
            "aggregation_weights",
            dict(zip(MULTI_AGENT_VERIFIER_ROLES, DEFAULT_AGGREGATION_WEIGHTS)),
        ),
        feedback_rounds=int(raw.get("feedback_rounds", 1)),
        retry_limit=int(raw.get("retry_limit", 3)),
        retry_base_delay=float(raw.get("retry_base_delay", 0.5)),
        gateway_concurrency=int(raw.get("gateway_concurrency", 4)),
    )
    try:
        config.validate()
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config


def write_frozen_config(config: RunConfig, destination, request_info: dict) -> None:
    """Persist the resolved config plus the request that used it."""
    payload = {"config": config.resolved_dict(), "request": request_info}
    Path(destination).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
