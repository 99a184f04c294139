"""Run configuration: one YAML file drives the whole pipeline.

CLI flags override individual fields. Validation collects every violation and
reports them all at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .corpus import PROTOCOLS
from .features import FEATURE_MODES, VOCAB_SCOPES
from .llm import FEATURE_VALUE_MODES


class ConfigError(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(violations))
        self.violations = violations


@dataclass
class PathsConfig:
    transcripts: str = ""
    labels: str = ""
    manifest: str = ""
    workdir: str = "work"


@dataclass
class LlmConfig:
    backend: str = "mock"
    endpoint_url: str = ""
    model: str = ""
    credential_env: str = ""
    mode: str = "prob"
    context: int = 1
    max_concurrency: int = 1
    mock_policy: str = "hash"
    mock_seed: int | None = None


@dataclass
class LassoConfig:
    lambda_: float = 0.1
    non_negative: bool = False


@dataclass
class CvConfig:
    k: int = 5
    seed: int = 0


@dataclass
class BowConfig:
    k: int = 300
    vocab_scope: str = "fold"


@dataclass
class RunConfig:
    protocol: str = "prek"
    feature_mode: str = "bow"
    paths: PathsConfig = field(default_factory=PathsConfig)
    llm: LlmConfig = field(default_factory=LlmConfig)
    lasso: LassoConfig = field(default_factory=LassoConfig)
    cv: CvConfig = field(default_factory=CvConfig)
    bow: BowConfig = field(default_factory=BowConfig)


# YAML keys that map onto differently named dataclass attributes.
_KEY_ALIASES = {
    ("lasso", "lambda"): "lambda_",
    ("bow", "K"): "k",
}


def _fill(section: str, target, doc: dict, violations: list[str]) -> None:
    known = {f.name for f in fields(target)}
    for key, value in doc.items():
        attr = _KEY_ALIASES.get((section, key), key)
        if attr not in known:
            violations.append(f"{section}.{key}: unknown field")
            continue
        setattr(target, attr, value)


def load_config(path: str | Path) -> RunConfig:
    doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(doc, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    cfg = RunConfig()
    violations: list[str] = []
    sections = {
        "paths": cfg.paths,
        "llm": cfg.llm,
        "lasso": cfg.lasso,
        "cv": cfg.cv,
        "bow": cfg.bow,
    }
    for key, value in doc.items():
        if key in ("protocol", "feature_mode"):
            setattr(cfg, key, value)
        elif key in sections:
            if isinstance(value, dict):
                _fill(key, sections[key], value, violations)
            else:
                violations.append(f"{key}: must be a mapping")
        else:
            violations.append(f"{key}: unknown section")
    violations.extend(validate_config(cfg))
    if violations:
        raise ConfigError(violations)
    return cfg


def validate_config(cfg: RunConfig) -> list[str]:
    violations: list[str] = []
    if cfg.protocol not in PROTOCOLS:
        violations.append(f"protocol: {cfg.protocol!r} not one of {PROTOCOLS}")
    if cfg.feature_mode not in FEATURE_MODES:
        violations.append(f"feature_mode: {cfg.feature_mode!r} not one of {FEATURE_MODES}")
    if cfg.llm.backend not in ("mock", "remote"):
        violations.append(f"llm.backend: {cfg.llm.backend!r} not one of ('mock', 'remote')")
    if cfg.llm.backend == "remote" and not cfg.llm.endpoint_url:
        violations.append("llm.endpoint_url: required when llm.backend is 'remote'")
    if cfg.llm.mode not in FEATURE_VALUE_MODES:
        violations.append(f"llm.mode: {cfg.llm.mode!r} not one of {FEATURE_VALUE_MODES}")
    if cfg.llm.context not in (1, 3):
        violations.append(f"llm.context: {cfg.llm.context!r} must be 1 or 3")
    if cfg.llm.mock_policy not in ("hash", "rule"):
        violations.append(f"llm.mock_policy: {cfg.llm.mock_policy!r} not one of ('hash', 'rule')")
    if not isinstance(cfg.llm.max_concurrency, int) or cfg.llm.max_concurrency < 1:
        violations.append(f"llm.max_concurrency: {cfg.llm.max_concurrency!r} must be a positive integer")
    if not isinstance(cfg.lasso.lambda_, (int, float)) or cfg.lasso.lambda_ < 0:
        violations.append(f"lasso.lambda: {cfg.lasso.lambda_!r} must be a non-negative number")
    if not isinstance(cfg.lasso.non_negative, bool):
        violations.append(f"lasso.non_negative: {cfg.lasso.non_negative!r} must be a boolean")
    if not isinstance(cfg.cv.k, int) or cfg.cv.k < 2:
        violations.append(f"cv.k: {cfg.cv.k!r} must be an integer >= 2")
    if not isinstance(cfg.cv.seed, int):
        violations.append(f"cv.seed: {cfg.cv.seed!r} must be an integer")
    if not isinstance(cfg.bow.k, int) or cfg.bow.k < 1:
        violations.append(f"bow.K: {cfg.bow.k!r} must be a positive integer")
    if cfg.bow.vocab_scope not in VOCAB_SCOPES:
        violations.append(f"bow.vocab_scope: {cfg.bow.vocab_scope!r} not one of {VOCAB_SCOPES}")
    return violations


def config_to_yaml(cfg: RunConfig) -> str:
    doc = {
        "protocol": cfg.protocol,
        "feature_mode": cfg.feature_mode,
        "paths": {
            "transcripts": cfg.paths.transcripts,
            "labels": cfg.paths.labels,
            "manifest": cfg.paths.manifest,
            "workdir": cfg.paths.workdir,
        },
        "llm": {
            "backend": cfg.llm.backend,
            "endpoint_url": cfg.llm.endpoint_url,
            "model": cfg.llm.model,
            "credential_env": cfg.llm.credential_env,
            "mode": cfg.llm.mode,
            "context": cfg.llm.context,
            "max_concurrency": cfg.llm.max_concurrency,
            "mock_policy": cfg.llm.mock_policy,
            "mock_seed": cfg.llm.mock_seed,
        },
        "lasso": {"lambda": cfg.lasso.lambda_, "non_negative": cfg.lasso.non_negative},
        "cv": {"k": cfg.cv.k, "seed": cfg.cv.seed},
        "bow": {"K": cfg.bow.k, "vocab_scope": cfg.bow.vocab_scope},
    }
    return yaml.safe_dump(doc, sort_keys=True)
