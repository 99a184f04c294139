"""Dispatch from a feature-mode name to per-session feature matrices.

Supported modes: bow, llm_all, llm_dim:dim1|dim2|dim3, concat (LLM block
first, BoW second), and the baseline_words / baseline_questions /
baseline_both counters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import bow
from .aggregate import SessionFeatures, concat
from .corpus import Dimension, Session
from .llm import FeatureCache, IndicatorSet, featurize_llm

FEATURE_MODES = (
    "bow",
    "llm_all",
    "llm_dim:dim1",
    "llm_dim:dim2",
    "llm_dim:dim3",
    "concat",
    "baseline_words",
    "baseline_questions",
    "baseline_both",
)

VOCAB_SCOPES = ("fold", "corpus")


@dataclass
class FeatureConfig:
    mode: str = "bow"
    bow_k: int = bow.DEFAULT_VOCAB_SIZE
    vocab_scope: str = "fold"
    llm_mode: str = "prob"
    llm_context: int = 1
    max_concurrency: int = 1
    backend: object = None
    cache: FeatureCache | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.mode not in FEATURE_MODES:
            raise ValueError(f"unknown feature mode {self.mode!r}; expected one of {FEATURE_MODES}")
        if self.vocab_scope not in VOCAB_SCOPES:
            raise ValueError(f"vocab_scope must be one of {VOCAB_SCOPES}, got {self.vocab_scope!r}")

    @property
    def uses_llm(self) -> bool:
        return self.mode in ("llm_all", "concat") or self.mode.startswith("llm_dim:")

    @property
    def uses_bow(self) -> bool:
        return self.mode in ("bow", "concat")


def _indicator_set(protocol: str, config: FeatureConfig) -> IndicatorSet:
    full = IndicatorSet.for_protocol(protocol)
    if config.mode.startswith("llm_dim:"):
        return full.subset(Dimension(config.mode.split(":", 1)[1]))
    return full


def _bow_features(sessions: Sequence[Session], vocab: bow.Vocabulary) -> dict[str, SessionFeatures]:
    names = vocab.feature_names
    out = {}
    for session in sessions:
        rows = np.array([bow.featurize(u, vocab) for u in session.utterances], dtype=np.float64)
        out[session.session_id] = SessionFeatures(session.session_id, list(names), rows)
    return out


def _llm_features(
    sessions: Sequence[Session], indicator_set: IndicatorSet, config: FeatureConfig
) -> dict[str, SessionFeatures]:
    if config.backend is None:
        raise ValueError(f"feature mode {config.mode!r} needs a chat backend")
    names = indicator_set.feature_names()
    out = {}
    for session in sessions:
        rows = featurize_llm(
            config.backend,
            session,
            indicator_set,
            mode=config.llm_mode,
            context=config.llm_context,
            max_concurrency=config.max_concurrency,
            cache=config.cache,
        )
        out[session.session_id] = SessionFeatures(session.session_id, list(names), rows)
    return out


def _baseline_features(sessions: Sequence[Session], kind: str) -> dict[str, SessionFeatures]:
    names = bow.baseline_feature_names(kind)
    out = {}
    for session in sessions:
        rows = np.array([bow.baseline_features(u, kind) for u in session.utterances], dtype=np.float64)
        out[session.session_id] = SessionFeatures(session.session_id, list(names), rows)
    return out


def compute_features(
    train_sessions: Sequence[Session],
    eval_sessions: Sequence[Session],
    protocol: str,
    config: FeatureConfig,
) -> dict[str, SessionFeatures]:
    """Features for every session in train + eval, keyed by session_id.

    With vocab_scope="fold" the BoW vocabulary is built from the training
    sessions only; "corpus" builds it from train and eval together.
    """
    by_id = {s.session_id: s for s in [*train_sessions, *eval_sessions]}
    sessions = list(by_id.values())
    if config.mode in ("baseline_words", "baseline_questions", "baseline_both"):
        return _baseline_features(sessions, config.mode.removeprefix("baseline_"))
    bow_feats = None
    if config.uses_bow:
        vocab_sessions = list(train_sessions) if config.vocab_scope == "fold" else sessions
        vocab = bow.build_vocabulary(vocab_sessions, k=config.bow_k)
        bow_feats = _bow_features(sessions, vocab)
    llm_feats = None
    if config.uses_llm:
        llm_feats = _llm_features(sessions, _indicator_set(protocol, config), config)
    if config.mode == "bow":
        return bow_feats
    if config.mode == "concat":
        return {sid: concat(llm_feats[sid], bow_feats[sid]) for sid in by_id}
    return llm_feats


def features_from_names(
    sessions: Sequence[Session],
    feature_mode: str,
    feature_names: Sequence[str],
    protocol: str,
    config: FeatureConfig | None = None,
) -> dict[str, SessionFeatures]:
    """Recreate a trained model's feature space from its stored column names.

    The BoW vocabulary is recovered from the name list rather than rebuilt, so
    scoring new sessions uses exactly the columns the model was trained on.
    """
    config = config or FeatureConfig(mode=feature_mode)
    names = list(feature_names)
    llm_names = [n for n in names if n.startswith("llm:")]
    rest = names[len(llm_names):]
    parts: list[dict[str, SessionFeatures]] = []
    if llm_names:
        full = IndicatorSet.for_protocol(protocol)
        wanted = [n.removeprefix("llm:") for n in llm_names]
        positions = tuple(full.indicators.index(p) for p in wanted)
        ind_set = IndicatorSet(
            protocol=protocol,
            indicators=tuple(wanted),
            positions=positions,
            grouping=dict(full.grouping),
        )
        parts.append(_llm_features(sessions, ind_set, config))
    if rest:
        if rest == bow.baseline_feature_names("words"):
            parts.append(_baseline_features(sessions, "words"))
        elif rest == bow.baseline_feature_names("questions"):
            parts.append(_baseline_features(sessions, "questions"))
        elif rest == bow.baseline_feature_names("both"):
            parts.append(_baseline_features(sessions, "both"))
        else:
            if rest[-2:] != list(bow.PSEUDO_TOKENS):
                raise ValueError("cannot reconstruct featurization from these feature names")
            vocab = bow.Vocabulary(entries=rest[:-2], frequencies=[0] * (len(rest) - 2))
            parts.append(_bow_features(sessions, vocab))
    if not parts:
        raise ValueError("model has no feature columns")
    out = parts[0]
    for extra in parts[1:]:
        out = {sid: concat(out[sid], extra[sid]) for sid in out}
    return out
