"""Session-level feature aggregation: sum per-utterance rows, then z-score.

Scores represent the total amount of evidence in a session, so rows are
summed, never averaged. Standardization statistics always come from the
training sessions only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Standardizer:
    """Per-feature mean and population standard deviation from a training set.

    Zero-variance features keep s = 1 (center-only) instead of being dropped;
    mask records which entries were patched.
    """

    m: np.ndarray
    s: np.ndarray
    mask: np.ndarray
    n_train: int


@dataclass
class SessionFeatures:
    """Per-utterance feature rows for one session, with their raw column sum."""

    session_id: str
    feature_names: list[str]
    per_utterance: np.ndarray

    def __post_init__(self) -> None:
        self.per_utterance = np.asarray(self.per_utterance, dtype=np.float64)
        if self.per_utterance.ndim != 2:
            raise ValueError("per_utterance must be a 2-D (utterances x features) array")
        if self.per_utterance.shape[1] != len(self.feature_names):
            raise ValueError(
                f"{self.per_utterance.shape[1]} feature columns but {len(self.feature_names)} names"
            )

    @property
    def n_utterances(self) -> int:
        return self.per_utterance.shape[0]

    @property
    def g(self) -> np.ndarray:
        return sum_features(self.per_utterance)


def sum_features(rows) -> np.ndarray:
    """Elementwise sum of per-utterance rows, accumulated in utterance order."""
    rows = [np.asarray(row, dtype=np.float64) for row in rows]
    if not rows:
        raise ValueError("no per-utterance rows to aggregate (empty sessions are removed at import)")
    d = rows[0].shape[0]
    total = np.zeros(d, dtype=np.float64)
    for i, row in enumerate(rows):
        if row.shape != (d,):
            raise ValueError(f"row {i} has shape {row.shape}, expected ({d},)")
        total += row
    return total


def fit_standardizer(g_vectors) -> Standardizer:
    """Mean and population standard deviation over training sessions' sums."""
    stacked = np.asarray([np.asarray(g, dtype=np.float64) for g in g_vectors])
    if stacked.ndim != 2 or stacked.shape[0] < 2:
        raise ValueError("standardization needs at least 2 training sessions")
    m = stacked.mean(axis=0)
    raw_s = stacked.std(axis=0)
    mask = raw_s == 0.0
    s = np.where(mask, 1.0, raw_s)
    return Standardizer(m=m, s=s, mask=mask, n_train=stacked.shape[0])


def standardize(g, standardizer: Standardizer) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != standardizer.m.shape:
        raise ValueError(f"feature vector shape {g.shape} does not match standardizer {standardizer.m.shape}")
    return (g - standardizer.m) / standardizer.s


def concat(a: SessionFeatures, b: SessionFeatures) -> SessionFeatures:
    """Columnwise concatenation of two feature families for the same session."""
    if a.session_id != b.session_id:
        raise ValueError(f"cannot concat features of sessions {a.session_id!r} and {b.session_id!r}")
    if a.n_utterances != b.n_utterances:
        raise ValueError(
            f"utterance count mismatch: {a.n_utterances} vs {b.n_utterances} for session {a.session_id!r}"
        )
    return SessionFeatures(
        session_id=a.session_id,
        feature_names=[*a.feature_names, *b.feature_names],
        per_utterance=np.hstack([a.per_utterance, b.per_utterance]),
    )
