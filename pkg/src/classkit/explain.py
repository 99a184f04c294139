"""Decompose a session prediction into per-utterance marginal scores.

Adding an utterance with feature row x to a session shifts the prediction by
exactly (w/s).x, so each utterance owns a marginal score and the session
estimate equals their sum plus the constant offset b - (w/s).m.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .aggregate import SessionFeatures
from .corpus import Session
from .lasso import RegressionModel, standardized_weights


@dataclass(frozen=True)
class MarginalScore:
    utterance_index: int
    delta_y: float
    contributions: tuple[tuple[str, float], ...]


def marginal_scores(model: RegressionModel, features: SessionFeatures) -> list[MarginalScore]:
    """One marginal score per utterance, in utterance order.

    contributions lists (feature name, (w/s)_j * x_j) for the entries that are
    actually nonzero; their sequential sum is delta_y exactly because the
    omitted terms are exact zeros.
    """
    ws = standardized_weights(model)
    if ws.shape[0] != features.per_utterance.shape[1]:
        raise ValueError(
            f"model has {ws.shape[0]} features but session rows have {features.per_utterance.shape[1]}"
        )
    out: list[MarginalScore] = []
    for u in range(features.n_utterances):
        products = ws * features.per_utterance[u]
        delta = 0.0
        contribs: list[tuple[str, float]] = []
        for j, value in enumerate(products):
            delta += float(value)
            if value != 0.0:
                contribs.append((features.feature_names[j], float(value)))
        out.append(MarginalScore(utterance_index=u, delta_y=delta, contributions=tuple(contribs)))
    return out


def decompose(model: RegressionModel, features: SessionFeatures) -> dict:
    """Split the prediction into sum-of-marginals plus the constant offset."""
    marginals = marginal_scores(model, features)
    ws = standardized_weights(model)
    m = model.standardizer.m if model.standardizer is not None else np.zeros_like(ws)
    offset = float(model.b) - float(np.dot(ws, m))
    total = 0.0
    for score in marginals:
        total += score.delta_y
    return {"sum_of_deltas": total, "offset": offset, "y_hat": total + offset}


def top_bottom(marginals: list[MarginalScore], k: int = 4) -> dict:
    """The k highest and k lowest marginal scores; ties break by utterance index."""
    k_eff = min(k, len(marginals) // 2)
    note = None
    if k_eff < k:
        note = f"only {len(marginals)} utterances; truncated to {k_eff} per side"
    desc = sorted(marginals, key=lambda s: (-s.delta_y, s.utterance_index))
    asc = sorted(marginals, key=lambda s: (s.delta_y, s.utterance_index))
    return {"top": desc[:k_eff], "bottom": asc[:k_eff], "note": note}


def sample_spanning(marginals: list[MarginalScore], count: int = 100) -> list[int]:
    """Original indices of `count` utterances spanning the marginal-score range.

    Utterances are sorted by delta_y and picked at evenly spaced sorted
    positions, so the argmin and argmax are always included.
    """
    n = len(marginals)
    if count < 1:
        raise ValueError("count must be positive")
    if n < count:
        raise ValueError(f"session has only {n} utterances; use a count of at most {n}")
    order = sorted(marginals, key=lambda s: (s.delta_y, s.utterance_index))
    if count == 1:
        positions = [0]
    else:
        positions = [(i * (n - 1)) // (count - 1) for i in range(count)]
    return [order[p].utterance_index for p in positions]


def explanation_report(model: RegressionModel, session: Session, features: SessionFeatures) -> dict:
    """Structured per-session report: prediction, offset, and per-utterance attributions."""
    marginals = marginal_scores(model, features)
    parts = decompose(model, features)
    return {
        "session_id": session.session_id,
        "y_hat": parts["y_hat"],
        "offset": parts["offset"],
        "utterances": [
            {
                "index": score.utterance_index,
                "text": session.utterances[score.utterance_index].text,
                "start_s": session.utterances[score.utterance_index].start_s,
                "delta_y": score.delta_y,
                "contributions": [[name, value] for name, value in score.contributions],
            }
            for score in marginals
        ],
    }


def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def render_digest(session: Session, marginals: list[MarginalScore], k: int = 4) -> str:
    """Plain-text top/bottom listing for one session."""
    picks = top_bottom(marginals, k)
    lines = [f"Session {session.session_id}: utterances most/least associated with a high score"]
    if picks["note"]:
        lines.append(f"note: {picks['note']}")
    lines.append("top:")
    for score in picks["top"]:
        text = session.utterances[score.utterance_index].text
        lines.append(f"  [{score.utterance_index:>4}] {score.delta_y:+.4f}  {text}")
    lines.append("bottom:")
    for score in picks["bottom"]:
        text = session.utterances[score.utterance_index].text
        lines.append(f"  [{score.utterance_index:>4}] {score.delta_y:+.4f}  {text}")
    return "\n".join(lines) + "\n"
