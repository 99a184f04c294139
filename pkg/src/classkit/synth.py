"""Deterministic synthetic corpora with a planted, known-strength signal.

Each generated session is random classroom-flavored filler text into which two
planted tokens are injected at teacher-dependent rates. Labels are a linear
function of the two planted-token session counts plus Gaussian noise sized so
that the clean signal correlates with the labels at a target level (the
"oracle R", recorded in the metadata). With planted=False the labels are pure
noise instead.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .corpus import Corpus, Dimension, LabelRecord, Session, Utterance, _synthesize_domain

FILLER_WORDS = (
    "friends", "circle", "paint", "blue", "red", "blocks", "story", "turn",
    "share", "wash", "hands", "snack", "music", "dance", "puzzle", "count",
    "letters", "jump", "quiet", "listen", "look", "together", "morning",
    "outside", "play", "clean", "table", "chair", "book", "draw", "colors",
    "animals", "shapes", "big", "little", "fast", "slow", "happy", "good",
    "ready", "time", "help", "please", "thank", "you", "we", "okay", "now",
)

PLANTED_TOKENS = ("dinosaur", "experiment")
PLANTED_COEFFICIENTS = (1.0, 0.7)
TARGET_ORACLE_R = 0.95

LABEL_LOW, LABEL_HIGH = 1.5, 6.5


def generate_corpus(
    seed: int = 0,
    n_sessions: int = 50,
    n_teachers: int = 10,
    utterances_low: int = 30,
    utterances_high: int = 50,
    planted: bool = True,
    n_labelers: int = 1,
    protocol: str = "prek",
) -> tuple[Corpus, dict]:
    """Build an in-memory corpus plus a metadata dict describing the signal."""
    if n_sessions < n_teachers:
        raise ValueError("need at least one session per teacher")
    rng = np.random.default_rng(seed)
    rate1 = rng.uniform(0.5, 9.0, size=n_teachers)
    rate2 = rng.uniform(0.5, 9.0, size=n_teachers)

    sessions: list[Session] = []
    c1 = np.zeros(n_sessions)
    c2 = np.zeros(n_sessions)
    for i in range(n_sessions):
        teacher = i % n_teachers
        n_utt = int(rng.integers(utterances_low, utterances_high + 1))
        token_lists: list[list[str]] = []
        is_question: list[bool] = []
        for _ in range(n_utt):
            length = int(rng.integers(3, 9))
            token_lists.append([str(w) for w in rng.choice(FILLER_WORDS, size=length)])
            is_question.append(bool(rng.random() < 0.25))
        if planted:
            counts = (int(rng.poisson(rate1[teacher])), int(rng.poisson(rate2[teacher])))
        else:
            counts = (int(rng.poisson(4.0)), int(rng.poisson(4.0)))
        c1[i], c2[i] = counts
        for token, count in zip(PLANTED_TOKENS, counts):
            for _ in range(count):
                u = int(rng.integers(n_utt))
                pos = int(rng.integers(len(token_lists[u]) + 1))
                token_lists[u].insert(pos, token)
        utterances = []
        clock = 0.0
        for u in range(n_utt):
            clock += float(rng.uniform(0.1, 0.6))
            duration = float(rng.uniform(1.0, 3.5))
            words = token_lists[u]
            text = " ".join(words).capitalize() + ("?" if is_question[u] else ".")
            utterances.append(Utterance(index=u, start_s=clock, end_s=clock + duration, text=text))
            clock += duration
        sessions.append(
            Session(session_id=f"s{i:03d}", teacher_id=f"t{teacher:02d}", utterances=utterances)
        )

    a1, a2 = PLANTED_COEFFICIENTS
    raw = a1 * c1 + a2 * c2
    if raw.max() == raw.min():
        raise RuntimeError("degenerate planted counts; change the seed or widen the rates")
    signal = LABEL_LOW + (raw - raw.min()) * (LABEL_HIGH - LABEL_LOW) / (raw.max() - raw.min())
    noise_sd = float(signal.std() * np.sqrt(1.0 / TARGET_ORACLE_R**2 - 1.0))

    oracle_r: dict[str, float | None] = {}
    mean_targets: dict[Dimension, np.ndarray] = {}
    for dim in (Dimension.DIM1, Dimension.DIM2, Dimension.DIM3):
        per_labeler_scores = []
        for labeler in range(n_labelers):
            if planted:
                scores = np.clip(signal + rng.normal(0.0, noise_sd, size=n_sessions), 1.0, 7.0)
            else:
                scores = rng.uniform(1.0, 7.0, size=n_sessions)
            per_labeler_scores.append(scores)
            for i, session in enumerate(sessions):
                session.labels.append(LabelRecord(f"r{labeler + 1}", dim, float(scores[i])))
        mean_scores = np.mean(per_labeler_scores, axis=0)
        mean_targets[dim] = mean_scores
        oracle_r[dim.value] = _corr(signal, mean_scores) if planted else None
    for session in sessions:
        session.labels.extend(_synthesize_domain(session.labels))
    domain_mean = mean_targets[Dimension.DIM1] + mean_targets[Dimension.DIM2] + mean_targets[Dimension.DIM3]
    oracle_r["domain"] = _corr(signal, domain_mean) if planted else None

    info = {
        "seed": int(seed),
        "n_sessions": int(n_sessions),
        "n_teachers": int(n_teachers),
        "n_labelers": int(n_labelers),
        "protocol": protocol,
        "planted": bool(planted),
        "planted_ngrams": list(PLANTED_TOKENS),
        "coefficients": list(PLANTED_COEFFICIENTS),
        "noise_sd": noise_sd if planted else None,
        "target_oracle_r": TARGET_ORACLE_R if planted else None,
        "oracle_r": oracle_r,
    }
    return Corpus(sessions=sessions, protocol=protocol), info


def _corr(a: np.ndarray, b: np.ndarray) -> float:
    am = a - a.mean()
    bm = b - b.mean()
    return float((am @ bm) / np.sqrt((am @ am) * (bm @ bm)))


def write_corpus_files(corpus: Corpus, info: dict, out_dir: str | Path) -> None:
    """Write transcripts/, manifest.csv, labels.csv, and info.json.

    Transcripts use the transcriber segment format so the generated corpus
    exercises the same import path as real data. Only the three dimensions are
    written to labels.csv; domain rows are synthesized again at load time.
    """
    out = Path(out_dir)
    (out / "transcripts").mkdir(parents=True, exist_ok=True)
    for session in corpus.sessions:
        doc = {
            "segments": [
                {"start": u.start_s, "end": u.end_s, "text": u.text} for u in session.utterances
            ]
        }
        (out / "transcripts" / f"{session.session_id}.json").write_text(
            json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    with open(out / "manifest.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["session_id", "teacher_id"])
        for session in corpus.sessions:
            writer.writerow([session.session_id, session.teacher_id])
    with open(out / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["session_id", "labeler_id", "dimension", "score"])
        for session in corpus.sessions:
            for rec in session.labels:
                if rec.dimension is Dimension.DOMAIN:
                    continue
                writer.writerow([session.session_id, rec.labeler_id, rec.dimension.value, repr(rec.score)])
    (out / "info.json").write_text(
        json.dumps(info, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
