"""Small corpus builders shared across the test modules."""

from __future__ import annotations

from classkit.corpus import Corpus, Dimension, LabelRecord, Session, Utterance


def make_session(session_id, teacher_id, texts, labels=None):
    utterances = [
        Utterance(index=i, start_s=i * 3.0, end_s=i * 3.0 + 2.0, text=text)
        for i, text in enumerate(texts)
    ]
    return Session(
        session_id=session_id,
        teacher_id=teacher_id,
        utterances=utterances,
        labels=list(labels or []),
    )


def dim1_label(score, labeler="r1"):
    return LabelRecord(labeler_id=labeler, dimension=Dimension.DIM1, score=score)


def make_corpus(sessions, protocol="prek"):
    return Corpus(sessions=list(sessions), protocol=protocol)
