"""Load classroom transcripts and multi-rater CLASS labels into an in-memory corpus.

A session is one 15-minute observation: a list of timed utterances produced by
an automatic transcriber, plus the score labels assigned by human coders.
Sessions are keyed by session_id and grouped by teacher_id. Training targets
are always the per-session mean score across labelers.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from statistics import fmean
from typing import Iterable

SESSION_NOMINAL_SECONDS = 900.0

PROTOCOLS = ("toddler", "prek")


class Dimension(Enum):
    """A scored construct: three 1-7 dimensions plus their sum (the domain)."""

    DIM1 = "dim1"
    DIM2 = "dim2"
    DIM3 = "dim3"
    DOMAIN = "domain"

    @property
    def score_range(self) -> tuple[float, float]:
        return (3.0, 21.0) if self is Dimension.DOMAIN else (1.0, 7.0)

    def display_name(self, protocol: str = "prek") -> str:
        if self is Dimension.DIM1:
            return "Concept Development" if protocol == "prek" else "Facilitation of Learning & Development"
        if self is Dimension.DIM2:
            return "Quality of Feedback"
        if self is Dimension.DIM3:
            return "Language Modeling"
        return "Instructional Support"


THE_DIMENSIONS = (Dimension.DIM1, Dimension.DIM2, Dimension.DIM3)

LABELS_HEADER = ["session_id", "labeler_id", "dimension", "score"]


class CorpusError(Exception):
    """Base class for corpus import and validation failures."""


class TranscriptParseError(CorpusError):
    pass


class EmptySessionError(CorpusError):
    pass


class LabelValidationError(CorpusError):
    pass


class MissingLabelError(CorpusError):
    pass


@dataclass(frozen=True)
class Utterance:
    index: int
    start_s: float
    end_s: float
    text: str


@dataclass(frozen=True)
class LabelRecord:
    labeler_id: str
    dimension: Dimension
    score: float


@dataclass
class Session:
    session_id: str
    teacher_id: str
    utterances: list[Utterance]
    labels: list[LabelRecord] = field(default_factory=list)

    def labels_for(self, dimension: Dimension) -> list[LabelRecord]:
        return [rec for rec in self.labels if rec.dimension is dimension]


@dataclass
class Corpus:
    sessions: list[Session]
    protocol: str = "prek"

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOLS}")
        seen: set[str] = set()
        for session in self.sessions:
            if session.session_id in seen:
                raise CorpusError(f"duplicate session_id {session.session_id!r}")
            seen.add(session.session_id)
            if not session.teacher_id:
                raise CorpusError(f"session {session.session_id!r} has no teacher_id")

    def get(self, session_id: str) -> Session:
        for session in self.sessions:
            if session.session_id == session_id:
                return session
        raise KeyError(session_id)

    def teachers(self) -> list[str]:
        return sorted({s.teacher_id for s in self.sessions})

    def sessions_for_teacher(self, teacher_id: str) -> list[Session]:
        return [s for s in self.sessions if s.teacher_id == teacher_id]

    def sessions_with_target(self, dimension: Dimension) -> tuple[list[Session], int]:
        """Sessions labeled for `dimension`, plus the count excluded for lacking one."""
        kept = [s for s in self.sessions if s.labels_for(dimension)]
        return kept, len(self.sessions) - len(kept)


def import_whisper(
    path: str | Path,
    session_id: str,
    teacher_id: str,
    keep_empty: bool = False,
) -> Session:
    """Build a Session from a transcriber output document.

    Accepts either a flat JSON array of segments or an object with a
    "segments" array; only start, end, and text are read from each segment.
    Blank or whitespace-only segments are dropped unless keep_empty is set.
    """
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise TranscriptParseError(
            f"{path}: malformed transcript JSON at byte offset {exc.pos}: {exc.msg}"
        ) from exc
    segments = doc.get("segments") if isinstance(doc, dict) else doc
    if not isinstance(segments, list):
        raise TranscriptParseError(
            f"{path}: expected a segment array or an object with a 'segments' array"
        )
    utterances: list[Utterance] = []
    for seg_no, seg in enumerate(segments):
        try:
            start = float(seg["start"])
            end = float(seg["end"])
            text = str(seg["text"])
        except (TypeError, KeyError, ValueError) as exc:
            raise TranscriptParseError(
                f"{path}: segment {seg_no} lacks usable start/end/text fields"
            ) from exc
        if not text.strip() and not keep_empty:
            continue
        if not 0.0 <= start <= end <= SESSION_NOMINAL_SECONDS:
            warnings.warn(
                f"session {session_id!r}: segment {seg_no} timing ({start}, {end}) "
                f"outside the nominal 0-{SESSION_NOMINAL_SECONDS:.0f}s window",
                stacklevel=2,
            )
        utterances.append(Utterance(index=len(utterances), start_s=start, end_s=end, text=text))
    if not utterances:
        raise EmptySessionError(f"session {session_id!r}: no non-empty speech segments")
    return Session(session_id=session_id, teacher_id=teacher_id, utterances=utterances)


def session_to_dict(session: Session) -> dict:
    return {
        "session_id": session.session_id,
        "teacher_id": session.teacher_id,
        "utterances": [
            {"index": u.index, "start_s": u.start_s, "end_s": u.end_s, "text": u.text}
            for u in session.utterances
        ],
    }


def save_session(session: Session, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(session_to_dict(session), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def load_session(path: str | Path) -> Session:
    """Read a session from the native JSON format, validating utterance indices."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    utterances = [
        Utterance(index=int(u["index"]), start_s=float(u["start_s"]), end_s=float(u["end_s"]), text=str(u["text"]))
        for u in doc["utterances"]
    ]
    for expected, utt in enumerate(utterances):
        if utt.index != expected:
            raise CorpusError(
                f"{path}: utterance indices must be contiguous from 0; found {utt.index} at position {expected}"
            )
    if not utterances:
        raise EmptySessionError(f"{path}: session document has no utterances")
    return Session(session_id=str(doc["session_id"]), teacher_id=str(doc["teacher_id"]), utterances=utterances)


def load_labels(path: str | Path) -> dict[str, list[LabelRecord]]:
    """Parse the labels CSV, synthesizing per-labeler domain rows where absent.

    A domain row is added for every labeler who scored all three dimensions of
    a session but has no explicit domain row; its score is their sum.
    """
    path = Path(path)
    by_session: dict[str, list[LabelRecord]] = {}
    seen: set[tuple[str, str, Dimension]] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != LABELS_HEADER:
            raise LabelValidationError(
                f"{path}: header must be exactly {','.join(LABELS_HEADER)!r}; got {header!r}"
            )
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise LabelValidationError(f"{path}: row {row_no} has {len(row)} fields, expected 4")
            sid, labeler, dim_token, score_text = row
            try:
                dimension = Dimension(dim_token)
            except ValueError:
                raise LabelValidationError(
                    f"{path}: row {row_no}: unknown dimension token {dim_token!r}"
                ) from None
            try:
                score = float(score_text)
            except ValueError:
                raise LabelValidationError(f"{path}: row {row_no}: score {score_text!r} is not a number") from None
            lo, hi = dimension.score_range
            if not lo <= score <= hi:
                raise LabelValidationError(
                    f"{path}: row {row_no}: {dimension.value} score {score} outside [{lo:.0f}, {hi:.0f}]"
                )
            key = (sid, labeler, dimension)
            if key in seen:
                raise LabelValidationError(
                    f"{path}: row {row_no}: duplicate record for session {sid!r}, "
                    f"labeler {labeler!r}, dimension {dimension.value}"
                )
            seen.add(key)
            by_session.setdefault(sid, []).append(LabelRecord(labeler, dimension, score))
    for sid, records in by_session.items():
        by_session[sid] = records + _synthesize_domain(records)
    return by_session


def _synthesize_domain(records: list[LabelRecord]) -> list[LabelRecord]:
    have_domain = {r.labeler_id for r in records if r.dimension is Dimension.DOMAIN}
    per_labeler: dict[str, dict[Dimension, float]] = {}
    for rec in records:
        if rec.dimension is not Dimension.DOMAIN:
            per_labeler.setdefault(rec.labeler_id, {})[rec.dimension] = rec.score
    synthesized = []
    for labeler in sorted(per_labeler):
        if labeler in have_domain:
            continue
        scores = per_labeler[labeler]
        if all(dim in scores for dim in THE_DIMENSIONS):
            synthesized.append(
                LabelRecord(labeler, Dimension.DOMAIN, sum(scores[dim] for dim in THE_DIMENSIONS))
            )
    return synthesized


def mean_target(session: Session, dimension: Dimension) -> float:
    """Arithmetic mean of all labelers' scores for one dimension of a session."""
    records = session.labels_for(dimension)
    if not records:
        raise MissingLabelError(
            f"session {session.session_id!r} has no {dimension.value} labels"
        )
    return fmean(rec.score for rec in records)


def build_corpus(
    sessions: Iterable[Session],
    labels_by_session: dict[str, list[LabelRecord]] | None = None,
    protocol: str = "prek",
) -> Corpus:
    """Attach label records to sessions and assemble the corpus.

    With no label table the sessions keep whatever labels they already carry.
    """
    attached = []
    for session in sessions:
        if labels_by_session is None:
            labels = list(session.labels)
        else:
            labels = list(labels_by_session.get(session.session_id, []))
        attached.append(
            Session(
                session_id=session.session_id,
                teacher_id=session.teacher_id,
                utterances=list(session.utterances),
                labels=labels,
            )
        )
    return Corpus(sessions=attached, protocol=protocol)
