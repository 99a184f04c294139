"""Shingled n-gram bag-of-words featurization of utterance text.

Normalization lower-cases the text, deletes commas and periods, and splits on
whitespace. Every contiguous window of 1-4 tokens is a candidate vocabulary
entry; stop words stay in the token stream (so entries like "going to" or
"in the" are legal) but an n-gram whose whole string is a stop word is never
admitted. Two pseudo-tokens '?' and ' ' are appended to every vocabulary and
counted on the raw utterance text, acting as question and word counters.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import Session, Utterance

DEFAULT_NGRAM_SIZES = (1, 2, 3, 4)
DEFAULT_VOCAB_SIZE = 300
PSEUDO_TOKENS = ("?", " ")

BASELINE_MODES = ("words", "questions", "both")


def _load_stop_words() -> frozenset[str]:
    text = resources.files(__package__).joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


STOP_WORDS = _load_stop_words()


class UnderfullVocabularyError(ValueError):
    def __init__(self, requested: int, available: int):
        super().__init__(
            f"requested a vocabulary of {requested} n-grams but only {available} distinct candidates exist"
        )
        self.requested = requested
        self.available = available


def normalize(text: str) -> list[str]:
    """Lower-case, delete ',' and '.', split on whitespace runs."""
    return text.lower().replace(",", "").replace(".", "").split()


def extract_ngrams(tokens: list[str], n_set: Iterable[int] = DEFAULT_NGRAM_SIZES) -> Counter:
    """Count every contiguous window of each requested length (overlaps included)."""
    grams: Counter = Counter()
    for n in n_set:
        for i in range(len(tokens) - n + 1):
            grams[" ".join(tokens[i : i + n])] += 1
    return grams


@dataclass
class Vocabulary:
    """Ordered n-gram list defining the count-feature space, pseudo-tokens last."""

    entries: list[str]
    frequencies: list[int]
    source: str = ""
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.entries) != len(self.frequencies):
            raise ValueError("entries and frequencies must align")
        self._index = {ngram: j for j, ngram in enumerate(self.entries)}
        if len(self._index) != len(self.entries):
            raise ValueError("vocabulary entries must be unique")

    @property
    def feature_names(self) -> list[str]:
        return [*self.entries, *PSEUDO_TOKENS]

    @property
    def size(self) -> int:
        return len(self.entries) + len(PSEUDO_TOKENS)


def _iter_sessions(corpus) -> Iterable[Session]:
    return corpus.sessions if hasattr(corpus, "sessions") else corpus


def build_vocabulary(corpus, k: int = DEFAULT_VOCAB_SIZE, source: str = "") -> Vocabulary:
    """Keep the k most frequent non-stop-word n-grams over all utterances.

    Rank ties are broken lexicographically ascending so identical corpora
    always produce identical vocabularies.
    """
    counts: Counter = Counter()
    for session in _iter_sessions(corpus):
        for utt in session.utterances:
            counts.update(extract_ngrams(normalize(utt.text)))
    candidates = [(ngram, c) for ngram, c in counts.items() if ngram not in STOP_WORDS]
    if len(candidates) < k:
        raise UnderfullVocabularyError(k, len(candidates))
    candidates.sort(key=lambda item: (-item[1], item[0]))
    top = candidates[:k]
    return Vocabulary(entries=[g for g, _ in top], frequencies=[c for _, c in top], source=source)


def _text_of(utterance) -> str:
    return utterance.text if isinstance(utterance, Utterance) else str(utterance)


def featurize(utterance, vocab: Vocabulary) -> np.ndarray:
    """Count vector over the vocabulary; '?' and ' ' counted on the raw text."""
    text = _text_of(utterance)
    vec = np.zeros(vocab.size, dtype=np.int64)
    for gram, count in extract_ngrams(normalize(text)).items():
        j = vocab._index.get(gram)
        if j is not None:
            vec[j] = count
    vec[-2] = text.count("?")
    vec[-1] = text.count(" ")
    return vec


def baseline_features(utterance, mode: str = "both") -> np.ndarray:
    """Word and/or question counts from the raw text (spaces proxy for words)."""
    if mode not in BASELINE_MODES:
        raise ValueError(f"mode must be one of {BASELINE_MODES}, got {mode!r}")
    text = _text_of(utterance)
    words = text.count(" ")
    questions = text.count("?")
    if mode == "words":
        return np.array([words], dtype=np.int64)
    if mode == "questions":
        return np.array([questions], dtype=np.int64)
    return np.array([words, questions], dtype=np.int64)


def baseline_feature_names(mode: str = "both") -> list[str]:
    if mode == "words":
        return ["#words"]
    if mode == "questions":
        return ["#questions"]
    return ["#words", "#questions"]


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    lines = [f"{ngram}\t{count}" for ngram, count in zip(vocab.entries, vocab.frequencies)]
    lines += [f"{token}\t0" for token in PSEUDO_TOKENS]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vocabulary(path: str | Path) -> Vocabulary:
    entries: list[str] = []
    frequencies: list[int] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        ngram, _, count = line.rpartition("\t")
        entries.append(ngram)
        frequencies.append(int(count))
    if entries[-2:] != list(PSEUDO_TOKENS):
        raise ValueError(f"{path}: last two vocabulary lines must be the pseudo-tokens {PSEUDO_TOKENS}")
    return Vocabulary(entries=entries[:-2], frequencies=frequencies[:-2], source=str(path))
