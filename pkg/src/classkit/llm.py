"""Zero-shot behavioral-indicator prompting of a chat-completion backend.

Each utterance is judged once per indicator phrase with a fixed yes/no prompt.
If the backend's first generated token is YES, the feature value is that
token's probability (prob mode) or 1 (binary mode); anything else scores 0.
A deterministic mock backend stands in for the real service in tests and
offline runs.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
import string
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import requests

from .corpus import Dimension, Session

PREK_INDICATORS = (
    "promote analysis and reasoning",
    "facilitate creativity by brainstorming and/or planning",
    "help students to make connections",
    "provide scaffolding",
    "provide information",
    "ask students to explain their reasoning",
    "encourage and affirms",
    "ask open-ended questions",
    "repeat and extend students' language",
    "perform self- and parallel talk",
    "use advanced language",
)

TODDLER_INDICATORS = (
    "provide active facilitation of children's learning",
    "expand children's cognition",
    "promote children's active engagement",
    "provide scaffolding",
    "provide information",
    "encourage and affirms",
    "ask open-ended questions",
    "repeat and extend students' language",
    "perform self- and parallel talk",
    "use advanced language",
)

# Half-open index ranges grouping each protocol's indicators by dimension.
_GROUPINGS: dict[str, dict[Dimension, tuple[int, int]]] = {
    "prek": {Dimension.DIM1: (0, 3), Dimension.DIM2: (3, 7), Dimension.DIM3: (7, 11)},
    "toddler": {Dimension.DIM1: (0, 3), Dimension.DIM2: (3, 6), Dimension.DIM3: (6, 10)},
}

_INDICATORS: dict[str, tuple[str, ...]] = {"prek": PREK_INDICATORS, "toddler": TODDLER_INDICATORS}

SYSTEM_FEATURE = "Answer YES or NO."
SYSTEM_EXPLAIN = "Answer YES or NO and explain the reasoning."

PROMPT_TEMPLATE = (
    "In the context of a preschool classroom in which a teacher is talking to "
    "their students, does the following sentence '<indicator>' and help students "
    "to grow cognitively?\n<input text>"
)

_INDICATOR_OPEN = "does the following sentence '"
_INDICATOR_CLOSE = "' and help students to grow cognitively?\n"

TEMPERATURE = 0.6
TOP_P = 0.9
FEATURE_MAX_TOKENS = 4
EXPLAIN_MAX_TOKENS = 512

FEATURE_VALUE_MODES = ("prob", "binary")


class BackendContractError(RuntimeError):
    pass


class UnknownIndicatorError(ValueError):
    pass


class RequestFailedError(RuntimeError):
    def __init__(self, session_id: str, utterance_index: int, indicator: str, cause: Exception):
        super().__init__(
            f"backend request failed for session {session_id!r}, utterance {utterance_index}, "
            f"indicator {indicator!r}: {cause}"
        )
        self.session_id = session_id
        self.utterance_index = utterance_index
        self.indicator = indicator


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    temperature: float = TEMPERATURE
    top_p: float = TOP_P
    max_tokens: int = FEATURE_MAX_TOKENS
    want_first_token_logprob: bool = True


@dataclass(frozen=True)
class ChatResponse:
    text: str
    first_token: str
    first_token_logprob: float | None = None


@dataclass(frozen=True)
class IndicatorSet:
    """Ordered indicator phrases with their dimension grouping.

    positions records each phrase's index within the protocol's full list so
    that cached feature values stay addressable after subsetting.
    """

    protocol: str
    indicators: tuple[str, ...]
    positions: tuple[int, ...]
    grouping: dict[Dimension, tuple[int, int]]

    @classmethod
    def for_protocol(cls, protocol: str) -> "IndicatorSet":
        if protocol not in _INDICATORS:
            raise ValueError(f"unknown protocol {protocol!r}")
        indicators = _INDICATORS[protocol]
        return cls(
            protocol=protocol,
            indicators=indicators,
            positions=tuple(range(len(indicators))),
            grouping=dict(_GROUPINGS[protocol]),
        )

    def subset(self, dimension: Dimension) -> "IndicatorSet":
        if dimension not in self.grouping:
            raise KeyError(f"dimension {dimension.value!r} not in this indicator set's grouping")
        start, end = self.grouping[dimension]
        return IndicatorSet(
            protocol=self.protocol,
            indicators=self.indicators[start:end],
            positions=self.positions[start:end],
            grouping={dimension: (0, end - start)},
        )

    def feature_names(self) -> list[str]:
        return [f"llm:{phrase}" for phrase in self.indicators]


def subset(indicator_set: IndicatorSet, dimension: Dimension) -> IndicatorSet:
    return indicator_set.subset(dimension)


def render_prompt(indicator: str, input_text: str, protocol: str = "prek") -> ChatRequest:
    """Render the fixed yes/no chat for one (indicator, utterance) pair.

    The input text is substituted in double quotes on its own line, matching
    the chats the feature rule was calibrated on.
    """
    if indicator not in _INDICATORS.get(protocol, ()):
        raise UnknownIndicatorError(f"{indicator!r} is not a {protocol} indicator")
    user = PROMPT_TEMPLATE.replace("<indicator>", indicator).replace("<input text>", f'"{input_text}"')
    return ChatRequest(system=SYSTEM_FEATURE, user=user)


def split_prompt(user: str) -> tuple[str, str]:
    """Recover (indicator, input text) from a rendered user message."""
    _, found, tail = user.partition(_INDICATOR_OPEN)
    indicator, found2, quoted = tail.partition(_INDICATOR_CLOSE)
    if not found or not found2:
        raise ValueError("user message does not match the indicator prompt template")
    text = quoted
    if len(text) >= 2 and text.startswith('"') and text.endswith('"'):
        text = text[1:-1]
    return indicator, text


def _first_token_is_yes(response: ChatResponse) -> bool:
    token = response.first_token.strip().strip(string.punctuation)
    return token.upper() == "YES"


def parse_yes_feature(response: ChatResponse, mode: str = "prob") -> float:
    """Feature value for one chat: P(first token) if it was YES, else 0."""
    if mode not in FEATURE_VALUE_MODES:
        raise ValueError(f"mode must be one of {FEATURE_VALUE_MODES}, got {mode!r}")
    if not _first_token_is_yes(response):
        return 0.0
    if mode == "binary":
        return 1.0
    if response.first_token_logprob is None:
        raise BackendContractError("prob mode needs the first generated token's logprob")
    return math.exp(response.first_token_logprob)


def _stable_hash64(payload: str) -> int:
    digest = hashlib.blake2b(payload.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


class MockBackend:
    """Deterministic stand-in for a chat-completion service.

    hash policy: YES iff a stable 64-bit hash of (indicator, queried text,
    seed) is even, with logprob -(hash mod 1000)/1000. rule policy: YES iff
    the queried text contains '?' plus one of why/how/what, logprob -0.1.
    """

    def __init__(self, seed: int = 0, policy: str = "hash"):
        if policy not in ("hash", "rule"):
            raise ValueError(f"policy must be 'hash' or 'rule', got {policy!r}")
        self.seed = int(seed)
        self.policy = policy

    def complete(self, request: ChatRequest) -> ChatResponse:
        indicator, text = split_prompt(request.user)
        if self.policy == "hash":
            h = _stable_hash64(f"{indicator}\x1f{text}\x1f{self.seed}")
            yes = h % 2 == 0
            logprob = -(h % 1000) / 1000.0
        else:
            lowered = text.lower()
            yes = "?" in text and any(w in lowered for w in ("why", "how", "what"))
            logprob = -0.1
        token = "YES" if yes else "NO"
        if request.system == SYSTEM_EXPLAIN:
            body = (
                f"{token}. Mock reasoning: the judgment for '{indicator}' on the quoted "
                "utterance is fixed by the mock policy."
            )
        else:
            body = token
        return ChatResponse(text=body, first_token=token, first_token_logprob=logprob)


class RemoteBackend:
    """Client for a chat-completions endpoint that reports per-token logprobs.

    Sends {model, messages, temperature, top_p, max_tokens, logprobs} and
    reads the first generated token and its logprob from
    choices[0].logprobs.content[0]. The API credential is read from the
    environment variable named at construction, never from files or flags.
    """

    def __init__(self, endpoint_url: str, model: str, credential_env: str = "", timeout_s: float = 60.0):
        if not endpoint_url:
            raise ValueError("endpoint_url is required for the remote backend")
        self.endpoint_url = endpoint_url
        self.model = model
        self.credential_env = credential_env
        self.timeout_s = timeout_s

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
            "logprobs": bool(request.want_first_token_logprob),
        }
        headers = {"Content-Type": "application/json"}
        if self.credential_env:
            credential = os.environ.get(self.credential_env, "")
            if credential:
                headers["Authorization"] = f"Bearer {credential}"
        resp = requests.post(self.endpoint_url, json=payload, headers=headers, timeout=self.timeout_s)
        resp.raise_for_status()
        data = resp.json()
        choice = data["choices"][0]
        text = choice["message"]["content"]
        logprob_content = (choice.get("logprobs") or {}).get("content") or []
        if logprob_content:
            first_token = str(logprob_content[0]["token"])
            first_logprob = float(logprob_content[0]["logprob"])
        else:
            words = text.split()
            first_token = words[0] if words else ""
            first_logprob = None
        return ChatResponse(text=text, first_token=first_token, first_token_logprob=first_logprob)


class FeatureCache:
    """CSV-backed store of (session, utterance, indicator position) -> value.

    Lets remote featurization resume after interruption; flush() rewrites the
    file with rows sorted so identical contents give identical bytes.
    """

    HEADER = ("session_id", "utterance_index", "indicator_index", "value")

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._values: dict[tuple[str, int, int], float] = {}
        if self.path is not None and self.path.exists():
            with open(self.path, newline="", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                if header != list(self.HEADER):
                    raise ValueError(f"{self.path}: unexpected feature cache header {header!r}")
                for sid, utt, ind, value in reader:
                    self._values[(sid, int(utt), int(ind))] = float(value)

    def __len__(self) -> int:
        return len(self._values)

    def get(self, session_id: str, utterance_index: int, indicator_position: int) -> float | None:
        return self._values.get((session_id, utterance_index, indicator_position))

    def put(self, session_id: str, utterance_index: int, indicator_position: int, value: float) -> None:
        self._values[(session_id, utterance_index, indicator_position)] = value

    def flush(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.HEADER)
            for (sid, utt, ind), value in sorted(self._values.items()):
                writer.writerow([sid, utt, ind, repr(value)])


def _context_text(session: Session, i: int, context: int) -> str:
    if context == 1:
        return session.utterances[i].text
    parts = [
        session.utterances[i - 1].text if i > 0 else "",
        session.utterances[i].text,
        session.utterances[i + 1].text if i + 1 < len(session.utterances) else "",
    ]
    return " ".join(p for p in parts if p)


def _complete_with_retry(backend, request, retries, backoff_s, session_id, utterance_index, indicator):
    last: Exception | None = None
    for attempt in range(retries):
        try:
            return backend.complete(request)
        except Exception as exc:  # transport and contract failures both retried
            last = exc
            if attempt + 1 < retries and backoff_s > 0:
                time.sleep(backoff_s * (2**attempt))
    raise RequestFailedError(session_id, utterance_index, indicator, last)


def featurize_llm(
    backend,
    session: Session,
    indicator_set: IndicatorSet,
    mode: str = "prob",
    context: int = 1,
    max_concurrency: int = 1,
    cache: FeatureCache | None = None,
    retries: int = 3,
    backoff_s: float = 1.0,
) -> np.ndarray:
    """One feature row per utterance, one column per indicator.

    context=3 judges each utterance with its neighbors concatenated (boundary
    neighbors are the empty string). Requests go out in per-utterance batches
    with at most max_concurrency in flight; a request that still fails after
    retries aborts the whole session so partial rows are never returned.
    Output is assembled by (utterance, indicator) key, so values do not depend
    on completion order.
    """
    if context not in (1, 3):
        raise ValueError(f"context must be 1 or 3, got {context}")
    if mode not in FEATURE_VALUE_MODES:
        raise ValueError(f"mode must be one of {FEATURE_VALUE_MODES}, got {mode!r}")
    n_utt = len(session.utterances)
    d = len(indicator_set.indicators)
    texts = [_context_text(session, i, context) for i in range(n_utt)]
    values = np.zeros((n_utt, d), dtype=np.float64)

    def judge(task: tuple[int, int]) -> tuple[int, int, float]:
        u, j = task
        request = render_prompt(indicator_set.indicators[j], texts[u], indicator_set.protocol)
        response = _complete_with_retry(
            backend, request, retries, backoff_s, session.session_id, u, indicator_set.indicators[j]
        )
        return u, j, parse_yes_feature(response, mode)

    pool = ThreadPoolExecutor(max_workers=max_concurrency) if max_concurrency > 1 else None
    try:
        for u in range(n_utt):
            pending = []
            for j in range(d):
                position = indicator_set.positions[j]
                cached = cache.get(session.session_id, u, position) if cache is not None else None
                if cached is not None:
                    values[u, j] = cached
                else:
                    pending.append((u, j))
            results = pool.map(judge, pending) if pool is not None else map(judge, pending)
            for uu, jj, value in results:
                values[uu, jj] = value
                if cache is not None:
                    cache.put(session.session_id, uu, indicator_set.positions[jj], value)
    finally:
        if pool is not None:
            pool.shutdown(wait=True)
    if cache is not None:
        cache.flush()
    return values


def explain_indicator(backend, indicator: str, text: str, protocol: str = "prek") -> str:
    """Ask the backend to justify its yes/no call; identical prompt bytes, different system message."""
    request = render_prompt(indicator, text, protocol)
    request = replace(
        request, system=SYSTEM_EXPLAIN, max_tokens=EXPLAIN_MAX_TOKENS, want_first_token_logprob=False
    )
    return backend.complete(request).text
