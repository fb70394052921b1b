"""Listwise re-ranking with sliding windows.

A :class:`WindowRanker` receives a small window of documents and answers
with an ordering in the bracketed wire format ``"[2] > [1] > [3]"``
(1-based). :func:`slide_windows` walks fixed-size windows from the back of
the candidate list to the front, so strong documents are carried forward
window by window. Output is ordered-only: no scores.
"""

from __future__ import annotations

import logging
import random
import re
import threading
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import httpx

from .core import Document, RankedResults, RankRequest, build_ordered_results
from .errors import UnparseableWindow, WindowRankerTransportError

logger = logging.getLogger(__name__)

_BRACKETED = re.compile(r"\[(\d+)\]")


@runtime_checkable
class WindowRanker(Protocol):
    def order_window(self, query: str, docs: Sequence[tuple[int, str]]) -> str:
        """Return a permutation string over the window's local indices."""
        ...


@dataclass(frozen=True)
class SlidingWindowConfig:
    window_size: int = 4
    stride: int = 2
    passes: int = 1
    partial_results: bool = False

    def __post_init__(self) -> None:
        if self.window_size < 1 or self.stride < 1 or self.passes < 1:
            raise ValueError("window_size, stride and passes must be positive")
        if self.stride >= self.window_size:
            raise ValueError(f"stride ({self.stride}) must be smaller than window_size ({self.window_size})")


def parse_permutation(raw: str, window_len: int) -> list[int]:
    """Parse bracketed 1-based indices into a 0-based permutation.

    Out-of-range indices are dropped, repeats keep their first occurrence and
    any index never mentioned is appended in ascending order.

    Raises:
        UnparseableWindow: no usable index was found.
    """
    if window_len < 1:
        raise ValueError("window_len must be positive")
    order: list[int] = []
    seen: set[int] = set()
    for match in _BRACKETED.finditer(raw):
        idx = int(match.group(1)) - 1
        if 0 <= idx < window_len and idx not in seen:
            seen.add(idx)
            order.append(idx)
    if not order:
        raise UnparseableWindow(f"no valid window index in {raw[:80]!r}", raw=raw)
    order.extend(i for i in range(window_len) if i not in seen)
    return order


def serialize_permutation(order: Sequence[int]) -> str:
    return " > ".join(f"[{i + 1}]" for i in order)


def _window_bounds(n: int, window: int, stride: int) -> list[tuple[int, int]]:
    bounds = []
    end = n
    while True:
        start = max(0, end - window)
        bounds.append((start, end))
        if start == 0:
            return bounds
        end -= stride


def slide_windows(
    query: str,
    docs: Sequence[Document],
    ranker: WindowRanker,
    config: SlidingWindowConfig = SlidingWindowConfig(),
) -> list[Document]:
    """Reorder ``docs`` by sliding ``ranker`` over back-to-front windows.

    Each pass visits windows ``[n-w, n), [n-w-s, n-s), ...`` down to offset
    0, reordering each in place. Windows of a single document are skipped.

    Raises:
        UnparseableWindow: with ``offset`` set to the window start.
        WindowRankerTransportError: the ranker could not be reached, unless
            ``config.partial_results`` is set, in which case the order
            reached so far is returned.
    """
    order = list(docs)
    for _ in range(config.passes):
        for start, end in _window_bounds(len(order), config.window_size, config.stride):
            window = order[start:end]
            if len(window) <= 1:
                continue
            try:
                raw = ranker.order_window(query, [(i, d.text) for i, d in enumerate(window)])
            except WindowRankerTransportError:
                if config.partial_results:
                    logger.warning("window ranker unreachable at offset %d; returning partial order", start)
                    return order
                raise
            try:
                perm = parse_permutation(raw, len(window))
            except UnparseableWindow as exc:
                exc.offset = start
                exc.args = (f"window at offset {start}: {exc.args[0]}",)
                raise
            order[start:end] = [window[i] for i in perm]
    return order


def rank_listwise(
    request: RankRequest,
    ranker: WindowRanker,
    config: SlidingWindowConfig = SlidingWindowConfig(),
) -> RankedResults:
    ordered = slide_windows(request.query, request.documents, ranker, config)
    return build_ordered_results(request.query, ordered, expected=request.documents)


class OracleWindowRanker:
    """Orders each window by a relevance function, highest first.

    Ties keep window order. ``calls`` counts invocations.
    """

    def __init__(self, relevance: Callable[[str, str], float]) -> None:
        self.relevance = relevance
        self._lock = threading.Lock()
        self.calls = 0

    def order_window(self, query: str, docs: Sequence[tuple[int, str]]) -> str:
        with self._lock:
            self.calls += 1
        scored = [(-self.relevance(query, text), pos) for pos, (_, text) in enumerate(docs)]
        return serialize_permutation([pos for _, pos in sorted(scored)])


PROMPT_SYSTEM = (
    "You are RankLLM, an assistant that ranks passages by their relevance to a search query."
)


def build_window_messages(query: str, docs: Sequence[tuple[int, str]]) -> list[dict[str, str]]:
    passages = "\n".join(f"[{pos + 1}] {text}" for pos, (_, text) in enumerate(docs))
    n = len(docs)
    user = (
        f"I will provide you with {n} passages, each indicated by a numerical identifier [].\n\n"
        f"{passages}\n\n"
        f"Search query: {query}\n\n"
        f"Rank the {n} passages above by relevance to the search query, most relevant first. "
        "Answer only with identifiers in the format [] > [], e.g. [2] > [1]."
    )
    return [{"role": "system", "content": PROMPT_SYSTEM}, {"role": "user", "content": user}]


class LLMWindowRanker:
    """Window ranker backed by a chat-completion endpoint.

    Sends ``{"model", "messages", "temperature": 0}`` and reads the
    permutation from ``choices[0].message.content`` (or a top-level
    ``content`` string). Transport failures, 429 and 5xx responses are
    retried up to ``max_attempts`` times with exponential backoff.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        credential: str | None = None,
        timeout_s: float = 30.0,
        max_attempts: int = 3,
        backoff_s: float = 0.5,
        client: httpx.Client | None = None,
    ) -> None:
        if max_attempts < 1:
            raise ValueError("max_attempts must be positive")
        self.endpoint = endpoint
        self.model = model
        self._credential = credential
        self.timeout_s = timeout_s
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self._client = client or httpx.Client(timeout=timeout_s)

    def __repr__(self) -> str:
        return f"LLMWindowRanker(endpoint={self.endpoint!r}, model={self.model!r})"

    def _redact(self, text: str) -> str:
        if self._credential:
            return text.replace(self._credential, "***")
        return text

    def order_window(self, query: str, docs: Sequence[tuple[int, str]]) -> str:
        body = {"model": self.model, "messages": build_window_messages(query, docs), "temperature": 0}
        headers = {"Authorization": f"Bearer {self._credential}"} if self._credential else {}
        last = "no attempt made"
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1) * random.uniform(0.5, 1.0))
            try:
                resp = self._client.post(self.endpoint, json=body, headers=headers, timeout=self.timeout_s)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise WindowRankerTransportError(self._redact(f"LLM endpoint returned HTTP {resp.status_code}"))
            return _extract_content(resp)
        raise WindowRankerTransportError(
            self._redact(f"LLM endpoint failed after {self.max_attempts} attempts ({last})")
        )


def _extract_content(resp: httpx.Response) -> str:
    try:
        data = resp.json()
    except ValueError:
        return resp.text
    if isinstance(data, dict):
        try:
            return str(data["choices"][0]["message"]["content"])
        except (KeyError, IndexError, TypeError):
            if isinstance(data.get("content"), str):
                return data["content"]
    return resp.text
