"""Client for hosted reranking endpoints.

Wire shape (generic, Cohere-like)::

    POST {endpoint_url}
    Authorization: Bearer <credential>
    {"model": str, "query": str, "documents": [str], "top_n": int?}

    200 {"results": [{"index": int, "relevance_score": float}, ...]}

Only texts go over the wire. Returned indices are joined back onto the local
Documents, and the final ordering is recomputed locally from the scores.
"""

from __future__ import annotations

import json
import logging
import math
import os
import random
import threading
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import httpx

from .core import Document, RankedResults, build_ranked_results
from .errors import ApiError, AuthError, MalformedResponse, RateLimited, Timeout

logger = logging.getLogger(__name__)

API_KEY_ENV = "RERANK_API_KEY"
API_ENDPOINT_ENV = "RERANK_API_ENDPOINT"


@dataclass(frozen=True)
class ApiConfig:
    """Connection settings for a hosted reranker.

    ``credential`` is excluded from ``repr`` and scrubbed from every error
    message the client renders.
    """

    endpoint_url: str
    credential: str = field(repr=False)
    timeout_ms: int = 30_000
    max_retries: int = 3
    model_name: str = "rerank-default"
    backoff_s: float = 0.5
    include_unscored: bool = False

    def __post_init__(self) -> None:
        if not self.endpoint_url:
            raise ValueError("endpoint_url is required")
        if not self.credential:
            raise ValueError("credential is required")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if not 0 <= self.max_retries <= 10:
            raise ValueError("max_retries must be between 0 and 10")

    @classmethod
    def from_env(cls, endpoint_url: str | None = None, **kwargs: Any) -> ApiConfig:
        """Read the credential (and optionally the endpoint) from the environment."""
        credential = kwargs.pop("credential", None) or os.environ.get(API_KEY_ENV)
        endpoint_url = endpoint_url or os.environ.get(API_ENDPOINT_ENV)
        if not credential:
            raise ValueError(f"no credential: set {API_KEY_ENV}")
        if not endpoint_url:
            raise ValueError(f"no endpoint: set {API_ENDPOINT_ENV}")
        return cls(endpoint_url=endpoint_url, credential=credential, **kwargs)


@dataclass
class Telemetry:
    attempts: int = 0
    retries: int = 0
    failures: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def bump(self, name: str) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + 1)


def parse_response(payload: Any, n_docs: int) -> list[tuple[int, float]]:
    """Validate a response body and return ``(index, score)`` pairs.

    Raises:
        MalformedResponse: wrong shape, index out of range or repeated, or a
            non-finite score.
    """
    if not isinstance(payload, dict) or not isinstance(payload.get("results"), list):
        raise MalformedResponse("response body must be an object with a 'results' list")
    out: list[tuple[int, float]] = []
    seen: set[int] = set()
    for i, item in enumerate(payload["results"]):
        if not isinstance(item, dict):
            raise MalformedResponse(f"results[{i}] is not an object")
        idx, score = item.get("index"), item.get("relevance_score")
        if isinstance(idx, bool) or not isinstance(idx, int):
            raise MalformedResponse(f"results[{i}].index is not an integer")
        if not 0 <= idx < n_docs:
            raise MalformedResponse(f"results[{i}].index {idx} out of range for {n_docs} documents")
        if idx in seen:
            raise MalformedResponse(f"results[{i}].index {idx} is repeated")
        if isinstance(score, bool) or not isinstance(score, (int, float)) or not math.isfinite(score):
            raise MalformedResponse(f"results[{i}].relevance_score is not a finite number")
        seen.add(idx)
        out.append((idx, float(score)))
    return out


class ApiRerankClient:
    """Immutable client; safe to share across threads.

    RateLimited (429), 5xx and timeouts are retried with jittered exponential
    backoff, for at most ``1 + config.max_retries`` attempts per call.
    """

    def __init__(self, config: ApiConfig, client: httpx.Client | None = None) -> None:
        self.config = config
        self.telemetry = Telemetry()
        self._http = client or httpx.Client()

    def __repr__(self) -> str:
        return f"ApiRerankClient(endpoint={self.config.endpoint_url!r}, model={self.config.model_name!r})"

    def _redact(self, text: str) -> str:
        return text.replace(self.config.credential, "***")

    def _fail(self, cls: type[ApiError], message: str, status: int | None = None) -> ApiError:
        self.telemetry.bump("failures")
        return cls(self._redact(message), status=status)

    def _delay(self, attempt: int, retry_after: str | None) -> float:
        base = self.config.backoff_s * 2**attempt
        if retry_after is not None:
            try:
                base = max(base, min(float(retry_after), 30.0))
            except ValueError:
                pass
        return base * random.uniform(0.5, 1.0)

    def post(self, body: dict[str, Any]) -> Any:
        """Send one rerank call with retries; return the decoded JSON body."""
        cfg = self.config
        headers = {"Authorization": f"Bearer {cfg.credential}", "Content-Type": "application/json"}
        timeout = cfg.timeout_ms / 1000.0
        last_kind: type[ApiError] = ApiError
        last_msg = ""
        last_status: int | None = None
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                self.telemetry.bump("retries")
            self.telemetry.bump("attempts")
            try:
                resp = self._http.post(cfg.endpoint_url, json=body, headers=headers, timeout=timeout)
            except httpx.TimeoutException:
                last_kind, last_msg, last_status = Timeout, f"request timed out after {cfg.timeout_ms} ms", None
                retry_after = None
            except httpx.HTTPError as exc:
                last_kind, last_msg, last_status = ApiError, f"transport error: {type(exc).__name__}: {exc}", None
                retry_after = None
            else:
                status = resp.status_code
                if status in (401, 403):
                    raise self._fail(AuthError, f"endpoint rejected the credential (HTTP {status})", status)
                if status == 429:
                    last_kind, last_msg, last_status = RateLimited, "rate limited (HTTP 429)", status
                    retry_after = resp.headers.get("Retry-After")
                elif status >= 500:
                    last_kind, last_msg, last_status = ApiError, f"server error (HTTP {status})", status
                    retry_after = None
                elif status >= 400:
                    raise self._fail(ApiError, f"request rejected (HTTP {status}): {resp.text[:200]}", status)
                else:
                    try:
                        return resp.json()
                    except (json.JSONDecodeError, ValueError):
                        raise self._fail(MalformedResponse, "response body is not valid JSON", status) from None
            if attempt < cfg.max_retries:
                delay = self._delay(attempt, retry_after)
                logger.debug("retrying hosted rerank in %.3fs after: %s", delay, last_msg)
                time.sleep(delay)
        attempts = cfg.max_retries + 1
        raise self._fail(last_kind, f"{last_msg}; gave up after {attempts} attempts", last_status)

    def rerank(self, query: str, docs: Sequence[Document], top_n: int | None = None) -> RankedResults:
        docs = list(docs)
        if not docs:
            return build_ranked_results(query, [])
        body: dict[str, Any] = {
            "model": self.config.model_name,
            "query": query,
            "documents": [d.text for d in docs],
        }
        if top_n is not None:
            body["top_n"] = top_n
        pairs = parse_response(self.post(body), len(docs))
        scored = [(docs[i], s) for i, s in pairs]
        if self.config.include_unscored:
            returned = {i for i, _ in pairs}
            # unscored documents sort last, in input order
            scored += [(d, -math.inf) for i, d in enumerate(docs) if i not in returned]
        return build_ranked_results(query, scored)


def api_rerank(
    config: ApiConfig,
    query: str,
    docs: Sequence[Document],
    top_n: int | None = None,
) -> RankedResults:
    return ApiRerankClient(config).rerank(query, docs, top_n=top_n)
