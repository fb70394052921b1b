"""Domain model shared by every backend.

Documents go in, a :class:`RankedResults` comes out. Results are either
score-bearing (pointwise and hosted rerankers) or ordered-only (listwise
rerankers), distinguished by ``has_scores``.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Union

from .errors import (
    DuplicateDocId,
    InvalidDocId,
    InvalidMetadata,
    LengthMismatch,
    NoScoresAvailable,
    NotAPermutation,
    UnknownDocId,
)

DocId = Union[int, str]
Scalar = Union[str, int, float, bool, None]

__all__ = [
    "DocId",
    "Document",
    "RankRequest",
    "RankedResults",
    "Result",
    "build_ordered_results",
    "build_ranked_results",
    "doc_key",
    "get_score_by_docid",
    "normalize_inputs",
    "top_k",
]


def doc_key(doc_id: DocId) -> str:
    """Canonical text form of a document id.

    Integer and text ids share one namespace, so ``7`` and ``"7"`` collide.
    """
    if isinstance(doc_id, bool) or not isinstance(doc_id, (int, str)):
        raise InvalidDocId(f"doc_id must be an int or str, got {type(doc_id).__name__}")
    return str(doc_id)


def _check_metadata(metadata: Any) -> dict[str, Scalar]:
    if not isinstance(metadata, Mapping):
        raise InvalidMetadata(f"metadata must be a mapping, got {type(metadata).__name__}")
    out: dict[str, Scalar] = {}
    for key, value in metadata.items():
        if not isinstance(key, str):
            raise InvalidMetadata(f"metadata keys must be text, got {key!r}")
        if value is not None and not isinstance(value, (str, int, float, bool)):
            raise InvalidMetadata(f"metadata value for {key!r} is not a scalar: {type(value).__name__}")
        out[key] = value
    return out


@dataclass(frozen=True)
class Document:
    """A unit of text to be re-ranked.

    ``metadata`` is copied on construction; treat it as read-only.
    """

    doc_id: DocId
    text: str
    metadata: dict[str, Scalar] = field(default_factory=dict)

    def __post_init__(self) -> None:
        doc_key(self.doc_id)
        if not isinstance(self.text, str):
            raise TypeError(f"document text must be str, got {type(self.text).__name__}")
        object.__setattr__(self, "metadata", _check_metadata(self.metadata))


@dataclass(frozen=True)
class Result:
    document: Document
    score: float | None
    rank: int

    @property
    def doc_id(self) -> DocId:
        return self.document.doc_id

    @property
    def text(self) -> str:
        return self.document.text

    @property
    def metadata(self) -> dict[str, Scalar]:
        return self.document.metadata


@dataclass(frozen=True)
class RankedResults:
    """Ordered output of a reranker.

    Construction validates the ordering invariants: ranks run ``1..n`` along
    the sequence, scores are present exactly when ``has_scores`` is set and
    never increase, and doc ids are unique.
    """

    query: str
    results: tuple[Result, ...]
    has_scores: bool

    def __post_init__(self) -> None:
        results = tuple(self.results)
        object.__setattr__(self, "results", results)
        seen: set[str] = set()
        prev: float | None = None
        for pos, res in enumerate(results, start=1):
            if res.rank != pos:
                raise ValueError(f"rank {res.rank} at position {pos}; ranks must be 1..n")
            key = doc_key(res.document.doc_id)
            if key in seen:
                raise DuplicateDocId(f"doc_id {res.document.doc_id!r} appears more than once")
            seen.add(key)
            if self.has_scores:
                if res.score is None:
                    raise ValueError(f"result at rank {pos} has no score but has_scores is set")
                if prev is not None and res.score > prev:
                    raise ValueError(f"score at rank {pos} exceeds the score above it")
                prev = res.score
            elif res.score is not None:
                raise ValueError("ordered-only results must not carry scores")

    def __iter__(self) -> Iterator[Result]:
        return iter(self.results)

    def __len__(self) -> int:
        return len(self.results)

    def __getitem__(self, i: int) -> Result:
        return self.results[i]

    @property
    def documents(self) -> list[Document]:
        return [r.document for r in self.results]

    def top_k(self, k: int) -> RankedResults:
        return top_k(self, k)

    def get_score_by_docid(self, doc_id: DocId) -> float:
        return get_score_by_docid(self, doc_id)

    def get_result_by_docid(self, doc_id: DocId) -> Result:
        key = doc_key(doc_id)
        for res in self.results:
            if doc_key(res.document.doc_id) == key:
                return res
        raise UnknownDocId(f"no result with doc_id {doc_id!r}")

    def to_dict(self) -> dict[str, Any]:
        rows = []
        for res in self.results:
            row: dict[str, Any] = {
                "doc_id": res.document.doc_id,
                "text": res.document.text,
                "metadata": dict(res.document.metadata),
            }
            if self.has_scores:
                row["score"] = res.score
            row["rank"] = res.rank
            rows.append(row)
        return {"query": self.query, "has_scores": self.has_scores, "results": rows}

    def to_json(self) -> str:
        # float repr is the shortest round-trip decimal
        return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RankedResults:
        has_scores = bool(data["has_scores"])
        results = []
        for row in data["results"]:
            doc = Document(row["doc_id"], row["text"], row.get("metadata") or {})
            score = float(row["score"]) if has_scores else None
            results.append(Result(doc, score, int(row["rank"])))
        return cls(query=data["query"], results=tuple(results), has_scores=has_scores)

    @classmethod
    def from_json(cls, text: str) -> RankedResults:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class RankRequest:
    query: str
    documents: tuple[Document, ...]
    desired_k: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "documents", tuple(self.documents))
        if self.desired_k is not None and self.desired_k < 1:
            raise ValueError("desired_k must be a positive integer")
        _check_unique(self.documents)


def _check_unique(docs: Sequence[Document]) -> None:
    seen: set[str] = set()
    for doc in docs:
        key = doc_key(doc.doc_id)
        if key in seen:
            raise DuplicateDocId(f"doc_id {doc.doc_id!r} appears more than once")
        seen.add(key)


def normalize_inputs(
    texts: Sequence[str | Document],
    doc_ids: Sequence[DocId] | None = None,
    metadata: Sequence[Mapping[str, Scalar]] | None = None,
) -> list[Document]:
    """Turn the parallel ``rank`` arguments into a list of Documents.

    ``texts`` may hold strings or ready-made Documents (not mixed with
    ``doc_ids``/``metadata``). Missing ids default to positions ``0..n-1`` and
    missing metadata to empty maps.

    Raises:
        LengthMismatch: a parallel sequence has a different length.
        DuplicateDocId: two documents share an id.
    """
    texts = list(texts)
    if any(isinstance(t, Document) for t in texts):
        if not all(isinstance(t, Document) for t in texts):
            raise TypeError("cannot mix Document objects and plain strings")
        if doc_ids is not None or metadata is not None:
            raise TypeError("doc_ids/metadata cannot be combined with Document inputs")
        docs = list(texts)
        _check_unique(docs)
        return docs  # type: ignore[return-value]

    n = len(texts)
    if doc_ids is not None and len(doc_ids) != n:
        raise LengthMismatch(f"got {len(doc_ids)} doc_ids for {n} documents")
    if metadata is not None and len(metadata) != n:
        raise LengthMismatch(f"got {len(metadata)} metadata entries for {n} documents")
    ids: Sequence[DocId] = list(doc_ids) if doc_ids is not None else list(range(n))
    metas = list(metadata) if metadata is not None else [{} for _ in range(n)]
    docs = [Document(i, t, m) for i, t, m in zip(ids, texts, metas)]
    _check_unique(docs)
    return docs


def build_ranked_results(query: str, scored: Sequence[tuple[Document, float]]) -> RankedResults:
    """Sort scored documents descending; ties keep input order."""
    scored = list(scored)
    for _, score in scored:
        if isinstance(score, float) and math.isnan(score):
            raise ValueError("NaN score cannot be ranked")
    order = sorted(range(len(scored)), key=lambda i: -scored[i][1])
    results = tuple(
        Result(scored[i][0], float(scored[i][1]), rank) for rank, i in enumerate(order, start=1)
    )
    return RankedResults(query=query, results=results, has_scores=True)


def build_ordered_results(
    query: str,
    ordered: Sequence[Document],
    expected: Sequence[Document] | None = None,
) -> RankedResults:
    """Wrap an ordering with no scores.

    When ``expected`` is given, ``ordered`` must be a permutation of it.
    """
    keys = [doc_key(d.doc_id) for d in ordered]
    if len(set(keys)) != len(keys):
        raise NotAPermutation("ordering contains a duplicate document")
    if expected is not None:
        want = {doc_key(d.doc_id) for d in expected}
        if len(expected) != len(ordered) or want != set(keys):
            raise NotAPermutation("ordering is not a permutation of the request's documents")
    results = tuple(Result(doc, None, rank) for rank, doc in enumerate(ordered, start=1))
    return RankedResults(query=query, results=results, has_scores=False)


def top_k(results: RankedResults, k: int) -> RankedResults:
    """First ``min(k, n)`` results; ``k`` larger than ``n`` clamps."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    return RankedResults(query=results.query, results=results.results[:k], has_scores=results.has_scores)


def get_score_by_docid(results: RankedResults, doc_id: DocId) -> float:
    if not results.has_scores:
        raise NoScoresAvailable("results are ordered-only and carry no scores")
    score = results.get_result_by_docid(doc_id).score
    assert score is not None
    return score
