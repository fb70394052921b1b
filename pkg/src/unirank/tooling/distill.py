"""Teacher-score export for knowledge distillation.

Scores every ``(query, doc)`` pair listed in a run file with a
score-bearing reranker and writes ``query_id<TAB>doc_id<TAB>score`` lines
in run-file order. Scores use the shortest round-trip decimal form, so the
output is byte-stable for a deterministic provider.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

from ..core import DocId, doc_key
from ..errors import InputFormatError
from ..registry import Reranker
from .files import read_docs, read_queries, read_run


@dataclass(frozen=True)
class ScoredPair:
    query_id: str
    doc_id: DocId
    score: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.score):
            raise ValueError(f"non-finite score for ({self.query_id}, {self.doc_id})")

    def to_tsv(self) -> str:
        return f"{self.query_id}\t{doc_key(self.doc_id)}\t{self.score!r}"

    def to_jsonl(self) -> str:
        return json.dumps({"query_id": self.query_id, "doc_id": self.doc_id, "score": self.score})


def export_distillation(
    queries_path: str | Path,
    run_path: str | Path,
    docs_path: str | Path,
    handle: Reranker,
    out: TextIO,
    fmt: str = "tsv",
    batch_size: int = 256,
) -> int:
    """Write one scored line per run-file entry; return the line count.

    Queries without run entries produce no lines.

    Raises:
        InputFormatError: a malformed line, or a run entry naming an unknown
            query or document (with its line number).
    """
    if fmt not in ("tsv", "jsonl"):
        raise ValueError(f"format must be tsv or jsonl, got {fmt!r}")
    queries = dict(read_queries(queries_path))
    docs = {doc_key(d.doc_id): d for d in read_docs(docs_path)}
    entries = []
    for lineno, qid, did in read_run(run_path):
        if qid not in queries:
            raise InputFormatError(f"unknown query_id {qid!r}", path=str(run_path), line=lineno)
        if did not in docs:
            raise InputFormatError(f"unknown doc_id {did!r}", path=str(run_path), line=lineno)
        entries.append((qid, docs[did]))

    written = 0
    for start in range(0, len(entries), batch_size):
        chunk = entries[start : start + batch_size]
        scores = handle.score_pairs([(queries[qid], doc.text) for qid, doc in chunk])
        for (qid, doc), score in zip(chunk, scores):
            pair = ScoredPair(qid, doc.doc_id, score)
            out.write((pair.to_tsv() if fmt == "tsv" else pair.to_jsonl()) + "\n")
            written += 1
    return written
