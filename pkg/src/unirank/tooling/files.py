"""Line-oriented input files.

* docs JSONL: ``{"doc_id": int|str, "text": str, "metadata": {...}?}``
* queries JSONL: ``{"query_id": str, "query": str}``
* run file: ``query_id<TAB>doc_id`` per line
"""

from __future__ import annotations

import json
from collections.abc import Iterator
from pathlib import Path

from ..core import Document, doc_key
from ..errors import InputFormatError, RerankError


def _lines(path: str | Path) -> Iterator[tuple[int, str]]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise InputFormatError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if line.strip():
                yield lineno, line


def _json_object(path: str | Path, lineno: int, line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"invalid JSON: {exc.msg}", path=str(path), line=lineno) from None
    if not isinstance(obj, dict):
        raise InputFormatError("expected a JSON object", path=str(path), line=lineno)
    return obj


def read_docs(path: str | Path) -> list[Document]:
    docs: list[Document] = []
    seen: set[str] = set()
    for lineno, line in _lines(path):
        obj = _json_object(path, lineno, line)
        try:
            doc = Document(obj["doc_id"], obj["text"], obj.get("metadata") or {})
        except KeyError as exc:
            raise InputFormatError(f"missing field {exc.args[0]!r}", path=str(path), line=lineno) from None
        except (RerankError, TypeError) as exc:
            raise InputFormatError(str(exc), path=str(path), line=lineno) from None
        key = doc_key(doc.doc_id)
        if key in seen:
            raise InputFormatError(f"duplicate doc_id {doc.doc_id!r}", path=str(path), line=lineno)
        seen.add(key)
        docs.append(doc)
    return docs


def read_queries(path: str | Path) -> list[tuple[str, str]]:
    out: list[tuple[str, str]] = []
    seen: set[str] = set()
    for lineno, line in _lines(path):
        obj = _json_object(path, lineno, line)
        qid, query = obj.get("query_id"), obj.get("query")
        if qid is None or not isinstance(query, str):
            raise InputFormatError("expected query_id and query fields", path=str(path), line=lineno)
        qid = str(qid)
        if qid in seen:
            raise InputFormatError(f"duplicate query_id {qid!r}", path=str(path), line=lineno)
        seen.add(qid)
        out.append((qid, query))
    return out


def read_run(path: str | Path) -> list[tuple[int, str, str]]:
    """Return ``(line number, query_id, doc_id)`` triples in file order."""
    out = []
    for lineno, line in _lines(path):
        parts = line.split("\t")
        if len(parts) < 2 or not parts[0] or not parts[1]:
            raise InputFormatError("expected query_id<TAB>doc_id", path=str(path), line=lineno)
        out.append((lineno, parts[0], parts[1]))
    return out
