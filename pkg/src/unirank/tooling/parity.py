"""Agreement between two rerankers' outputs on the same queries."""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from scipy.stats import kendalltau

from ..core import RankedResults, doc_key
from ..errors import QueryMismatch


@dataclass(frozen=True)
class ParityThresholds:
    # Artifact policy for identical providers, not a published tolerance.
    min_tau: float = 0.99
    max_delta: float = 1e-4


@dataclass(frozen=True)
class QueryParity:
    query_id: str
    shared: int
    tau: float
    max_delta: float | None
    passed: bool


@dataclass(frozen=True)
class ParityReport:
    queries: tuple[QueryParity, ...]
    mean_tau: float
    mean_delta: float | None
    passed: bool
    thresholds: ParityThresholds


def kendall_tau(order_a: Sequence[str], order_b: Sequence[str]) -> float:
    """Kendall rank correlation of the items both orderings contain.

    Fewer than two shared items count as perfect agreement.
    """
    pos_b = {item: i for i, item in enumerate(order_b)}
    shared = [item for item in order_a if item in pos_b]
    if len(shared) < 2:
        return 1.0
    tau = kendalltau(range(len(shared)), [pos_b[item] for item in shared]).statistic
    return float(tau)


def _keyed(results: Mapping[str, RankedResults] | Sequence[RankedResults]) -> dict[str, RankedResults]:
    if isinstance(results, Mapping):
        return dict(results)
    keyed: dict[str, RankedResults] = {}
    for r in results:
        if r.query in keyed:
            raise QueryMismatch(f"query {r.query!r} appears twice")
        keyed[r.query] = r
    return keyed


def parity_check(
    results_a: Mapping[str, RankedResults] | Sequence[RankedResults],
    results_b: Mapping[str, RankedResults] | Sequence[RankedResults],
    thresholds: ParityThresholds = ParityThresholds(),
) -> ParityReport:
    """Compare two result sets keyed by query id (or by query text).

    Score deltas are only computed when both sides carry scores.

    Raises:
        QueryMismatch: the two sides cover different queries.
    """
    a, b = _keyed(results_a), _keyed(results_b)
    if set(a) != set(b):
        only_a, only_b = sorted(set(a) - set(b)), sorted(set(b) - set(a))
        raise QueryMismatch(f"query sets differ: only in a {only_a[:5]}, only in b {only_b[:5]}")
    rows = []
    for qid in a:
        ra, rb = a[qid], b[qid]
        keys_a = [doc_key(r.doc_id) for r in ra]
        keys_b = [doc_key(r.doc_id) for r in rb]
        tau = kendall_tau(keys_a, keys_b)
        delta = None
        if ra.has_scores and rb.has_scores:
            scores_b = {doc_key(r.doc_id): r.score for r in rb}
            diffs = [abs(r.score - scores_b[doc_key(r.doc_id)]) for r in ra if doc_key(r.doc_id) in scores_b]
            delta = max(diffs, default=0.0)
        ok = tau >= thresholds.min_tau and (delta is None or delta <= thresholds.max_delta)
        shared = len(set(keys_a) & set(keys_b))
        rows.append(QueryParity(qid, shared, tau, delta, ok))
    deltas = [r.max_delta for r in rows if r.max_delta is not None]
    return ParityReport(
        queries=tuple(rows),
        mean_tau=math.fsum(r.tau for r in rows) / len(rows) if rows else 1.0,
        mean_delta=math.fsum(deltas) / len(deltas) if deltas else None,
        passed=all(r.passed for r in rows),
        thresholds=thresholds,
    )
