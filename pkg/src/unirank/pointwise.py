"""Score-per-document rerankers.

Three scoring rules share one inference-provider boundary:

* cross-encoder: the provider's raw pair logit, unsquashed;
* seq2seq: softmax probability of the "true" token over a (true, false)
  logit pair;
* late interaction: MaxSim over token embedding matrices, i.e. the sum over
  query rows of the best dot product against any document row.

Model execution lives entirely behind :class:`InferenceProvider`.
:class:`ReferenceProvider` is a deterministic hash-embedding stand-in used
for tests and desk-scale runs.
"""

from __future__ import annotations

import enum
import hashlib
import math
from abc import ABC, abstractmethod
from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import Document, RankedResults, RankRequest, build_ranked_results
from .errors import DimensionMismatch, ProviderFailure, RerankError

PROVIDER_CONTRACT_VERSION = 1


class Role(str, enum.Enum):
    QUERY = "query"
    DOCUMENT = "document"


class ScoreRule(str, enum.Enum):
    """Which scoring kernel a pointwise backend applies."""

    PAIR_LOGIT = "pair_logit"
    TRUE_FALSE = "true_false"
    MAXSIM = "maxsim"


@dataclass(frozen=True)
class LogitPair:
    logit_true: float
    logit_false: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.logit_true) and math.isfinite(self.logit_false)):
            raise ValueError(f"non-finite logits: {self.logit_true}, {self.logit_false}")


class EmbeddingMatrix:
    """Token embeddings for one text, shape ``(rows, dim)``.

    The array is copied and frozen. When ``normalized`` is set every row must
    have unit Euclidean norm (within 1e-6).
    """

    __slots__ = ("values", "normalized")

    def __init__(self, values: np.ndarray | Sequence[Sequence[float]], normalized: bool = False) -> None:
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"embedding matrix must be 2-D and non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding matrix contains non-finite values")
        if normalized:
            norms = np.linalg.norm(arr, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ValueError("rows flagged normalized do not have unit norm")
        arr.setflags(write=False)
        self.values = arr
        self.normalized = normalized

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __repr__(self) -> str:
        return f"EmbeddingMatrix(rows={self.rows}, dim={self.dim}, normalized={self.normalized})"


@dataclass(frozen=True)
class ProviderCapabilities:
    supports_batch: bool = False
    concurrent: bool = False
    quantized: bool = False
    effective_device: str = "cpu"
    effective_precision: str = "fp32"


class InferenceProvider(ABC):
    """Plug-in contract for model execution.

    Implement the three scalar entry points. The batch variants default to
    element-wise application; overrides must return exactly the same values.
    Implementations must be pure with respect to their inputs.
    """

    contract_version = PROVIDER_CONTRACT_VERSION

    @abstractmethod
    def pair_logit(self, query: str, doc: str) -> float: ...

    @abstractmethod
    def dual_logits(self, query: str, doc: str) -> LogitPair: ...

    @abstractmethod
    def embed(self, text: str, role: Role) -> EmbeddingMatrix: ...

    @property
    def capabilities(self) -> ProviderCapabilities:
        return ProviderCapabilities()

    def pair_logits(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        return [self.pair_logit(q, d) for q, d in pairs]

    def dual_logits_batch(self, pairs: Sequence[tuple[str, str]]) -> list[LogitPair]:
        return [self.dual_logits(q, d) for q, d in pairs]

    def embed_batch(self, texts: Sequence[str], role: Role) -> list[EmbeddingMatrix]:
        return [self.embed(t, role) for t in texts]


class ReferenceProvider(InferenceProvider):
    """Deterministic provider built from hashed token vectors.

    Each lowercased whitespace token maps to a pseudo-random unit vector
    seeded by ``(seed, token)``. Row ``i`` of a text's embedding is the
    normalized mean of the token vectors in ``[i, i + window)``, so a text
    embeds to the same rows whatever its role and ``maxsim(q, q)`` is the
    largest score any document can reach for ``q``.

    Logits are affine in the mean MaxSim similarity. ``quantized=True``
    rounds token vectors to int8 levels before use, standing in for a
    CPU-optimized model.

    Args:
        seed: Seed mixed into every token hash.
        dim: Embedding width.
        window: Tokens averaged per row.
        quantized: Emulate int8 weights.
        device: Reported effective device.
        precision: Reported effective precision.
    """

    EMPTY_TOKEN = "\x00empty"

    def __init__(
        self,
        seed: int = 0,
        dim: int = 32,
        window: int = 2,
        quantized: bool = False,
        device: str = "cpu",
        precision: str = "fp32",
        scale: float = 4.0,
        bias: float = -2.0,
    ) -> None:
        if seed < 0:
            raise ValueError("seed must be unsigned")
        if dim < 1 or window < 1:
            raise ValueError("dim and window must be positive")
        self.seed = seed
        self.dim = dim
        self.window = window
        self.quantized = quantized
        self.scale = scale
        self.bias = bias
        self._caps = ProviderCapabilities(
            supports_batch=True,
            concurrent=True,
            quantized=quantized,
            effective_device=device,
            effective_precision="int8" if quantized else precision,
        )
        self._token_vector = lru_cache(maxsize=65536)(self._make_token_vector)

    @property
    def capabilities(self) -> ProviderCapabilities:
        return self._caps

    def _make_token_vector(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(f"{self.seed}\x1f{token}".encode(), digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        vec = rng.standard_normal(self.dim)
        vec /= np.linalg.norm(vec)
        if self.quantized:
            vec = np.round(vec * 127.0) / 127.0
            vec /= np.linalg.norm(vec)
        vec.setflags(write=False)
        return vec

    def embed(self, text: str, role: Role = Role.DOCUMENT) -> EmbeddingMatrix:
        tokens = text.lower().split() or [self.EMPTY_TOKEN]
        vecs = np.stack([self._token_vector(t) for t in tokens])
        n_rows = max(1, len(tokens) - self.window + 1)
        rows = np.empty((n_rows, self.dim))
        for i in range(n_rows):
            row = vecs[i : i + self.window].sum(axis=0)
            norm = np.linalg.norm(row)
            if norm < 1e-12:
                # exact cancellation; fall back to the window's first token
                row, norm = vecs[i].copy(), 1.0
            rows[i] = row / norm
        return EmbeddingMatrix(rows, normalized=True)

    def _similarity(self, query: str, doc: str) -> float:
        q = self.embed(query, Role.QUERY)
        d = self.embed(doc, Role.DOCUMENT)
        return maxsim_score(q, d) / q.rows

    def pair_logit(self, query: str, doc: str) -> float:
        return self.scale * self._similarity(query, doc) + self.bias

    def dual_logits(self, query: str, doc: str) -> LogitPair:
        s = self._similarity(query, doc)
        return LogitPair(self.scale * s, -self.scale * s)


def maxsim_score(query_emb: EmbeddingMatrix, doc_emb: EmbeddingMatrix) -> float:
    """Sum over query rows of the best dot product against any document row.

    Rows are used as given; normalization is the provider's job. Each dot
    product is reduced along the embedding axis independently of its row
    position, and the per-query maxima are summed in query order with numpy's
    pairwise summation, so permuting document rows is bit-stable.
    """
    if query_emb.dim != doc_emb.dim:
        raise DimensionMismatch(f"query dim {query_emb.dim} != document dim {doc_emb.dim}")
    q, d = query_emb.values, doc_emb.values
    sims = (q[:, None, :] * d[None, :, :]).sum(axis=2)
    return float(sims.max(axis=1).sum())


def true_probability(pair: LogitPair, log: bool = False) -> float:
    """Softmax mass on the true token, shifted by the max logit for stability."""
    m = max(pair.logit_true, pair.logit_false)
    et = math.exp(pair.logit_true - m)
    ef = math.exp(pair.logit_false - m)
    if log:
        return (pair.logit_true - m) - math.log(et + ef)
    return et / (et + ef)


def _call(fn, *args):
    try:
        return fn(*args)
    except RerankError:
        raise
    except Exception as exc:  # provider code is foreign
        raise ProviderFailure(f"provider raised {type(exc).__name__}: {exc}") from exc


def _finite(value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ProviderFailure(f"provider returned non-finite score {value}")
    return value


def cross_encoder_score(provider: InferenceProvider, query: str, doc: str) -> float:
    return _finite(_call(provider.pair_logit, query, doc))


def seq2seq_score(provider: InferenceProvider, query: str, doc: str, log: bool = False) -> float:
    pair = _call(provider.dual_logits, query, doc)
    return true_probability(pair, log=log)


def late_interaction_score(provider: InferenceProvider, query: str, doc: str) -> float:
    q = _call(provider.embed, query, Role.QUERY)
    d = _call(provider.embed, doc, Role.DOCUMENT)
    return maxsim_score(q, d)


def _batch_scores(
    rule: ScoreRule, provider: InferenceProvider, pairs: Sequence[tuple[str, str]], log: bool
) -> list[float]:
    if rule is ScoreRule.PAIR_LOGIT:
        return [_finite(s) for s in provider.pair_logits(pairs)]
    if rule is ScoreRule.TRUE_FALSE:
        return [true_probability(p, log=log) for p in provider.dual_logits_batch(pairs)]
    # embed each distinct query once
    unique_queries = list(dict.fromkeys(q for q, _ in pairs))
    q_embs = dict(zip(unique_queries, provider.embed_batch(unique_queries, Role.QUERY)))
    d_embs = provider.embed_batch([d for _, d in pairs], Role.DOCUMENT)
    return [maxsim_score(q_embs[q], de) for (q, _), de in zip(pairs, d_embs)]


_SCALAR = {
    ScoreRule.PAIR_LOGIT: lambda p, q, d, log: cross_encoder_score(p, q, d),
    ScoreRule.TRUE_FALSE: lambda p, q, d, log: seq2seq_score(p, q, d, log=log),
    ScoreRule.MAXSIM: lambda p, q, d, log: late_interaction_score(p, q, d),
}


def score_pairs(
    rule: ScoreRule,
    provider: InferenceProvider,
    pairs: Sequence[tuple[str, str]],
    log: bool = False,
) -> list[float]:
    """Score ``(query, doc)`` pairs in input order, without sorting.

    Raises:
        ProviderFailure: with ``index`` set to the first failing pair. When
            the batch call fails as a whole, pairs are rescored one by one to
            locate it.
    """
    pairs = list(pairs)
    if not pairs:
        return []
    try:
        return _batch_scores(rule, provider, pairs, log)
    except Exception as batch_exc:
        scalar = _SCALAR[rule]
        for i, (q, d) in enumerate(pairs):
            try:
                scalar(provider, q, d, log)
            except RerankError as exc:
                err = ProviderFailure(f"pair {i} failed: {exc}", index=i)
                raise err from exc
        raise ProviderFailure(f"batch scoring failed: {batch_exc}") from batch_exc


def rank_pointwise(
    rule: ScoreRule,
    provider: InferenceProvider,
    request: RankRequest,
    log: bool = False,
) -> RankedResults:
    docs: Sequence[Document] = request.documents
    try:
        scores = score_pairs(rule, provider, [(request.query, d.text) for d in docs], log=log)
    except ProviderFailure as exc:
        if exc.index is not None:
            exc.doc_id = docs[exc.index].doc_id
            exc.args = (f"document {exc.doc_id!r}: {exc.args[0]}",)
        raise
    return build_ranked_results(request.query, list(zip(docs, scores)))
