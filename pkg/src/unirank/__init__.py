"""Unified re-ranking: one load-and-rank interface over many reranker families."""

from .apiclient import ApiConfig
from .core import (
    Document,
    RankedResults,
    RankRequest,
    Result,
    build_ordered_results,
    build_ranked_results,
    get_score_by_docid,
    normalize_inputs,
    top_k,
)
from .errors import RerankError
from .listwise import LLMWindowRanker, OracleWindowRanker, SlidingWindowConfig, WindowRanker
from .pointwise import EmbeddingMatrix, InferenceProvider, LogitPair, ProviderCapabilities, ReferenceProvider, Role
from .registry import (
    Capability,
    ModelSpec,
    ProviderSet,
    RankerKind,
    Reranker,
    check_capability,
    default_model_for,
    load,
    load_reranker,
    parse_kind,
)

__version__ = "0.1.0"

__all__ = [
    "ApiConfig",
    "Capability",
    "Document",
    "EmbeddingMatrix",
    "InferenceProvider",
    "LLMWindowRanker",
    "LogitPair",
    "ModelSpec",
    "OracleWindowRanker",
    "ProviderCapabilities",
    "ProviderSet",
    "RankRequest",
    "RankedResults",
    "RankerKind",
    "ReferenceProvider",
    "Reranker",
    "RerankError",
    "Result",
    "Role",
    "SlidingWindowConfig",
    "WindowRanker",
    "build_ordered_results",
    "build_ranked_results",
    "check_capability",
    "default_model_for",
    "get_score_by_docid",
    "load",
    "load_reranker",
    "normalize_inputs",
    "parse_kind",
    "top_k",
]
