"""Construction entry point: one :class:`Reranker` for every family.

    providers = ProviderSet().register("inference", ReferenceProvider(seed=0))
    ranker = load("cross-encoder", providers=providers)
    results = ranker.rank("Who wrote Spirited Away?", ["...", "..."], doc_ids=[0, 1])

Aliases, default models and requirement descriptions come from the bundled
``manifest.ini``. Backends bind to providers from an explicit
:class:`ProviderSet`; missing pieces fail at load time with
:class:`~unirank.errors.CapabilityMissing`.
"""

from __future__ import annotations

import configparser
import enum
import importlib.resources
import importlib.util
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from .apiclient import API_ENDPOINT_ENV, API_KEY_ENV, ApiConfig, ApiRerankClient
from .core import DocId, Document, RankedResults, RankRequest, Scalar, normalize_inputs
from .errors import BackendInitFailure, CapabilityMissing, NoScoresAvailable, RerankError, UnknownModelType
from .listwise import LLMWindowRanker, OracleWindowRanker, SlidingWindowConfig, WindowRanker, rank_listwise
from .pointwise import InferenceProvider, ReferenceProvider, ScoreRule, rank_pointwise, score_pairs

LLM_ENDPOINT_ENV = "RERANK_LLM_ENDPOINT"


class RankerKind(str, enum.Enum):
    CROSS_ENCODER = "CrossEncoder"
    SEQ2SEQ = "Seq2Seq"
    LATE_INTERACTION = "LateInteraction"
    LISTWISE_LLM = "ListwiseLLM"
    HOSTED_API = "HostedAPI"
    OPTIMIZED_CPU = "OptimizedCPU"

    @property
    def alias(self) -> str:
        return MANIFEST.alias_of[self]

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Manifest:
    aliases: dict[str, RankerKind]
    default_models: dict[RankerKind, str]
    slots: dict[RankerKind, str]
    requirements: dict[RankerKind, str]
    remediation: dict[RankerKind, str]
    dependencies: dict[RankerKind, list[str]]

    @property
    def alias_of(self) -> dict[RankerKind, str]:
        return {kind: alias for alias, kind in self.aliases.items()}

    @classmethod
    def parse(cls, text: str) -> Manifest:
        cp = configparser.ConfigParser()
        cp.optionxform = str  # keep kind names' case
        cp.read_string(text)
        by_kind = lambda section: {RankerKind(k): v.strip() for k, v in cp[section].items()}  # noqa: E731
        manifest = cls(
            aliases={k.lower(): RankerKind(v.strip()) for k, v in cp["aliases"].items()},
            default_models=by_kind("default_models"),
            slots=by_kind("slots"),
            requirements=by_kind("requirements"),
            remediation=by_kind("remediation"),
            dependencies={
                RankerKind(k): [d.strip() for d in v.split(",") if d.strip()]
                for k, v in (cp["dependencies"].items() if cp.has_section("dependencies") else [])
            },
        )
        for section in ("default_models", "slots", "requirements", "remediation"):
            missing = set(RankerKind) - set(getattr(manifest, section))
            if missing:
                raise ValueError(f"manifest section [{section}] lacks {sorted(m.value for m in missing)}")
        if set(manifest.aliases.values()) != set(RankerKind):
            raise ValueError("manifest [aliases] must name every kind")
        return manifest


def _load_manifest() -> Manifest:
    text = importlib.resources.files(__package__).joinpath("manifest.ini").read_text(encoding="utf-8")
    return Manifest.parse(text)


MANIFEST = _load_manifest()


def known_aliases() -> list[str]:
    return list(MANIFEST.aliases)


def parse_kind(label: str | RankerKind) -> RankerKind:
    """Resolve an alias (case-insensitive) or a kind name to a RankerKind."""
    if isinstance(label, RankerKind):
        return label
    key = label.strip().lower()
    if key in MANIFEST.aliases:
        return MANIFEST.aliases[key]
    for kind in RankerKind:
        if kind.value.lower() == key:
            return kind
    raise UnknownModelType(label, known_aliases())


def default_model_for(kind: RankerKind | str) -> str:
    return MANIFEST.default_models[parse_kind(kind)]


_DEVICES = {"cpu": "cpu", "gpu": "gpu", "cuda": "gpu", "auto": "auto"}
_PRECISIONS = {"fp32": "fp32", "float32": "fp32", "fp16": "fp16", "float16": "fp16", "default": "default"}


@dataclass(frozen=True)
class ModelSpec:
    """Which family to build, from which model, with which hints.

    ``model_ref`` defaults to the manifest entry for ``kind``. Device and
    precision are hints; backends record what they actually used.
    """

    kind: RankerKind
    model_ref: str = ""
    device_hint: str = "auto"
    precision_hint: str = "default"
    options: Mapping[str, Scalar] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", parse_kind(self.kind))
        if not self.model_ref:
            object.__setattr__(self, "model_ref", default_model_for(self.kind))
        device = _DEVICES.get(str(self.device_hint).lower())
        if device is None:
            raise ValueError(f"device_hint must be one of cpu, gpu, auto; got {self.device_hint!r}")
        precision = _PRECISIONS.get(str(self.precision_hint).lower())
        if precision is None:
            raise ValueError(f"precision_hint must be one of fp32, fp16, default; got {self.precision_hint!r}")
        object.__setattr__(self, "device_hint", device)
        object.__setattr__(self, "precision_hint", precision)
        object.__setattr__(self, "options", dict(self.options))


class ProviderSet:
    """Named provider slots handed to :func:`load_reranker`.

    Slots used by the bundled families: ``inference``, ``quantized``,
    ``window_ranker`` and ``api``.
    """

    def __init__(self, providers: Mapping[str, Any] | None = None) -> None:
        self._slots: dict[str, Any] = dict(providers or {})

    @classmethod
    def reference(cls, seed: int = 0) -> ProviderSet:
        """Deterministic providers for every local family."""
        base = ReferenceProvider(seed=seed)
        return cls(
            {
                "inference": base,
                "quantized": ReferenceProvider(seed=seed, quantized=True),
                "window_ranker": OracleWindowRanker(base.pair_logit),
            }
        )

    def register(self, slot: str, provider: Any) -> ProviderSet:
        self._slots[slot] = provider
        return self

    def without(self, slot: str) -> ProviderSet:
        return ProviderSet({k: v for k, v in self._slots.items() if k != slot})

    def get(self, slot: str) -> Any:
        return self._slots.get(slot)

    def __contains__(self, slot: str) -> bool:
        return slot in self._slots

    @property
    def slots(self) -> list[str]:
        return sorted(self._slots)


@dataclass(frozen=True)
class Capability:
    kind: RankerKind
    available: bool
    missing_requirement: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "alias": self.kind.alias,
            "available": self.available,
            "missing_requirement": self.missing_requirement,
        }


def _env(name: str) -> str | None:
    return os.environ.get(name) or None


def check_capability(
    kind: RankerKind | str, providers: ProviderSet, options: Mapping[str, Scalar] | None = None
) -> Capability:
    """Report whether ``kind`` can be built from ``providers`` right now."""
    kind = parse_kind(kind)
    options = options or {}
    for dep in MANIFEST.dependencies.get(kind, []):
        if importlib.util.find_spec(dep) is None:
            return Capability(kind, False, f"python package '{dep}' (pip install {dep})")

    slot = MANIFEST.slots[kind]
    bound = providers.get(slot)
    if kind is RankerKind.HOSTED_API:
        if isinstance(bound, ApiConfig):
            return Capability(kind, True)
        if _env(API_KEY_ENV) is None:
            return Capability(kind, False, f"API credential environment variable {API_KEY_ENV}")
        if not options.get("endpoint_url") and _env(API_ENDPOINT_ENV) is None:
            return Capability(kind, False, f"endpoint (option endpoint_url or {API_ENDPOINT_ENV})")
        return Capability(kind, True)
    if kind is RankerKind.LISTWISE_LLM:
        if isinstance(bound, WindowRanker):
            return Capability(kind, True)
        if _env(LLM_ENDPOINT_ENV) and _env(API_KEY_ENV):
            return Capability(kind, True)
        return Capability(kind, False, f"window ranker in provider slot '{slot}' ({LLM_ENDPOINT_ENV}/{API_KEY_ENV} unset)")
    if not isinstance(bound, InferenceProvider):
        return Capability(kind, False, f"inference provider in provider slot '{slot}'")
    if kind is RankerKind.OPTIMIZED_CPU and not bound.capabilities.quantized:
        return Capability(kind, False, f"quantized provider in provider slot '{slot}' (bound provider is not quantized)")
    return Capability(kind, True)


def capabilities(providers: ProviderSet) -> list[Capability]:
    return [check_capability(kind, providers) for kind in RankerKind]


def _missing(kind: RankerKind, cap: Capability) -> CapabilityMissing:
    hint = MANIFEST.remediation[kind]
    msg = (
        f"cannot load model type '{kind.alias}' ({kind.value}): missing {cap.missing_requirement}. "
        f"Requires {MANIFEST.requirements[kind]}. Hint: {hint}"
    )
    err = CapabilityMissing(msg, requested=kind.value, missing=cap.missing_requirement or "", hint=hint)
    err.kind = kind.alias
    return err


_POINTWISE_RULES = {
    RankerKind.CROSS_ENCODER: ScoreRule.PAIR_LOGIT,
    RankerKind.OPTIMIZED_CPU: ScoreRule.PAIR_LOGIT,
    RankerKind.SEQ2SEQ: ScoreRule.TRUE_FALSE,
    RankerKind.LATE_INTERACTION: ScoreRule.MAXSIM,
}


def _opt_bool(options: Mapping[str, Scalar], key: str, default: bool = False) -> bool:
    value = options.get(key, default)
    if isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    return bool(value)


class Reranker:
    """Loaded reranker. Immutable and safe to share across threads.

    Use :meth:`rank` for re-ranking and :meth:`score_pairs` for raw
    distillation scores (score-bearing families only).
    """

    __slots__ = ("_spec", "_info", "_backend")

    def __init__(self, spec: ModelSpec, backend: Any, info: Mapping[str, Any]) -> None:
        self._spec = spec
        self._backend = backend
        self._info = dict(info)

    @property
    def kind(self) -> RankerKind:
        return self._spec.kind

    @property
    def spec(self) -> ModelSpec:
        return self._spec

    @property
    def has_scores(self) -> bool:
        return self._backend.has_scores

    @property
    def info(self) -> dict[str, Any]:
        """Effective settings: kind, model_ref, device, precision."""
        return dict(self._info)

    def __repr__(self) -> str:
        return f"Reranker(kind={self.kind.value}, model_ref={self._spec.model_ref!r})"

    def rank(
        self,
        query: str,
        docs: Sequence[str | Document],
        doc_ids: Sequence[DocId] | None = None,
        metadata: Sequence[Mapping[str, Scalar]] | None = None,
    ) -> RankedResults:
        try:
            request = RankRequest(query, tuple(normalize_inputs(docs, doc_ids, metadata)))
            return self._backend.rank(request)
        except RerankError as exc:
            if exc.kind is None:
                exc.kind = self.kind.alias
            raise

    def score_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        try:
            return self._backend.score_pairs(list(pairs))
        except RerankError as exc:
            if exc.kind is None:
                exc.kind = self.kind.alias
            raise


class _PointwiseBackend:
    has_scores = True

    def __init__(self, rule: ScoreRule, provider: InferenceProvider, log: bool) -> None:
        self.rule, self.provider, self.log = rule, provider, log

    def rank(self, request: RankRequest) -> RankedResults:
        return rank_pointwise(self.rule, self.provider, request, log=self.log)

    def score_pairs(self, pairs: list[tuple[str, str]]) -> list[float]:
        return score_pairs(self.rule, self.provider, pairs, log=self.log)


class _ListwiseBackend:
    has_scores = False

    def __init__(self, ranker: WindowRanker, config: SlidingWindowConfig) -> None:
        self.ranker, self.config = ranker, config

    def rank(self, request: RankRequest) -> RankedResults:
        return rank_listwise(request, self.ranker, self.config)

    def score_pairs(self, pairs: list[tuple[str, str]]) -> list[float]:
        raise NoScoresAvailable("listwise rerankers produce orderings, not scores")


class _ApiBackend:
    has_scores = True

    def __init__(self, client: ApiRerankClient) -> None:
        self.client = client

    def rank(self, request: RankRequest) -> RankedResults:
        return self.client.rerank(request.query, request.documents, top_n=request.desired_k)

    def score_pairs(self, pairs: list[tuple[str, str]]) -> list[float]:
        # one call per distinct query, results scattered back into pair order
        by_query: dict[str, list[int]] = {}
        for i, (q, _) in enumerate(pairs):
            by_query.setdefault(q, []).append(i)
        out = [0.0] * len(pairs)
        for q, idxs in by_query.items():
            docs = [Document(j, pairs[i][1]) for j, i in enumerate(idxs)]
            res = self.client.rerank(q, docs)
            if len(res) != len(docs):
                raise NoScoresAvailable("hosted API omitted some documents; cannot score every pair")
            for r in res:
                out[idxs[int(r.doc_id)]] = r.score  # type: ignore[assignment]
        return out


def _effective(hint: str, reported: str | None, fallback: str) -> str:
    if reported:
        return reported
    return fallback if hint in ("auto", "default") else hint


def _build_backend(spec: ModelSpec, providers: ProviderSet) -> tuple[Any, dict[str, Any]]:
    kind, opts = spec.kind, spec.options
    slot = MANIFEST.slots[kind]
    bound = providers.get(slot)
    info: dict[str, Any] = {"kind": kind.value, "alias": kind.alias, "model_ref": spec.model_ref}

    if kind in _POINTWISE_RULES:
        caps = bound.capabilities
        info |= {
            "device": _effective(spec.device_hint, caps.effective_device, "cpu"),
            "precision": _effective(spec.precision_hint, caps.effective_precision, "fp32"),
            "quantized": caps.quantized,
            "provider": type(bound).__name__,
        }
        log = _opt_bool(opts, "log_prob") if kind is RankerKind.SEQ2SEQ else False
        return _PointwiseBackend(_POINTWISE_RULES[kind], bound, log), info

    if kind is RankerKind.LISTWISE_LLM:
        config = SlidingWindowConfig(
            window_size=int(opts.get("window_size", 4)),
            stride=int(opts.get("stride", 2)),
            passes=int(opts.get("passes", 1)),
            partial_results=_opt_bool(opts, "partial_results"),
        )
        if not isinstance(bound, WindowRanker):
            bound = LLMWindowRanker(
                endpoint=str(opts.get("endpoint_url") or _env(LLM_ENDPOINT_ENV)),
                model=spec.model_ref,
                credential=_env(API_KEY_ENV),
                timeout_s=float(opts.get("timeout_ms", 30_000)) / 1000.0,
            )
        info |= {"device": "remote" if isinstance(bound, LLMWindowRanker) else "cpu",
                 "precision": spec.precision_hint, "window": config.window_size,
                 "stride": config.stride, "passes": config.passes,
                 "provider": type(bound).__name__}
        return _ListwiseBackend(bound, config), info

    # hosted API
    if isinstance(bound, ApiConfig):
        config = bound
    else:
        config = ApiConfig(
            endpoint_url=str(opts.get("endpoint_url") or _env(API_ENDPOINT_ENV)),
            credential=_env(API_KEY_ENV) or "",
            timeout_ms=int(opts.get("timeout_ms", 30_000)),
            max_retries=int(opts.get("max_retries", 3)),
            model_name=spec.model_ref,
            backoff_s=float(opts.get("backoff_s", 0.5)),
            include_unscored=_opt_bool(opts, "include_unscored"),
        )
    info |= {"device": "remote", "precision": spec.precision_hint, "endpoint": config.endpoint_url,
             "provider": "ApiRerankClient"}
    return _ApiBackend(ApiRerankClient(config)), info


def load_reranker(spec: ModelSpec, providers: ProviderSet) -> Reranker:
    """Bind ``spec`` to its provider and return a ready handle.

    Raises:
        CapabilityMissing: the family's requirement is absent from
            ``providers`` or the environment.
        BackendInitFailure: the backend raised while being constructed.
    """
    cap = check_capability(spec.kind, providers, spec.options)
    if not cap.available:
        raise _missing(spec.kind, cap)
    try:
        backend, info = _build_backend(spec, providers)
    except Exception as exc:
        err = BackendInitFailure(f"failed to initialise {spec.kind.value} backend: {type(exc).__name__}: {exc}")
        err.kind = spec.kind.alias
        raise err from exc
    return Reranker(spec, backend, info)


def load(
    model_type: str | RankerKind,
    model_ref: str = "",
    *,
    providers: ProviderSet | None = None,
    device: str = "auto",
    dtype: str = "default",
    **options: Scalar,
) -> Reranker:
    """Convenience wrapper: ``load("t5", dtype="fp32", providers=...)``."""
    spec = ModelSpec(parse_kind(model_type), model_ref, device, dtype, options)
    return load_reranker(spec, providers if providers is not None else ProviderSet())


def load_all(specs: Iterable[ModelSpec], providers: ProviderSet) -> dict[RankerKind, Reranker]:
    return {spec.kind: load_reranker(spec, providers) for spec in specs}
