"""Provider selection shared by the CLI and the service.

Models config (INI), one section per loaded model, named by alias::

    [cross-encoder]
    model = reference/cross-encoder-minilm-l6
    provider = reference
    seed = 0

    [api]
    provider = external
    endpoint_url = https://rerank.example.com/v1/rerank

Keys other than ``model``, ``provider``, ``seed``, ``provider_factory``,
``device`` and ``precision`` become backend options.
"""

from __future__ import annotations

import configparser
import importlib
from pathlib import Path

from ..errors import InputFormatError
from ..pointwise import InferenceProvider
from ..registry import ModelSpec, ProviderSet, RankerKind, Reranker, load_reranker, parse_kind

PROVIDER_CHOICES = ("reference", "external")
_RESERVED = {"model", "provider", "seed", "provider_factory", "device", "precision"}


def _import_factory(ref: str):
    module, _, attr = ref.partition(":")
    if not module or not attr:
        raise ValueError(f"provider factory must look like 'package.module:callable', got {ref!r}")
    return getattr(importlib.import_module(module), attr)


def build_providers(provider: str, seed: int = 0, factory: str | None = None) -> ProviderSet:
    """``reference`` binds the deterministic providers; ``external`` binds
    only what ``factory`` builds and leaves remote families to the environment."""
    if provider == "reference":
        providers = ProviderSet.reference(seed)
    elif provider == "external":
        providers = ProviderSet()
    else:
        raise ValueError(f"provider must be one of {PROVIDER_CHOICES}, got {provider!r}")
    if factory:
        made = _import_factory(factory)()
        if not isinstance(made, InferenceProvider):
            raise TypeError(f"{factory} did not return an InferenceProvider")
        providers.register("inference", made)
        if made.capabilities.quantized:
            providers.register("quantized", made)
    return providers


def _coerce(value: str):
    low = value.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def load_models_config(path: str | Path) -> dict[RankerKind, Reranker]:
    cp = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise InputFormatError(f"cannot open models config {path}: {exc.strerror}") from exc
    handles: dict[RankerKind, Reranker] = {}
    for section in cp.sections():
        body = cp[section]
        providers = build_providers(
            body.get("provider", "reference"), int(body.get("seed", "0")), body.get("provider_factory")
        )
        spec = ModelSpec(
            kind=parse_kind(section),
            model_ref=body.get("model", ""),
            device_hint=body.get("device", "auto"),
            precision_hint=body.get("precision", "default"),
            options={k: _coerce(v) for k, v in body.items() if k not in _RESERVED},
        )
        handles[spec.kind] = load_reranker(spec, providers)
    if not handles:
        raise InputFormatError(f"models config {path} loads no models")
    return handles
