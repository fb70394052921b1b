"""``unirank`` command line.

    unirank rerank --model-type cross-encoder --query "Who wrote Spirited Away?" --docs docs.jsonl
    unirank export --model-type t5 --queries q.jsonl --run run.tsv --docs docs.jsonl --out scores.tsv
    unirank serve --config models.ini --port 8000

Exit status: 0 on success, 2 on usage or input errors, 1 on backend errors.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence

from ..core import RankedResults, doc_key, top_k
from ..errors import InputError, InputFormatError, RerankError, UnknownModelType
from ..registry import ModelSpec, Reranker, load_reranker, parse_kind
from .config import PROVIDER_CHOICES, _coerce, build_providers
from .files import read_docs


class UsageError(Exception):
    pass


def _option(text: str) -> tuple[str, object]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key, _coerce(value)


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model-type", required=True, help="reranker alias, e.g. cross-encoder, t5, colbert")
    p.add_argument("--model", default="", help="model name or path (default: manifest entry)")
    p.add_argument("--provider", choices=PROVIDER_CHOICES, default="reference")
    p.add_argument("--provider-factory", help="package.module:callable returning an InferenceProvider")
    p.add_argument("--seed", type=int, default=0, help="reference provider seed")
    p.add_argument("--device", default="auto")
    p.add_argument("--precision", default="default")
    p.add_argument("--option", type=_option, action="append", default=[], metavar="KEY=VALUE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unirank", description="Re-rank documents with any reranker family.")
    sub = parser.add_subparsers(dest="command", required=True)

    rr = sub.add_parser("rerank", help="re-rank a JSONL file of documents for one query")
    _add_model_flags(rr)
    rr.add_argument("--query", required=True)
    rr.add_argument("--docs", required=True, help="JSONL with doc_id, text, metadata")
    rr.add_argument("--top-k", type=_positive)
    rr.add_argument("--format", choices=("json", "tsv"), default="json")

    ex = sub.add_parser("export", help="write teacher scores for distillation")
    _add_model_flags(ex)
    ex.add_argument("--queries", required=True, help="JSONL with query_id, query")
    ex.add_argument("--run", required=True, help="query_id<TAB>doc_id per line")
    ex.add_argument("--docs", required=True)
    ex.add_argument("--out", default="-")
    ex.add_argument("--format", choices=("tsv", "jsonl"), default="tsv")

    sv = sub.add_parser("serve", help="serve POST /rerank over HTTP")
    sv.add_argument("--config", required=True, help="models config (INI)")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    return parser


def _load(args: argparse.Namespace) -> Reranker:
    try:
        kind = parse_kind(args.model_type)
        spec = ModelSpec(kind, args.model, args.device, args.precision, dict(args.option))
        providers = build_providers(args.provider, args.seed, args.provider_factory)
    except UnknownModelType:
        raise
    except (ValueError, TypeError, ImportError, AttributeError) as exc:
        raise UsageError(str(exc)) from exc
    return load_reranker(spec, providers)


def format_tsv(results: RankedResults) -> str:
    lines = []
    for r in results:
        score = repr(r.score) if results.has_scores else ""
        lines.append(f"{r.rank}\t{doc_key(r.doc_id)}\t{score}")
    return "\n".join(lines)


def _cmd_rerank(args: argparse.Namespace) -> int:
    handle = _load(args)
    docs = read_docs(args.docs)
    results = handle.rank(args.query, docs)
    if args.top_k is not None:
        results = top_k(results, args.top_k)
    text = results.to_json() if args.format == "json" else format_tsv(results)
    sys.stdout.write(text + "\n")
    return 0


def _cmd_export(args: argparse.Namespace) -> int:
    from .distill import export_distillation

    handle = _load(args)
    if args.out == "-":
        export_distillation(args.queries, args.run, args.docs, handle, sys.stdout, fmt=args.format)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            export_distillation(args.queries, args.run, args.docs, handle, fh, fmt=args.format)
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .config import load_models_config
    from .service import create_app

    app = create_app(load_models_config(args.config))
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


_COMMANDS = {"rerank": _cmd_rerank, "export": _cmd_export, "serve": _cmd_serve}


def _report(name: str, exc: BaseException) -> None:
    msg = " ".join(str(exc).split())
    sys.stderr.write(f"unirank: error: {name}: {msg}\n")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (UnknownModelType, InputError, InputFormatError) as exc:
        _report(exc.name, exc)
        return 2
    except UsageError as exc:
        _report("UsageError", exc)
        return 2
    except RerankError as exc:
        _report(exc.name, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
