import io
import itertools
import json
import os
import random
import subprocess
import sys

import pytest
from fastapi.testclient import TestClient

from unirank.core import RankedResults, build_ordered_results, build_ranked_results, normalize_inputs
from unirank.errors import InputFormatError, QueryMismatch
from unirank.registry import ProviderSet, RankerKind, load
from unirank.tooling.cli import main
from unirank.tooling.config import build_providers, load_models_config
from unirank.tooling.distill import ScoredPair, export_distillation
from unirank.tooling.parity import ParityThresholds, kendall_tau, parity_check
from unirank.tooling.service import create_app

SPIRITED_QUERY = "Who wrote Spirited Away?"


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture
def docs_file(tmp_path):
    return write_jsonl(
        tmp_path / "docs.jsonl",
        [
            {"doc_id": 0, "text": "Spirited Away is a 2001 film written and directed by Hayao Miyazaki.",
             "metadata": {"source": "wiki"}},
            {"doc_id": 1, "text": "Lorem ipsum...", "metadata": {}},
        ],
    )


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def brute_tau(a, b):
    pos = {x: i for i, x in enumerate(b)}
    shared = [x for x in a if x in pos]
    n = len(shared)
    if n < 2:
        return 1.0
    conc = disc = 0
    for i, j in itertools.combinations(range(n), 2):
        s = pos[shared[i]] - pos[shared[j]]
        conc += s < 0
        disc += s > 0
    return (conc - disc) / (n * (n - 1) / 2)


class TestCli:
    def test_rerank_json(self, capsys, docs_file):
        code, out, err = run_cli(capsys, "rerank", "--model-type", "cross-encoder", "--provider", "reference",
                                 "--query", SPIRITED_QUERY, "--docs", str(docs_file))
        assert code == 0, err
        res = RankedResults.from_json(out)
        assert len(res) == 2 and res.has_scores
        assert res == load("cross-encoder", providers=ProviderSet.reference(0)).rank(
            SPIRITED_QUERY, [r.document for r in sorted(res, key=lambda r: r.doc_id)]
        )

    def test_unknown_model_type(self, capsys, docs_file):
        code, _, err = run_cli(capsys, "rerank", "--model-type", "bogus", "--query", "q", "--docs", str(docs_file))
        assert code == 2 and "UnknownModelType" in err
        assert len(err.strip().splitlines()) == 1

    def test_top_k(self, capsys, docs_file):
        code, out, _ = run_cli(capsys, "rerank", "--model-type", "t5", "--query", "q", "--docs", str(docs_file),
                               "--top-k", "1")
        assert code == 0 and len(json.loads(out)["results"]) == 1

    def test_tsv(self, capsys, docs_file):
        code, out, _ = run_cli(capsys, "rerank", "--model-type", "colbert", "--query", "q", "--docs", str(docs_file),
                               "--format", "tsv")
        rows = [line.split("\t") for line in out.strip().splitlines()]
        assert code == 0 and [r[0] for r in rows] == ["1", "2"]
        assert all(float(r[2]) for r in rows)

    def test_tsv_listwise_has_empty_scores(self, capsys, docs_file):
        _, out, _ = run_cli(capsys, "rerank", "--model-type", "rankllm", "--query", "q", "--docs", str(docs_file),
                            "--format", "tsv")
        assert all(line.endswith("\t") for line in out.splitlines())

    def test_missing_flag_is_usage_error(self, capsys):
        code, _, _ = run_cli(capsys, "rerank", "--model-type", "t5")
        assert code == 2

    def test_bad_docs_file_line_number(self, capsys, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"doc_id": 0, "text": "a"}\n{oops\n')
        code, _, err = run_cli(capsys, "rerank", "--model-type", "t5", "--query", "q", "--docs", str(bad))
        assert code == 2 and "InputFormatError" in err and ":2:" in err

    def test_backend_error_exit_1(self, capsys, docs_file, scrubbed_env):
        code, _, err = run_cli(capsys, "rerank", "--model-type", "cross-encoder", "--provider", "external",
                               "--query", "q", "--docs", str(docs_file))
        assert code == 1 and "CapabilityMissing" in err

    def test_provider_factory(self, capsys, docs_file):
        code, out, err = run_cli(capsys, "rerank", "--model-type", "flashrank", "--provider", "external",
                                 "--provider-factory", "tests.test_tooling:quantized_factory",
                                 "--query", "q", "--docs", str(docs_file))
        assert code == 0, err

    def test_console_script_subprocess(self, docs_file):
        proc = subprocess.run(
            [sys.executable, "-m", "unirank.tooling.cli", "rerank", "--model-type", "cross-encoder",
             "--query", SPIRITED_QUERY, "--docs", str(docs_file)],
            capture_output=True, text=True, env={**os.environ, "PYTHONHASHSEED": "1"},
        )
        assert proc.returncode == 0, proc.stderr
        assert len(json.loads(proc.stdout)["results"]) == 2


def quantized_factory():
    from unirank.pointwise import ReferenceProvider

    return ReferenceProvider(seed=3, quantized=True)


@pytest.fixture
def app_client():
    providers = ProviderSet.reference(0)
    handles = {k: load(k, providers=providers) for k in ("cross-encoder", "rankllm", "t5")}
    app = create_app({h.kind: h for h in handles.values()})
    with TestClient(app) as client:
        yield client, handles


def body(model_type="cross-encoder", docs=None, **extra):
    docs = docs if docs is not None else [{"doc_id": 0, "text": "a b"}, {"doc_id": 1, "text": "c d"}]
    return {"model_type": model_type, "query": "a b", "documents": docs, **extra}


class TestService:
    def test_valid(self, app_client):
        client, handles = app_client
        resp = client.post("/rerank", json=body())
        assert resp.status_code == 200
        data = resp.json()
        assert data["has_scores"] and len(data["results"]) == 2
        expected = handles["cross-encoder"].rank("a b", normalize_inputs(["a b", "c d"]))
        assert RankedResults.from_dict(data) == expected
        assert resp.text == expected.to_json()

    def test_duplicate_ids(self, app_client):
        client, _ = app_client
        resp = client.post("/rerank", json=body(docs=[{"doc_id": 1, "text": "a"}, {"doc_id": 1, "text": "b"}]))
        assert resp.status_code == 422 and resp.json()["error"] == "DuplicateDocId"

    def test_nested_metadata(self, app_client):
        client, _ = app_client
        resp = client.post("/rerank", json=body(docs=[{"doc_id": 1, "text": "a", "metadata": {"k": [1]}}]))
        assert resp.status_code == 422 and resp.json()["error"] == "InvalidMetadata"

    def test_unloaded_kind(self, app_client):
        client, _ = app_client
        resp = client.post("/rerank", json=body("colbert"))
        assert resp.status_code == 404
        assert "cross-encoder" in resp.json()["detail"] and "rankllm" in resp.json()["detail"]

    def test_unknown_kind(self, app_client):
        client, _ = app_client
        resp = client.post("/rerank", json=body("sparse-magic"))
        assert resp.status_code == 404 and resp.json()["error"] == "UnknownModelType"

    @pytest.mark.parametrize("raw", [b"{nope", b"[]", b'{"query": "q"}', json.dumps(body(top_k=0)).encode(),
                                     json.dumps(body(docs=[{"doc_id": 1.5, "text": "a"}])).encode()])
    def test_malformed(self, app_client, raw):
        client, _ = app_client
        resp = client.post("/rerank", content=raw, headers={"Content-Type": "application/json"})
        assert resp.status_code == 400 and "error" in resp.json()

    def test_listwise_and_top_k(self, app_client):
        client, _ = app_client
        resp = client.post("/rerank", json=body("rankllm", top_k=1))
        data = resp.json()
        assert not data["has_scores"] and len(data["results"]) == 1 and "score" not in data["results"][0]

    def test_health(self, app_client):
        client, _ = app_client
        data = client.get("/health").json()
        assert data["status"] == "ok"
        assert sorted(data["loaded"]) == ["cross-encoder", "rankllm", "t5"]
        assert all(rec["available"] for rec in data["capabilities"])

    def test_backend_failure_is_503(self):
        from .test_pointwise import ExplodingProvider

        handle = load("cross-encoder", providers=ProviderSet({"inference": ExplodingProvider()}))
        with TestClient(create_app({handle.kind: handle})) as client:
            resp = client.post("/rerank", json=body(docs=[{"doc_id": 0, "text": "boom"}]))
        assert resp.status_code == 503 and resp.json()["error"] == "ProviderFailure"

    def test_concurrent_requests(self, app_client):
        from concurrent.futures import ThreadPoolExecutor

        client, _ = app_client
        with ThreadPoolExecutor(8) as pool:
            texts = list(pool.map(lambda _: client.post("/rerank", json=body()).text, range(16)))
        assert len(set(texts)) == 1

    def test_requires_handles(self):
        with pytest.raises(ValueError):
            create_app({})


class TestModelsConfig:
    def test_load(self, tmp_path):
        cfg = tmp_path / "models.ini"
        cfg.write_text("[cross-encoder]\nprovider = reference\nseed = 4\n\n[rankllm]\nwindow_size = 3\nstride = 1\n")
        handles = load_models_config(cfg)
        assert set(handles) == {RankerKind.CROSS_ENCODER, RankerKind.LISTWISE_LLM}
        assert handles[RankerKind.LISTWISE_LLM].info["window"] == 3

    def test_empty(self, tmp_path):
        cfg = tmp_path / "models.ini"
        cfg.write_text("")
        with pytest.raises(InputFormatError):
            load_models_config(cfg)

    def test_unknown_provider(self):
        with pytest.raises(ValueError):
            build_providers("magic")


@pytest.fixture
def distill_inputs(tmp_path):
    queries = write_jsonl(tmp_path / "q.jsonl", [{"query_id": "q1", "query": "alpha beta"},
                                                  {"query_id": "q2", "query": "gamma"},
                                                  {"query_id": "q3", "query": "nothing retrieved"}])
    docs = write_jsonl(tmp_path / "d.jsonl", [{"doc_id": f"d{i}", "text": f"alpha doc {i} gamma"} for i in range(5)])
    run = tmp_path / "run.tsv"
    run.write_text("q1\td3\nq1\td0\nq2\td1\nq2\td4\nq2\td2\n")
    return queries, run, docs


class TestDistillation:
    def test_lines_in_input_order(self, distill_inputs):
        handle = load("t5", providers=ProviderSet.reference(0))
        out = io.StringIO()
        n = export_distillation(*distill_inputs, handle, out)
        lines = out.getvalue().splitlines()
        assert n == 5 == len(lines)
        assert [tuple(line.split("\t")[:2]) for line in lines] == [
            ("q1", "d3"), ("q1", "d0"), ("q2", "d1"), ("q2", "d4"), ("q2", "d2")
        ]
        assert not any(line.startswith("q3") for line in lines)
        first = lines[0].split("\t")
        assert float(first[2]) == handle.score_pairs([("alpha beta", "alpha doc 3 gamma")])[0]

    def test_shortest_round_trip_scores(self, distill_inputs):
        handle = load("cross-encoder", providers=ProviderSet.reference(0))
        out = io.StringIO()
        export_distillation(*distill_inputs, handle, out)
        for line in out.getvalue().splitlines():
            text = line.split("\t")[2]
            assert repr(float(text)) == text

    def test_deterministic(self, distill_inputs):
        outs = []
        for _ in range(2):
            handle = load("colbert", providers=ProviderSet.reference(7))
            buf = io.StringIO()
            export_distillation(*distill_inputs, handle, buf, batch_size=2)
            outs.append(buf.getvalue().encode())
        assert outs[0] == outs[1]

    def test_jsonl(self, distill_inputs):
        handle = load("t5", providers=ProviderSet.reference(0))
        buf = io.StringIO()
        export_distillation(*distill_inputs, handle, buf, fmt="jsonl")
        rows = [json.loads(x) for x in buf.getvalue().splitlines()]
        assert list(rows[0]) == ["query_id", "doc_id", "score"]

    def test_unknown_doc_line_number(self, distill_inputs, tmp_path):
        queries, run, docs = distill_inputs
        run.write_text("q1\td0\nq1\tmissing\n")
        with pytest.raises(InputFormatError, match=r"run.tsv:2"):
            export_distillation(queries, run, docs, load("t5", providers=ProviderSet.reference()), io.StringIO())

    def test_malformed_run_line(self, distill_inputs):
        queries, run, docs = distill_inputs
        run.write_text("q1 d0\n")
        with pytest.raises(InputFormatError) as info:
            export_distillation(queries, run, docs, load("t5", providers=ProviderSet.reference()), io.StringIO())
        assert info.value.line == 1

    def test_cli_export(self, capsys, distill_inputs, tmp_path):
        queries, run, docs = distill_inputs
        out = tmp_path / "scores.tsv"
        code, _, err = run_cli(capsys, "export", "--model-type", "cross-encoder", "--queries", str(queries),
                               "--run", str(run), "--docs", str(docs), "--out", str(out))
        assert code == 0, err
        assert len(out.read_text().splitlines()) == 5

    def test_scored_pair_finite(self):
        with pytest.raises(ValueError):
            ScoredPair("q", 1, float("nan"))


def scored(query, pairs):
    docs = normalize_inputs([f"t{d}" for d, _ in pairs], [d for d, _ in pairs])
    return build_ranked_results(query, [(doc, s) for doc, (_, s) in zip(docs, pairs)])


class TestParity:
    def test_identity(self):
        r = scored("q", [(0, 3.0), (1, 2.0), (2, 1.0)])
        report = parity_check({"q": r}, {"q": r})
        assert report.passed and report.mean_tau == 1.0 and report.mean_delta == 0.0

    def test_reversed(self):
        assert kendall_tau(["a", "b", "c", "d"], ["d", "c", "b", "a"]) == -1.0

    def test_delta_threshold(self):
        a = scored("q", [(0, 3.0), (1, 2.0)])
        b = scored("q", [(0, 3.001), (1, 2.0)])
        report = parity_check([a], [b], ParityThresholds(min_tau=0.99, max_delta=1e-4))
        assert not report.passed
        assert report.queries[0].max_delta == pytest.approx(0.001)

    def test_ordered_only_skips_delta(self):
        docs = normalize_inputs(["x", "y"])
        a = build_ordered_results("q", docs)
        b = scored("q", [(0, 1.0), (1, 0.0)])
        report = parity_check([a], [b])
        assert report.queries[0].max_delta is None and report.passed

    def test_query_mismatch(self):
        with pytest.raises(QueryMismatch):
            parity_check({"q1": scored("q", [(0, 1.0)])}, {"q2": scored("q", [(0, 1.0)])})

    def test_random_permutations_of_8(self):
        rng = random.Random(8)
        for _ in range(200):
            a, b = list(range(8)), list(range(8))
            rng.shuffle(a)
            rng.shuffle(b)
            assert kendall_tau(a, b) == pytest.approx(brute_tau(a, b), abs=1e-12)

    def test_partial_overlap(self):
        assert kendall_tau(["a", "b", "x"], ["b", "a", "y"]) == pytest.approx(brute_tau(["a", "b", "x"], ["b", "a", "y"]))
        assert kendall_tau(["a"], ["a"]) == 1.0
