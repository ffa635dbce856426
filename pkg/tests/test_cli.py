import json

import numpy as np
import pytest
from click.testing import CliRunner

from retrieval_annotator.cli import cli
from retrieval_annotator.gateway import write_vector_file


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """Small synthetic corpus plus a built index, shared by the module."""
    root = tmp_path_factory.mktemp("cli")
    run(["synth", "--out", str(root / "data"), "--n-docs", "400", "--seed", "3"])
    d = root / "data"
    run(["index-build", str(d / "taxonomy.jsonl"), "--label-vectors", str(d / "label_vectors.txve"), "--out", str(root / "index")])
    return root


def run(args, code=0, env=None):
    result = CliRunner().invoke(cli, args, env=env, catch_exceptions=False)
    assert result.exit_code == code, (result.output, result.stderr)
    return result


def error_of(result):
    return json.loads(result.stderr.strip().splitlines()[-1])


def test_pipeline(corpus, tmp_path):
    d, idx = corpus / "data", corpus / "index"
    assert json.loads((idx / "index.json").read_text()) == {"count": 20, "dim": 32, "version": 0}
    preds = tmp_path / "preds.jsonl"
    run(["predict", "--index", str(idx), "--docs", str(d / "docs.jsonl"), "--doc-vectors", str(d / "doc_vectors.txve"), "--k", "3", "--out", str(preds)])
    lines = [json.loads(l) for l in preds.read_text().splitlines()]
    assert len(lines) == 400 and all(len(l["labels"]) == 3 for l in lines)
    assert (tmp_path / "preds.jsonl.manifest.json").exists()

    ev = run(["evaluate", "--preds", str(preds), "--gold", str(d / "docs.jsonl"), "--taxonomy", str(d / "taxonomy.jsonl"), "--out", str(tmp_path / "ev.json")])
    assert "Mi" in ev.output
    report = json.loads((tmp_path / "ev.json").read_text())
    assert 0 < report["micro"]["f1"] <= 1

    au = run(["audit", "--preds", str(preds), "--taxonomy", str(d / "taxonomy.jsonl"), "--out", str(tmp_path / "audit.json")])
    assert json.loads((tmp_path / "audit.json").read_text())["n_hallucinating_samples"] == 0
    assert " 0%" in au.output

    st = run(["stats", "--docs", str(d / "docs.jsonl"), "--taxonomy", str(d / "taxonomy.jsonl")])
    assert "400" in st.output

    tu = run(["tune", "--index", str(idx), "--val-docs", str(d / "docs.jsonl"), "--val-vectors", str(d / "doc_vectors.txve"), "--k-grid", "1-4,6", "--out", str(tmp_path / "tune.json")])
    assert "best k" in tu.output
    assert [r["k"] for r in json.loads((tmp_path / "tune.json").read_text())["per_k"]] == [1, 2, 3, 4, 6]


def test_neighbor_vote_predict(corpus, tmp_path):
    d, idx = corpus / "data", corpus / "index"
    run(["predict", "--index", str(idx), "--docs", str(d / "docs.jsonl"), "--doc-vectors", str(d / "doc_vectors.txve"), "--strategy", "neighbor_vote", "--train-docs", str(d / "docs.jsonl"), "--train-vectors", str(d / "doc_vectors.txve"), "--k", "2", "--out", str(tmp_path / "p.jsonl")])
    assert len((tmp_path / "p.jsonl").read_text().splitlines()) == 400


def test_cost_command(tmp_path):
    out = run(["cost", "--out", str(tmp_path / "cost.json")]).output
    assert "19.71x" in out
    out = run(["cost", "--ft-preset", "table2-fullft"]).output
    assert "29.57x" in out


def test_scaling_command(corpus, tmp_path):
    d = corpus / "data"
    base = ["scaling", "--docs", str(d / "docs.jsonl"), "--doc-vectors", str(d / "doc_vectors.txve"), "--taxonomy", str(d / "taxonomy.jsonl"), "--k-grid", "1-5"]
    run(base + ["--sizes", "50,200,full,9999", "--out", str(tmp_path / "s.json")])
    rows = json.loads((tmp_path / "s.json").read_text())["rows"]
    assert [r["n_train"] for r in rows] == [50, 200, 320]
    run(base + ["--strategy", "label_similarity", "--label-vectors", str(d / "label_vectors.txve"), "--sizes", "50,full", "--out", str(tmp_path / "ls.json")])
    ls = json.loads((tmp_path / "ls.json").read_text())["rows"]
    assert ls[0]["micro_f1"] == ls[1]["micro_f1"] and ls[0]["macro_f1"] == ls[1]["macro_f1"]


def test_repeated_runs_are_byte_identical(corpus, tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    d = corpus / "data"
    snapshots = []
    for _ in range(2):
        run(["synth", "--out", str(tmp_path / "syn"), "--n-docs", "200", "--seed", "11"])
        run(["index-build", str(tmp_path / "syn" / "taxonomy.jsonl"), "--label-vectors", str(tmp_path / "syn" / "label_vectors.txve"), "--out", str(tmp_path / "idx")])
        run(["predict", "--index", str(tmp_path / "idx"), "--docs", str(d / "docs.jsonl"), "--doc-vectors", str(d / "doc_vectors.txve"), "--out", str(tmp_path / "p.jsonl")])
        run(["scaling", "--docs", str(d / "docs.jsonl"), "--doc-vectors", str(d / "doc_vectors.txve"), "--taxonomy", str(d / "taxonomy.jsonl"), "--sizes", "100,full", "--k-grid", "1-5", "--seed", "4", "--out", str(tmp_path / "s.json")])
        snapshots.append({p.name: p.read_bytes() for p in sorted(tmp_path.rglob("*")) if p.is_file()})
    assert snapshots[0] == snapshots[1]
    manifest = json.loads(snapshots[0]["s.json.manifest.json"])
    assert manifest["started_at"] == "2023-11-14T22:13:20+00:00" and manifest["seed"] == 4


def test_exit_codes(corpus, tmp_path):
    d, idx = corpus / "data", corpus / "index"
    base = ["predict", "--index", str(idx), "--docs", str(d / "docs.jsonl"), "--doc-vectors", str(d / "doc_vectors.txve"), "--out", str(tmp_path / "p.jsonl")]
    r = run(base + ["--k", "0"], code=3)
    assert error_of(r) == {"error": "InvalidK", "message": error_of(r)["message"], "exit_code": 3}

    bad_docs = tmp_path / "bad.jsonl"
    bad_docs.write_text('{"id": "x", "labels": ["no-such-label"]}\n')
    r = run(["stats", "--docs", str(bad_docs), "--taxonomy", str(d / "taxonomy.jsonl")], code=4)
    assert error_of(r)["error"] == "GoldOutsideTaxonomy"

    bad_docs.write_text("{broken\n")
    assert error_of(run(["stats", "--docs", str(bad_docs), "--taxonomy", str(d / "taxonomy.jsonl")], code=5))["error"] == "MalformedLine"

    broken = tmp_path / "broken.txve"
    broken.write_bytes(b"NOPE" + (d / "doc_vectors.txve").read_bytes()[4:])
    assert error_of(run(base[:-4] + ["--doc-vectors", str(broken), "--out", str(tmp_path / "p.jsonl")], code=6))["error"] == "CorruptHeader"

    r = run(["index-build", str(d / "taxonomy.jsonl"), "--service", "http://127.0.0.1:9", "--retries", "0", "--out", str(tmp_path / "i")], code=8)
    assert error_of(r)["error"] == "ServiceUnreachable"

    run(["predict", "--index", str(idx)], code=2)
    run(["tune", "--index", str(idx), "--val-docs", str(d / "docs.jsonl"), "--val-vectors", str(d / "doc_vectors.txve"), "--k-grid", "x-y"], code=2)
    r = run(["tune", "--index", str(idx), "--val-docs", str(d / "docs.jsonl"), "--val-vectors", str(d / "doc_vectors.txve"), "--k-grid", "5,3"], code=3)
    assert "increasing" in error_of(r)["message"]


def test_missing_document_vector_is_data_error(corpus, tmp_path):
    d, idx = corpus / "data", corpus / "index"
    docs = tmp_path / "docs.jsonl"
    docs.write_text('{"id": "doc000000"}\n{"id": "ghost"}\n')
    r = run(["predict", "--index", str(idx), "--docs", str(docs), "--doc-vectors", str(d / "doc_vectors.txve"), "--out", str(tmp_path / "p.jsonl")], code=5)
    assert error_of(r)["error"] == "UnknownDoc"


def test_lenient_predict_skips_bad_documents(corpus, tmp_path):
    idx = corpus / "index"
    docs = tmp_path / "docs.jsonl"
    docs.write_text('{"id": "ok"}\n{"id": "zero"}\n')
    vecs = write_vector_file(tmp_path / "v.txve", [("ok", np.ones(32)), ("zero", np.zeros(32))])
    args = ["predict", "--index", str(idx), "--docs", str(docs), "--doc-vectors", str(vecs), "--out", str(tmp_path / "p.jsonl")]
    assert error_of(run(args, code=3))["error"] == "ZeroVector"
    r = run(args + ["--lenient"])
    assert "1 failed" in r.output and '"doc_id": "zero"' in r.stderr
    assert [json.loads(l)["doc_id"] for l in (tmp_path / "p.jsonl").read_text().splitlines()] == ["ok"]


def test_config_file_and_env_precedence(corpus, tmp_path):
    d, idx = corpus / "data", corpus / "index"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"predict": {"k": 2}}))
    base = ["predict", "--index", str(idx), "--docs", str(d / "docs.jsonl"), "--doc-vectors", str(d / "doc_vectors.txve"), "--out", str(tmp_path / "p.jsonl")]

    def width():
        return len(json.loads((tmp_path / "p.jsonl").read_text().splitlines()[0])["labels"])

    run(["--config", str(cfg)] + base)
    assert width() == 2
    run(["--config", str(cfg)] + base, env={"RANNOT_PREDICT_K": "4"})
    assert width() == 4
    run(["--config", str(cfg)] + base + ["--k", "1"], env={"RANNOT_PREDICT_K": "4"})
    assert width() == 1
