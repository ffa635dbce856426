import json
import random

import pytest

from retrieval_annotator.core import DocumentRecord, LabelEntry, Taxonomy
from retrieval_annotator.dataset_io import (
    SplitSpec,
    corpus_stats,
    load_documents,
    load_taxonomy,
    split_corpus,
    subsample_train,
    write_documents,
    write_taxonomy,
)
from retrieval_annotator.errors import (
    DuplicateDocId,
    DuplicateLabel,
    EmptyDescription,
    GoldOutsideTaxonomy,
    MalformedLine,
    SizeTooLarge,
)


def write_lines(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs), encoding="utf-8")
    return path


@pytest.fixture
def tax():
    return Taxonomy(LabelEntry(x, x, f"label {x}") for x in "ABCD")


def test_load_three_documents(tmp_path, tax):
    p = write_lines(tmp_path / "d.jsonl", [{"id": f"d{i}", "text": "t", "labels": ["A"]} for i in range(3)])
    assert [d.id for d in load_documents(p, tax)] == ["d0", "d1", "d2"]


def test_gold_outside_taxonomy_names_offender(tmp_path, tax):
    p = write_lines(tmp_path / "d.jsonl", [{"id": "d0", "labels": ["A", "Z"]}])
    with pytest.raises(GoldOutsideTaxonomy, match="Z"):
        load_documents(p, tax)
    assert load_documents(p, tax, strict=False)[0].gold_labels == frozenset({"A"})


def test_empty_file_is_empty_corpus(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text("")
    assert load_documents(p) == []


def test_malformed_lines(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id": "a"}\n{not json\n')
    with pytest.raises(MalformedLine) as exc:
        load_documents(p)
    assert exc.value.line_no == 2
    write_lines(p, [{"id": "a", "labels": "A"}])
    with pytest.raises(MalformedLine):
        load_documents(p)
    write_lines(p, [{"id": "a"}, {"id": "a"}])
    with pytest.raises(DuplicateDocId):
        load_documents(p)


def test_taxonomy_loading(tmp_path, fixtures_dir):
    assert len(load_taxonomy(fixtures_dir / "ecthr_a_taxonomy.jsonl")) == 10
    assert len(load_taxonomy(fixtures_dir / "eurlex_taxonomy.jsonl")) == 100
    p = write_lines(tmp_path / "t.jsonl", [{"id": "a", "description": "x"}, {"id": "a", "description": "y"}])
    with pytest.raises(DuplicateLabel):
        load_taxonomy(p)
    write_lines(p, [{"id": "a", "description": " "}])
    with pytest.raises(EmptyDescription):
        load_taxonomy(p)


def test_round_trips(tmp_path, tax):
    docs = [DocumentRecord("x", "some text", {"A", "B"}), DocumentRecord("y", "ünïcode", None)]
    write_documents(tmp_path / "d.jsonl", docs)
    assert load_documents(tmp_path / "d.jsonl", tax) == docs
    write_taxonomy(tmp_path / "t.jsonl", tax)
    assert [e.to_json() for e in load_taxonomy(tmp_path / "t.jsonl")] == [e.to_json() for e in tax]


def test_stats_hand_examples(tax):
    s = corpus_stats([DocumentRecord("a", "", {"A"}), DocumentRecord("b", "", {"A", "B"})], tax)
    assert s.avg_labels_per_doc == 1.5 and s.n_docs == 2 and s.cardinality == 4
    assert s.support == {"A": 2, "B": 1, "C": 0, "D": 0}
    s = corpus_stats([DocumentRecord(f"d{i}", "", {"C"}) for i in range(7)], tax)
    assert s.avg_labels_per_doc == 1.0


def test_eurlex_shaped_average(fixtures_dir):
    eurlex = load_taxonomy(fixtures_dir / "eurlex_taxonomy.jsonl")
    ids = eurlex.ids
    rng = random.Random(0)
    # 100 documents carrying 451 labels in total
    sizes = [4] * 49 + [5] * 51
    docs = [DocumentRecord(f"d{i}", "", set(rng.sample(ids, n))) for i, n in enumerate(sizes)]
    s = corpus_stats(docs, eurlex)
    assert s.cardinality == 100 and s.total_labels == 451
    assert s.avg_labels_per_doc == 4.51
    assert "4.51" in s.table("Eurlex")


def test_subsample_nesting_and_determinism():
    docs = [DocumentRecord(f"d{i}", "", {"A"}) for i in range(3000)]
    spec = SplitSpec(seed=5)
    small, large = subsample_train(docs, spec, 100), subsample_train(docs, spec, 2000)
    assert {d.id for d in small} <= {d.id for d in large}
    assert subsample_train(docs, spec, 100) == small
    assert sorted(d.id for d in subsample_train(docs, spec, 3000)) == sorted(d.id for d in docs)
    with pytest.raises(SizeTooLarge):
        subsample_train(docs, spec, 3001)


def test_split_partitions_corpus():
    docs = [DocumentRecord(f"d{i}", "", {"A"}) for i in range(101)]
    train, val, test = split_corpus(docs, SplitSpec(seed=1))
    ids = [d.id for d in train + val + test]
    assert sorted(ids) == sorted(d.id for d in docs) and len(set(ids)) == 101
    assert (len(train), len(val)) == (81, 10)
    assert split_corpus(docs, SplitSpec(seed=1)) == (train, val, test)
    with pytest.raises(ValueError):
        SplitSpec(train_fraction=0.95, val_fraction=0.1)
