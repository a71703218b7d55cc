"""Schema validation, dataset round-trips, and serialization stability."""

from __future__ import annotations

import json
from dataclasses import replace

import pytest

from redct import (
    Dataset,
    DatasetError,
    Document,
    LabelTokenLogProbs,
    LlmAnnotation,
    RedctError,
    SchemaError,
    SoftLabel,
    TaskSchema,
    load_dataset,
    save_dataset,
)
from redct.core import atomic_write_text, label_matching_key

from conftest import annotation_for, dataset_from_rows, stance_schema


class TestLabelMatchingKey:
    def test_first_word_lowercased(self):
        assert label_matching_key("For") == "for"
        assert label_matching_key("  Against the idea ") == "against"

    def test_punctuation_stripped(self):
        assert label_matching_key("'True'") == "true"
        assert label_matching_key("Neutral.") == "neutral"

    def test_empty(self):
        assert label_matching_key("") == ""
        assert label_matching_key("   ") == ""
        assert label_matching_key("...") == ""


class TestTaskSchema:
    def test_valid_schema(self, schema3):
        assert schema3.num_classes == 3
        assert schema3.index_of("Against") == 1
        assert schema3.matching_keys() == ["for", "against", "neutral"]

    def test_needs_two_classes(self):
        with pytest.raises(SchemaError, match="at least 2"):
            TaskSchema("t", ("only",), {"only": "Only"})

    def test_duplicate_class_names(self):
        with pytest.raises(SchemaError, match="not unique"):
            TaskSchema("t", ("a", "a"), {"a": "A"})

    def test_label_tokens_must_cover_classes(self):
        with pytest.raises(SchemaError, match="label_tokens keys"):
            TaskSchema("t", ("a", "b"), {"a": "A"})

    def test_duplicate_label_tokens(self):
        with pytest.raises(SchemaError, match="pairwise distinct"):
            TaskSchema("t", ("a", "b"), {"a": "Same", "b": "Same"})

    def test_colliding_matching_keys(self):
        # distinct tokens, same normalized key
        with pytest.raises(SchemaError, match="collide"):
            TaskSchema("t", ("a", "b"), {"a": "True", "b": "true."})

    def test_prefix_keys_rejected(self):
        with pytest.raises(SchemaError, match="prefix-free"):
            TaskSchema("t", ("a", "b"), {"a": "In", "b": "Informative"})

    def test_empty_matching_key_rejected(self):
        with pytest.raises(SchemaError, match="empty matching key"):
            TaskSchema("t", ("a", "b"), {"a": "...", "b": "B"})

    def test_bad_prompt_style(self):
        with pytest.raises(SchemaError, match="prompt_style"):
            TaskSchema("t", ("a", "b"), {"a": "A", "b": "B"}, prompt_style="few_shot")

    def test_unknown_class_lookup(self, schema3):
        with pytest.raises(SchemaError, match="unknown class"):
            schema3.index_of("Sideways")

    def test_schema_hash_stable_and_sensitive(self, schema3):
        again = stance_schema()
        assert schema3.schema_hash() == again.schema_hash()
        other = TaskSchema(
            "stance2", schema3.class_names, schema3.label_tokens, schema3.prompt_style
        )
        assert other.schema_hash() != schema3.schema_hash()


class TestSoftLabel:
    def test_valid(self):
        SoftLabel((0.2, 0.3, 0.5), "llm")

    def test_must_sum_to_one(self):
        with pytest.raises(RedctError, match="sum to 1"):
            SoftLabel((0.2, 0.3, 0.4), "llm")

    def test_nonnegative(self):
        with pytest.raises(RedctError, match="nonnegative"):
            SoftLabel((-0.1, 0.6, 0.5), "llm")

    def test_expert_must_be_one_hot(self):
        SoftLabel((0.0, 1.0, 0.0), "expert")
        with pytest.raises(RedctError, match="one-hot"):
            SoftLabel((0.5, 0.5, 0.0), "expert")

    def test_bad_source(self):
        with pytest.raises(RedctError, match="source"):
            SoftLabel((1.0, 0.0), "oracle")


class TestLabelTokenLogProbs:
    def test_finite_required(self):
        with pytest.raises(RedctError, match="finite"):
            LabelTokenLogProbs((-0.1, float("-inf")))
        with pytest.raises(RedctError, match="finite"):
            LabelTokenLogProbs((float("nan"), -0.1))

    def test_len(self):
        assert len(LabelTokenLogProbs((-0.1, -0.2, -0.3))) == 3


class TestDatasetValidation:
    def test_duplicate_doc_ids(self, schema3):
        docs = (Document("a", "x"), Document("a", "y"))
        with pytest.raises(DatasetError, match="duplicate doc_id"):
            Dataset(schema3, docs)

    def test_empty_text(self, schema3):
        with pytest.raises(DatasetError, match="empty text"):
            Dataset(schema3, (Document("a", ""),))

    def test_gold_label_range(self, schema3):
        with pytest.raises(DatasetError, match="out of range"):
            Dataset(schema3, (Document("a", "x", gold_label=3),))

    def test_annotation_for_unknown_doc(self, schema3):
        ann = annotation_for("ghost", 3, 0, 1.0)
        with pytest.raises(DatasetError, match="unknown doc_id"):
            Dataset(schema3, (Document("a", "x"),), {"ghost": ann})

    def test_annotation_key_mismatch(self, schema3):
        ann = annotation_for("b", 3, 0, 1.0)
        docs = (Document("a", "x"), Document("b", "y"))
        with pytest.raises(DatasetError, match="carries doc_id"):
            Dataset(schema3, docs, {"a": ann})

    def test_annotation_logprob_arity(self, schema3):
        ann = annotation_for("a", 2, 0, 1.0)
        with pytest.raises(DatasetError, match="log-probs"):
            Dataset(schema3, (Document("a", "x"),), {"a": ann})

    def test_expert_label_range(self, schema3):
        with pytest.raises(DatasetError, match="out of range"):
            Dataset(schema3, (Document("a", "x"),), expert_labels={"a": 7})

    def test_with_annotations_merges_immutably(self, schema3):
        ds = Dataset(schema3, (Document("a", "x"), Document("b", "y")))
        ann = annotation_for("a", 3, 1, 0.5)
        out = ds.with_annotations({"a": ann})
        assert not ds.annotations
        assert out.annotations["a"] is ann
        assert out.documents == ds.documents

    def test_doc_by_id(self, schema3):
        ds = Dataset(schema3, (Document("a", "x"),))
        assert ds.doc_by_id("a").text == "x"
        with pytest.raises(DatasetError, match="no document"):
            ds.doc_by_id("zz")


class TestSerialization:
    def test_round_trip_preserves_everything(self, tmp_path, schema3):
        ds = dataset_from_rows(
            schema3,
            [(0, 0, 1.5), (1, None, 0.0), (2, 1, 0.25)],
            target="climate change",
        )
        ds = ds.with_expert_labels({"d000": 2})
        ann = replace(ds.annotations["d002"], rationale="because of the wording")
        ds = ds.with_annotations({"d002": ann})
        path = tmp_path / "ds.jsonl"
        save_dataset(ds, path)
        loaded = load_dataset(path, schema3)

        assert [d.doc_id for d in loaded.documents] == [d.doc_id for d in ds.documents]
        assert loaded.documents == ds.documents
        assert loaded.expert_labels == {"d000": 2}
        assert set(loaded.annotations) == {"d000", "d002"}
        got = loaded.annotations["d002"]
        assert got.predicted_class == 1
        assert got.logprobs == ann.logprobs
        assert got.confidence == ann.confidence
        assert got.rationale == "because of the wording"

    def test_save_is_byte_stable(self, tmp_path, tiny_annotated):
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_dataset(tiny_annotated, p1)
        save_dataset(load_dataset(p1, tiny_annotated.schema), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_line_present(self, tmp_path, tiny_annotated):
        path = tmp_path / "ds.jsonl"
        save_dataset(tiny_annotated, path)
        header = json.loads(path.read_text().splitlines()[0])
        assert header["kind"] == "redct-dataset"
        assert header["task_id"] == "stance"
        assert header["count"] == len(tiny_annotated)

    def test_plain_jsonl_without_header_loads(self, tmp_path, schema3):
        lines = [
            json.dumps({"doc_id": "p1", "text": "hello", "gold_label": "For"}),
            json.dumps({"doc_id": "p2", "text": "world"}),
        ]
        path = tmp_path / "plain.jsonl"
        path.write_text("\n".join(lines) + "\n")
        ds = load_dataset(path, schema3)
        assert [d.doc_id for d in ds.documents] == ["p1", "p2"]
        assert ds.documents[0].gold_label == 0
        assert ds.documents[1].gold_label is None

    def test_order_preserved(self, tmp_path, schema3):
        ids = [f"z{i}" for i in (5, 1, 9, 3)]
        lines = [json.dumps({"doc_id": d, "text": "t"}) for d in ids]
        path = tmp_path / "ordered.jsonl"
        path.write_text("\n".join(lines) + "\n")
        assert [d.doc_id for d in load_dataset(path, schema3).documents] == ids

    def test_malformed_json_names_line(self, tmp_path, schema3):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"doc_id": "a", "text": "x"}\n{oops\n')
        with pytest.raises(DatasetError, match=rf"{path}:2: malformed JSON"):
            load_dataset(path, schema3)

    def test_missing_doc_id_names_line(self, tmp_path, schema3):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"text": "x"}\n')
        with pytest.raises(DatasetError, match=rf"{path}:1: .*doc_id"):
            load_dataset(path, schema3)

    def test_duplicate_doc_id_names_line(self, tmp_path, schema3):
        rec = json.dumps({"doc_id": "a", "text": "x"})
        path = tmp_path / "dup.jsonl"
        path.write_text(rec + "\n" + rec + "\n")
        with pytest.raises(DatasetError, match=rf"{path}:2: duplicate doc_id"):
            load_dataset(path, schema3)

    def test_unknown_gold_label_names_line(self, tmp_path, schema3):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"doc_id": "a", "text": "x", "gold_label": "Sideways"}) + "\n")
        with pytest.raises(DatasetError, match=rf"{path}:1: .*unknown class"):
            load_dataset(path, schema3)

    def test_task_mismatch_rejected(self, tmp_path, schema3, schema2):
        path = tmp_path / "ds.jsonl"
        save_dataset(Dataset(schema2, (Document("a", "x"),)), path)
        with pytest.raises(DatasetError, match="is for task"):
            load_dataset(path, schema3)

    def test_missing_file(self, tmp_path, schema3):
        with pytest.raises(DatasetError, match="not found"):
            load_dataset(tmp_path / "nope.jsonl", schema3)


class TestAtomicWrite:
    def test_writes_and_replaces(self, tmp_path):
        path = tmp_path / "f.txt"
        atomic_write_text(path, "one\n")
        atomic_write_text(path, "two\n")
        assert path.read_text() == "two\n"
        assert list(tmp_path.iterdir()) == [path]  # no temp files left behind
