"""Expert-routing sampler: per-class bottom-confidence selection and baseline."""

from __future__ import annotations

import math

import numpy as np
import pytest

from redct import (
    SamplingError,
    SamplingManifest,
    apply_expert_labels,
    ceil_fraction,
    pending_doc_ids,
    sample_confidence_informed,
    sample_random,
)

from conftest import annotation_for, dataset_from_rows


def random_annotated(schema, n, seed):
    """Annotated dataset with random predicted classes and confidences."""
    rng = np.random.default_rng(seed)
    rows = [
        (None, int(rng.integers(schema.num_classes)), float(rng.exponential()))
        for _ in range(n)
    ]
    return dataset_from_rows(schema, rows)


def oracle_confidence_informed(ds, p):
    """Independent route: explicit per-class sort on (confidence, position)."""
    expected = set()
    for cls in range(ds.schema.num_classes):
        members = [
            (ds.annotations[doc.doc_id].confidence, i, doc.doc_id)
            for i, doc in enumerate(ds.documents)
            if ds.annotations[doc.doc_id].predicted_class == cls
        ]
        members.sort()
        take = math.ceil(p * len(members) - 1e-9)
        expected.update(doc_id for _, _, doc_id in members[:take])
    return expected


class TestCeilFraction:
    def test_exact_values(self):
        assert ceil_fraction(0.1, 100) == 10
        assert ceil_fraction(0.1, 101) == 11
        assert ceil_fraction(0.1, 109) == 11
        assert ceil_fraction(1.0, 7) == 7
        assert ceil_fraction(0.5, 1) == 1

    def test_float_noise_guard(self):
        # 0.07 * 300 = 21.000000000000004 in floats; must stay 21, not 22
        assert ceil_fraction(0.07, 300) == 21
        assert ceil_fraction(0.1, 3) == 1

    def test_nonempty_classes_always_contribute(self):
        for n in range(1, 50):
            assert ceil_fraction(0.01, n) >= 1


class TestConfidenceInformed:
    def test_hand_worked_example(self, tiny_annotated):
        # per class (3 members each), p=0.34 -> ceil(1.02)=2 lowest per class
        manifest = sample_confidence_informed(tiny_annotated, 0.34)
        assert set(manifest.selected_doc_ids) == {
            "d001", "d002",  # class 0: conf 0.2, 1.1 (not 2.0)
            "d004", "d005",  # class 1: conf 0.05, 0.9 (not 3.0)
            "d007", "d006",  # class 2: conf 0.01, 1.4 (not 2.5)
        }
        assert manifest.per_class_counts == {0: 2, 1: 2, 2: 2}
        assert manifest.strategy == "confidence_informed"
        assert manifest.seed is None

    def test_matches_sort_oracle(self, schema3):
        for seed in range(20):
            ds = random_annotated(schema3, 120, seed)
            for p in (0.05, 0.1, 0.25, 0.5, 1.0):
                manifest = sample_confidence_informed(ds, p)
                assert set(manifest.selected_doc_ids) == oracle_confidence_informed(ds, p)

    def test_per_class_counts_law(self, schema3):
        ds = random_annotated(schema3, 200, seed=42)
        by_class = {}
        for doc in ds.documents:
            cls = ds.annotations[doc.doc_id].predicted_class
            by_class[cls] = by_class.get(cls, 0) + 1
        for p in (0.02, 0.1, 0.33, 0.8):
            manifest = sample_confidence_informed(ds, p)
            for cls, n_c in by_class.items():
                assert manifest.per_class_counts[cls] == math.ceil(p * n_c - 1e-9)

    def test_ties_break_by_dataset_order(self, schema3):
        rows = [(None, 0, 0.5)] * 4  # identical confidences
        ds = dataset_from_rows(schema3, rows)
        manifest = sample_confidence_informed(ds, 0.5)
        assert manifest.selected_doc_ids == ("d000", "d001")

    def test_deterministic_no_seed(self, schema3):
        ds = random_annotated(schema3, 80, seed=1)
        a = sample_confidence_informed(ds, 0.2)
        b = sample_confidence_informed(ds, 0.2)
        assert a.selected_doc_ids == b.selected_doc_ids

    def test_selection_in_dataset_order(self, schema3):
        ds = random_annotated(schema3, 60, seed=2)
        manifest = sample_confidence_informed(ds, 0.3)
        positions = [
            next(i for i, d in enumerate(ds.documents) if d.doc_id == doc_id)
            for doc_id in manifest.selected_doc_ids
        ]
        assert positions == sorted(positions)

    def test_p_one_selects_everything(self, schema3):
        ds = random_annotated(schema3, 25, seed=3)
        manifest = sample_confidence_informed(ds, 1.0)
        assert set(manifest.selected_doc_ids) == {d.doc_id for d in ds.documents}

    def test_abstentions_rank_first(self, schema3):
        rows = [(None, 0, 1.0), (None, 0, 0.8), (None, 0, 0.9)]
        ds = dataset_from_rows(schema3, rows)
        abstained = annotation_for("d001", 3, 0, 0.0, abstained=True)
        ds = ds.with_annotations({"d001": abstained})
        manifest = sample_confidence_informed(ds, 0.25)
        assert manifest.selected_doc_ids == ("d001",)

    def test_p_out_of_range(self, tiny_annotated):
        for p in (0.0, -0.2, 1.5):
            with pytest.raises(SamplingError, match="fraction"):
                sample_confidence_informed(tiny_annotated, p)

    def test_requires_full_annotation(self, schema3):
        ds = dataset_from_rows(schema3, [(None, 0, 1.0), (None, None, 0.0)])
        with pytest.raises(SamplingError, match="not fully annotated"):
            sample_confidence_informed(ds, 0.5)

    def test_empty_dataset(self, schema3):
        from redct import Dataset

        with pytest.raises(SamplingError, match="empty"):
            sample_confidence_informed(Dataset(schema3, ()), 0.5)


class TestRandomBaselineSampling:
    def test_count_is_global_ceil(self, schema3):
        ds = random_annotated(schema3, 97, seed=4)
        manifest = sample_random(ds, 0.1, seed=0)
        assert len(manifest.selected_doc_ids) == math.ceil(0.1 * 97)
        assert manifest.strategy == "random"
        assert manifest.seed == 0

    def test_seed_determinism(self, schema3):
        ds = random_annotated(schema3, 50, seed=5)
        assert (
            sample_random(ds, 0.2, seed=7).selected_doc_ids
            == sample_random(ds, 0.2, seed=7).selected_doc_ids
        )
        assert (
            sample_random(ds, 0.2, seed=7).selected_doc_ids
            != sample_random(ds, 0.2, seed=8).selected_doc_ids
        )

    def test_no_duplicates(self, schema3):
        ds = random_annotated(schema3, 40, seed=6)
        manifest = sample_random(ds, 0.9, seed=1)
        assert len(set(manifest.selected_doc_ids)) == len(manifest.selected_doc_ids)

    def test_ignores_confidence(self, schema3):
        """Across seeds, high-confidence items get picked about as often as low."""
        rows = [(None, 0, 0.01 if i < 50 else 5.0) for i in range(100)]
        ds = dataset_from_rows(schema3, rows)
        low_picks = high_picks = 0
        for seed in range(200):
            for doc_id in sample_random(ds, 0.1, seed=seed).selected_doc_ids:
                idx = int(doc_id[1:])
                if idx < 50:
                    low_picks += 1
                else:
                    high_picks += 1
        assert low_picks / (low_picks + high_picks) == pytest.approx(0.5, abs=0.05)


class TestManifest:
    def test_round_trip(self, tmp_path, tiny_annotated):
        manifest = sample_confidence_informed(tiny_annotated, 0.34)
        path = tmp_path / "sampling.json"
        manifest.save(path)
        loaded = SamplingManifest.load(path)
        assert loaded == manifest

    def test_load_rejects_wrong_kind(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text('{"kind": "something-else"}')
        with pytest.raises(SamplingError, match="not a sampling manifest"):
            SamplingManifest.load(path)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(SamplingError, match="duplicates"):
            SamplingManifest("random", 0.1, ("a", "a"), {0: 2}, seed=0)

    def test_count_consistency_enforced(self):
        with pytest.raises(SamplingError, match="sum"):
            SamplingManifest("random", 0.1, ("a", "b"), {0: 1}, seed=0)


class TestApplyExpertLabels:
    def test_merges_labels(self, tiny_annotated):
        manifest = sample_confidence_informed(tiny_annotated, 0.34)
        picked = manifest.selected_doc_ids[:2]
        out = apply_expert_labels(tiny_annotated, manifest, {picked[0]: 2, picked[1]: 0})
        assert out.expert_labels == {picked[0]: 2, picked[1]: 0}
        assert not tiny_annotated.expert_labels  # original untouched

    def test_rejects_unselected_docs(self, tiny_annotated):
        manifest = sample_confidence_informed(tiny_annotated, 0.34)
        unselected = next(
            d.doc_id for d in tiny_annotated.documents
            if d.doc_id not in manifest.selected_doc_ids
        )
        with pytest.raises(SamplingError, match="unselected"):
            apply_expert_labels(tiny_annotated, manifest, {unselected: 0})

    def test_rejects_out_of_range_label(self, tiny_annotated):
        manifest = sample_confidence_informed(tiny_annotated, 0.34)
        doc_id = manifest.selected_doc_ids[0]
        with pytest.raises(SamplingError, match="out of range"):
            apply_expert_labels(tiny_annotated, manifest, {doc_id: 5})

    def test_partial_application_and_pending(self, tiny_annotated):
        manifest = sample_confidence_informed(tiny_annotated, 0.34)
        first = manifest.selected_doc_ids[0]
        out = apply_expert_labels(tiny_annotated, manifest, {first: 1})
        assert pending_doc_ids(out, manifest) == manifest.selected_doc_ids[1:]
        assert pending_doc_ids(tiny_annotated, manifest) == manifest.selected_doc_ids
