"""Weighted F1, KS diagnostics, separation report, matrix, and sweep."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats as scipy_stats

from redct import (
    EvalError,
    FeaturizerConfig,
    SimulatorConfig,
    TrainConfig,
    aggregate_reports,
    confidence_separation_report,
    evaluate_model,
    ks_two_sample,
    random_baseline,
    run_matrix,
    simulate_labels,
    sweep_expert_fraction,
    train,
    weighted_f1,
)
from redct.evaluation import _ks_p_value
from redct.softlabel import fuse
from redct.trainer import featurize
from redct.synth import make_synthetic_dataset

from conftest import dataset_from_rows

FAST_TRAIN = TrainConfig(epochs=8, batch_size=32)
FAST_FEATS = FeaturizerConfig(dim=2**12)


def oracle_weighted_f1(gold, pred, k):
    """Independent route: per-class tallies via explicit counting."""
    f1s, supports = [], []
    for c in range(k):
        tp = sum(1 for g, p in zip(gold, pred) if g == c and p == c)
        fp = sum(1 for g, p in zip(gold, pred) if g != c and p == c)
        fn = sum(1 for g, p in zip(gold, pred) if g == c and p != c)
        prec = tp / (tp + fp) if tp + fp > 0 else 0.0
        rec = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0)
        supports.append(tp + fn)
    total = 0.0
    for c in range(k):
        if supports[c] > 0:
            total += (supports[c] / len(gold)) * f1s[c]
    return total


def oracle_ks_statistic(a, b):
    """Exhaustive: evaluate both ECDFs at every sample point."""
    best = 0.0
    for x in list(a) + list(b):
        fa = sum(1 for v in a if v <= x) / len(a)
        fb = sum(1 for v in b if v <= x) / len(b)
        best = max(best, abs(fa - fb))
    return best


class TestWeightedF1:
    def test_perfect_prediction(self):
        report = weighted_f1([0, 1, 2, 1], [0, 1, 2, 1], 3)
        assert report.weighted_f1 == 1.0
        assert report.f1 == (1.0, 1.0, 1.0)

    def test_hand_value(self):
        # gold [A,A,B,B,B], pred [A,B,B,B,B]:
        # class A: P=1, R=1/2, F1=2/3; class B: P=3/4, R=1, F1=6/7
        # weighted: (2/5)(2/3) + (3/5)(6/7) = 0.780952...
        report = weighted_f1([0, 0, 1, 1, 1], [0, 1, 1, 1, 1], 2)
        assert report.weighted_f1 == pytest.approx(0.7809523809523807, abs=1e-12)
        assert report.precision == pytest.approx((1.0, 0.75))
        assert report.recall == pytest.approx((0.5, 1.0))
        assert report.support == (2, 3)

    def test_confusion_sums_to_n(self):
        report = weighted_f1([0, 0, 1, 2, 2, 2], [0, 1, 1, 0, 2, 2], 3)
        assert sum(sum(row) for row in report.confusion) == 6
        assert report.confusion[0][1] == 1  # gold 0 predicted as 1
        assert report.confusion[2][0] == 1

    def test_zero_support_class_excluded(self):
        # class 2 never appears in gold or pred: contributes nothing
        with_gap = weighted_f1([0, 0, 1], [0, 1, 1], 3)
        without = weighted_f1([0, 0, 1], [0, 1, 1], 2)
        assert with_gap.weighted_f1 == pytest.approx(without.weighted_f1, abs=1e-15)
        assert with_gap.support[2] == 0
        assert with_gap.f1[2] == 0.0

    def test_never_predicted_class_zero_conventions(self):
        # class 1 in gold but never predicted: P = 0/0 -> 0, F1 -> 0
        report = weighted_f1([1, 1, 0], [0, 0, 0], 2)
        assert report.precision[1] == 0.0
        assert report.recall[1] == 0.0
        assert report.f1[1] == 0.0

    def test_matches_brute_force_oracle_exactly(self):
        rng = np.random.default_rng(17)
        for _ in range(300):
            k = int(rng.integers(2, 5))
            n = int(rng.integers(1, 51))
            gold = rng.integers(0, k, size=n).tolist()
            pred = rng.integers(0, k, size=n).tolist()
            assert weighted_f1(gold, pred, k).weighted_f1 == oracle_weighted_f1(gold, pred, k)

    def test_length_mismatch(self):
        with pytest.raises(EvalError, match="entries"):
            weighted_f1([0, 1], [0], 2)

    def test_empty(self):
        with pytest.raises(EvalError, match="zero documents"):
            weighted_f1([], [], 2)

    def test_out_of_range(self):
        with pytest.raises(EvalError, match="out of range"):
            weighted_f1([0, 5], [0, 1], 2)

    def test_single_report_repetition_fields(self):
        report = weighted_f1([0, 1], [0, 1], 2)
        assert report.repetitions == 1
        assert report.weighted_f1_mean == report.weighted_f1
        assert report.weighted_f1_std == 0.0


class TestAggregateReports:
    def test_pools_confusion_and_averages(self):
        r1 = weighted_f1([0, 0, 1], [0, 1, 1], 2)
        r2 = weighted_f1([0, 1, 1], [0, 1, 0], 2)
        agg = aggregate_reports([r1, r2])
        assert agg.repetitions == 2
        assert sum(sum(row) for row in agg.confusion) == 6
        assert agg.weighted_f1_mean == pytest.approx(
            (r1.weighted_f1 + r2.weighted_f1) / 2
        )
        expected_std = float(np.std([r1.weighted_f1, r2.weighted_f1], ddof=1))
        assert agg.weighted_f1_std == pytest.approx(expected_std)

    def test_empty_rejected(self):
        with pytest.raises(EvalError, match="no reports"):
            aggregate_reports([])


class TestRandomBaseline:
    def test_three_class_balanced(self):
        gold = [0, 1, 2] * 200
        assert random_baseline(gold, 3, seed=0, trials=300) == pytest.approx(0.333, abs=0.01)

    def test_two_class_balanced(self):
        gold = [0, 1] * 300
        assert random_baseline(gold, 2, seed=0, trials=300) == pytest.approx(0.500, abs=0.01)

    def test_deterministic(self):
        gold = [0, 1, 2] * 10
        assert random_baseline(gold, 3, seed=5, trials=50) == random_baseline(
            gold, 3, seed=5, trials=50
        )

    def test_convergence_rate(self):
        """SEM over repeated estimates shrinks roughly as trials^(-1/2)."""
        gold = [0, 1, 2] * 40
        few, many = 10, 160  # 16x trials -> ~4x smaller spread
        spread = {}
        for trials in (few, many):
            estimates = [
                random_baseline(gold, 3, seed=seed, trials=trials) for seed in range(30)
            ]
            spread[trials] = float(np.std(estimates))
        ratio = spread[few] / spread[many]
        assert ratio == pytest.approx(4.0, rel=0.5)


class TestKsTwoSample:
    def test_identical_samples(self):
        res = ks_two_sample([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert res.statistic == 0.0
        assert res.p_value == 1.0

    def test_hand_value(self):
        res = ks_two_sample([1, 2, 3], [1.5, 2.5, 3.5])
        assert res.statistic == pytest.approx(1 / 3, abs=1e-15)
        assert res.n == 3 and res.m == 3

    def test_disjoint_supports(self):
        res = ks_two_sample([1, 2, 3], [10, 11, 12])
        assert res.statistic == 1.0
        assert res.p_value < 0.3

    def test_symmetry(self):
        rng = np.random.default_rng(23)
        a = rng.normal(size=40).tolist()
        b = rng.normal(loc=0.5, size=25).tolist()
        fwd, rev = ks_two_sample(a, b), ks_two_sample(b, a)
        assert fwd.statistic == rev.statistic
        assert fwd.p_value == rev.p_value

    def test_statistic_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(29)
        for _ in range(200):
            n, m = int(rng.integers(1, 12)), int(rng.integers(1, 12))
            a = (rng.integers(0, 6, size=n) / 2).tolist()  # ties across samples
            b = (rng.integers(0, 6, size=m) / 2).tolist()
            assert ks_two_sample(a, b).statistic == oracle_ks_statistic(a, b)

    def test_statistic_matches_scipy(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            a = rng.normal(size=int(rng.integers(5, 80)))
            b = rng.normal(loc=0.3, size=int(rng.integers(5, 80)))
            ours = ks_two_sample(a.tolist(), b.tolist()).statistic
            theirs = scipy_stats.ks_2samp(a, b).statistic
            assert ours == pytest.approx(float(theirs), abs=1e-12)

    def test_p_value_series_oracle(self):
        """Pinned asymptotic formula, evaluated independently term by term."""
        for d, n, m in ((0.2, 50, 60), (0.06, 400, 400), (0.5, 12, 9)):
            ne = n * m / (n + m)
            lam = d * (math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne))
            expected = sum(
                2.0 * (-1) ** (j - 1) * math.exp(-2.0 * (j * lam) ** 2)
                for j in range(1, 200)
            )
            expected = min(1.0, max(0.0, expected))
            assert _ks_p_value(d, n, m) == pytest.approx(expected, abs=1e-9)

    def test_p_value_monotone_in_d(self):
        ps = [_ks_p_value(d, 100, 100) for d in (0.05, 0.1, 0.2, 0.4)]
        assert all(a >= b for a, b in zip(ps, ps[1:]))

    def test_tiny_d_clamps_to_one(self):
        assert _ks_p_value(1e-9, 5, 5) == 1.0

    def test_large_shift_significant(self):
        rng = np.random.default_rng(37)
        a = rng.normal(size=400).tolist()
        b = rng.normal(loc=1.5, size=400).tolist()
        assert ks_two_sample(a, b).p_value < 1e-6

    def test_empty_sample_rejected(self):
        with pytest.raises(EvalError, match="nonempty"):
            ks_two_sample([], [1.0])

    def test_non_finite_rejected(self):
        with pytest.raises(EvalError, match="finite"):
            ks_two_sample([1.0, float("nan")], [1.0])


class TestSeparationReport:
    def simulated(self, n=800, correct=(8.0, 2.0), wrong=(2.0, 2.0), seed=0):
        ds = make_synthetic_dataset(n, seed=seed, num_classes=3)
        cfg = SimulatorConfig(
            accuracy_per_class=(0.7, 0.7, 0.7),
            correct_conf_params=correct,
            wrong_conf_params=wrong,
            seed=seed,
        )
        return simulate_labels(ds, cfg)

    def test_calibrated_simulator_separates(self):
        report = confidence_separation_report(self.simulated(n=2000))
        assert report.ks is not None
        assert report.ks.p_value < 0.01
        assert report.notice is None
        assert report.n_correct + report.n_wrong == 2000

    def test_null_construction_no_separation(self):
        """Identical Beta params for correct and wrong: KS must not fire."""
        report = confidence_separation_report(
            self.simulated(n=800, correct=(3.0, 3.0), wrong=(3.0, 3.0))
        )
        assert report.ks is not None
        assert report.ks.p_value > 0.05

    def test_all_correct_notice(self, schema3):
        ds = dataset_from_rows(schema3, [(0, 0, 1.0), (1, 1, 0.5), (2, 2, 0.7)])
        report = confidence_separation_report(ds)
        assert report.ks is None
        assert "all LLM labels correct" in report.notice
        assert report.n_wrong == 0

    def test_histograms_share_edges_and_count_everything(self):
        report = confidence_separation_report(self.simulated(n=500), bins=15)
        assert len(report.bin_edges) == 16
        assert sum(report.correct_counts) == report.n_correct
        assert sum(report.wrong_counts) == report.n_wrong

    def test_csv_shape(self):
        report = confidence_separation_report(self.simulated(n=300), bins=10)
        lines = report.to_csv().strip().splitlines()
        assert lines[0] == "bin_lo,bin_hi,correct,incorrect"
        assert len(lines) == 11

    def test_missing_gold_rejected(self, schema3):
        ds = dataset_from_rows(schema3, [(None, 0, 1.0)])
        with pytest.raises(EvalError, match="no gold label"):
            confidence_separation_report(ds)


def simulated_split(n_train=400, n_eval=300, acc=0.75, seed=0):
    """Synthetic train/eval pair with simulator annotations on both."""
    train_ds = make_synthetic_dataset(n_train, seed=seed, num_classes=3)
    eval_ds = make_synthetic_dataset(
        n_eval, seed=seed + 1000, num_classes=3, doc_prefix="ev"
    )
    cfg = SimulatorConfig(accuracy_per_class=(acc,) * 3, seed=seed)
    return simulate_labels(train_ds, cfg), simulate_labels(eval_ds, cfg)


class TestEvaluateModel:
    def test_weighted_f1_against_gold(self, schema3):
        train_ds, eval_ds = simulated_split()
        fused = fuse(train_ds)
        examples = [
            (featurize(train_ds.doc_by_id(ex.doc_id), FAST_FEATS), ex.target)
            for ex in fused
        ]
        model = train(examples, FAST_TRAIN, FAST_FEATS, train_ds.schema)
        report = evaluate_model(model, eval_ds)
        assert 0.0 <= report.weighted_f1 <= 1.0
        assert sum(report.support) == len(eval_ds)

    def test_gold_required(self, schema3):
        ds = dataset_from_rows(schema3, [(None, 0, 1.0)])
        train_ds, _ = simulated_split(n_train=60, n_eval=30)
        fused = fuse(train_ds)
        examples = [
            (featurize(train_ds.doc_by_id(ex.doc_id), FAST_FEATS), ex.target)
            for ex in fused
        ]
        model = train(examples, FAST_TRAIN, FAST_FEATS, train_ds.schema)
        with pytest.raises(EvalError, match="lacks a gold label"):
            evaluate_model(model, ds)


class TestRunMatrix:
    def test_deterministic(self):
        train_ds, eval_ds = simulated_split(n_train=200, n_eval=150)
        args = dict(
            settings=("base", "CI_SL"),
            p=0.1,
            train_cfg=FAST_TRAIN,
            featurizer_cfg=FAST_FEATS,
            seeds=(0, 1),
        )
        a = run_matrix(train_ds, eval_ds, **args)
        b = run_matrix(train_ds, eval_ds, **args)
        assert a.to_json() == b.to_json()

    def test_perfect_simulator_base_tracks_llm(self):
        train_ds, eval_ds = simulated_split(n_train=400, n_eval=300, acc=1.0)
        matrix = run_matrix(
            train_ds, eval_ds, ("base",), 0.1, FAST_TRAIN, FAST_FEATS, seeds=(0,)
        )
        base = matrix.rows[0]
        assert matrix.llm_f1 == pytest.approx(1.0)
        assert base.mean_f1 >= 0.95 * matrix.llm_f1

    def test_row_shape_and_improvements(self):
        train_ds, eval_ds = simulated_split(n_train=250, n_eval=200)
        matrix = run_matrix(
            train_ds, eval_ds, ("base", "SL", "RS", "CI", "CI_SL"), 0.1,
            FAST_TRAIN, FAST_FEATS, seeds=(0, 1),
        )
        payload = matrix.to_json()
        assert [r["setting"] for r in payload["settings"]] == [
            "base", "SL", "RS", "CI", "CI_SL",
        ]
        by_name = {r["setting"]: r for r in payload["settings"]}
        assert "improvement_over_base_abs" not in by_name["base"]
        for name in ("SL", "RS", "CI", "CI_SL"):
            row = by_name[name]
            assert row["improvement_over_base_abs"] == pytest.approx(
                row["mean_f1"] - by_name["base"]["mean_f1"]
            )
            assert "improvement_over_base_rel" in row
        # sampled settings report their expert budget; unsampled report none
        assert by_name["base"]["expert_count"] == 0
        assert by_name["SL"]["expert_count"] == 0
        assert by_name["CI"]["expert_count"] > 0
        assert by_name["RS"]["expert_count"] == math.ceil(0.1 * len(train_ds))
        assert payload["oracle_expert"] is True
        assert "weighted_f1_convention" in payload

    def test_soft_flags(self):
        train_ds, eval_ds = simulated_split(n_train=150, n_eval=100)
        matrix = run_matrix(
            train_ds, eval_ds, ("base", "SL", "RS", "CI", "CI_SL"), 0.1,
            FAST_TRAIN, FAST_FEATS, seeds=(0,),
        )
        soft = {r.setting: r.soft_labels for r in matrix.rows}
        assert soft == {"base": False, "SL": True, "RS": False, "CI": False, "CI_SL": True}

    def test_text_table_renders(self):
        train_ds, eval_ds = simulated_split(n_train=150, n_eval=100)
        matrix = run_matrix(
            train_ds, eval_ds, ("base", "CI_SL"), 0.1, FAST_TRAIN, FAST_FEATS, seeds=(0,)
        )
        text = matrix.format_text()
        assert "setting" in text and "mean_f1" in text
        assert "base" in text and "CI_SL" in text
        assert "oracle expert" in text
        assert "random baseline" in text

    def test_unknown_setting_rejected(self):
        train_ds, eval_ds = simulated_split(n_train=60, n_eval=40)
        with pytest.raises(EvalError, match="unknown settings"):
            run_matrix(train_ds, eval_ds, ("base", "XX"), 0.1, FAST_TRAIN, FAST_FEATS, (0,))

    def test_unannotated_training_pool_rejected(self, schema3):
        train_ds = dataset_from_rows(schema3, [(0, None, 0.0)])
        _, eval_ds = simulated_split(n_train=60, n_eval=40)
        with pytest.raises(EvalError, match="lack annotations"):
            run_matrix(train_ds, eval_ds, ("base",), 0.1, FAST_TRAIN, FAST_FEATS, (0,))

    def test_errors_carry_setting_context(self):
        train_ds, eval_ds = simulated_split(n_train=60, n_eval=40)
        bad_cfg = TrainConfig(epochs=10, learning_rate=1e18, l2=1e30)
        with pytest.raises(EvalError, match=r"setting 'base', seed 0"):
            run_matrix(train_ds, eval_ds, ("base",), 0.1, bad_cfg, FAST_FEATS, (0,))


class TestSweep:
    def test_full_supervision_limit(self):
        """p = 1.0 CI gives every document an oracle expert label."""
        train_ds, eval_ds = simulated_split(n_train=200, n_eval=150, acc=0.6)
        sweep = sweep_expert_fraction(
            train_ds, eval_ds,
            p_values=(1.0,), settings=("CI",),
            train_cfg=FAST_TRAIN, featurizer_cfg=FAST_FEATS, seeds=(0,),
        )
        # fully expert-labeled pool == training directly on gold labels
        gold_examples = []
        for doc in train_ds.documents:
            probs = [0.0] * 3
            probs[doc.gold_label] = 1.0
            from redct import SoftLabel

            gold_examples.append(
                (featurize(doc, FAST_FEATS), SoftLabel(tuple(probs), "expert"))
            )
        gold_model = train(gold_examples, TrainConfig(
            epochs=FAST_TRAIN.epochs, batch_size=FAST_TRAIN.batch_size, seed=0
        ), FAST_FEATS, train_ds.schema)
        gold_f1 = evaluate_model(gold_model, eval_ds).weighted_f1
        (_, mean, _), = sweep.series["CI"]
        assert mean == pytest.approx(gold_f1, abs=1e-12)

    def test_series_shape_and_csv(self):
        train_ds, eval_ds = simulated_split(n_train=150, n_eval=100)
        sweep = sweep_expert_fraction(
            train_ds, eval_ds, p_values=(0.05, 0.2), settings=("CI_SL",),
            train_cfg=FAST_TRAIN, featurizer_cfg=FAST_FEATS, seeds=(0, 1),
        )
        assert sweep.p_values == (0.05, 0.2)
        assert [p for p, _, _ in sweep.series["CI_SL"]] == [0.05, 0.2]
        csv = sweep.to_csv()
        assert csv.splitlines()[0] == "setting,p,mean_f1,std_f1"
        assert len(csv.strip().splitlines()) == 3
        text = sweep.format_text()
        assert "p=0.05" in text and "CI_SL" in text

    def test_empty_p_rejected(self):
        train_ds, eval_ds = simulated_split(n_train=60, n_eval=40)
        with pytest.raises(EvalError, match="empty p set"):
            sweep_expert_fraction(train_ds, eval_ds, p_values=())
