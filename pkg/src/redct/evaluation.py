"""Evaluation: weighted F1, random baseline, KS diagnostics, and the intervention matrix.

The headline metric is the support-weighted mean of per-class F1 scores
(0/0 conventions resolve to 0; zero-support classes drop out of the
weighted sum). The KS test checks whether confidence scores actually
separate correctly- from incorrectly-labeled items — the property the whole
confidence-informed sampling strategy rests on. `run_matrix` reproduces the
intervention grid (base / SL / RS / CI / CI SL) with gold labels standing
in for human experts ("oracle expert", flagged in every report).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import Dataset, RedctError
from .sampler import sample_confidence_informed, sample_random, apply_expert_labels
from .softlabel import fuse
from .trainer import (
    FeaturizerConfig,
    TrainConfig,
    featurize,
    predict_many,
    softmax,
    stack_features,
    train,
)

logger = logging.getLogger(__name__)

SETTINGS = ("base", "SL", "RS", "CI", "CI_SL")

# Settings that replace part of the training pool with expert labels.
_SAMPLED = {"RS": "random", "CI": "confidence_informed", "CI_SL": "confidence_informed"}
# Settings that train on expit soft targets rather than one-hot LLM labels.
_SOFT = {"SL", "CI_SL"}

_KS_SERIES_EPS = 1e-10
_KS_MAX_TERMS = 10_000


class EvalError(RedctError):
    """Evaluation inputs are inconsistent."""


@dataclass(frozen=True)
class EvalReport:
    """Per-class metrics plus the support-weighted F1 headline number.

    For a single evaluation `repetitions` is 1 and mean == weighted_f1.
    Aggregated reports pool the confusion matrices and carry the mean and
    standard deviation of weighted F1 across the individual repetitions.
    """

    precision: Tuple[float, ...]
    recall: Tuple[float, ...]
    f1: Tuple[float, ...]
    support: Tuple[int, ...]
    confusion: Tuple[Tuple[int, ...], ...]
    weighted_f1: float
    repetitions: int
    weighted_f1_mean: float
    weighted_f1_std: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.weighted_f1 <= 1.0:
            raise EvalError(f"weighted F1 {self.weighted_f1} outside [0, 1]")
        if self.repetitions < 1:
            raise EvalError("repetitions must be >= 1")


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    n: int
    m: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.statistic <= 1.0 or not 0.0 <= self.p_value <= 1.0:
            raise EvalError("KS statistic and p-value must lie in [0, 1]")


def weighted_f1(gold: Sequence[int], pred: Sequence[int], num_classes: int) -> EvalReport:
    """Support-weighted F1 with per-class breakdown and confusion matrix."""
    if len(gold) != len(pred):
        raise EvalError(f"gold has {len(gold)} entries, pred has {len(pred)}")
    if not gold:
        raise EvalError("cannot evaluate zero documents")
    confusion = [[0] * num_classes for _ in range(num_classes)]
    for g, p in zip(gold, pred):
        if not (0 <= g < num_classes and 0 <= p < num_classes):
            raise EvalError(f"class index out of range: gold={g} pred={p} (K={num_classes})")
        confusion[g][p] += 1
    return _report_from_confusion(confusion, repetitions=1)


def _report_from_confusion(confusion: Sequence[Sequence[int]], repetitions: int,
                           mean: Optional[float] = None, std: float = 0.0) -> EvalReport:
    k = len(confusion)
    n = sum(sum(row) for row in confusion)
    precision, recall, f1, support = [], [], [], []
    for c in range(k):
        tp = confusion[c][c]
        fp = sum(confusion[g][c] for g in range(k)) - tp
        fn = sum(confusion[c][p] for p in range(k)) - tp
        prec = tp / (tp + fp) if tp + fp > 0 else 0.0
        rec = tp / (tp + fn) if tp + fn > 0 else 0.0
        f = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        precision.append(prec)
        recall.append(rec)
        f1.append(f)
        support.append(tp + fn)
    total = 0.0
    for c in range(k):
        if support[c] > 0:
            total += (support[c] / n) * f1[c]
    return EvalReport(
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        support=tuple(support),
        confusion=tuple(tuple(row) for row in confusion),
        weighted_f1=total if mean is None else mean,
        repetitions=repetitions,
        weighted_f1_mean=total if mean is None else mean,
        weighted_f1_std=std,
    )


def aggregate_reports(reports: Sequence[EvalReport]) -> EvalReport:
    """Pool confusion matrices; mean/std of weighted F1 across repetitions."""
    if not reports:
        raise EvalError("no reports to aggregate")
    k = len(reports[0].support)
    if any(len(r.support) != k for r in reports):
        raise EvalError("reports disagree on number of classes")
    pooled = [[sum(r.confusion[i][j] for r in reports) for j in range(k)] for i in range(k)]
    values = [r.weighted_f1 for r in reports]
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return _report_from_confusion(pooled, repetitions=sum(r.repetitions for r in reports),
                                  mean=mean, std=std)


def random_baseline(gold: Sequence[int], num_classes: int, seed: int = 0, trials: int = 200) -> float:
    """Mean weighted F1 of a uniform random predictor over seeded trials."""
    if trials < 1:
        raise EvalError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(trials):
        pred = rng.integers(0, num_classes, size=len(gold))
        total += weighted_f1(gold, pred.tolist(), num_classes).weighted_f1
    return total / trials


def _ks_p_value(d: float, n: int, m: int) -> float:
    ne = n * m / (n + m)
    lam = d * (math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne))
    # The alternating series converges too slowly below this point, and its
    # value is 1 to far beyond any tolerance used here.
    if lam < 1e-3:
        return 1.0
    total = 0.0
    sign = 1.0
    for j in range(1, _KS_MAX_TERMS + 1):
        term = 2.0 * math.exp(-2.0 * (j * lam) ** 2)
        if term < _KS_SERIES_EPS:
            break
        total += sign * term
        sign = -sign
    return min(1.0, max(0.0, total))


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> KsResult:
    """Two-sample KS: exact sup of ECDF differences, asymptotic p-value."""
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise EvalError("KS test requires nonempty samples")
    sa = np.sort(np.asarray(a, dtype=np.float64))
    sb = np.sort(np.asarray(b, dtype=np.float64))
    if not (np.isfinite(sa).all() and np.isfinite(sb).all()):
        raise EvalError("KS samples must be finite")
    points = np.concatenate([sa, sb])
    cdf_a = np.searchsorted(sa, points, side="right") / n
    cdf_b = np.searchsorted(sb, points, side="right") / m
    d = float(np.abs(cdf_a - cdf_b).max())
    return KsResult(statistic=d, p_value=_ks_p_value(d, n, m), n=n, m=m)


@dataclass(frozen=True)
class SeparationReport:
    """Confidence distributions of correctly vs incorrectly labeled items."""

    ks: Optional[KsResult]
    notice: Optional[str]
    bin_edges: Tuple[float, ...]
    correct_counts: Tuple[int, ...]
    wrong_counts: Tuple[int, ...]
    n_correct: int
    n_wrong: int

    def to_csv(self) -> str:
        """Overlaid histogram series for external plotting."""
        lines = ["bin_lo,bin_hi,correct,incorrect"]
        for i in range(len(self.correct_counts)):
            lines.append(
                f"{self.bin_edges[i]:.6g},{self.bin_edges[i + 1]:.6g},"
                f"{self.correct_counts[i]},{self.wrong_counts[i]}"
            )
        return "\n".join(lines) + "\n"


def confidence_separation_report(ds: Dataset, bins: int = 20) -> SeparationReport:
    """Split confidence scores by LLM correctness and test their separation."""
    correct: List[float] = []
    wrong: List[float] = []
    for doc in ds.documents:
        ann = ds.annotations.get(doc.doc_id)
        if ann is None:
            continue
        if doc.gold_label is None:
            raise EvalError(f"document {doc.doc_id!r} has an annotation but no gold label")
        (correct if ann.predicted_class == doc.gold_label else wrong).append(ann.confidence)
    if not correct and not wrong:
        raise EvalError("no annotated documents to analyze")
    both = correct + wrong
    lo, hi = min(both), max(both)
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    c_counts, _ = np.histogram(correct, bins=edges)
    w_counts, _ = np.histogram(wrong, bins=edges)
    ks = None
    notice = None
    if not wrong:
        notice = "all LLM labels correct; KS test skipped"
    elif not correct:
        notice = "all LLM labels incorrect; KS test skipped"
    else:
        ks = ks_two_sample(correct, wrong)
    return SeparationReport(
        ks=ks,
        notice=notice,
        bin_edges=tuple(float(e) for e in edges),
        correct_counts=tuple(int(c) for c in c_counts),
        wrong_counts=tuple(int(c) for c in w_counts),
        n_correct=len(correct),
        n_wrong=len(wrong),
    )


@dataclass(frozen=True)
class SettingResult:
    """One row of the intervention matrix."""

    setting: str
    p: float
    soft_labels: bool
    expert_count: int
    f1_per_seed: Tuple[float, ...]
    mean_f1: float
    std_f1: float


@dataclass(frozen=True)
class MatrixResult:
    """All intervention settings crossed with all seeds, on one task."""

    task_id: str
    p: float
    seeds: Tuple[int, ...]
    oracle_expert: bool
    rows: Tuple[SettingResult, ...]
    llm_f1: Optional[float]
    llm_f1_source: Optional[str]
    random_f1: float
    train_size: int
    eval_size: int

    def _base_mean(self) -> Optional[float]:
        for r in self.rows:
            if r.setting == "base":
                return r.mean_f1
        return None

    def to_json(self) -> dict:
        base = self._base_mean()
        rows = []
        for r in self.rows:
            row = {
                "setting": r.setting,
                "p": r.p,
                "soft_labels": r.soft_labels,
                "expert_count": r.expert_count,
                "f1_per_seed": list(r.f1_per_seed),
                "mean_f1": r.mean_f1,
                "std_f1": r.std_f1,
            }
            # Improvement over base in both conventions (absolute points and
            # relative percentage) since "x% improvement" is ambiguous.
            if base is not None and r.setting != "base":
                row["improvement_over_base_abs"] = r.mean_f1 - base
                row["improvement_over_base_rel"] = (r.mean_f1 - base) / base if base > 0 else None
            rows.append(row)
        return {
            "kind": "redct-matrix",
            "task_id": self.task_id,
            "p": self.p,
            "seeds": list(self.seeds),
            "oracle_expert": self.oracle_expert,
            "weighted_f1_convention": "support-weighted mean of per-class F1, 0/0 -> 0",
            "llm_f1": self.llm_f1,
            "llm_f1_source": self.llm_f1_source,
            "random_baseline": self.random_f1,
            "train_size": self.train_size,
            "eval_size": self.eval_size,
            "settings": rows,
        }

    def format_text(self) -> str:
        lines = [
            f"task {self.task_id}: intervention matrix "
            f"(p={self.p:g}, {len(self.seeds)} repetition(s), "
            f"{'oracle expert' if self.oracle_expert else 'human expert'})",
            f"weighted F1 = support-weighted mean of per-class F1 (0/0 -> 0)",
            "",
            f"{'setting':<10} {'p':>6} {'soft':>5} {'experts':>8} {'mean_f1':>9} {'std_f1':>8}",
        ]
        for r in self.rows:
            lines.append(
                f"{r.setting:<10} {r.p:>6.2f} {str(r.soft_labels):>5} "
                f"{r.expert_count:>8d} {r.mean_f1:>9.4f} {r.std_f1:>8.4f}"
            )
        lines.append("")
        if self.llm_f1 is not None:
            lines.append(f"LLM labeler weighted F1: {self.llm_f1:.4f} ({self.llm_f1_source})")
        lines.append(f"random baseline weighted F1: {self.random_f1:.4f}")
        return "\n".join(lines) + "\n"


def _f1_of_annotations(ds: Dataset) -> float:
    gold, pred = [], []
    for doc in ds.documents:
        ann = ds.annotations.get(doc.doc_id)
        if ann is None or doc.gold_label is None:
            continue
        gold.append(doc.gold_label)
        pred.append(ann.predicted_class)
    if not gold:
        raise EvalError("no annotated documents with gold labels")
    return weighted_f1(gold, pred, ds.schema.num_classes).weighted_f1


def _oracle_expert_labels(ds: Dataset, doc_ids: Sequence[str]) -> Dict[str, int]:
    labels: Dict[str, int] = {}
    for doc_id in doc_ids:
        doc = ds.doc_by_id(doc_id)
        if doc.gold_label is None:
            raise EvalError(f"oracle expert needs a gold label for {doc_id!r}")
        labels[doc_id] = doc.gold_label
    return labels


def _training_pool(ds: Dataset, setting: str, p: float, seed: int) -> Tuple[Dataset, int]:
    strategy = _SAMPLED.get(setting)
    if strategy is None:
        return ds, 0
    if strategy == "random":
        manifest = sample_random(ds, p, seed=seed)
    else:
        manifest = sample_confidence_informed(ds, p)
    labeled = apply_expert_labels(ds, manifest, _oracle_expert_labels(ds, manifest.selected_doc_ids))
    return labeled, len(manifest.selected_doc_ids)


def evaluate_model(model, eval_ds: Dataset) -> EvalReport:
    """Weighted F1 of a trained model against gold labels."""
    gold = []
    for doc in eval_ds.documents:
        if doc.gold_label is None:
            raise EvalError(f"evaluation document {doc.doc_id!r} lacks a gold label")
        gold.append(doc.gold_label)
    pred, _ = predict_many(model, eval_ds.documents)
    return weighted_f1(gold, pred.tolist(), eval_ds.schema.num_classes)


def run_matrix(
    train_ds: Dataset,
    eval_ds: Dataset,
    settings: Sequence[str],
    p: float,
    train_cfg: TrainConfig,
    featurizer_cfg: FeaturizerConfig,
    seeds: Sequence[int],
    baseline_trials: int = 200,
    baseline_seed: int = 0,
) -> MatrixResult:
    """Run every requested intervention setting over the given seeds.

    For each (setting, seed) cell: sample experts (gold labels stand in),
    fuse targets, train one model, score weighted F1 on the eval corpus.
    Deterministic: identical inputs and seeds yield an identical table.
    """
    if not settings:
        raise EvalError("no settings requested")
    unknown = [s for s in settings if s not in SETTINGS]
    if unknown:
        raise EvalError(f"unknown settings {unknown}; valid: {list(SETTINGS)}")
    if not seeds:
        raise EvalError("no seeds given")
    missing = [d.doc_id for d in train_ds.documents if d.doc_id not in train_ds.annotations]
    if missing:
        raise EvalError(f"{len(missing)} training documents lack annotations (first: {missing[0]!r})")

    eval_gold = [d.gold_label for d in eval_ds.documents]
    if any(g is None for g in eval_gold):
        raise EvalError("every evaluation document needs a gold label")
    eval_feats = stack_features(
        [featurize(d, featurizer_cfg) for d in eval_ds.documents], featurizer_cfg.dim
    )
    train_feats = {d.doc_id: featurize(d, featurizer_cfg) for d in train_ds.documents}

    if eval_ds.annotations:
        llm_f1, llm_src = _f1_of_annotations(eval_ds), "eval_corpus"
    elif any(d.gold_label is not None for d in train_ds.documents):
        llm_f1, llm_src = _f1_of_annotations(train_ds), "train_pool"
    else:
        llm_f1, llm_src = None, None

    rows: List[SettingResult] = []
    for setting in settings:
        soft = setting in _SOFT
        f1s: List[float] = []
        expert_count = 0
        for seed in seeds:
            try:
                pool, expert_count = _training_pool(train_ds, setting, p, seed)
                fused = fuse(pool, soft_llm_targets=soft)
                examples = [(train_feats[ex.doc_id], ex.target) for ex in fused]
                cfg = TrainConfig(
                    epochs=train_cfg.epochs,
                    learning_rate=train_cfg.learning_rate,
                    l2=train_cfg.l2,
                    batch_size=train_cfg.batch_size,
                    seed=seed,
                    repetitions=train_cfg.repetitions,
                )
                model = train(examples, cfg, featurizer_cfg, train_ds.schema)
            except RedctError as exc:
                raise EvalError(f"setting {setting!r}, seed {seed}: {exc}") from exc
            probs = softmax(eval_feats @ model.weights.T + model.bias)
            pred = probs.argmax(axis=1).tolist()
            f1s.append(weighted_f1(eval_gold, pred, eval_ds.schema.num_classes).weighted_f1)
            logger.debug("setting %s seed %d f1 %.4f", setting, seed, f1s[-1])
        mean = float(np.mean(f1s))
        std = float(np.std(f1s, ddof=1)) if len(f1s) > 1 else 0.0
        rows.append(
            SettingResult(
                setting=setting,
                p=p if setting in _SAMPLED else 0.0,
                soft_labels=soft,
                expert_count=expert_count,
                f1_per_seed=tuple(f1s),
                mean_f1=mean,
                std_f1=std,
            )
        )

    random_f1 = random_baseline(
        [g for g in eval_gold if g is not None],
        eval_ds.schema.num_classes,
        seed=baseline_seed,
        trials=baseline_trials,
    )
    return MatrixResult(
        task_id=train_ds.schema.task_id,
        p=p,
        seeds=tuple(seeds),
        oracle_expert=True,
        rows=tuple(rows),
        llm_f1=llm_f1,
        llm_f1_source=llm_src,
        random_f1=random_f1,
        train_size=len(train_ds.documents),
        eval_size=len(eval_ds.documents),
    )


@dataclass(frozen=True)
class SweepResult:
    """F1-vs-expert-fraction series per setting (the expert-budget sweep)."""

    task_id: str
    p_values: Tuple[float, ...]
    settings: Tuple[str, ...]
    seeds: Tuple[int, ...]
    llm_f1: Optional[float]
    random_f1: float
    # series[setting] = one (p, mean, std) triple per p value
    series: Dict[str, Tuple[Tuple[float, float, float], ...]]

    def to_json(self) -> dict:
        return {
            "kind": "redct-sweep",
            "task_id": self.task_id,
            "p_values": list(self.p_values),
            "settings": list(self.settings),
            "seeds": list(self.seeds),
            "llm_f1": self.llm_f1,
            "random_baseline": self.random_f1,
            "series": {
                s: [{"p": p, "mean_f1": m, "std_f1": sd} for p, m, sd in pts]
                for s, pts in self.series.items()
            },
        }

    def to_csv(self) -> str:
        lines = ["setting,p,mean_f1,std_f1"]
        for s in self.settings:
            for p, m, sd in self.series[s]:
                lines.append(f"{s},{p:g},{m:.6f},{sd:.6f}")
        return "\n".join(lines) + "\n"

    def format_text(self) -> str:
        lines = [f"task {self.task_id}: expert-fraction sweep ({len(self.seeds)} repetition(s))"]
        if self.llm_f1 is not None:
            lines.append(f"reference: LLM labeler F1 = {self.llm_f1:.4f} (dashed line)")
        lines.append(f"reference: random baseline F1 = {self.random_f1:.4f}")
        lines.append("")
        header = f"{'setting':<10}" + "".join(f" p={p:<8g}" for p in self.p_values)
        lines.append(header)
        for s in self.settings:
            cells = "".join(f" {m:<10.4f}" for _, m, _ in self.series[s])
            lines.append(f"{s:<10}{cells}")
        return "\n".join(lines) + "\n"


DEFAULT_SWEEP_P = (0.02, 0.05, 0.10, 0.15, 0.20)


def sweep_expert_fraction(
    train_ds: Dataset,
    eval_ds: Dataset,
    p_values: Sequence[float] = DEFAULT_SWEEP_P,
    settings: Sequence[str] = ("CI_SL",),
    train_cfg: TrainConfig = TrainConfig(),
    featurizer_cfg: FeaturizerConfig = FeaturizerConfig(),
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    baseline_trials: int = 200,
) -> SweepResult:
    """Run the matrix at each expert fraction p and collect the series."""
    if not p_values:
        raise EvalError("empty p set")
    series: Dict[str, List[Tuple[float, float, float]]] = {s: [] for s in settings}
    llm_f1 = None
    random_f1 = 0.0
    for p in p_values:
        matrix = run_matrix(
            train_ds, eval_ds, settings, p, train_cfg, featurizer_cfg, seeds,
            baseline_trials=baseline_trials,
        )
        llm_f1 = matrix.llm_f1
        random_f1 = matrix.random_f1
        for row in matrix.rows:
            series[row.setting].append((p, row.mean_f1, row.std_f1))
    return SweepResult(
        task_id=train_ds.schema.task_id,
        p_values=tuple(p_values),
        settings=tuple(settings),
        seeds=tuple(seeds),
        llm_f1=llm_f1,
        random_f1=random_f1,
        series={s: tuple(pts) for s, pts in series.items()},
    )
