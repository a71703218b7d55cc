"""The `redct` command line: label, sample, annotate, train, eval, export, infer, sweep.

Commands operate on a run directory under the configured runs_dir. Each
stage checks its predecessors, fingerprints its inputs, and skips itself
when already complete for the same inputs, so re-running a finished
pipeline is a no-op. Exit codes: 0 success, 1 runtime failure, 2
usage/config error.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path
from typing import Dict, Optional, Tuple

import click

from ..core import (
    Dataset,
    DatasetError,
    Document,
    RedctError,
    SchemaError,
    atomic_write_text,
    load_dataset,
    save_dataset,
)
from ..evaluation import (
    aggregate_reports,
    confidence_separation_report,
    evaluate_model,
    random_baseline,
    run_matrix,
    sweep_expert_fraction,
    weighted_f1,
)
from ..labeler import PromptError, label_corpus, simulate_labels
from ..sampler import (
    SamplingManifest,
    apply_expert_labels,
    sample_confidence_informed,
    sample_random,
)
from ..softlabel import fuse, load_fused, save_fused
from ..trainer import TrainConfig, export_model, featurize, import_model, predict, train
from .config import ConfigError, RedctConfig, build_backend, load_config
from .runs import RunManifest, RunStore, StageError, file_digest, fingerprint, save_manifest
from .service import (
    AnnotationServer,
    AnnotationService,
    read_expert_labels_file,
    write_expert_labels_file,
)

logger = logging.getLogger("redct")

_USAGE_ERRORS = (ConfigError, SchemaError, DatasetError, PromptError)


def _cli_errors(fn):
    """Map exceptions to the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _USAGE_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except RedctError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except KeyboardInterrupt:
            click.echo("interrupted", err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="debug logging")
@click.option("-q", "--quiet", is_flag=True, help="warnings only")
def main(verbose: bool, quiet: bool) -> None:
    """RED-CT: LLM-annotated data, expert resupply, and edge classifiers."""
    level = logging.DEBUG if verbose else (logging.WARNING if quiet else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _cfg(config_path: str) -> RedctConfig:
    return load_config(config_path)


def _check_corpus(cfg: RedctConfig) -> None:
    if not cfg.corpus.is_file():
        raise ConfigError(f"corpus file not found: {cfg.corpus}")
    if cfg.eval_corpus is not None and not cfg.eval_corpus.is_file():
        raise ConfigError(f"eval_corpus file not found: {cfg.eval_corpus}")


def _backend_id(cfg: RedctConfig) -> str:
    if cfg.backend.kind == "simulator":
        return f"simulator:{cfg.backend.simulator.seed}"
    return f"http:{cfg.backend.http.base_url}:{cfg.backend.http.model}"


def _annotated_ds(cfg: RedctConfig, manifest: RunManifest) -> Dataset:
    return load_dataset(manifest.path_of("label", "annotated"), cfg.schema)


def _eval_ds(cfg: RedctConfig, manifest: RunManifest) -> Dataset:
    """The eval corpus, annotated when the label stage produced one."""
    rec = manifest.stage("label")
    if "annotated_eval" in rec.outputs:
        return load_dataset(manifest.path_of("label", "annotated_eval"), cfg.schema)
    if cfg.eval_corpus is None:
        raise ConfigError("this command needs `eval_corpus` in the config")
    return load_dataset(cfg.eval_corpus, cfg.schema)


def _label_one(cfg: RedctConfig, ds: Dataset, parallelism: Optional[int]) -> Dataset:
    if cfg.backend.kind == "simulator":
        return simulate_labels(ds, cfg.backend.simulator)
    backend = build_backend(cfg)
    return label_corpus(
        ds,
        backend,
        parallelism=parallelism or cfg.prompts.parallelism,
        templates=cfg.prompts.templates(),
        parse_retries=cfg.prompts.parse_retries,
    )


@main.command("label")
@click.option("--config", "config_path", required=True, type=click.Path(), help="config YAML")
@click.option("--run", "run_id", default=None, help="run id (new run created if absent)")
@click.option("--parallelism", type=int, default=None, help="concurrent backend requests")
@_cli_errors
def cmd_label(config_path: str, run_id: Optional[str], parallelism: Optional[int]) -> None:
    """Label the corpus with the configured LLM backend or simulator."""
    cfg = _cfg(config_path)
    _check_corpus(cfg)
    store = RunStore(cfg.runs_dir)
    manifest = store.open_or_create(run_id, cfg.schema.task_id, _backend_id(cfg),
                                    cfg.schema.prompt_style)
    parts = {
        "corpus": file_digest(cfg.corpus),
        "eval_corpus": file_digest(cfg.eval_corpus) if cfg.eval_corpus else None,
        "schema": cfg.schema.schema_hash(),
        "backend": cfg.backend.to_dict(),
        "parse_retries": cfg.prompts.parse_retries,
        "turn_files": [file_digest(p) for p in cfg.prompts.turn_files]
        if cfg.prompts.turn_files else None,
    }
    fp = fingerprint(parts)
    if manifest.up_to_date("label", fp):
        click.echo(f"run {manifest.run_id}: label stage up to date; nothing to do")
        return
    manifest.check_can_run("label")

    ds = load_dataset(cfg.corpus, cfg.schema)
    annotated = _label_one(cfg, ds, parallelism)
    outputs = {"annotated": "annotated.jsonl"}
    save_dataset(annotated, manifest.run_dir / "annotated.jsonl")
    if cfg.eval_corpus is not None:
        eval_ds = load_dataset(cfg.eval_corpus, cfg.schema)
        save_dataset(_label_one(cfg, eval_ds, parallelism),
                     manifest.run_dir / "annotated_eval.jsonl")
        outputs["annotated_eval"] = "annotated_eval.jsonl"
    manifest.mark_complete("label", fp, outputs)
    manifest.invalidate_downstream("label")
    save_manifest(manifest)
    n_abstained = sum(1 for a in annotated.annotations.values() if a.abstained)
    click.echo(
        f"run {manifest.run_id}: labeled {len(annotated.documents)} documents"
        + (f" ({n_abstained} abstentions)" if n_abstained else "")
    )


@main.command("sample")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--run", "run_id", default=None, help="run id (latest when omitted)")
@click.option("--strategy", type=click.Choice(["random", "confidence_informed"]), default=None)
@click.option("--p", "p_value", type=float, default=None, help="expert fraction in (0, 1]")
@click.option("--seed", type=int, default=None, help="seed for the random strategy")
@_cli_errors
def cmd_sample(config_path: str, run_id: Optional[str], strategy: Optional[str],
               p_value: Optional[float], seed: Optional[int]) -> None:
    """Select documents for expert annotation."""
    cfg = _cfg(config_path)
    manifest = RunStore(cfg.runs_dir).open(run_id)
    manifest.check_can_run("sample")
    strategy = strategy or cfg.sampling.strategy
    p = cfg.sampling.p if p_value is None else p_value
    seed = cfg.sampling.seed if seed is None else seed
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"p must lie in (0, 1], got {p}")

    fp = fingerprint({
        "annotated": file_digest(manifest.path_of("label", "annotated")),
        "strategy": strategy,
        "p": p,
        "seed": seed if strategy == "random" else None,
    })
    if manifest.up_to_date("sample", fp):
        click.echo(f"run {manifest.run_id}: sample stage up to date; nothing to do")
        return

    ds = _annotated_ds(cfg, manifest)
    if strategy == "random":
        sampling = sample_random(ds, p, seed=seed)
    else:
        sampling = sample_confidence_informed(ds, p)
    sampling.save(manifest.run_dir / "sampling.json")
    manifest.mark_complete("sample", fp, {"sampling": "sampling.json"})
    manifest.invalidate_downstream("sample")
    manifest.meta["sampling"] = {"strategy": strategy, "p": p,
                                 "seed": seed if strategy == "random" else None}
    save_manifest(manifest)
    click.echo(
        f"run {manifest.run_id}: selected {len(sampling.selected_doc_ids)} of "
        f"{len(ds.documents)} documents for expert annotation ({strategy}, p={p:g})"
    )


def _find_static_dir(cfg: RedctConfig, flag: Optional[str]) -> Optional[Path]:
    if flag:
        return Path(flag)
    if cfg.annotation.static_dir is not None:
        return cfg.annotation.static_dir
    for candidate in (cfg.path.parent / "frontend" / "dist", Path.cwd() / "frontend" / "dist"):
        if (candidate / "index.html").is_file():
            return candidate
    return None


@main.command("annotate")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--run", "run_id", default=None)
@click.option("--oracle", is_flag=True,
              help="use gold labels as the expert (automated experiments)")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--lease-seconds", type=float, default=None)
@click.option("--reveal-llm-label", is_flag=True,
              help="include the LLM suggestion in task payloads (default: hidden)")
@click.option("--static-dir", default=None, type=click.Path(), help="UI bundle directory")
@_cli_errors
def cmd_annotate(config_path: str, run_id: Optional[str], oracle: bool,
                 host: Optional[str], port: Optional[int], lease_seconds: Optional[float],
                 reveal_llm_label: bool, static_dir: Optional[str]) -> None:
    """Collect expert labels: serve the annotation UI, or apply gold labels."""
    cfg = _cfg(config_path)
    manifest = RunStore(cfg.runs_dir).open(run_id)
    manifest.check_can_run("annotate")
    sampling = SamplingManifest.load(manifest.path_of("sample", "sampling"))
    fp = fingerprint({
        "sampling": file_digest(manifest.path_of("sample", "sampling")),
        "mode": "oracle" if oracle else "service",
    })
    if manifest.up_to_date("annotate", fp):
        click.echo(f"run {manifest.run_id}: annotate stage up to date; nothing to do")
        return

    ds = _annotated_ds(cfg, manifest)
    out_rel = "expert_labels.json"
    out_path = manifest.run_dir / out_rel
    if oracle:
        labels: Dict[str, str] = {}
        for doc_id in sampling.selected_doc_ids:
            doc = ds.doc_by_id(doc_id)
            if doc.gold_label is None:
                raise StageError(
                    f"--oracle needs gold labels; document {doc_id!r} has none"
                )
            labels[doc_id] = cfg.schema.class_names[doc.gold_label]
        write_expert_labels_file(out_path, labels,
                                 {d: "oracle" for d in labels}, oracle=True)
        click.echo(f"run {manifest.run_id}: oracle expert labeled {len(labels)} documents")
    else:
        service = AnnotationService(
            ds,
            sampling,
            journal_path=manifest.run_dir / "journal.jsonl",
            output_path=out_path,
            lease_seconds=lease_seconds or cfg.annotation.lease_seconds,
            reveal_llm_label=reveal_llm_label or cfg.annotation.reveal_llm_label,
            static_dir=_find_static_dir(cfg, static_dir),
        )
        server = AnnotationServer(
            service,
            host=host or cfg.annotation.host,
            port=cfg.annotation.port if port is None else port,
        )
        server.start()
        done = service.progress()
        click.echo(
            f"run {manifest.run_id}: annotation service at http://{server.address[0]}:"
            f"{server.address[1]} ({done['completed']}/{done['total']} done; Ctrl-C to stop)"
        )
        try:
            server.wait_until_done()
        finally:
            server.stop()
        if not service.all_done.is_set():
            raise RedctError("annotation service stopped before all tasks were labeled")
        click.echo(f"run {manifest.run_id}: all {done['total']} annotation tasks completed")

    manifest.mark_complete("annotate", fp, {"expert_labels": out_rel})
    manifest.invalidate_downstream("annotate")
    manifest.meta["oracle_expert"] = oracle
    save_manifest(manifest)


def _expert_labels_as_indices(cfg: RedctConfig, path: Path) -> Tuple[Dict[str, int], bool]:
    names, oracle = read_expert_labels_file(path)
    return {doc_id: cfg.schema.index_of(name) for doc_id, name in names.items()}, oracle


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--run", "run_id", default=None)
@click.option("--seeds", "seeds_csv", default=None,
              help="comma-separated training seeds (default: seed..seed+R-1)")
@_cli_errors
def cmd_train(config_path: str, run_id: Optional[str], seeds_csv: Optional[str]) -> None:
    """Fuse targets and train the edge classifier (one model per seed)."""
    cfg = _cfg(config_path)
    manifest = RunStore(cfg.runs_dir).open(run_id)

    # fuse sub-stage
    manifest.check_can_run("fuse")
    annotated_path = manifest.path_of("label", "annotated")
    expert_path = manifest.path_of("annotate", "expert_labels")
    fuse_fp = fingerprint({
        "annotated": file_digest(annotated_path),
        "expert_labels": file_digest(expert_path),
        "soft_labels": cfg.training.soft_labels,
    })
    if not manifest.up_to_date("fuse", fuse_fp):
        ds = _annotated_ds(cfg, manifest)
        sampling = SamplingManifest.load(manifest.path_of("sample", "sampling"))
        labels, _ = _expert_labels_as_indices(cfg, expert_path)
        fused = fuse(apply_expert_labels(ds, sampling, labels),
                     soft_llm_targets=cfg.training.soft_labels)
        save_fused(fused, manifest.run_dir / "fused.jsonl")
        manifest.mark_complete("fuse", fuse_fp, {"fused": "fused.jsonl"})
        manifest.invalidate_downstream("fuse")
        save_manifest(manifest)
        n_expert = sum(1 for ex in fused if ex.source == "expert")
        click.echo(f"run {manifest.run_id}: fused {len(fused)} targets "
                   f"({n_expert} expert, soft_labels={cfg.training.soft_labels})")
    else:
        click.echo(f"run {manifest.run_id}: fuse stage up to date")

    if seeds_csv:
        try:
            seeds = tuple(int(s) for s in seeds_csv.split(",") if s.strip())
        except ValueError:
            raise ConfigError(f"--seeds must be comma-separated integers, got {seeds_csv!r}")
        if not seeds:
            raise ConfigError("--seeds is empty")
    else:
        seeds = cfg.training.seeds()

    manifest.check_can_run("train")
    train_fp = fingerprint({
        "fused": file_digest(manifest.path_of("fuse", "fused")),
        "training": cfg.training.to_dict(),
        "seeds": list(seeds),
    })
    if manifest.up_to_date("train", train_fp):
        click.echo(f"run {manifest.run_id}: train stage up to date; nothing to do")
        return

    ds = _annotated_ds(cfg, manifest)
    fused = load_fused(manifest.path_of("fuse", "fused"))
    feats = {d.doc_id: featurize(d, cfg.training.featurizer) for d in ds.documents}
    examples = [(feats[ex.doc_id], ex.target) for ex in fused]
    (manifest.run_dir / "models").mkdir(exist_ok=True)
    outputs = {}
    base = cfg.training.train
    for seed in seeds:
        seed_cfg = TrainConfig(
            epochs=base.epochs, learning_rate=base.learning_rate, l2=base.l2,
            batch_size=base.batch_size, seed=seed, repetitions=base.repetitions,
        )
        model = train(examples, seed_cfg, cfg.training.featurizer, cfg.schema)
        rel = f"models/model-{seed}.json"
        export_model(model, manifest.run_dir / rel)
        outputs[f"model-{seed}"] = rel
        click.echo(f"run {manifest.run_id}: trained model (seed {seed}) -> {rel}")
    manifest.mark_complete("train", train_fp, outputs)
    manifest.invalidate_downstream("train")
    manifest.meta["train_seeds"] = list(seeds)
    save_manifest(manifest)


def _model_paths(manifest: RunManifest) -> Dict[int, Path]:
    rec = manifest.stage("train")
    out = {}
    for name, rel in rec.outputs.items():
        if name.startswith("model-"):
            out[int(name.split("-", 1)[1])] = manifest.run_dir / rel
    if not out:
        raise StageError(f"run {manifest.run_id}: no trained models recorded")
    return dict(sorted(out.items()))


@main.command("eval")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--run", "run_id", default=None)
@click.option("--matrix", "matrix_mode", is_flag=True,
              help="run the full intervention matrix (base/SL/RS/CI/CI_SL) with an oracle expert")
@_cli_errors
def cmd_eval(config_path: str, run_id: Optional[str], matrix_mode: bool) -> None:
    """Evaluate trained models, or run the full intervention matrix."""
    cfg = _cfg(config_path)
    manifest = RunStore(cfg.runs_dir).open(run_id)
    if matrix_mode:
        _eval_matrix(cfg, manifest)
    else:
        _eval_models(cfg, manifest)


def _write_separation(cfg: RedctConfig, manifest: RunManifest, ds: Dataset,
                      outputs: Dict[str, str]) -> Optional[dict]:
    """Confidence-separation diagnostic when gold labels are available."""
    if not ds.annotations or any(d.gold_label is None for d in ds.documents):
        return None
    report = confidence_separation_report(ds)
    atomic_write_text(manifest.run_dir / "separation.csv", report.to_csv())
    payload = {
        "n_correct": report.n_correct,
        "n_wrong": report.n_wrong,
        "notice": report.notice,
        "ks": None if report.ks is None else {
            "statistic": report.ks.statistic,
            "p_value": report.ks.p_value,
            "n": report.ks.n,
            "m": report.ks.m,
        },
    }
    outputs["separation"] = "separation.csv"
    return payload


def _eval_models(cfg: RedctConfig, manifest: RunManifest) -> None:
    manifest.check_can_run("eval")
    manifest.require_complete("train")
    eval_ds = _eval_ds(cfg, manifest)
    models = _model_paths(manifest)
    fp = fingerprint({
        "models": {str(s): file_digest(p) for s, p in models.items()},
        "eval_corpus": file_digest(cfg.eval_corpus) if cfg.eval_corpus else None,
        "baseline_trials": cfg.eval.baseline_trials,
    })
    if manifest.up_to_date("eval", fp):
        click.echo(f"run {manifest.run_id}: eval stage up to date; nothing to do")
        return

    reports = []
    per_seed = {}
    for seed, path in models.items():
        model = import_model(path, schema=cfg.schema)
        report = evaluate_model(model, eval_ds)
        reports.append(report)
        per_seed[str(seed)] = report.weighted_f1
    agg = aggregate_reports(reports)
    gold = [d.gold_label for d in eval_ds.documents]
    rand = random_baseline(gold, cfg.schema.num_classes, seed=0,
                           trials=cfg.eval.baseline_trials)
    llm_f1 = None
    if eval_ds.annotations:
        pred = [eval_ds.annotations[d.doc_id].predicted_class
                for d in eval_ds.documents if d.doc_id in eval_ds.annotations]
        sub_gold = [d.gold_label for d in eval_ds.documents if d.doc_id in eval_ds.annotations]
        llm_f1 = weighted_f1(sub_gold, pred, cfg.schema.num_classes).weighted_f1

    outputs = {"report": "eval.json", "report_text": "eval.txt"}
    train_ds = _annotated_ds(cfg, manifest)
    separation = _write_separation(cfg, manifest, train_ds, outputs)

    oracle = bool(manifest.meta.get("oracle_expert", False))
    payload = {
        "kind": "redct-eval",
        "run_id": manifest.run_id,
        "task_id": cfg.schema.task_id,
        "weighted_f1_convention": "support-weighted mean of per-class F1, 0/0 -> 0",
        "oracle_expert": oracle,
        "repetitions": len(reports),
        "weighted_f1_per_seed": per_seed,
        "weighted_f1_mean": agg.weighted_f1_mean,
        "weighted_f1_std": agg.weighted_f1_std,
        "per_class_f1": list(agg.f1),
        "support": list(agg.support),
        "confusion_pooled": [list(row) for row in agg.confusion],
        "random_baseline": rand,
        "llm_f1": llm_f1,
        "improvement_over_llm_abs": None if llm_f1 is None else agg.weighted_f1_mean - llm_f1,
        "improvement_over_llm_rel": None if not llm_f1 else (agg.weighted_f1_mean - llm_f1) / llm_f1,
        "confidence_separation": separation,
    }
    atomic_write_text(manifest.run_dir / "eval.json",
                      json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n")
    lines = [
        f"run {manifest.run_id} — task {cfg.schema.task_id}"
        f" ({'oracle' if oracle else 'human'} expert)",
        f"edge model weighted F1: {agg.weighted_f1_mean:.4f} ± {agg.weighted_f1_std:.4f} "
        f"over {len(reports)} repetition(s)",
        f"random baseline: {rand:.4f}",
    ]
    if llm_f1 is not None:
        lines.append(f"LLM labeler F1: {llm_f1:.4f}")
    if separation and separation["ks"]:
        lines.append(
            f"confidence separation (correct vs wrong): D={separation['ks']['statistic']:.4f}, "
            f"p={separation['ks']['p_value']:.3g}"
        )
    text = "\n".join(lines) + "\n"
    atomic_write_text(manifest.run_dir / "eval.txt", text)
    manifest.mark_complete("eval", fp, outputs)
    save_manifest(manifest)
    click.echo(text.rstrip())


def _eval_matrix(cfg: RedctConfig, manifest: RunManifest) -> None:
    manifest.require_complete("label")
    train_ds = _annotated_ds(cfg, manifest)
    eval_ds = _eval_ds(cfg, manifest)
    matrix = run_matrix(
        train_ds,
        eval_ds,
        settings=cfg.eval.settings,
        p=cfg.sampling.p,
        train_cfg=cfg.training.train,
        featurizer_cfg=cfg.training.featurizer,
        seeds=cfg.eval.seeds,
        baseline_trials=cfg.eval.baseline_trials,
    )
    atomic_write_text(manifest.run_dir / "matrix.json",
                      json.dumps(matrix.to_json(), sort_keys=True, indent=2,
                                 ensure_ascii=False) + "\n")
    atomic_write_text(manifest.run_dir / "matrix.txt", matrix.format_text())
    manifest.meta["matrix"] = {"settings": list(cfg.eval.settings), "p": cfg.sampling.p,
                               "seeds": list(cfg.eval.seeds),
                               "outputs": ["matrix.json", "matrix.txt"]}
    save_manifest(manifest)
    click.echo(matrix.format_text().rstrip())


@main.command("export")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--run", "run_id", default=None)
@click.option("--seed", type=int, default=None, help="which trained model (default: first)")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="destination (default: <run>/export/model.json)")
@_cli_errors
def cmd_export(config_path: str, run_id: Optional[str], seed: Optional[int],
               out_path: Optional[str]) -> None:
    """Copy a verified model artifact to its edge destination."""
    cfg = _cfg(config_path)
    manifest = RunStore(cfg.runs_dir).open(run_id)
    manifest.require_complete("train")
    models = _model_paths(manifest)
    if seed is None:
        seed = next(iter(models))
    if seed not in models:
        raise StageError(f"run {manifest.run_id}: no model for seed {seed}; "
                         f"available: {sorted(models)}")
    model = import_model(models[seed], schema=cfg.schema)  # verifies checksum + schema
    dest = Path(out_path) if out_path else manifest.run_dir / "export" / "model.json"
    dest.parent.mkdir(parents=True, exist_ok=True)
    export_model(model, dest)
    manifest.meta["export"] = {"seed": seed, "path": str(dest)}
    save_manifest(manifest)
    click.echo(f"run {manifest.run_id}: exported model (seed {seed}) to {dest}")


def _read_plain_documents(path: Path) -> list[Document]:
    """Documents for inference: headered or plain JSONL, gold ignored."""
    docs = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{line_no}: invalid JSON: {exc}") from None
            if not isinstance(rec, dict):
                raise DatasetError(f"{path}:{line_no}: expected an object")
            if rec.get("kind"):
                continue  # header line
            if "doc_id" not in rec or "text" not in rec:
                raise DatasetError(f"{path}:{line_no}: record needs doc_id and text")
            docs.append(Document(doc_id=str(rec["doc_id"]), text=str(rec["text"]),
                                 target=rec.get("target")))
    return docs


@main.command("infer")
@click.option("--model", "model_path", required=True, type=click.Path(), help="model artifact")
@click.option("--input", "input_path", required=True, type=click.Path(), help="documents JSONL")
@click.option("--output", "output_path", required=True, type=click.Path(),
              help="predictions JSONL")
@_cli_errors
def cmd_infer(model_path: str, input_path: str, output_path: str) -> None:
    """Edge inference: model + documents -> predictions. No network, no config."""
    if not Path(model_path).is_file():
        raise ConfigError(f"model artifact not found: {model_path}")
    if not Path(input_path).is_file():
        raise ConfigError(f"input file not found: {input_path}")
    model = import_model(model_path)
    docs = _read_plain_documents(Path(input_path))
    lines = []
    for doc in docs:
        idx, probs = predict(model, doc)
        lines.append(json.dumps(
            {
                "doc_id": doc.doc_id,
                "predicted_class": model.class_names[idx],
                "probs": {name: float(p) for name, p in zip(model.class_names, probs)},
            },
            sort_keys=True, ensure_ascii=False,
        ))
    atomic_write_text(Path(output_path), "\n".join(lines) + ("\n" if lines else ""))
    click.echo(f"wrote {len(lines)} predictions to {output_path}")


@main.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--run", "run_id", default=None)
@click.option("--p-values", "p_csv", default="0.02,0.05,0.10,0.15,0.20",
              help="comma-separated expert fractions")
@click.option("--settings", "settings_csv", default="CI_SL",
              help="comma-separated settings to sweep")
@_cli_errors
def cmd_sweep(config_path: str, run_id: Optional[str], p_csv: str, settings_csv: str) -> None:
    """Sweep the expert fraction p and chart F1 against it."""
    cfg = _cfg(config_path)
    manifest = RunStore(cfg.runs_dir).open(run_id)
    manifest.require_complete("label")
    try:
        p_values = tuple(float(s) for s in p_csv.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"--p-values must be comma-separated numbers, got {p_csv!r}")
    if not p_values:
        raise ConfigError("--p-values is empty")
    for p in p_values:
        if not 0.0 < p <= 1.0:
            raise ConfigError(f"p must lie in (0, 1], got {p}")
    settings = tuple(s.strip() for s in settings_csv.split(",") if s.strip())
    if not settings:
        raise ConfigError("--settings is empty")

    train_ds = _annotated_ds(cfg, manifest)
    eval_ds = _eval_ds(cfg, manifest)
    sweep = sweep_expert_fraction(
        train_ds,
        eval_ds,
        p_values=p_values,
        settings=settings,
        train_cfg=cfg.training.train,
        featurizer_cfg=cfg.training.featurizer,
        seeds=cfg.eval.seeds,
        baseline_trials=cfg.eval.baseline_trials,
    )
    atomic_write_text(manifest.run_dir / "sweep.json",
                      json.dumps(sweep.to_json(), sort_keys=True, indent=2,
                                 ensure_ascii=False) + "\n")
    atomic_write_text(manifest.run_dir / "sweep.txt", sweep.format_text())
    atomic_write_text(manifest.run_dir / "sweep.csv", sweep.to_csv())
    manifest.meta["sweep"] = {"p_values": list(p_values), "settings": list(settings),
                              "outputs": ["sweep.json", "sweep.txt", "sweep.csv"]}
    save_manifest(manifest)
    click.echo(sweep.format_text().rstrip())


if __name__ == "__main__":
    main()
