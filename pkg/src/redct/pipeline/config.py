"""YAML configuration: task schema, backend, sampling, training, eval, annotation.

One config file drives a whole run. Paths are resolved relative to the
config file's directory so a config can travel with its corpus. Secrets
never live in the file — an HTTP backend names the environment variable
holding its token.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import yaml

from ..core import RedctError, TaskSchema
from ..evaluation import SETTINGS
from ..labeler import (
    HttpBackendConfig,
    HttpChatBackend,
    LabelingBackend,
    PromptTemplates,
    SimulatorBackend,
    SimulatorConfig,
)
from ..trainer import FeaturizerConfig, TrainConfig

logger = logging.getLogger(__name__)

BACKEND_KINDS = ("simulator", "http")


class ConfigError(RedctError):
    """Configuration file is missing, malformed, or inconsistent."""


@dataclass(frozen=True)
class BackendSettings:
    kind: str
    simulator: Optional[SimulatorConfig] = None
    http: Optional[HttpBackendConfig] = None

    def to_dict(self) -> dict:
        if self.kind == "simulator":
            sim = self.simulator
            return {
                "kind": "simulator",
                "accuracy_per_class": list(sim.accuracy_per_class),
                "correct_conf_params": list(sim.correct_conf_params),
                "wrong_conf_params": list(sim.wrong_conf_params),
                "seed": sim.seed,
            }
        http = self.http
        return {
            "kind": "http",
            "base_url": http.base_url,
            "model": http.model,
            "top_logprobs": http.top_logprobs,
            "max_tokens": http.max_tokens,
        }


@dataclass(frozen=True)
class PromptSettings:
    turn_files: Optional[Tuple[Path, ...]] = None
    parallelism: int = 1
    parse_retries: int = 3

    def templates(self) -> Optional[PromptTemplates]:
        if self.turn_files is None:
            return None
        return PromptTemplates.from_files(self.turn_files)


@dataclass(frozen=True)
class SamplingSettings:
    strategy: str = "confidence_informed"
    p: float = 0.10
    seed: int = 0

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "p": self.p, "seed": self.seed}


@dataclass(frozen=True)
class TrainingSettings:
    soft_labels: bool = True
    train: TrainConfig = TrainConfig()
    featurizer: FeaturizerConfig = FeaturizerConfig()

    def seeds(self) -> Tuple[int, ...]:
        return tuple(self.train.seed + i for i in range(self.train.repetitions))

    def to_dict(self) -> dict:
        return {
            "soft_labels": self.soft_labels,
            "epochs": self.train.epochs,
            "learning_rate": self.train.learning_rate,
            "l2": self.train.l2,
            "batch_size": self.train.batch_size,
            "seed": self.train.seed,
            "repetitions": self.train.repetitions,
            "featurizer": self.featurizer.to_dict(),
        }


@dataclass(frozen=True)
class EvalSettings:
    settings: Tuple[str, ...] = SETTINGS
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    baseline_trials: int = 200

    def to_dict(self) -> dict:
        return {
            "settings": list(self.settings),
            "seeds": list(self.seeds),
            "baseline_trials": self.baseline_trials,
        }


@dataclass(frozen=True)
class AnnotationSettings:
    host: str = "127.0.0.1"
    port: int = 8765
    lease_seconds: float = 300.0
    reveal_llm_label: bool = False
    static_dir: Optional[Path] = None


@dataclass(frozen=True)
class RedctConfig:
    path: Path
    schema: TaskSchema
    corpus: Path
    eval_corpus: Optional[Path]
    runs_dir: Path
    backend: BackendSettings
    prompts: PromptSettings
    sampling: SamplingSettings
    training: TrainingSettings
    eval: EvalSettings
    annotation: AnnotationSettings


def _require(d: dict, key: str, context: str) -> object:
    if key not in d:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return d[key]


def _as_dict(value: object, context: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{context}: expected a mapping, got {type(value).__name__}")
    return value


def _parse_schema(section: dict) -> TaskSchema:
    try:
        return TaskSchema(
            task_id=str(_require(section, "task_id", "task")),
            class_names=tuple(str(c) for c in _require(section, "class_names", "task")),
            label_tokens={str(k): str(v) for k, v in _require(section, "label_tokens", "task").items()},
            prompt_style=str(section.get("prompt_style", "zero_shot")),
        )
    except RedctError as exc:
        raise ConfigError(f"task: {exc}") from None


def _parse_backend(section: dict) -> BackendSettings:
    kind = str(_require(section, "kind", "backend"))
    if kind not in BACKEND_KINDS:
        raise ConfigError(f"backend.kind must be one of {BACKEND_KINDS}, got {kind!r}")
    try:
        if kind == "simulator":
            return BackendSettings(
                kind=kind,
                simulator=SimulatorConfig(
                    accuracy_per_class=tuple(
                        float(a) for a in _require(section, "accuracy_per_class", "backend")
                    ),
                    correct_conf_params=tuple(section.get("correct_conf_params", (8.0, 2.0))),
                    wrong_conf_params=tuple(section.get("wrong_conf_params", (2.0, 2.0))),
                    seed=int(section.get("seed", 0)),
                ),
            )
        return BackendSettings(
            kind=kind,
            http=HttpBackendConfig(
                base_url=str(_require(section, "base_url", "backend")),
                model=str(_require(section, "model", "backend")),
                auth_env=section.get("auth_env"),
                top_logprobs=int(section.get("top_logprobs", 5)),
                max_tokens=int(section.get("max_tokens", 256)),
                timeout=float(section.get("timeout", 60.0)),
                retries=int(section.get("retries", 3)),
                backoff_base=float(section.get("backoff_base", 0.5)),
                cache_dir=Path(section["cache_dir"]) if section.get("cache_dir") else None,
            ),
        )
    except (TypeError, ValueError, RedctError) as exc:
        raise ConfigError(f"backend: {exc}") from None


def load_config(path: Path | str) -> RedctConfig:
    """Parse and validate a pipeline configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    base = path.parent

    def resolve(p: object) -> Path:
        return (base / Path(str(p))).resolve()

    schema = _parse_schema(_as_dict(_require(raw, "task", str(path)), "task"))
    corpus = resolve(_require(raw, "corpus", str(path)))
    eval_corpus = resolve(raw["eval_corpus"]) if raw.get("eval_corpus") else None
    runs_dir = resolve(raw.get("runs_dir", "runs"))
    backend = _parse_backend(_as_dict(_require(raw, "backend", str(path)), "backend"))

    prompts_raw = _as_dict(raw.get("prompts"), "prompts")
    turn_files = None
    if prompts_raw.get("turn_files"):
        turn_files = tuple(resolve(p) for p in prompts_raw["turn_files"])
    prompts = PromptSettings(
        turn_files=turn_files,
        parallelism=int(prompts_raw.get("parallelism", 1)),
        parse_retries=int(prompts_raw.get("parse_retries", 3)),
    )
    if prompts.parallelism < 1:
        raise ConfigError("prompts.parallelism must be >= 1")

    sampling_raw = _as_dict(raw.get("sampling"), "sampling")
    sampling = SamplingSettings(
        strategy=str(sampling_raw.get("strategy", "confidence_informed")),
        p=float(sampling_raw.get("p", 0.10)),
        seed=int(sampling_raw.get("seed", 0)),
    )
    if sampling.strategy not in ("random", "confidence_informed"):
        raise ConfigError(f"sampling.strategy must be random or confidence_informed, "
                          f"got {sampling.strategy!r}")
    if not 0.0 < sampling.p <= 1.0:
        raise ConfigError(f"sampling.p must lie in (0, 1], got {sampling.p}")

    training_raw = _as_dict(raw.get("training"), "training")
    feat_raw = _as_dict(training_raw.get("featurizer"), "training.featurizer")
    try:
        featurizer = FeaturizerConfig(
            dim=int(feat_raw.get("dim", 2**18)),
            ngram_range=tuple(feat_raw.get("ngram_range", (1, 2))),
            lowercase=bool(feat_raw.get("lowercase", True)),
            tf_weighting=str(feat_raw.get("tf_weighting", "tf_sublinear")),
            include_target_prefix=bool(feat_raw.get("include_target_prefix", True)),
        )
        train_cfg = TrainConfig(
            epochs=int(training_raw.get("epochs", 20)),
            learning_rate=float(training_raw.get("learning_rate", 0.1)),
            l2=float(training_raw.get("l2", 1e-5)),
            batch_size=int(training_raw.get("batch_size", 64)),
            seed=int(training_raw.get("seed", 0)),
            repetitions=int(training_raw.get("repetitions", 5)),
        )
    except (TypeError, ValueError, RedctError) as exc:
        raise ConfigError(f"training: {exc}") from None
    training = TrainingSettings(
        soft_labels=bool(training_raw.get("soft_labels", True)),
        train=train_cfg,
        featurizer=featurizer,
    )

    eval_raw = _as_dict(raw.get("eval"), "eval")
    eval_settings = EvalSettings(
        settings=tuple(str(s) for s in eval_raw.get("settings", SETTINGS)),
        seeds=tuple(int(s) for s in eval_raw.get("seeds", (0, 1, 2, 3, 4))),
        baseline_trials=int(eval_raw.get("baseline_trials", 200)),
    )
    bad = [s for s in eval_settings.settings if s not in SETTINGS]
    if bad:
        raise ConfigError(f"eval.settings contains unknown settings {bad}; valid: {list(SETTINGS)}")
    if not eval_settings.seeds:
        raise ConfigError("eval.seeds must be nonempty")

    ann_raw = _as_dict(raw.get("annotation"), "annotation")
    annotation = AnnotationSettings(
        host=str(ann_raw.get("host", "127.0.0.1")),
        port=int(ann_raw.get("port", 8765)),
        lease_seconds=float(ann_raw.get("lease_seconds", 300.0)),
        reveal_llm_label=bool(ann_raw.get("reveal_llm_label", False)),
        static_dir=resolve(ann_raw["static_dir"]) if ann_raw.get("static_dir") else None,
    )

    return RedctConfig(
        path=path.resolve(),
        schema=schema,
        corpus=corpus,
        eval_corpus=eval_corpus,
        runs_dir=runs_dir,
        backend=backend,
        prompts=prompts,
        sampling=sampling,
        training=training,
        eval=eval_settings,
        annotation=annotation,
    )


def build_backend(config: RedctConfig) -> LabelingBackend:
    """Instantiate the labeling backend described by the config."""
    if config.backend.kind == "simulator":
        return SimulatorBackend(config.backend.simulator)
    http_cfg = config.backend.http
    if http_cfg.cache_dir is None:
        http_cfg = HttpBackendConfig(
            base_url=http_cfg.base_url,
            model=http_cfg.model,
            auth_env=http_cfg.auth_env,
            top_logprobs=http_cfg.top_logprobs,
            max_tokens=http_cfg.max_tokens,
            timeout=http_cfg.timeout,
            retries=http_cfg.retries,
            backoff_base=http_cfg.backoff_base,
            cache_dir=config.runs_dir / "llm-cache",
        )
    return HttpChatBackend(http_cfg)
