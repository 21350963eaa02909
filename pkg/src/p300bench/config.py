"""Run configuration: one JSON document drives every CLI command.

The file has one section per pipeline stage (``preprocess``, ``wm``,
``lda``, ``svm``, ``cnn``, ``split``, ``synth``) plus top-level keys for
the seed, model selection and paths.  Unknown keys are rejected so typos
fail loudly instead of silently falling back to defaults.  Defaults equal
the benchmark baseline everywhere.
"""

from __future__ import annotations

import dataclasses
import json
import os

from .cnn import CnnClassifier
from .evaluation import MODEL_NAMES, BenchmarkConfig, SplitPlan
from .features import WindowedMeans
from .lda import ShrinkageLda
from .preprocess import PreprocessConfig
from .svm import SmoSvc
from .synth import SynthConfig


class ConfigError(Exception):
    """Invalid configuration file or flag combination."""


_TOP_LEVEL_KEYS = {
    "seed",
    "models",
    "input",
    "output",
    "threads",
    "avg_max",
    "layer",
    "feature_mode",
    "wm",
    "lda",
    "svm",
    "cnn",
    "split",
    "preprocess",
    "synth",
}

# per-model keys the benchmark manages itself
_RESERVED = {"seed", "track_objective"}


def _check_keys(section: str, given: dict, allowed: set[str]):
    unknown = set(given) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in section {section!r}: {sorted(unknown)}; "
            f"allowed: {sorted(allowed)}"
        )


def _dataclass_from(cls, section: str, given: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    _check_keys(section, given, names)
    try:
        obj = cls(**given)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section {section!r}: {exc}")
    return obj


def _normalize_cnn(given: dict) -> dict:
    """Accept the optimizer settings nested under "adam" or flat."""
    given = dict(given)
    adam = given.pop("adam", None)
    if adam is not None:
        _check_keys("cnn.adam", adam, {"lr", "beta1", "beta2", "eps"})
        mapping = {"lr": "lr", "beta1": "beta1", "beta2": "beta2", "eps": "adam_eps"}
        for key, value in adam.items():
            target = mapping[key]
            if target in given:
                raise ConfigError(f"cnn.{target} given both flat and under 'adam'")
            given[target] = value
    if isinstance(given.get("dense_units"), list):
        given["dense_units"] = tuple(given["dense_units"])
    return given


@dataclasses.dataclass
class RunConfig:
    """Resolved configuration for one CLI invocation."""

    seed: int = 0
    models: tuple[str, ...] = MODEL_NAMES
    input: str | None = None
    output: str | None = None
    threads: int | None = None  # None -> all available cores
    avg_max: int = 6
    layer: int = 4
    feature_mode: str = "wm"
    wm: dict = dataclasses.field(default_factory=dict)
    lda: dict = dataclasses.field(default_factory=dict)
    svm: dict = dataclasses.field(default_factory=dict)
    cnn: dict = dataclasses.field(default_factory=dict)
    split: SplitPlan = dataclasses.field(default_factory=SplitPlan)
    preprocess: PreprocessConfig = dataclasses.field(default_factory=PreprocessConfig)
    synth: SynthConfig = dataclasses.field(default_factory=SynthConfig)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        _check_keys("<top level>", doc, _TOP_LEVEL_KEYS)
        cfg = cls()
        for key in ("seed", "input", "output", "threads", "avg_max", "layer", "feature_mode"):
            if key in doc:
                setattr(cfg, key, doc[key])
        if "models" in doc:
            cfg.models = _parse_models(doc["models"])
        for section, estimator in (("wm", WindowedMeans), ("lda", ShrinkageLda), ("svm", SmoSvc)):
            if section in doc:
                allowed = set(estimator._param_names()) - _RESERVED
                _check_keys(section, doc[section], allowed)
                setattr(cfg, section, dict(doc[section]))
        if "cnn" in doc:
            cnn = _normalize_cnn(doc["cnn"])
            _check_keys("cnn", cnn, set(CnnClassifier._param_names()) - _RESERVED)
            cfg.cnn = cnn
        if "split" in doc:
            cfg.split = _dataclass_from(SplitPlan, "split", doc["split"])
        if "preprocess" in doc:
            section = dict(doc["preprocess"])
            if isinstance(section.get("baseline_window_ms"), list):
                section["baseline_window_ms"] = tuple(section["baseline_window_ms"])
            cfg.preprocess = _dataclass_from(PreprocessConfig, "preprocess", section)
        if "synth" in doc:
            section = dict(doc["synth"])
            if isinstance(section.get("channel_gains"), list):
                section["channel_gains"] = tuple(section["channel_gains"])
            cfg.synth = _dataclass_from(SynthConfig, "synth", section)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as f:
                doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_dict(doc)

    def validate(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        unknown = set(self.models) - set(MODEL_NAMES)
        if unknown:
            raise ConfigError(f"unknown model(s): {sorted(unknown)}")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.avg_max < 1:
            raise ConfigError("avg_max must be >= 1")
        if self.feature_mode not in ("wm", "raw"):
            raise ConfigError(f"feature_mode must be 'wm' or 'raw', got {self.feature_mode!r}")
        try:
            self.split.validate()
            self.preprocess.validate()
            self.synth.validate()
        except ValueError as exc:
            raise ConfigError(str(exc))

    def benchmark_config(self, *, averaging_k_max: int = 0) -> BenchmarkConfig:
        cfg = BenchmarkConfig(
            models=tuple(self.models),
            feature_mode=self.feature_mode,
            wm=dict(self.wm),
            lda=dict(self.lda),
            svm=dict(self.svm),
            cnn=dict(self.cnn),
            plan=self.split,
            averaging_k_max=averaging_k_max,
        )
        cfg.validate()
        return cfg

    def resolved_threads(self) -> int:
        return self.threads if self.threads is not None else (os.cpu_count() or 1)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "models": list(self.models),
            "input": self.input,
            "output": self.output,
            "threads": self.threads,
            "avg_max": self.avg_max,
            "layer": self.layer,
            "feature_mode": self.feature_mode,
            "wm": dict(self.wm),
            "lda": dict(self.lda),
            "svm": dict(self.svm),
            "cnn": {
                k: (list(v) if isinstance(v, tuple) else v) for k, v in self.cnn.items()
            },
            "split": dataclasses.asdict(self.split),
            "preprocess": {
                **dataclasses.asdict(self.preprocess),
                "baseline_window_ms": list(self.preprocess.baseline_window_ms),
            },
            "synth": {
                **dataclasses.asdict(self.synth),
                "channel_gains": list(self.synth.channel_gains),
            },
        }


def _parse_models(value) -> tuple[str, ...]:
    if isinstance(value, str):
        value = [value]
    models = []
    for item in value:
        if item == "all":
            models.extend(MODEL_NAMES)
        elif item in MODEL_NAMES:
            models.append(item)
        else:
            raise ConfigError(f"unknown model {item!r}; choose from {MODEL_NAMES + ('all',)}")
    out = tuple(dict.fromkeys(models))
    if not out:
        raise ConfigError("at least one model required")
    return out
