"""Benchmark protocol: holdout split, Monte-Carlo cross-validation,
trial-averaging generalization and timing.

The data are split once into a holdout partition (25 %) and a working
partition; every cross-validation iteration independently resplits the
working partition into train/validation (75:25).  The holdout indices
never enter any train or validation set, which is asserted on every
iteration.  All randomness descends from one master seed through child
streams, so reports are identical whether iterations run serially or in
a process pool.

LDA and SVM consume standardized windowed-means features; the CNN
consumes raw epochs (its validation split drives early stopping).  The
feature standardizer and every model are refit per iteration on that
iteration's training rows only.
"""

from __future__ import annotations

import json
import logging
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cnn import CnnClassifier
from .containers import EpochSet
from .features import EpochFlattener, Standardizer, WindowedMeans
from .lda import ShrinkageLda
from .metrics import MetricSet, compute_metrics
from .rng import SeededRng, ensure_rng
from .svm import SmoSvc

logger = logging.getLogger(__name__)

MODEL_NAMES = ("lda", "svm", "cnn")

#: decision threshold per model: 0 for decision values, 0.5 for probabilities
SCORE_THRESHOLDS = {"lda": 0.0, "svm": 0.0, "cnn": 0.5}

_METRIC_NAMES = ("accuracy", "precision", "recall", "auc")


@dataclass
class SplitPlan:
    holdout_fraction: float = 0.25
    cv_iterations: int = 30
    cv_val_fraction: float = 0.25

    def validate(self):
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in (0, 1)")
        if not 0.0 < self.cv_val_fraction < 1.0:
            raise ValueError("cv_val_fraction must lie in (0, 1)")
        if self.cv_iterations < 1:
            raise ValueError("cv_iterations must be >= 1")


@dataclass
class Splits:
    holdout: np.ndarray
    iterations: list[tuple[np.ndarray, np.ndarray]]  # (train, val), sorted


def make_splits(n: int, plan: SplitPlan, rng: SeededRng) -> Splits:
    """Draw the holdout once, then per-iteration train/validation splits.

    Sizes use floor rounding: ``|holdout| = floor(holdout_fraction * n)``
    and ``|val| = floor(cv_val_fraction * |rest|)``.  All index arrays
    are sorted ascending (original epoch order).
    """
    plan.validate()
    if n < 8:
        raise ValueError(f"need at least 8 epochs to split, got {n}")
    n_holdout = int(plan.holdout_fraction * n)
    perm = rng.child(0).generator.permutation(n)
    holdout = np.sort(perm[:n_holdout])
    rest = np.sort(perm[n_holdout:])

    n_val = int(plan.cv_val_fraction * rest.shape[0])
    if n_holdout < 1 or n_val < 1 or rest.shape[0] - n_val < 2:
        raise ValueError(f"n={n} too small for the requested split fractions")

    holdout_set = set(holdout.tolist())
    iterations = []
    for k in range(plan.cv_iterations):
        perm_k = rng.child(k + 1).generator.permutation(rest)
        val = np.sort(perm_k[:n_val])
        train = np.sort(perm_k[n_val:])
        _assert_leak_free(holdout_set, train, val, rest.shape[0])
        iterations.append((train, val))
    return Splits(holdout=holdout, iterations=iterations)


def _assert_leak_free(holdout_set, train, val, n_rest):
    train_set, val_set = set(train.tolist()), set(val.tolist())
    if holdout_set & (train_set | val_set):
        raise AssertionError("holdout indices leaked into a train/validation split")
    if train_set & val_set:
        raise AssertionError("train and validation splits overlap")
    if len(train_set) + len(val_set) != n_rest:
        raise AssertionError("train/validation splits do not partition the working set")


# -- trial averaging -------------------------------------------------------


def average_groups(epochs: EpochSet, k: int, *, within_subject: bool = False) -> EpochSet:
    """Average consecutive same-class groups of ``k`` epochs sample-wise.

    Within each class, epochs are taken in their original order and cut
    into consecutive groups of ``k``; a trailing group shorter than ``k``
    is dropped.  With ``within_subject`` set, groups never span a change
    of subject id.  ``k=1`` reproduces the input epochs exactly.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    groups: list[np.ndarray] = []
    for cls in (0, 1):
        idx = np.flatnonzero(epochs.labels == cls)
        if within_subject:
            runs = np.split(idx, np.flatnonzero(np.diff(epochs.subject_ids[idx]) != 0) + 1)
        else:
            runs = [idx]
        for run in runs:
            for start in range(0, run.shape[0] - k + 1, k):
                groups.append(run[start : start + k])
    groups.sort(key=lambda g: int(g[0]))

    n_groups = len(groups)
    data = np.empty((n_groups, epochs.n_channels, epochs.n_samples))
    labels = np.empty(n_groups, dtype=np.uint8)
    subjects = np.empty(n_groups, dtype=np.int32)
    for i, g in enumerate(groups):
        data[i] = epochs.data[g].mean(axis=0)
        labels[i] = epochs.labels[g[0]]
        sub = np.unique(epochs.subject_ids[g])
        subjects[i] = sub[0] if sub.shape[0] == 1 else -1
    return EpochSet(
        data=data,
        labels=labels,
        sampling_rate_hz=epochs.sampling_rate_hz,
        prestim_ms=epochs.prestim_ms,
        channel_names=list(epochs.channel_names),
        subject_ids=subjects,
    )


# -- fitted pipeline -------------------------------------------------------


@dataclass
class TrainedPipeline:
    """One iteration's fitted feature pipeline and models."""

    feature_extractor: WindowedMeans | EpochFlattener
    standardizer: Standardizer
    models: dict  # name -> fitted estimator

    def features(self, epochs: EpochSet) -> np.ndarray:
        return self.standardizer.transform(self.feature_extractor.transform(epochs))

    def scores(self, name: str, epochs: EpochSet) -> np.ndarray:
        model = self.models[name]
        if name == "cnn":
            return model.decision_function(epochs.data)
        return model.decision_function(self.features(epochs))

    def metrics(self, name: str, epochs: EpochSet) -> MetricSet | None:
        """MetricSet on an epoch set, or None if a class is absent."""
        labels = epochs.labels
        if epochs.n_epochs == 0 or len(np.unique(labels)) < 2:
            return None
        return compute_metrics(self.scores(name, epochs), labels, SCORE_THRESHOLDS[name])


@dataclass
class BenchmarkConfig:
    """Everything one benchmark run needs besides data and seed."""

    models: tuple[str, ...] = MODEL_NAMES
    feature_mode: str = "wm"  # "wm" or "raw" (no feature extraction)
    wm: dict = field(default_factory=dict)  # WindowedMeans parameters
    lda: dict = field(default_factory=dict)  # ShrinkageLda parameters
    svm: dict = field(default_factory=dict)  # SmoSvc parameters (seed excluded)
    cnn: dict = field(default_factory=dict)  # CnnClassifier parameters (seed excluded)
    plan: SplitPlan = field(default_factory=SplitPlan)
    averaging_k_max: int = 0
    within_subject_averaging: bool = False

    def validate(self):
        unknown = set(self.models) - set(MODEL_NAMES)
        if unknown:
            raise ValueError(f"unknown model(s) {sorted(unknown)}; choose from {MODEL_NAMES}")
        if not self.models:
            raise ValueError("at least one model required")
        if self.feature_mode not in ("wm", "raw"):
            raise ValueError(f"feature_mode must be 'wm' or 'raw', got {self.feature_mode!r}")
        if self.averaging_k_max < 0:
            raise ValueError("averaging_k_max must be >= 0")
        for key in ("seed", "track_objective"):
            for section in (self.svm, self.cnn, self.lda):
                if key in section:
                    raise ValueError(f"{key!r} is managed by the benchmark, not per-model config")
        self.plan.validate()

    def feature_extractor(self):
        return WindowedMeans(**self.wm) if self.feature_mode == "wm" else EpochFlattener()

    def snapshot(self) -> dict:
        return {
            "models": list(self.models),
            "feature_mode": self.feature_mode,
            "wm": dict(self.wm),
            "lda": dict(self.lda),
            "svm": dict(self.svm),
            "cnn": dict(self.cnn),
            "plan": {
                "holdout_fraction": self.plan.holdout_fraction,
                "cv_iterations": self.plan.cv_iterations,
                "cv_val_fraction": self.plan.cv_val_fraction,
            },
            "averaging_k_max": self.averaging_k_max,
            "within_subject_averaging": self.within_subject_averaging,
        }


def fit_iteration(
    epochs: EpochSet,
    cfg: BenchmarkConfig,
    features_all: np.ndarray,
    train_idx: np.ndarray,
    val_idx: np.ndarray,
    iter_rng: SeededRng,
) -> tuple[TrainedPipeline, dict[str, float]]:
    """Fit the feature pipeline and all configured models on one split."""
    extractor = cfg.feature_extractor()
    standardizer = Standardizer().fit(features_all[train_idx])
    labels = epochs.labels.astype(np.int64)

    models: dict = {}
    fit_seconds: dict[str, float] = {}
    for name in cfg.models:
        start = time.perf_counter()
        if name == "lda":
            model = ShrinkageLda(**cfg.lda)
            model.fit(standardizer.transform(features_all[train_idx]), labels[train_idx])
        elif name == "svm":
            model = SmoSvc(**cfg.svm, seed=iter_rng.child(1))
            model.fit(standardizer.transform(features_all[train_idx]), labels[train_idx])
        elif name == "cnn":
            model = CnnClassifier(**cfg.cnn, seed=iter_rng.child(0))
            model.fit(
                epochs.data[train_idx],
                labels[train_idx],
                validation_data=(epochs.data[val_idx], labels[val_idx]),
            )
        else:  # pragma: no cover - guarded by cfg.validate()
            raise ValueError(f"unknown model {name!r}")
        fit_seconds[name] = time.perf_counter() - start
        models[name] = model
    return TrainedPipeline(extractor, standardizer, models), fit_seconds


def averaging_eval(
    pipeline: TrainedPipeline,
    holdout: EpochSet,
    k_max: int = 6,
    *,
    within_subject: bool = False,
) -> dict[str, dict[int, MetricSet | None]]:
    """Metrics of trained models on k-averaged holdout trials, k = 1..k_max.

    Averaged epochs pass through the unchanged feature pipeline and
    classifiers.  A k where either class ends up empty reports None.
    """
    results: dict[str, dict[int, MetricSet | None]] = {name: {} for name in pipeline.models}
    for k in range(1, k_max + 1):
        averaged = average_groups(holdout, k, within_subject=within_subject)
        for name in pipeline.models:
            results[name][k] = pipeline.metrics(name, averaged)
    return results


# -- report ----------------------------------------------------------------


def _aggregate(values: list[float | None]) -> dict:
    if any(v is None for v in values):
        return {"mean": None, "sd": None}
    arr = np.asarray(values, dtype=np.float64)
    sd = float(arr.std(ddof=1)) if arr.shape[0] > 1 else None
    return {"mean": float(arr.mean()), "sd": sd}


@dataclass
class EvalReport:
    seed: int
    config: dict
    per_iteration: dict  # model -> split -> [MetricSet]
    averaging: dict | None  # model -> [ {k: MetricSet|None} per iteration ]
    timings: dict  # model -> [fit seconds per iteration]; excluded from to_json

    @property
    def n_iterations(self) -> int:
        first = next(iter(self.per_iteration.values()))
        return len(first["validation"])

    def aggregate(self, model: str, split: str) -> dict:
        rows = self.per_iteration[model][split]
        return {
            m: _aggregate([getattr(r, m) for r in rows]) for m in _METRIC_NAMES
        }

    def averaging_aggregate(self, model: str) -> dict[int, dict]:
        if self.averaging is None:
            return {}
        rows = self.averaging[model]
        ks = sorted(rows[0].keys())
        out = {}
        for k in ks:
            per_metric = {}
            for m in _METRIC_NAMES:
                values = [None if r[k] is None else getattr(r[k], m) for r in rows]
                per_metric[m] = _aggregate(values)
            out[k] = per_metric
        return out

    def to_dict(self) -> dict:
        results = {}
        for model, splits in self.per_iteration.items():
            results[model] = {}
            for split, rows in splits.items():
                results[model][split] = {
                    "iterations": [r.as_dict() for r in rows],
                    "aggregate": self.aggregate(model, split),
                }
        doc = {
            "format": "p300bench-report",
            "version": 1,
            "seed": self.seed,
            "n_iterations": self.n_iterations,
            "config": self.config,
            "results": results,
        }
        if self.averaging is not None:
            doc["averaging"] = {
                model: {
                    str(k): {
                        "iterations": [
                            None if r[k] is None else r[k].as_dict() for r in rows
                        ],
                        "aggregate": self.averaging_aggregate(model)[k],
                    }
                    for k in sorted(rows[0].keys())
                }
                for model, rows in self.averaging.items()
            }
        return doc

    def to_json(self) -> str:
        """Deterministic report document; timings are deliberately excluded
        (they vary run to run and would break byte-identical reproduction)."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    # CSV emission ---------------------------------------------------------

    def write_iterations_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["iteration", "model", "split", "metric", "value"])
            for model, splits in self.per_iteration.items():
                for split, rows in splits.items():
                    for i, row in enumerate(rows):
                        for m in _METRIC_NAMES:
                            v = getattr(row, m)
                            writer.writerow([i, model, split, m, "" if v is None else repr(v)])

    def write_aggregate_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["model", "split", "metric", "mean", "sd"])
            for model, splits in self.per_iteration.items():
                for split in splits:
                    agg = self.aggregate(model, split)
                    for m in _METRIC_NAMES:
                        mean, sd = agg[m]["mean"], agg[m]["sd"]
                        writer.writerow(
                            [
                                model,
                                split,
                                m,
                                "" if mean is None else repr(mean),
                                "" if sd is None else repr(sd),
                            ]
                        )

    def write_averaging_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["model", "k", "metric", "mean", "sd"])
            if self.averaging is None:
                return
            for model in self.averaging:
                for k, per_metric in self.averaging_aggregate(model).items():
                    for m in _METRIC_NAMES:
                        mean, sd = per_metric[m]["mean"], per_metric[m]["sd"]
                        writer.writerow(
                            [
                                model,
                                k,
                                m,
                                "" if mean is None else repr(mean),
                                "" if sd is None else repr(sd),
                            ]
                        )


# -- benchmark driver -------------------------------------------------------

_WORKER_CTX: dict = {}


def _run_iteration(ctx: dict, k: int) -> dict:
    epochs: EpochSet = ctx["epochs"]
    cfg: BenchmarkConfig = ctx["cfg"]
    splits: Splits = ctx["splits"]
    master = SeededRng(ctx["seed"])

    train_idx, val_idx = splits.iterations[k]
    holdout_set = set(splits.holdout.tolist())
    _assert_leak_free(holdout_set, train_idx, val_idx, len(train_idx) + len(val_idx))

    pipeline, fit_seconds = fit_iteration(
        epochs, cfg, ctx["features_all"], train_idx, val_idx, master.child(k + 1)
    )

    validation = epochs.select(val_idx)
    result = {"fit_seconds": fit_seconds, "metrics": {}, "averaging": {}}
    for name in cfg.models:
        result["metrics"][name] = {
            "validation": pipeline.metrics(name, validation),
            "holdout": pipeline.metrics(name, ctx["holdout_epochs"]),
        }
    if cfg.averaging_k_max:
        for name in cfg.models:
            result["averaging"][name] = {}
        for k_avg, averaged in ctx["averaged_sets"].items():
            for name in cfg.models:
                result["averaging"][name][k_avg] = pipeline.metrics(name, averaged)
    return result


def _pool_worker(k: int) -> dict:
    return _run_iteration(_WORKER_CTX, k)


def run_benchmark(
    epochs: EpochSet,
    cfg: BenchmarkConfig,
    seed,
    *,
    n_jobs: int = 1,
) -> EvalReport:
    """Run the full protocol and aggregate per-iteration metrics.

    A failed iteration aborts the whole run: a report averaged over
    fewer iterations than configured would misstate its standard
    deviations.

    ``n_jobs > 1`` distributes iterations over forked worker processes;
    results are identical to a serial run because iteration ``k`` only
    uses child streams of ``(seed, k)``.
    """
    cfg.validate()
    master = ensure_rng(seed)
    splits = make_splits(epochs.n_epochs, cfg.plan, master.child(0))
    features_all = cfg.feature_extractor().fit_transform(epochs)
    holdout_epochs = epochs.select(splits.holdout)
    averaged_sets = {
        k: average_groups(holdout_epochs, k, within_subject=cfg.within_subject_averaging)
        for k in range(1, cfg.averaging_k_max + 1)
    }

    ctx = {
        "epochs": epochs,
        "cfg": cfg,
        "splits": splits,
        "seed": master.seed,
        "features_all": features_all,
        "holdout_epochs": holdout_epochs,
        "averaged_sets": averaged_sets,
    }

    n_iter = cfg.plan.cv_iterations
    if n_jobs > 1:
        try:
            mp = multiprocessing.get_context("fork")
        except ValueError:
            logger.warning("fork start method unavailable; running serially")
            mp = None
        if mp is not None:
            global _WORKER_CTX
            _WORKER_CTX = ctx
            try:
                with ProcessPoolExecutor(max_workers=n_jobs, mp_context=mp) as pool:
                    results = list(pool.map(_pool_worker, range(n_iter)))
            finally:
                _WORKER_CTX = {}
        else:
            results = [_run_iteration(ctx, k) for k in range(n_iter)]
    else:
        results = [_run_iteration(ctx, k) for k in range(n_iter)]

    per_iteration = {
        name: {
            "validation": [r["metrics"][name]["validation"] for r in results],
            "holdout": [r["metrics"][name]["holdout"] for r in results],
        }
        for name in cfg.models
    }
    averaging = None
    if cfg.averaging_k_max:
        averaging = {name: [r["averaging"][name] for r in results] for name in cfg.models}
    timings = {name: [r["fit_seconds"][name] for r in results] for name in cfg.models}

    return EvalReport(
        seed=master.seed,
        config=cfg.snapshot(),
        per_iteration=per_iteration,
        averaging=averaging,
        timings=timings,
    )


def bench_timing(epochs: EpochSet, cfg: BenchmarkConfig, seed, *, n_predict: int = 1000) -> dict:
    """Wall-clock fit time and single-pattern prediction latency per model.

    Prediction latency is the median over ``n_predict`` single-pattern
    calls on prepared inputs (feature extraction excluded, matching the
    per-processed-pattern convention of the timing comparison).
    """
    cfg.validate()
    master = ensure_rng(seed)
    splits = make_splits(epochs.n_epochs, cfg.plan, master.child(0))
    features_all = cfg.feature_extractor().fit_transform(epochs)
    train_idx, val_idx = splits.iterations[0]
    pipeline, fit_seconds = fit_iteration(
        epochs, cfg, features_all, train_idx, val_idx, master.child(1)
    )

    holdout = epochs.select(splits.holdout)
    feats = pipeline.features(holdout)
    latency_ms: dict[str, float] = {}
    for name in cfg.models:
        model = pipeline.models[name]
        times = np.empty(n_predict)
        for i in range(n_predict):
            if name == "cnn":
                x = holdout.data[i % holdout.n_epochs : i % holdout.n_epochs + 1]
            else:
                x = feats[i % feats.shape[0] : i % feats.shape[0] + 1]
            t0 = time.perf_counter()
            model.decision_function(x)
            times[i] = time.perf_counter() - t0
        latency_ms[name] = float(np.median(times) * 1e3)

    return {
        "n_train": int(train_idx.shape[0]),
        "fit_seconds": fit_seconds,
        "predict_ms_median": latency_ms,
        "n_predict_calls": n_predict,
    }
