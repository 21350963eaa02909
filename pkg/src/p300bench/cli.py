"""Command-line front end.

Commands::

    synth        generate a synthetic dataset (EPB)
    import       convert delimited text (data + labels) to EPB
    preprocess   baseline-correct and artifact-screen an EPB file
    features     export the feature matrix as CSV
    train        fit the selected models once and save checkpoints
    eval         full benchmark: Monte-Carlo CV + holdout, reports
    avg-eval     benchmark including trial-averaged holdout testing
    inspect      averaged hidden-layer maps of a CNN checkpoint
    bench        training / single-pattern prediction timing

Every command writes its outputs plus a ``run-manifest.json`` capturing
the fully resolved configuration into ``--out``.  Exit codes: 0 success,
2 configuration error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cnn import CnnClassifier
from .config import ConfigError, RunConfig
from .containers import ContainerFormatError, import_csv, read_epb, write_epb
from .evaluation import bench_timing, run_benchmark
from .features import FeatureMatrix
from .preprocess import baseline_correct, reject_artifacts
from .synth import synthesize

_CONFIG_HELP = """\
configuration keys (JSON file, flags override; defaults are the baseline):
  seed=0  models=["lda","svm","cnn"]  feature_mode="wm"  threads=null
  avg_max=6  layer=4
  preprocess: prestim_ms=200 poststim_ms=1000 baseline_window_ms=[-200,0]
              rejection_threshold_uv=100
  wm:        window_start_ms=300 window_end_ms=1000 n_intervals=20
  lda:       shrinkage="auto"
  svm:       C=1.0 kernel="rbf" gamma="scale" degree=3 tol=0.001
             max_passes=10 max_iters=null cache_mb=500
  cnn:       n_filters=6 filter_h=3 filter_w=3 pool_w=8 dense_units=100
             dropout_p=0.5 elu_alpha=1.0 batch_size=16 max_epochs=30
             patience=5 activation="elu" pooling="avg" batchnorm=true
             adam={lr=0.001 beta1=0.9 beta2=0.999 eps=1e-7}
  split:     holdout_fraction=0.25 cv_iterations=30 cv_val_fraction=0.25
  synth:     n_epochs=2000 n_channels=3 n_samples=1200 sampling_rate_hz=1000
             prestim_ms=200 p300_amplitude_uv=8 p300_latency_ms=500
             latency_jitter_ms=50 p300_width_ms=80 noise_std_uv=12
             channel_gains=[0.7,1.0,0.9] seed=0
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="p300bench",
        description="Single-trial P300 classification benchmark toolkit.",
        epilog=_CONFIG_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"p300bench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, **extra):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--in", dest="input", help="input file (EPB unless noted)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument(
            "--model",
            action="append",
            choices=["lda", "svm", "cnn", "all"],
            help="model selection (repeatable)",
        )
        p.add_argument("--window", help="windowed-means window, e.g. 300-1000 (ms)")
        p.add_argument("--avg-max", type=int, dest="avg_max", help="largest averaging group size")
        p.add_argument("--layer", type=int, help="layer index for inspect (default 4, pooling)")
        p.add_argument("--threads", type=int, help="worker cap for eval (default: all cores)")
        return p

    add("synth", "generate a synthetic dataset")
    p_import = add("import", "convert CSV data + labels to EPB")
    p_import.add_argument("--labels", help="labels CSV (one 0/1 per row)")
    p_import.add_argument("--rate", type=float, default=1000.0, help="sampling rate in Hz")
    p_import.add_argument("--prestim", type=float, default=200.0, help="prestimulus span in ms")
    p_import.add_argument(
        "--channels", default="Fz,Cz,Pz", help="comma-separated channel names"
    )
    add("preprocess", "baseline correction + artifact rejection")
    add("features", "export the feature matrix as CSV")
    add("train", "fit models once and write checkpoints")
    add("eval", "Monte-Carlo cross-validation + holdout benchmark")
    add("avg-eval", "benchmark including trial-averaged holdout testing")
    p_inspect = add("inspect", "averaged hidden-layer activation maps")
    p_inspect.add_argument("--checkpoint", help="CNN checkpoint JSON (from train)")
    add("bench", "training and prediction timing")
    return parser


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg.seed = args.seed
    if args.input is not None:
        cfg.input = args.input
    cfg.output = args.out
    if args.model:
        from .config import _parse_models

        cfg.models = _parse_models(args.model)
    if args.window is not None:
        cfg.wm = dict(cfg.wm)
        start, end = _parse_window(args.window)
        cfg.wm["window_start_ms"] = start
        cfg.wm["window_end_ms"] = end
    if args.avg_max is not None:
        cfg.avg_max = args.avg_max
    if args.layer is not None:
        cfg.layer = args.layer
    if args.threads is not None:
        cfg.threads = args.threads
    cfg.validate()
    return cfg


def _parse_window(text: str) -> tuple[float, float]:
    parts = text.split("-")
    if len(parts) != 2:
        raise ConfigError(f"--window must look like 300-1000, got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigError(f"--window must hold two numbers, got {text!r}")


def _write_manifest(out_dir: Path, command: str, cfg: RunConfig, inputs, outputs):
    doc = {
        "format": "p300bench-manifest",
        "version": 1,
        "tool_version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
    }
    with open(out_dir / "run-manifest.json", "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _require_input(cfg: RunConfig) -> Path:
    if not cfg.input:
        raise ConfigError("an input file is required (--in or config 'input')")
    path = Path(cfg.input)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    return path


def _write_map_csv(path, grid: np.ndarray):
    grid = np.atleast_2d(np.asarray(grid, dtype=np.float64))
    if grid.shape[0] == 1:
        grid = grid.T
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["index", *[f"filter{j}" for j in range(grid.shape[1])]])
        for i, row in enumerate(grid):
            writer.writerow([i, *[repr(float(v)) for v in row]])


# -- command handlers -------------------------------------------------------


def _cmd_synth(cfg: RunConfig, args, out: Path):
    synth_cfg = cfg.synth
    if args.seed is not None:
        synth_cfg.seed = cfg.seed
    epochs = synthesize(synth_cfg)
    target = out / "synthetic.epb"
    write_epb(epochs, target)
    return [], [target]


def _cmd_import(cfg: RunConfig, args, out: Path):
    data_path = _require_input(cfg)
    if not args.labels:
        raise ConfigError("import requires --labels")
    labels_path = Path(args.labels)
    if not labels_path.exists():
        raise FileNotFoundError(f"labels file not found: {labels_path}")
    channels = [c.strip() for c in args.channels.split(",") if c.strip()]
    epochs = import_csv(
        data_path,
        labels_path,
        n_channels=len(channels),
        sampling_rate_hz=args.rate,
        prestim_ms=args.prestim,
        channel_names=channels,
    )
    target = out / "imported.epb"
    write_epb(epochs, target)
    return [data_path, labels_path], [target]


def _cmd_preprocess(cfg: RunConfig, args, out: Path):
    source = _require_input(cfg)
    epochs = read_epb(source)
    corrected = baseline_correct(epochs, cfg.preprocess)
    kept, report = reject_artifacts(corrected, cfg.preprocess)
    target = out / "preprocessed.epb"
    write_epb(kept, target)
    report_path = out / "rejection.json"
    with open(report_path, "w") as f:
        json.dump(report.as_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    return [source], [target, report_path]


def _cmd_features(cfg: RunConfig, args, out: Path):
    source = _require_input(cfg)
    epochs = read_epb(source)
    bench_cfg = cfg.benchmark_config()
    extractor = bench_cfg.feature_extractor()
    values = extractor.fit_transform(epochs)
    if cfg.feature_mode == "wm":
        names = extractor.feature_names(epochs.n_channels)
    else:
        names = extractor.feature_names(epochs.n_channels, epochs.n_samples)
    matrix = FeatureMatrix(values=values, labels=epochs.labels, feature_names=names)
    target = out / "features.csv"
    matrix.to_csv(target)
    return [source], [target]


def _cmd_train(cfg: RunConfig, args, out: Path):
    from .evaluation import fit_iteration, make_splits
    from .rng import SeededRng

    source = _require_input(cfg)
    epochs = read_epb(source)
    bench_cfg = cfg.benchmark_config()
    master = SeededRng(cfg.seed)
    splits = make_splits(epochs.n_epochs, bench_cfg.plan, master.child(0))
    train_idx, val_idx = splits.iterations[0]
    features_all = bench_cfg.feature_extractor().fit_transform(epochs)
    pipeline, _ = fit_iteration(epochs, bench_cfg, features_all, train_idx, val_idx, master.child(1))

    outputs = []
    std_path = out / "standardizer.json"
    with open(std_path, "w") as f:
        f.write(pipeline.standardizer.to_json())
    outputs.append(std_path)
    for name, model in pipeline.models.items():
        path = out / f"{name}.json"
        with open(path, "w") as f:
            f.write(model.to_json())
        outputs.append(path)
        if name == "cnn":
            log_path = out / "cnn_training_log.csv"
            model.training_log_csv(log_path)
            outputs.append(log_path)
    return [source], outputs


def _run_eval(cfg: RunConfig, out: Path, averaging_k_max: int):
    source = _require_input(cfg)
    epochs = read_epb(source)
    bench_cfg = cfg.benchmark_config(averaging_k_max=averaging_k_max)
    report = run_benchmark(epochs, bench_cfg, cfg.seed, n_jobs=cfg.resolved_threads())

    outputs = []
    report_path = out / "report.json"
    with open(report_path, "w") as f:
        f.write(report.to_json())
        f.write("\n")
    outputs.append(report_path)
    for name, writer in (
        ("report_iterations.csv", report.write_iterations_csv),
        ("report_aggregate.csv", report.write_aggregate_csv),
    ):
        path = out / name
        writer(path)
        outputs.append(path)
    if averaging_k_max:
        path = out / "report_averaging.csv"
        report.write_averaging_csv(path)
        outputs.append(path)
    timings_path = out / "timings.json"
    with open(timings_path, "w") as f:
        json.dump({"fit_seconds": report.timings}, f, indent=2, sort_keys=True)
        f.write("\n")
    outputs.append(timings_path)
    return [source], outputs


def _cmd_eval(cfg: RunConfig, args, out: Path):
    return _run_eval(cfg, out, averaging_k_max=0)


def _cmd_avg_eval(cfg: RunConfig, args, out: Path):
    return _run_eval(cfg, out, averaging_k_max=cfg.avg_max)


def _cmd_inspect(cfg: RunConfig, args, out: Path):
    source = _require_input(cfg)
    if not args.checkpoint:
        raise ConfigError("inspect requires --checkpoint (a CNN checkpoint JSON)")
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt_path}")
    epochs = read_epb(source)
    model = CnnClassifier.from_json(ckpt_path.read_text())

    outputs = []
    for cls, tag in ((1, "target"), (0, "nontarget")):
        subset = epochs.data[epochs.labels == cls]
        if subset.shape[0] == 0:
            raise ValueError(f"no {tag} epochs in {source}")
        grid = model.layer_outputs(subset, cfg.layer)
        path = out / f"layer{cfg.layer}_{tag}.csv"
        _write_map_csv(path, grid)
        outputs.append(path)
    return [source, ckpt_path], outputs


def _cmd_bench(cfg: RunConfig, args, out: Path):
    source = _require_input(cfg)
    epochs = read_epb(source)
    bench_cfg = cfg.benchmark_config()
    table = bench_timing(epochs, bench_cfg, cfg.seed)
    json_path = out / "timings.json"
    with open(json_path, "w") as f:
        json.dump(table, f, indent=2, sort_keys=True)
        f.write("\n")
    csv_path = out / "timings.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["model", "fit_seconds", "predict_ms_median"])
        for name in table["fit_seconds"]:
            writer.writerow(
                [name, repr(table["fit_seconds"][name]), repr(table["predict_ms_median"][name])]
            )
    return [source], [json_path, csv_path]


_HANDLERS = {
    "synth": _cmd_synth,
    "import": _cmd_import,
    "preprocess": _cmd_preprocess,
    "features": _cmd_features,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "avg-eval": _cmd_avg_eval,
    "inspect": _cmd_inspect,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    try:
        cfg = _resolve_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        inputs, outputs = _HANDLERS[command](cfg, args, out)
        _write_manifest(out, command, cfg, inputs, outputs)
        return 0
    except ConfigError as exc:
        print(f"error: stage={command} type=config message={exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ContainerFormatError) as exc:
        print(f"error: stage={command} type=data message={exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: stage={command} type=runtime message={exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
