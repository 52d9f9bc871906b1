"""Config-driven experiment runner for the ablation matrix.

Subcommands: gen-data, train, ablate, gradcheck, export-embeddings. A JSON
config file supplies defaults; command-line flags override it. Every run
writes a ``run_manifest.json`` holding the fully resolved config, seeds,
and artifact hashes; pointing ``--config`` at a manifest replays the run
and reproduces its CSV outputs byte for byte on the same platform.

Exit codes: 0 success, 2 usage, 3 I/O, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .checks import gradient_check_suite
from .data import (
    DataDims,
    gen_imbalanced_dataset,
    gen_interaction_dataset,
    load_dataset,
    monte_carlo_splits,
    save_dataset,
)
from .errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    EvaluationError,
    FormatError,
    NumericError,
)
from .metrics import MetricsReport, roc_points
from .models import ARCH_ORDER, ArchConfig, Model, load_model, save_model
from .train import TrainConfig, evaluate, predict_probs, train_model

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

RESULTS_FILE = "results.csv"
LOSS_TRACE_FILE = "loss_trace.csv"
RUN_MANIFEST = "run_manifest.json"

DEFAULT_CONFIG = {
    "arch": "foaa",
    "m": 64,
    "folds": 15,
    "test_frac": 0.2,
    "seed": 0,
    "out": "runs/out",
    "directions": ["ab", "ba"],
    "dataset": {
        "generator": "interaction",
        "path": None,
        "n": 2000,
        "noise": 0.1,
        "ratio": 0.27,
        "seed": 0,
        "image_shape": [1, 16, 16],
        "tabular_dim": 8,
        "latent_dim": 2,
    },
    "train": {
        "lr": 0.00016,
        "weight_decay": 0.005,
        "batch_size": 8,
        "epochs": 30,
        "use_sampler": True,
        "flip_p": 0.0,
        "erase_p": 0.0,
    },
}


def _deep_update(base: dict, overlay: dict) -> dict:
    out = dict(base)
    for key, val in overlay.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_update(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path: str | None, overrides: dict) -> dict:
    """Merge defaults, a config file (or run manifest), and flag overrides."""
    config = DEFAULT_CONFIG
    if path:
        loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        if "config" in loaded and isinstance(loaded["config"], dict):
            loaded = loaded["config"]  # replaying a run manifest
        config = _deep_update(config, loaded)
    return _deep_update(config, overrides)


def _flag_overrides(args: argparse.Namespace) -> dict:
    out: dict = {}
    for key in ("seed", "out", "folds", "arch"):
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    if getattr(args, "data", None) is not None:
        out["dataset"] = {"path": args.data}
    return out


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, outputs: list[str]) -> None:
    hashes = {}
    for rel in sorted(outputs):
        p = out_dir / rel
        if p.exists():
            hashes[rel] = _sha256(p)
    manifest = {
        "command": command,
        "config": config,
        "seed": config.get("seed"),
        "artifact_hashes": hashes,
        "outputs": sorted(outputs),
    }
    (out_dir / RUN_MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _dataset_dims(cfg: dict) -> DataDims:
    ds = cfg["dataset"]
    return DataDims(
        image_shape=tuple(ds["image_shape"]),
        tabular_dim=int(ds["tabular_dim"]),
        latent_dim=int(ds["latent_dim"]),
    )


def _materialize_dataset(cfg: dict):
    ds = cfg["dataset"]
    if ds.get("path"):
        return load_dataset(ds["path"])
    dims = _dataset_dims(cfg)
    if ds["generator"] == "interaction":
        return gen_interaction_dataset(int(ds["n"]), seed=int(ds["seed"]), dims=dims, noise=float(ds["noise"]))
    if ds["generator"] == "imbalanced":
        return gen_imbalanced_dataset(
            int(ds["n"]), ratio=float(ds["ratio"]), seed=int(ds["seed"]), dims=dims, noise=float(ds["noise"])
        )
    raise ConfigurationError(f"unknown generator {ds['generator']!r}")


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        lr=float(t["lr"]),
        weight_decay=float(t["weight_decay"]),
        batch_size=int(t["batch_size"]),
        epochs=int(t["epochs"]),
        seed=seed,
        use_sampler=bool(t["use_sampler"]),
        flip_p=float(t["flip_p"]),
        erase_p=float(t["erase_p"]),
    )


def _arch_config(cfg: dict, arch: str) -> ArchConfig:
    return ArchConfig(arch=arch, m=int(cfg["m"]), directions=tuple(cfg["directions"]))


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def _fmt_pm(mean, std) -> str:
    if mean is None:
        return ""
    return f"{_fmt(mean)}±{_fmt(std)}"


METRIC_COLS = ("auc", "spec", "sens", "f1mi", "f1ma", "acc")
METRIC_FIELDS = ("auc", "specificity", "sensitivity", "f1_micro", "f1_macro", "accuracy")


def _result_rows(arch: str, reports: list[MetricsReport], epochs: int, seed: int) -> list[list[str]]:
    rows = []
    for i, rep in enumerate(reports):
        rows.append(
            [str(i), arch]
            + [_fmt(getattr(rep, f)) for f in METRIC_FIELDS]
            + [str(epochs), str(seed)]
        )
    agg = MetricsReport.aggregate(reports)
    rows.append(
        ["summary", arch]
        + [_fmt_pm(agg.mean[f], agg.std[f]) for f in METRIC_FIELDS]
        + [str(epochs), str(seed)]
    )
    return rows


def _run_fold(payload) -> tuple[int, MetricsReport, list[float], Model, np.ndarray, np.ndarray]:
    arch_cfg, samples, split, train_cfg = payload
    result = train_model(arch_cfg, samples, split, train_cfg)
    report = evaluate(result.model, samples, split.test)
    probs, labels = predict_probs(result.model, samples, split.test)
    return split.fold_id, report, result.loss_trace, result.model, probs, labels


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("FOAA_THREADS", "1")))
    except ValueError:
        return 1


def _run_arch(cfg: dict, arch: str, samples, splits):
    """Train/evaluate one arch across folds; folds may fan out to workers."""
    payloads = []
    for split in splits:
        fold_seed = int(cfg["seed"]) * 10007 + split.fold_id
        payloads.append((_arch_config(cfg, arch), samples, split, _train_config(cfg, fold_seed)))
    workers = _worker_count()
    if workers > 1 and len(payloads) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_fold, payloads))
    else:
        outcomes = [_run_fold(p) for p in payloads]
    outcomes.sort(key=lambda item: item[0])
    return outcomes


def cmd_gen_data(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    data = _materialize_dataset(cfg)
    save_dataset(list(data), out_dir)
    ds_manifest = {"generator_config": cfg["dataset"], "n": len(list(data))}
    (out_dir / "dataset_manifest.json").write_text(
        json.dumps(ds_manifest, indent=2) + "\n", encoding="utf-8"
    )
    outputs = ["images.foat", "image_labels.csv", "tabular.csv", "dataset_manifest.json"]
    _write_manifest(out_dir, "gen-data", cfg, outputs)
    print(f"wrote dataset ({ds_manifest['n']} samples) to {out_dir}")
    return EXIT_OK


def cmd_train(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    arch = cfg["arch"]
    samples = list(_materialize_dataset(cfg))
    splits = monte_carlo_splits(
        len(samples), folds=int(cfg["folds"]), test_frac=float(cfg["test_frac"]), seed=int(cfg["seed"])
    )
    outcomes = _run_arch(cfg, arch, samples, splits)

    reports = [o[1] for o in outcomes]
    epochs = int(cfg["train"]["epochs"])
    with open(out_dir / RESULTS_FILE, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "arch", *METRIC_COLS, "epochs", "seed"])
        writer.writerows(_result_rows(arch, reports, epochs, int(cfg["seed"])))
    with open(out_dir / LOSS_TRACE_FILE, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "epoch", "loss"])
        for fold_id, _, trace, _, _, _ in outcomes:
            for epoch, loss in enumerate(trace):
                writer.writerow([fold_id, epoch, repr(float(loss))])
    outputs = [RESULTS_FILE, LOSS_TRACE_FILE]
    for fold_id, _, _, model, _, _ in outcomes:
        save_model(model, out_dir / "params" / f"fold{fold_id}")
    _write_manifest(out_dir, "train", cfg, outputs)
    agg = MetricsReport.aggregate(reports)
    print(f"{arch}: mean acc {agg.accuracy:.4f} over {len(reports)} fold(s); results in {out_dir}")
    return EXIT_OK


def cmd_ablate(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = list(_materialize_dataset(cfg))
    splits = monte_carlo_splits(
        len(samples), folds=int(cfg["folds"]), test_frac=float(cfg["test_frac"]), seed=int(cfg["seed"])
    )
    epochs = int(cfg["train"]["epochs"])
    outputs = [RESULTS_FILE]
    with open(out_dir / RESULTS_FILE, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "arch", *METRIC_COLS, "epochs", "seed"])
        for arch in ARCH_ORDER:
            outcomes = _run_arch(cfg, arch, samples, splits)
            reports = [o[1] for o in outcomes]
            writer.writerows(_result_rows(arch, reports, epochs, int(cfg["seed"])))
            scores = np.concatenate([o[4][:, 1] for o in outcomes])
            labels = np.concatenate([o[5] for o in outcomes])
            roc_file = f"roc_{arch}.csv"
            with open(out_dir / roc_file, "w", newline="", encoding="utf-8") as rf:
                roc_writer = csv.writer(rf)
                roc_writer.writerow(["fpr", "tpr"])
                for fpr, tpr in roc_points(scores, labels):
                    roc_writer.writerow([repr(fpr), repr(tpr)])
            outputs.append(roc_file)
            agg = MetricsReport.aggregate(reports)
            print(f"{arch}: mean auc {'-' if agg.auc is None else f'{agg.auc:.4f}'}")
    _write_manifest(out_dir, "ablate", cfg, outputs)
    return EXIT_OK


def cmd_gradcheck(instances: int = 3) -> int:
    results = gradient_check_suite(instances=instances)
    failed = False
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {res.name:<22s} max_rel_err={res.max_error:.3e}")
        failed = failed or not res.passed
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_export_embeddings(cfg: dict, params_dir: str) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    model = load_model(params_dir)
    samples = list(_materialize_dataset(cfg))
    m = model.config.m
    from .tensor import Tensor

    rows = []
    batch = 256
    for start in range(0, len(samples), batch):
        chunk = samples[start : start + batch]
        images = Tensor(np.stack([s.image for s in chunk]))
        tabular = Tensor(np.stack([s.tabular for s in chunk]))
        emb = model.embed(images, tabular).data
        for i, s in enumerate(chunk):
            rows.append([repr(float(v)) for v in emb[i]] + [str(s.label)])
    out_file = out_dir / "embeddings.csv"
    with open(out_file, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"e{j}" for j in range(m)] + ["label"])
        writer.writerows(rows)
    _write_manifest(out_dir, "export-embeddings", cfg, ["embeddings.csv"])
    print(f"wrote {len(rows)} embeddings to {out_file}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foaa",
        description="Outer-arithmetic attention experiments: data generation, training, ablation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, with_arch: bool = True):
        p.add_argument("--config", type=str, default=None, help="JSON config or run manifest")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--folds", type=int, default=None)
        if with_arch:
            p.add_argument("--arch", type=str, default=None, choices=list(ARCH_ORDER))
        p.add_argument("--data", type=str, default=None, help="dataset directory to load")

    common(sub.add_parser("gen-data", help="write a synthetic dataset to disk"), with_arch=False)
    common(sub.add_parser("train", help="train one arch across Monte Carlo folds"))
    common(sub.add_parser("ablate", help="train every ablation row under identical folds"))

    g = sub.add_parser("gradcheck", help="finite-difference check of every op class")
    g.add_argument("--instances", type=int, default=3)

    e = sub.add_parser("export-embeddings", help="fused embeddings of a trained model as CSV")
    common(e, with_arch=False)
    e.add_argument("--params", type=str, required=True, help="saved model directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck(instances=args.instances)
        cfg = load_config(args.config, _flag_overrides(args))
        if args.command == "gen-data":
            return cmd_gen_data(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "ablate":
            return cmd_ablate(cfg)
        if args.command == "export-embeddings":
            return cmd_export_embeddings(cfg, args.params)
        parser.error(f"unknown command {args.command!r}")
    except (ConfigurationError, ContractError, DimensionError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError, json.JSONDecodeError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericError, EvaluationError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
