"""Experiment driver: train, eval, export, grid, reproduce.

Every command takes a config file plus ``--set section.key=value``
overrides (flags win over the file).  Artifacts land in ``--out-dir``:
checkpoint, config snapshot, per-epoch CSV log.  With a fixed config and
seed, repeated runs produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import multiprocessing
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import analog, metrics, spiking
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, apply_overrides, load_config, serialize_config
from .data import ExperimentData, LabelCodebook, load_mnist
from .errors import CheckpointError, ConfigError, DivergenceError, FFAError

logger = logging.getLogger(__name__)

EXIT_CODES = {"config": 2, "data": 3, "checkpoint": 4, "diverged": 5, "io": 6, "internal": 1}


def prepare_data(cfg: ExperimentConfig) -> ExperimentData:
    train, test = load_mnist(cfg.data_dir)
    codebook = LabelCodebook(cfg.label_length, cfg.label_density, cfg.codebook_seed)
    return ExperimentData(train, test, codebook)


def build_runner(cfg: ExperimentConfig) -> metrics.LatentRunner:
    if cfg.model == "analog":
        return metrics.analog_runner()
    return metrics.spiking_runner(cfg.spiking_config(), cfg.seed)


def train_model(cfg: ExperimentConfig, data: ExperimentData, eval_each_epoch: bool = True):
    """Run the configured trainer; returns (layer, per-epoch stats)."""
    prob_fn = cfg.prob_fn()
    runner = build_runner(cfg)

    eval_fn = None
    if eval_each_epoch:
        def eval_fn(layer):
            return metrics.accuracy(layer, data.test, data.codebook, runner, prob_fn)

    if cfg.model == "analog":
        return analog.train_analog(
            cfg.train_config(), data, eval_fn, n_out=cfg.n_hidden, use_bias=cfg.use_bias
        )
    return spiking.train_hebbian(
        cfg.train_config(), data, cfg.mode(), cfg.spiking_config(), eval_fn
    )


def write_epoch_log(path, log) -> None:
    with open(path, "w") as f:
        f.write("epoch,mean_goodness_pos,mean_goodness_neg,train_loss,test_accuracy\n")
        for entry in log:
            f.write(
                f"{entry.epoch},{entry.mean_goodness_pos:.6f},{entry.mean_goodness_neg:.6f},"
                f"{entry.train_loss:.6f},{entry.test_accuracy:.6f}\n"
            )


def cmd_train(cfg: ExperimentConfig) -> int:
    cfg = cfg.normalized()
    cfg.validate()
    data = prepare_data(cfg)
    layer, log = train_model(cfg, data)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "model.ffaw", layer, data.codebook)
    (out_dir / "config.ini").write_text(serialize_config(cfg))
    write_epoch_log(out_dir / "log.csv", log)
    final = log[-1].test_accuracy if log else float("nan")
    if math.isnan(final):
        runner = build_runner(cfg)
        final = metrics.accuracy(layer, data.test, data.codebook, runner, cfg.prob_fn())
    print(f"final test accuracy: {final:.4f}")
    return 0


def _load_for_eval(cfg: ExperimentConfig, checkpoint_path):
    """Checkpoint plus consistency checks against the config and data."""
    layer, codebook = load_checkpoint(checkpoint_path)
    if layer.n_out != cfg.n_hidden:
        raise CheckpointError(
            f"{checkpoint_path}: checkpoint has {layer.n_out} hidden units, "
            f"config says {cfg.n_hidden}"
        )
    if codebook.length != cfg.label_length:
        raise CheckpointError(
            f"{checkpoint_path}: checkpoint codebook length {codebook.length} != "
            f"config label length {cfg.label_length}"
        )
    return layer, codebook


def _pick_split(data: ExperimentData, split: str):
    return data.train if split == "train" else data.test


def cmd_eval(cfg: ExperimentConfig, checkpoint_path, split: str) -> int:
    cfg = cfg.normalized()
    cfg.validate()
    layer, codebook = _load_for_eval(cfg, checkpoint_path)
    train, test = load_mnist(cfg.data_dir)
    data = ExperimentData(train, test, codebook)
    if data.input_dim != layer.n_in:
        raise CheckpointError(
            f"{checkpoint_path}: expects {layer.n_in} inputs, dataset+codebook give "
            f"{data.input_dim}"
        )
    report, _ = metrics.evaluate(
        layer, _pick_split(data, split), codebook, build_runner(cfg), cfg.prob_fn(),
        model_tag=f"{cfg.model}/{cfg.prob}",
    )
    print(report.format())
    return 0


def cmd_export(cfg: ExperimentConfig, checkpoint_path, split: str, output) -> int:
    cfg = cfg.normalized()
    cfg.validate()
    layer, codebook = _load_for_eval(cfg, checkpoint_path)
    train, test = load_mnist(cfg.data_dir)
    data = ExperimentData(train, test, codebook)
    if data.input_dim != layer.n_in:
        raise CheckpointError(
            f"{checkpoint_path}: expects {layer.n_in} inputs, dataset+codebook give "
            f"{data.input_dim}"
        )
    dump = metrics.collect_latents(
        layer, _pick_split(data, split), codebook, build_runner(cfg),
        model_tag=f"{cfg.model}/{cfg.prob}",
    )
    metrics.export_latents(dump, output)
    print(f"wrote {dump.latents.shape[0]} latents to {output}")
    return 0


# --- grid search -----------------------------------------------------------

_WORKER_DATA: ExperimentData | None = None
_WORKER_CFG: ExperimentConfig | None = None


def _grid_cell(cell: tuple[float, float]) -> tuple[float, float, float, str]:
    """1-epoch accuracy for one (eta, tau_e) cell; failures become flags."""
    eta, tau_e = cell
    cfg = replace(_WORKER_CFG, eta=eta, tau_e=tau_e, epochs=1)
    try:
        layer, log = train_model(cfg, _WORKER_DATA)
        acc = log[-1].test_accuracy
        if not math.isfinite(acc):
            return eta, tau_e, float("nan"), "non_finite"
        return eta, tau_e, acc, "ok"
    except DivergenceError:
        return eta, tau_e, float("nan"), "diverged"
    except FFAError as exc:
        logger.warning("grid cell eta=%g tau_e=%g failed: %s", eta, tau_e, exc)
        return eta, tau_e, float("nan"), "error"


def cmd_grid(cfg: ExperimentConfig, threads: int) -> int:
    cfg = cfg.normalized()
    cfg.validate()
    global _WORKER_DATA, _WORKER_CFG
    _WORKER_DATA = prepare_data(cfg)
    _WORKER_CFG = cfg
    cells = [(eta, tau_e) for eta in cfg.grid_eta for tau_e in cfg.grid_tau_e]
    if threads > 1:
        with multiprocessing.get_context("fork").Pool(threads) as pool:
            rows = pool.map(_grid_cell, cells)
    else:
        rows = [_grid_cell(cell) for cell in cells]
    # Descending accuracy; NaN rows sink to the bottom.
    rows.sort(key=lambda r: (math.isnan(r[2]), -(r[2] if not math.isnan(r[2]) else 0.0)))
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid_path = out_dir / "grid.csv"
    with open(grid_path, "w") as f:
        f.write("eta,tau_e,accuracy,status\n")
        for eta, tau_e, acc, status in rows:
            f.write(f"{eta!r},{tau_e!r},{acc:.6f},{status}\n")
    print(f"wrote {len(rows)} grid rows to {grid_path}")
    best = rows[0]
    if best[3] == "ok":
        print(f"best cell: eta={best[0]!r} tau_e={best[1]!r} accuracy={best[2]:.4f}")
    else:
        print("no grid cell finished successfully")
    return 0


# --- reproduction of the reference tables ----------------------------------


def load_reference_table(name: str) -> list[dict]:
    text = resources.files("ffa").joinpath("reference_results.json").read_text()
    tables = json.loads(text)
    if name not in tables or name == "source":
        raise ConfigError(f"unknown reference table {name!r}")
    return tables[name]


def _reproduce_row(row: dict) -> tuple[dict, float | None, str]:
    cfg = replace(
        _WORKER_CFG,
        model=row["model"],
        prob=row["prob"],
        trace=row.get("trace", _WORKER_CFG.trace),
    )
    cfg = apply_overrides(cfg, row.get("hyper", {})).normalized()
    try:
        layer, log = train_model(cfg, _WORKER_DATA)
        return row, log[-1].test_accuracy * 100.0, "ok"
    except FFAError as exc:
        return row, None, f"{exc.category}: {exc}"


def cmd_reproduce(cfg: ExperimentConfig, table: str, threads: int) -> int:
    cfg = cfg.normalized()
    cfg.validate()
    rows = load_reference_table(table)
    global _WORKER_DATA, _WORKER_CFG
    _WORKER_DATA = prepare_data(cfg)
    _WORKER_CFG = cfg
    if threads > 1:
        with multiprocessing.get_context("fork").Pool(threads) as pool:
            results = pool.map(_reproduce_row, rows)
    else:
        results = [_reproduce_row(row) for row in rows]
    print(f"{'model':<16}{'prob':<11}{'trace':<9}{'measured':>9}{'reference':>10}{'delta':>8}")
    failures = []
    for row, measured, status in results:
        trace = row.get("trace", "-")
        ref = row["accuracy"]
        if status == "ok":
            print(
                f"{row['model']:<16}{row['prob']:<11}{trace:<9}"
                f"{measured:>9.2f}{ref:>10.2f}{measured - ref:>8.2f}"
            )
        else:
            failures.append((row, status))
            print(f"{row['model']:<16}{row['prob']:<11}{trace:<9}{'failed':>9}{ref:>10.2f}{'-':>8}")
    for row, status in failures:
        print(f"failure: {row['model']}/{row['prob']}: {status}", file=sys.stderr)
    return 0 if not failures else 1


# --- argument parsing -------------------------------------------------------


def _parse_set(values: list[str]) -> dict[str, str]:
    overrides = {}
    for item in values:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = _parse_set(args.set or [])
    if args.seed is not None:
        overrides["experiment.seed"] = str(args.seed)
    if args.data_dir is not None:
        overrides["paths.data_dir"] = args.data_dir
    if args.out_dir is not None:
        overrides["paths.out_dir"] = args.out_dir
    return apply_overrides(cfg, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ffa",
        description="Forward-Forward training, analog and spiking-Hebbian.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, help="override experiment seed")
        p.add_argument("--data-dir", help="directory with the IDX dataset files")
        p.add_argument("--out-dir", help="directory for artifacts")
        p.add_argument("--threads", type=int, default=1, help="parallel worker budget")
        p.add_argument(
            "--set", action="append", metavar="SECTION.KEY=VALUE",
            help="override any config field (repeatable)",
        )

    p = sub.add_parser("train", help="train a model and write its artifacts")
    common(p)

    p = sub.add_parser("eval", help="metric report for a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")

    p = sub.add_parser("export", help="dump latent vectors to CSV")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--output", required=True)

    p = sub.add_parser("grid", help="1-epoch (eta, tau_e) grid search")
    common(p)

    p = sub.add_parser("reproduce", help="rerun a reference table end to end")
    common(p)
    p.add_argument("--table", choices=("table1", "table2"), required=True)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint, args.split)
        if args.command == "export":
            return cmd_export(cfg, args.checkpoint, args.split, args.output)
        if args.command == "grid":
            return cmd_grid(cfg, args.threads)
        if args.command == "reproduce":
            return cmd_reproduce(cfg, args.table, args.threads)
        raise ConfigError(f"unknown command {args.command!r}")
    except FFAError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except OSError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]


if __name__ == "__main__":
    sys.exit(main())
