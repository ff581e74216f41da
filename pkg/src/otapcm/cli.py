"""Command-line entry point.

Every subcommand resolves the experiment config (defaults < file < env <
flags), writes ``config.resolved.json`` into its output directory and then
runs. Re-running with ``--config <out>/config.resolved.json`` reproduces
the outputs.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import experiment as xp
from . import pcm
from .config import ExperimentConfig, parse_config, parse_override, write_snapshot
from .data import DATA_ROOT_ENV
from .energy import energy_report
from .errors import ConfigError, FormatError
from .model import load_checkpoint, save_checkpoint
from .pipeline import infer_analog, result_rows, snr_label, sweep, train, train_sequential
from .results import PLOT_KINDS, emit_csv, emit_plot

log = logging.getLogger("otapcm")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--dataset-root", help=f"directory holding MNIST IDX files (env: {DATA_ROOT_ENV})")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key, e.g. device.g_max=30 (JSON value)")
    p.add_argument("--energy", action="store_true", help="attach an energy report to the run")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otapcm", description=__doc__.splitlines()[0])
    parser.add_argument("--dump-device-model", action="store_true",
                        help="print every device-model constant and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("train", help="train split model(s) and save checkpoints")
    _common(p)
    p = sub.add_parser("infer", help="analog inference of a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", help="checkpoint file (overrides infer.checkpoint)")
    p = sub.add_parser("sweep", help="run a sensors / snr_matrix / drift grid")
    _common(p)
    p.add_argument("--kind", choices=PLOT_KINDS, help="overrides sweep.kind")
    p = sub.add_parser("energy", help="energy report for the configured crossbar")
    _common(p)
    p = sub.add_parser("plot", help="render a result CSV as SVG")
    _common(p)
    p.add_argument("csv", help="result CSV")
    p.add_argument("--kind", choices=PLOT_KINDS, required=True)
    p = sub.add_parser("dump-device-model", help="print every device-model constant")
    _common(p)
    return parser


def resolve(args) -> ExperimentConfig:
    overrides = dict(parse_override(s) for s in args.set)
    root = args.dataset_root or os.environ.get(DATA_ROOT_ENV)
    if root:
        overrides["dataset.root"] = root
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output.dir"] = args.out
    if args.energy:
        overrides["energy.enabled"] = True
    if getattr(args, "checkpoint", None):
        overrides["infer.checkpoint"] = args.checkpoint
    if getattr(args, "kind", None) and args.command == "sweep":
        overrides["sweep.kind"] = args.kind
    return parse_config(args.config, overrides)


def device_model_text(params: pcm.PcmParams) -> str:
    g = np.array([0.0, 1.0, 5.0, 10.0, 25.0])
    doc = {
        "constants": {k: list(v) if isinstance(v, tuple) else v for k, v in params.describe().items()},
        "samples": {
            "g_t_uS": g.tolist(),
            "sigma_prog_uS": pcm.sigma_prog(g, params).tolist(),
            "mu_nu": pcm.mu_nu(g, params).tolist(),
            "sigma_nu": pcm.sigma_nu(g, params).tolist(),
            "q_s": pcm.q_s(g[1:], params).tolist(),
        },
    }
    return json.dumps(doc, indent=2)


def _out(cfg) -> Path:
    out = Path(cfg.output.dir)
    write_snapshot(cfg, out)
    return out


def cmd_train(cfg: ExperimentConfig) -> int:
    out = _out(cfg)
    train_set, val_set, _ = xp.load_datasets(cfg)
    init = load_checkpoint(cfg.train.init_from) if cfg.train.init_from else None
    tcfg = xp.train_config(cfg, init_from=init)
    factory = xp.model_factory(cfg)
    if cfg.train.sequential:
        results = train_sequential(tcfg, range(1, cfg.train.sensors + 1), train_set, val_set, factory)
    else:
        results = {cfg.train.sensors: train(tcfg, train_set, val_set, factory)}
    summary = {}
    for m, res in results.items():
        save_checkpoint(res.model, out / f"model_M{m}.ckpt")
        summary[m] = {"best_epoch": res.best_epoch, "best_val_accuracy": res.best_val_accuracy,
                      "initial_val_accuracy": res.initial_val_accuracy, "p": res.model.p,
                      "history": res.history}
        print(f"M={m}: val={res.best_val_accuracy:.4f} p={res.model.p:.4f}")
    (out / "train_history.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0


def _write_energy(out: Path, report) -> None:
    (out / "energy.csv").write_text(report.to_csv(), encoding="utf-8")
    print(report.summary())


def cmd_infer(cfg: ExperimentConfig) -> int:
    if not cfg.infer.checkpoint:
        raise ConfigError("infer.checkpoint: required (or pass --checkpoint)")
    out = _out(cfg)
    _, _, test_set = xp.load_datasets(cfg)
    model = load_checkpoint(cfg.infer.checkpoint)
    icfg = xp.infer_config(cfg)
    res = infer_analog(model, test_set, icfg)
    tag = "infer-analog" if icfg.analog else "infer-fp32"
    train_lbl = str(model.meta.get("train_snr", "unknown"))
    emit_csv(result_rows(tag, res, icfg.n_sensors, train_lbl, snr_label(icfg.channel), icfg.drift_time),
             out / "results.csv")
    print(f"accuracy {res.mean:.4f} +- {res.std:.4f} over {res.accuracies.size} trials")
    if res.energy is not None:
        _write_energy(out, res.energy)
    return 0


def cmd_sweep(cfg: ExperimentConfig) -> int:
    out = _out(cfg)
    train_set, val_set, test_set = xp.load_datasets(cfg)
    spec = xp.sweep_spec(cfg)
    rows, models = sweep(spec, xp.train_config(cfg), xp.infer_config(cfg), train_set, val_set,
                         test_set, xp.model_factory(cfg))
    csv_path = emit_csv(rows, out / f"{spec.kind}.csv")
    emit_plot(csv_path, spec.kind, out / f"{spec.kind}.svg")
    for (m, lbl), res in sorted(models.items()):
        save_checkpoint(res.model, out / f"model_M{m}_snr{lbl.replace(':', '-')}.ckpt")
    print(f"wrote {csv_path} ({len(rows)} rows) and {spec.kind}.svg")
    return 0


def cmd_energy(cfg: ExperimentConfig) -> int:
    out = _out(cfg)
    n_cells = cfg.energy.n_cells if cfg.energy.n_cells is not None else xp.front_end_cells(cfg)
    _write_energy(out, energy_report(n_cells, xp.energy_spec(cfg)))
    return 0


def cmd_plot(cfg: ExperimentConfig, csv_path: str, kind: str) -> int:
    out = _out(cfg)
    path = emit_plot(csv_path, kind, out / f"{kind}.svg")
    print(f"wrote {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None and not args.dump_device_model:
        parser.print_help()
        return 2
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command is None:
            print(device_model_text(pcm.PcmParams()))
            return 0
        cfg = resolve(args)
        if args.dump_device_model or args.command == "dump-device-model":
            print(device_model_text(cfg.device))
            return 0
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "infer":
            return cmd_infer(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "energy":
            return cmd_energy(cfg)
        return cmd_plot(cfg, args.csv, args.kind)
    except (ConfigError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
