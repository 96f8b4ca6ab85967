"""Command-line front end.

Every config key is also a flag (``pool_count`` -> ``--pool-count``); flags
override values from ``--config`` files, which override ``--preset``.
Errors print one JSON line to stderr, for example::

    svrnn-error {"code": 5, "kind": "contract", "message": "VRNN takes no support set"}
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .config import KEY_DOCS, ConfigError, ExperimentConfig, apply_overrides, load_config, preset
from .evaluation import fit_pca, format_report, project, similarity_report
from .experiment import POOL_LABEL, ROW_LABELS, make_datasets, run_experiment
from .models import MODEL_KINDS, Architecture, generate
from .persistence import (
    PersistenceError,
    export_field_image,
    read_checkpoint,
    read_dataset,
    write_coordinates_csv,
    write_dataset,
    write_loss_history_csv,
    write_report_csv,
)
from .threat import generate_pool, generate_support, subsample
from .training import TrainConfig, train

OUTPUT_ENV = "SVRNN_OUTPUT_DIR"
DEFAULT_OUTPUT = "svrnn-out"

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_CONTRACT = 5
EXIT_FILE = 6

EXIT_CODES_HELP = f"""exit codes:
  {EXIT_OK}  success
  {EXIT_INTERNAL}  unexpected internal error
  {EXIT_USAGE}  bad command line
  {EXIT_CONFIG}  invalid configuration value or unknown config key
  {EXIT_MISSING}  required input file not found
  {EXIT_CONTRACT}  data contract violated (geometry mismatch, VRNN given support data, ...)
  {EXIT_FILE}  corrupt or unreadable dataset/checkpoint file

environment:
  {OUTPUT_ENV}  default output directory (otherwise ./{DEFAULT_OUTPUT})
"""


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


def _emit_error(code: int, kind: str, message: str) -> None:
    line = json.dumps({"code": code, "kind": kind, "message": " ".join(str(message).split())})
    print(f"svrnn-error {line}", file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error(EXIT_USAGE, "usage", message)
        raise SystemExit(EXIT_USAGE)


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration (flags override --config, which overrides --preset)")
    g.add_argument("--preset", choices=["paper-desk", "paper-full"], help="start from a named preset")
    g.add_argument("--config", help="flat key = value configuration file")
    for f in fields(ExperimentConfig):
        extra = ["--nd"] if f.name == "n_d" else []
        g.add_argument(_flag(f.name), *extra, dest=f"cfg_{f.name}", metavar="V", help=KEY_DOCS[f.name])


def _output_dir(args) -> Path:
    if getattr(args, "out_dir", None):
        return Path(args.out_dir)
    return Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))


def _resolve_out(args, name: str) -> Path:
    return Path(args.out) if args.out else _output_dir(args) / name


def build_config(args) -> ExperimentConfig:
    cfg = preset(args.preset) if args.preset else ExperimentConfig()
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CliError(EXIT_MISSING, "missing-file", f"config file not found: {path}")
        cfg = load_config(path, cfg)
    overrides = {f.name: getattr(args, f"cfg_{f.name}") for f in fields(ExperimentConfig)
                 if getattr(args, f"cfg_{f.name}") is not None}
    return apply_overrides(cfg, overrides).validate()


def _need(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(EXIT_MISSING, "missing-file", f"input file not found: {p}")
    return p


def _labelled(items: list[str]) -> dict:
    out = {}
    for item in items:
        label, sep, path = item.partition("=")
        if not sep:
            label, path = Path(item).stem, item
        out[label] = read_dataset(_need(path))
    return out


# -- subcommands -------------------------------------------------------------

def cmd_gen_pool(args, cfg):
    pool = generate_pool(cfg.pool_count, cfg.grid_side, cfg.horizon, cfg.n_p, cfg.sigma1, cfg.sigma2,
                         seed=cfg.seed, dt=cfg.dt, shared_dynamics=cfg.shared_dynamics)
    path = _resolve_out(args, "pool.svtf")
    write_dataset(pool, path)
    print(path)


def cmd_make_dataset(args, cfg):
    pool = read_dataset(_need(args.pool))
    path = _resolve_out(args, "train.svtf")
    write_dataset(subsample(pool, cfg.n_d, cfg.seed), path)
    print(path)


def cmd_gen_support(args, cfg):
    A = None
    if args.pool:
        pool = read_dataset(_need(args.pool))
        if pool.metadata.get("shared_dynamics", True):
            A = np.array(pool.metadata["A"])
    sup = generate_support(cfg.n_s, cfg.grid_side, cfg.horizon, cfg.n_p, seed=cfg.seed + cfg.support_seed_offset,
                           A=A, dt=cfg.dt, shared_dynamics=cfg.shared_dynamics)
    path = _resolve_out(args, "support.svtf")
    write_dataset(sup, path)
    print(path)


def cmd_train(args, cfg):
    X = read_dataset(_need(args.data))
    X_s = read_dataset(_need(args.support)) if args.support else None
    if args.model == "vrnn" and X_s is not None:
        raise CliError(EXIT_CONTRACT, "contract", "VRNN takes no support set")
    out = _output_dir(args)
    arch = Architecture(args.model, grid_side=X.grid.side, horizon=X.horizon, reconstruction=cfg.reconstruction)
    tcfg = TrainConfig(batch_size=cfg.batch_size, learning_rate=cfg.learning_rate, epochs=cfg.epochs,
                       seed=cfg.seed, clip_norm=cfg.clip_norm, support_fraction=cfg.support_fraction,
                       checkpoint_dir=str(out))
    res = train(args.model, X, X_s, tcfg, arch=arch)
    write_loss_history_csv(res.history, out / f"loss_{args.model}.csv")
    print(out / f"{args.model}_final.ckpt")


def cmd_sample(args, cfg):
    params = read_checkpoint(_need(args.checkpoint))
    count = cfg.n_generated if args.count is None else args.count
    if count < 0:
        raise CliError(EXIT_CONFIG, "config", "count must be non-negative")
    ds = generate(params, count, cfg.seed, args.sample_horizon)
    path = _resolve_out(args, f"generated_{params.kind}.svtf")
    write_dataset(ds, path)
    print(path)


def cmd_eval(args, cfg):
    pool = read_dataset(_need(args.pool))
    report = similarity_report(pool, _labelled(args.generated), k=cfg.pca_k, reference_label=POOL_LABEL)
    print(format_report(report))
    if args.csv:
        write_report_csv(report, args.csv)


def cmd_report(args, cfg):
    pool = read_dataset(_need(args.pool))
    gens = _labelled(args.generated)
    out = _output_dir(args)
    basis = fit_pca(pool, cfg.pca_k)
    report = similarity_report(pool, gens, k=cfg.pca_k, reference_label=POOL_LABEL, basis=basis)
    coords = {POOL_LABEL: project(basis, pool)}
    coords.update({label: project(basis, ds) for label, ds in gens.items() if len(ds)})
    write_coordinates_csv(coords, out / "pca_coordinates.csv")
    write_report_csv(report, out / "report.csv")
    (out / "report.txt").write_text(format_report(report) + "\n")
    for label, ds in [("pool", pool)] + list(gens.items()):
        for i in range(min(args.images, len(ds))):
            for t in range(1, ds.horizon + 1):
                export_field_image(ds[i], t, out / "images" / f"{label}_{i}_t{t}.pgm", ds.grid.side)
    print(format_report(report))


def cmd_run_experiment(args, cfg):
    if args.cfg_seed is not None:
        # an explicit --seed narrows the run to that seed
        cfg = dataclasses.replace(cfg, seeds=[cfg.seed])
    out = _output_dir(args)
    results = run_experiment(cfg, out)
    for res in results:
        print(f"seed {res.seed}")
        print(format_report(res.report))
    print(f"artifacts: {out}")


COMMANDS = {
    "gen-pool": (cmd_gen_pool, "simulate the noisy data pool"),
    "make-dataset": (cmd_make_dataset, "draw the N_D training data from a pool"),
    "gen-support": (cmd_gen_support, "simulate noiseless support data"),
    "train": (cmd_train, "train one model; writes final/best checkpoints and a loss CSV"),
    "sample": (cmd_sample, "generate data from a checkpoint"),
    "eval": (cmd_eval, "print the moment report of generated data against a pool"),
    "report": (cmd_report, "write report, PCA coordinates and field images"),
    "run-experiment": (cmd_run_experiment, "full protocol for all models and seeds"),
}


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = _Parser(prog="svrnn", description="Threat-field data synthesis and generative model comparison.",
                     epilog=EXIT_CODES_HELP, formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=EXIT_CODES_HELP, formatter_class=fmt)
        p.add_argument("--out-dir", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
        if name in ("gen-pool", "make-dataset", "gen-support", "sample"):
            p.add_argument("--out", help="output file (default inside the output directory)")
        if name in ("make-dataset", "eval", "report"):
            p.add_argument("--pool", required=True, help="pool dataset file")
        if name == "gen-support":
            p.add_argument("--pool", help="pool file whose dynamics matrix the support data reuse")
        if name == "train":
            p.add_argument("--model", required=True, choices=MODEL_KINDS)
            p.add_argument("--data", required=True, help="training dataset file")
            p.add_argument("--support", help="support dataset file (split models only)")
        if name == "sample":
            p.add_argument("--checkpoint", required=True)
            p.add_argument("--count", type=int, help="number of samples (default n_generated)")
            p.add_argument("--sample-horizon", dest="sample_horizon", type=int,
                           help="series length for recurrent models (default: trained horizon)")
        if name in ("eval", "report"):
            p.add_argument("--generated", nargs="+", default=[], metavar="LABEL=FILE",
                           help="generated datasets to compare")
        if name == "eval":
            p.add_argument("--csv", help="also write the report as CSV")
        if name == "report":
            p.add_argument("--images", type=int, default=1, help="field images per dataset (default 1)")
        _add_config_flags(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = build_config(args)
        COMMANDS[args.command][0](args, cfg)
    except CliError as err:
        _emit_error(err.code, err.kind, str(err))
        return err.code
    except ConfigError as err:
        _emit_error(EXIT_CONFIG, "config", str(err))
        return EXIT_CONFIG
    except PersistenceError as err:
        _emit_error(EXIT_FILE, "file", f"{type(err).__name__}: {err}")
        return EXIT_FILE
    except FileNotFoundError as err:
        _emit_error(EXIT_MISSING, "missing-file", str(err))
        return EXIT_MISSING
    except ValueError as err:
        _emit_error(EXIT_CONTRACT, "contract", str(err))
        return EXIT_CONTRACT
    except Exception as err:  # noqa: BLE001 - last-resort single-line report
        _emit_error(EXIT_INTERNAL, "internal", f"{type(err).__name__}: {err}")
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
