"""End-to-end protocol: simulate, subsample, augment, train, sample, compare."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, dump_config
from .evaluation import (
    SimilarityReport,
    decay_fraction,
    fit_pca,
    format_report,
    project,
    similarity_report,
)
from .models import Architecture, generate
from .persistence import (
    export_field_image,
    write_coordinates_csv,
    write_dataset,
    write_loss_history_csv,
    write_report_csv,
)
from .threat import Dataset, generate_pool, generate_support, subsample
from .training import TrainConfig, train

__all__ = ["ROW_LABELS", "POOL_LABEL", "SeedResult", "make_datasets", "run_seed", "run_experiment"]

log = logging.getLogger(__name__)

POOL_LABEL = "Training data pool"
ROW_LABELS = {"svae": "S-VAE generated data", "vrnn": "VRNN generated data", "svrnn": "S-VRNN generated data"}


@dataclass
class SeedResult:
    seed: int
    report: SimilarityReport
    histories: dict = field(default_factory=dict)
    generated: dict = field(default_factory=dict)
    decay: dict = field(default_factory=dict)
    seconds: dict = field(default_factory=dict)

    def loss_ratio(self, kind: str) -> float:
        h = self.histories[kind]
        return h[-1].total / h[0].total

    def distance(self, kind: str) -> float:
        return self.report.distances[ROW_LABELS[kind]]


def make_datasets(cfg: ExperimentConfig, seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """Pool, training subset and support set for one seed.

    Support data reuse the pool's dynamics matrix when it is shared, since
    the support set is meant to come from the known system.
    """
    pool = generate_pool(cfg.pool_count, cfg.grid_side, cfg.horizon, cfg.n_p, cfg.sigma1, cfg.sigma2,
                         seed=seed, dt=cfg.dt, shared_dynamics=cfg.shared_dynamics)
    X = subsample(pool, cfg.n_d, seed)
    A = np.array(pool.metadata["A"]) if cfg.shared_dynamics else None
    X_s = generate_support(cfg.n_s, cfg.grid_side, cfg.horizon, cfg.n_p, seed=seed + cfg.support_seed_offset,
                           A=A, dt=cfg.dt, shared_dynamics=cfg.shared_dynamics)
    return pool, X, X_s


def run_seed(cfg: ExperimentConfig, seed: int, out_dir=None) -> SeedResult:
    """Run every configured model for one seed; write artifacts if ``out_dir`` is given."""
    out = Path(out_dir) if out_dir is not None else None
    pool, X, X_s = make_datasets(cfg, seed)
    generated, histories, seconds, decay = {}, {}, {}, {}
    for kind in cfg.models:
        arch = Architecture(kind, grid_side=cfg.grid_side, horizon=cfg.horizon, reconstruction=cfg.reconstruction)
        tcfg = TrainConfig(batch_size=cfg.batch_size, learning_rate=cfg.learning_rate, epochs=cfg.epochs,
                           seed=seed, clip_norm=cfg.clip_norm, support_fraction=cfg.support_fraction,
                           checkpoint_dir=str(out / "checkpoints") if out else None)
        start = time.perf_counter()
        res = train(kind, X, None if kind == "vrnn" else X_s, tcfg, arch=arch)
        seconds[kind] = time.perf_counter() - start
        histories[kind] = res.history
        generated[kind] = generate(res.params, cfg.n_generated, seed)
        if cfg.n_generated:
            decay[kind] = decay_fraction(generated[kind])
        log.info("seed %d %s: %.1fs", seed, kind, seconds[kind])
    basis = fit_pca(pool, cfg.pca_k)
    report = similarity_report(pool, {ROW_LABELS[k]: generated[k] for k in cfg.models}, k=cfg.pca_k,
                               reference_label=POOL_LABEL, basis=basis)
    result = SeedResult(seed, report, histories, generated, decay, seconds)
    if out is not None:
        _write_artifacts(out, cfg, result, pool, X, X_s, basis)
    return result


def _write_artifacts(out: Path, cfg, result: SeedResult, pool, X, X_s, basis) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(pool, out / "pool.svtf")
    write_dataset(X, out / "train.svtf")
    write_dataset(X_s, out / "support.svtf")
    coords = {POOL_LABEL: project(basis, pool)}
    for kind, ds in result.generated.items():
        write_dataset(ds, out / f"generated_{kind}.svtf")
        write_loss_history_csv(result.histories[kind], out / f"loss_{kind}.csv")
        if len(ds):
            coords[ROW_LABELS[kind]] = project(basis, ds)
            for t in range(1, ds.horizon + 1):
                export_field_image(ds[0], t, out / "images" / f"{kind}_sample0_t{t}.pgm", ds.grid.side)
    for t in range(1, pool.horizon + 1):
        export_field_image(pool[0], t, out / "images" / f"pool_datum0_t{t}.pgm", pool.grid.side)
    write_coordinates_csv(coords, out / "pca_coordinates.csv")
    write_report_csv(result.report, out / "report.csv")
    (out / "report.txt").write_text(format_report(result.report) + "\n")
    (out / "config.txt").write_text(dump_config(cfg))
    summary = {
        "seed": result.seed,
        "support_seed": result.seed + cfg.support_seed_offset,
        "distances": result.report.distances,
        "loss_ratio": {k: result.loss_ratio(k) for k in result.histories if result.histories[k]},
        "decay_fraction": result.decay,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig, out_dir=None, seeds=None) -> list[SeedResult]:
    """Run :func:`run_seed` for each seed; artifacts go to ``out_dir/seed-<n>``."""
    seeds = cfg.seeds if seeds is None else list(seeds)
    results = []
    for seed in seeds:
        sub = Path(out_dir) / f"seed-{seed}" if out_dir is not None else None
        results.append(run_seed(cfg, seed, sub))
    return results
