"""Mini-batch Adam training for the three generative models."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models import Architecture, LossBreakdown, ModelParams, draw_eps, init_params, model_loss
from .tensor import RngStream
from .threat import Dataset

__all__ = [
    "AdamState",
    "TrainConfig",
    "TrainResult",
    "Batch",
    "adam_step",
    "clip_by_global_norm",
    "minibatch_iter",
    "train",
]

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: dict, **hyper) -> "AdamState":
        return cls({k: np.zeros_like(v) for k, v in params.items()},
                   {k: np.zeros_like(v) for k, v in params.items()}, 0, **hyper)


def adam_step(state: AdamState, params: dict, grads: dict, lr: float) -> dict:
    """Bias-corrected Adam update.  Mutates ``state``; returns new parameters."""
    if set(grads) != set(params):
        raise ValueError("gradient names do not match parameter names")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        out[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return out


def clip_by_global_norm(grads: dict, max_norm: float) -> tuple[dict, float]:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return grads, norm
    factor = max_norm / norm
    return {k: g * factor for k, g in grads.items()}, norm


@dataclass
class TrainConfig:
    batch_size: int = 10
    learning_rate: float = 1e-3
    epochs: int = 200
    seed: int = 0
    clip_norm: float | None = 5.0
    checkpoint_dir: str | None = None
    support_fraction: float | None = None

    def __post_init__(self):
        if self.support_fraction is not None and not 0.0 <= self.support_fraction < 1.0:
            raise ValueError("support_fraction must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


@dataclass
class Batch:
    indices: np.ndarray
    is_support: np.ndarray


@dataclass
class TrainResult:
    params: ModelParams
    history: list = field(default_factory=list)
    best: ModelParams | None = None
    best_epoch: int | None = None


def minibatch_iter(n_real: int, n_support: int, batch_size: int, epoch: int, seed: int,
                   support_fraction: float | None = None) -> list[Batch]:
    """Shuffled batches over the joint index range ``[0, n_real + n_support)``.

    Indices ``>= n_real`` refer to support data.  The order depends only on
    ``(seed, epoch)``; the final short batch is kept.  With
    ``support_fraction`` set, each epoch uses a fresh random subset of the
    support data sized so that it makes up that fraction of the epoch
    (capped at the available support data).
    """
    n = n_real + n_support
    if n == 0:
        raise ValueError("cannot iterate over an empty dataset")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    stream = RngStream(seed, 1, epoch)
    if support_fraction is None or n_support == 0:
        order = stream.permutation(n)
    else:
        want = min(n_support, int(round(support_fraction * n_real / (1.0 - support_fraction))))
        chosen = n_real + stream.child(0).choice(n_support, want)
        pool = np.concatenate([np.arange(n_real), chosen])
        order = pool[stream.child(1).permutation(len(pool))]
        n = len(order)
        if n == 0:
            raise ValueError("cannot iterate over an empty dataset")
    return [Batch(idx, idx >= n_real) for idx in
            (order[i:i + batch_size] for i in range(0, n, batch_size))]


def _check_inputs(kind: str, X: Dataset, X_s: Dataset | None):
    if kind == "vrnn" and X_s is not None:
        raise ValueError("VRNN takes no support set")
    if kind in ("svrnn", "svae") and X_s is None:
        raise ValueError(f"{kind} needs a support dataset")
    if X_s is not None and X.values.shape[1:] != X_s.values.shape[1:]:
        raise ValueError(f"geometry mismatch between X {X.values.shape[1:]} and X_s {X_s.values.shape[1:]}")


def _mean_breakdown(rows: list[LossBreakdown]) -> LossBreakdown:
    arr = np.array([r.as_row() for r in rows])
    return LossBreakdown(*arr.mean(axis=0))


def train(kind_or_params, X: Dataset, X_s: Dataset | None, config: TrainConfig,
          arch: Architecture | None = None) -> TrainResult:
    """Fit a model; history holds the mean per-batch loss for each epoch.

    ``kind_or_params`` is a model kind (parameters are initialized from
    ``config.seed``) or an existing :class:`ModelParams` to continue from.
    """
    if isinstance(kind_or_params, ModelParams):
        params = kind_or_params.copy()
    else:
        if arch is None:
            arch = Architecture(kind_or_params, grid_side=X.grid.side, horizon=X.horizon)
        params = init_params(arch, config.seed)
    kind = params.kind
    _check_inputs(kind, X, X_s)
    if X.values.shape[1:] != (params.arch.horizon, params.arch.n_g):
        raise ValueError(f"data geometry {X.values.shape[1:]} does not match the architecture")
    values = X.values if X_s is None else np.concatenate([X.values, X_s.values])
    n_real, n_support = len(X), 0 if X_s is None else len(X_s)

    result = TrainResult(params, best=params, best_epoch=0)
    state = AdamState.zeros_like(params.tensors)
    tensors = params.tensors
    best_total = np.inf
    root = RngStream(config.seed, 2)
    for epoch in range(config.epochs):
        rows = []
        for b, batch in enumerate(minibatch_iter(n_real, n_support, config.batch_size, epoch, config.seed,
                                                   config.support_fraction)):
            eps = draw_eps(params.arch, len(batch.indices), root.child(epoch, b))
            current = ModelParams(params.arch, tensors)
            loss = model_loss(current, values[batch.indices], batch.is_support, eps, grad=True)
            grads, _ = clip_by_global_norm(loss.grads, config.clip_norm)
            tensors = adam_step(state, tensors, grads, config.learning_rate)
            loss.grads = None
            rows.append(loss)
        summary = _mean_breakdown(rows)
        result.history.append(summary)
        if summary.total < best_total:
            best_total = summary.total
            result.best = ModelParams(params.arch, tensors)
            result.best_epoch = epoch + 1
        log.debug("%s epoch %d: %s", kind, epoch + 1, summary)
    result.params = ModelParams(params.arch, tensors)
    if config.checkpoint_dir:
        # with no epochs both files hold the starting parameters
        from .persistence import write_checkpoint
        out = Path(config.checkpoint_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_checkpoint(result.params, out / f"{kind}_final.ckpt")
        write_checkpoint(result.best, out / f"{kind}_best.ckpt")
    return result
