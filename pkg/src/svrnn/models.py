"""S-VAE, VRNN and S-VRNN: parameters, per-step maps, losses and sampling.

All three models share one calling convention.  Parameters live in a
:class:`ModelParams` (architecture descriptor plus a name -> array dict).
Loss functions accept a single datum ``(T, n_g)`` or a batch ``(B, T, n_g)``
together with the standard-normal draws used for reparameterization, and
return a :class:`LossBreakdown`; ``grad=True`` also fills ``grads``.

Concatenation orders are fixed: encoders read ``(x, h)``, decoders read
``(z, h)`` or ``(z1, z2, h)``, and the recurrence reads ``(h, x, z...)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import GaussianLatent, Tape, Variable
from .tensor import RngStream
from .threat import Dataset, ObservationGrid

__all__ = [
    "MODEL_KINDS",
    "RECONSTRUCTION_MODES",
    "Architecture",
    "ModelParams",
    "LossBreakdown",
    "init_params",
    "zero_params",
    "vrnn_step_encode",
    "vrnn_step_decode",
    "vrnn_recur",
    "vrnn_loss",
    "svrnn_step_encode",
    "svrnn_step_decode",
    "svrnn_loss",
    "svae_encode",
    "svae_decode",
    "svae_loss",
    "model_loss",
    "draw_eps",
    "generate",
    "shape_audit",
]

MODEL_KINDS = ("svae", "vrnn", "svrnn")
RECONSTRUCTION_MODES = ("sum", "mean")

_DEFAULT_LATENT = {"vrnn": (16,), "svrnn": (20, 20), "svae": (8, 8)}
_DEFAULT_HIDDEN = {"vrnn": (40,), "svrnn": (40, 80, 40), "svae": (16, 32, 64, 128)}


@dataclass(frozen=True)
class Architecture:
    """Layer geometry for one model kind.

    ``hidden`` holds dense widths for the recurrent models and conv channel
    counts for the S-VAE.  ``latent`` has one entry per latent subspace.
    ``reconstruction`` selects the per-datum squared error summed over grid
    points ("sum", the default) or its per-element average ("mean").
    """

    kind: str
    grid_side: int = 100
    horizon: int = 4
    h_dim: int = 40
    latent: tuple = ()
    hidden: tuple = ()
    kernel: int = 3
    stride: int = 2
    padding: int = 1
    ln_eps: float = 1e-5
    reconstruction: str = "sum"

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not self.latent:
            object.__setattr__(self, "latent", _DEFAULT_LATENT[self.kind])
        if not self.hidden:
            object.__setattr__(self, "hidden", _DEFAULT_HIDDEN[self.kind])
        object.__setattr__(self, "latent", tuple(int(d) for d in self.latent))
        object.__setattr__(self, "hidden", tuple(int(d) for d in self.hidden))
        if self.reconstruction not in RECONSTRUCTION_MODES:
            raise ValueError(f"reconstruction must be one of {RECONSTRUCTION_MODES}, got {self.reconstruction!r}")
        expected = 1 if self.kind == "vrnn" else 2
        if len(self.latent) != expected:
            raise ValueError(f"{self.kind} needs {expected} latent subspace(s), got {self.latent}")

    @property
    def n_g(self) -> int:
        return self.grid_side * self.grid_side

    @property
    def split(self) -> bool:
        return self.kind != "vrnn"

    def encoder_sizes(self) -> list[int]:
        """Spatial extents through the S-VAE conv stack, input first."""
        sizes = [self.grid_side]
        for _ in self.hidden:
            sizes.append(ad.conv_output_size(sizes[-1], self.kernel, self.stride, self.padding))
        return sizes

    def decoder_sizes(self) -> list[int]:
        sizes = [self.encoder_sizes()[-1]]
        for _ in self.hidden:
            sizes.append(ad.conv_transpose_output_size(sizes[-1], self.kernel, self.stride,
                                                        self.padding, self.stride - 1))
        return sizes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["latent"] = list(self.latent)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Architecture":
        d = dict(d)
        d["latent"] = tuple(d.get("latent", ()))
        d["hidden"] = tuple(d.get("hidden", ()))
        return cls(**d)


@dataclass
class ModelParams:
    arch: Architecture
    tensors: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.arch.kind

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, {k: v.copy() for k, v in self.tensors.items()})

    def on_tape(self, tape: Tape) -> dict:
        return {k: tape.variable(v) for k, v in self.tensors.items()}


@dataclass
class LossBreakdown:
    reconstruction: float
    kl_primary: float
    kl_shared: float
    total: float
    grads: dict | None = field(default=None, repr=False)

    def as_row(self) -> tuple:
        return (self.reconstruction, self.kl_primary, self.kl_shared, self.total)


# -- parameter layout --------------------------------------------------------

def parameter_shapes(arch: Architecture) -> dict:
    """Name -> shape for every parameter the architecture requires."""
    shapes = {}

    def lin(name, n_out, n_in):
        shapes[f"{name}.w"] = (n_out, n_in)
        shapes[f"{name}.b"] = (n_out,)

    if arch.kind in ("vrnn", "svrnn"):
        n_g, h = arch.n_g, arch.h_dim
        z_total = sum(arch.latent)
        width = n_g + h
        for i, hid in enumerate(arch.hidden):
            lin(f"enc.{i}", hid, width)
            width = hid
        if arch.kind == "vrnn":
            lin("enc.head", 2 * arch.latent[0], width)
        else:
            lin("enc.head1", 2 * arch.latent[0], width)
            lin("enc.head2", 2 * arch.latent[1], width)
        width = z_total + h
        for i, hid in enumerate(arch.hidden):
            lin(f"dec.{i}", hid, width)
            width = hid
        lin("dec.out", n_g, width)
        lin("rec", h, h + n_g + z_total)
        shapes["ln.gain"] = (h,)
        shapes["ln.bias"] = (h,)
    else:
        chans = (arch.horizon,) + arch.hidden
        k = arch.kernel
        for i in range(len(arch.hidden)):
            shapes[f"enc.conv{i}.k"] = (chans[i + 1], chans[i], k, k)
            shapes[f"enc.conv{i}.b"] = (chans[i + 1],)
        s = arch.encoder_sizes()[-1]
        flat = arch.hidden[-1] * s * s
        z_total = sum(arch.latent)
        lin("enc.fc", 2 * z_total, flat)
        lin("dec.fc", flat, z_total)
        rev = chans[::-1]
        for i in range(len(arch.hidden)):
            shapes[f"dec.convT{i}.k"] = (rev[i], rev[i + 1], k, k)
            shapes[f"dec.convT{i}.b"] = (rev[i + 1],)
    return shapes


def _fan_in(name: str, shape: tuple) -> int:
    if name.endswith(".k"):
        if name.startswith("dec."):
            return shape[0] * shape[2] * shape[3]
        return shape[1] * shape[2] * shape[3]
    return shape[1]


def init_params(arch: Architecture, seed: int = 0) -> ModelParams:
    """Weights ~ U(+-1/sqrt(fan_in)), biases 0, layer-norm gain 1 and bias 0."""
    rng = RngStream(seed, 7)
    tensors = {}
    for i, (name, shape) in enumerate(parameter_shapes(arch).items()):
        if name == "ln.gain":
            tensors[name] = np.ones(shape)
        elif name.endswith(".b") or name == "ln.bias":
            tensors[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(_fan_in(name, shape))
            tensors[name] = rng.child(i).uniform(-bound, bound, shape)
    return ModelParams(arch, tensors)


def zero_params(arch: Architecture) -> ModelParams:
    return ModelParams(arch, {k: np.zeros(s) for k, s in parameter_shapes(arch).items()})


def check_params(params: ModelParams) -> None:
    expected = parameter_shapes(params.arch)
    if set(expected) != set(params.tensors):
        missing = sorted(set(expected) - set(params.tensors))
        extra = sorted(set(params.tensors) - set(expected))
        raise ValueError(f"parameter set mismatch: missing {missing}, unexpected {extra}")
    for name, shape in expected.items():
        if params.tensors[name].shape != shape:
            raise ValueError(f"{name} has shape {params.tensors[name].shape}, expected {shape}")


# -- recurrent models --------------------------------------------------------

def _lin(p, name, x, act="none"):
    return ad.dense(x, p[f"{name}.w"], p[f"{name}.b"], act)


def _gaussian(out: Variable, d: int) -> GaussianLatent:
    mu, lv = ad.split(out, [d, d])
    return GaussianLatent(mu, lv)


def _trunk(p, prefix, x, n_layers):
    for i in range(n_layers):
        x = _lin(p, f"{prefix}.{i}", x, "tanh")
    return x


def _n_hidden(p, prefix) -> int:
    return sum(1 for k in p if k.startswith(prefix + ".") and k.endswith(".w") and k[len(prefix) + 1:-2].isdigit())


def vrnn_step_encode(p: Mapping, x_t, h_prev) -> GaussianLatent:
    """Posterior over ``z_t`` from ``(x_t, h_{t-1})``."""
    x = ad.concat([x_t, h_prev])
    hid = _trunk(p, "enc", x, _n_hidden(p, "enc"))
    out = _lin(p, "enc.head", hid)
    return _gaussian(out, out.shape[-1] // 2)


def vrnn_step_decode(p: Mapping, z_t, h_prev) -> Variable:
    """Reconstruction mean of ``x_t`` from ``(z_t, h_{t-1})``."""
    zs = list(z_t) if isinstance(z_t, (list, tuple)) else [z_t]
    hid = _trunk(p, "dec", ad.concat(zs + [h_prev]), _n_hidden(p, "dec"))
    return _lin(p, "dec.out", hid)


def vrnn_recur(p: Mapping, h_prev, x_t, z_t, eps: float = 1e-5) -> Variable:
    """``h_t = LayerNorm(tanh(W [h, x, z] + b))``."""
    zs = list(z_t) if isinstance(z_t, (list, tuple)) else [z_t]
    pre = _lin(p, "rec", ad.concat([h_prev, x_t] + zs), "tanh")
    return ad.layer_norm(pre, p["ln.gain"], p["ln.bias"], eps)


def svrnn_step_encode(p: Mapping, x_t, h_prev) -> tuple[GaussianLatent, GaussianLatent]:
    """Shared trunk with one head per latent subspace."""
    x = ad.concat([x_t, h_prev])
    hid = _trunk(p, "enc", x, _n_hidden(p, "enc"))
    out1 = _lin(p, "enc.head1", hid)
    out2 = _lin(p, "enc.head2", hid)
    return _gaussian(out1, out1.shape[-1] // 2), _gaussian(out2, out2.shape[-1] // 2)


def svrnn_step_decode(p: Mapping, z1, z2, h_prev) -> Variable:
    return vrnn_step_decode(p, [z1, z2], h_prev)


svrnn_recur = vrnn_recur


def _as_batch(x, arch: Architecture) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != arch.n_g:
        raise ValueError(f"expected data of shape (T, {arch.n_g}) or (B, T, {arch.n_g}), got {x.shape}")
    return x, single


def _gates(is_support, batch: int) -> np.ndarray:
    g = np.asarray(is_support, dtype=np.float64).reshape(-1)
    if g.size == 1:
        g = np.full(batch, g[0])
    if g.shape != (batch,):
        raise ValueError(f"need one support flag per datum ({batch}), got {g.shape}")
    return g


def _as_eps(eps, batch: int, single: bool, shape_tail: tuple) -> np.ndarray:
    e = np.asarray(eps, dtype=np.float64)
    if single:
        e = e[None]
    if e.shape != (batch,) + shape_tail:
        raise ValueError(f"draws have shape {np.asarray(eps).shape}, expected {shape_tail} per datum")
    return e


def _recurrent_forward(params: ModelParams, x, gates, eps_list, tape: Tape):
    """Unrolled loss graph; returns (reconstruction, kl_primary, kl_shared) Variables."""
    arch = params.arch
    p = params.on_tape(tape)
    B, T, _ = x.shape
    h = tape.constant(np.zeros((B, arch.h_dim)))
    rec = kl1 = kl2 = None
    for t in range(T):
        xt = tape.constant(x[:, t])
        if arch.kind == "vrnn":
            q = vrnn_step_encode(p, xt, h)
            zs = [ad.reparameterize(q, eps_list[0][:, t])]
            k1 = ad.vmean(ad.kl_to_standard_normal(q))
            k2 = None
        else:
            q1, q2 = svrnn_step_encode(p, xt, h)
            zs = [ad.reparameterize(q1, eps_list[0][:, t]), ad.reparameterize(q2, eps_list[1][:, t])]
            k1 = ad.weighted_mean(ad.kl_to_standard_normal(q1), gates)
            k2 = ad.vmean(ad.kl_to_standard_normal(q2))
        xhat = vrnn_step_decode(p, zs, h)
        r = _reconstruction(arch, xhat, x[:, t])
        rec = r if rec is None else rec + r
        kl1 = k1 if kl1 is None else kl1 + k1
        if k2 is not None:
            kl2 = k2 if kl2 is None else kl2 + k2
        h = vrnn_recur(p, h, xt, zs, arch.ln_eps)
    return p, rec, kl1, kl2


def _reconstruction(arch: Architecture, xhat, x):
    """Per-datum squared error summed over grid points ("sum") or averaged ("mean")."""
    if arch.reconstruction == "sum":
        return ad.sse(xhat, x)
    return ad.mse(xhat, x)


def _finish(tape, p, rec, kl1, kl2, grad) -> LossBreakdown:
    total = rec + kl1 if kl2 is None else rec + kl1 + kl2
    kl_shared = 0.0 if kl2 is None else float(kl2.value)
    out = LossBreakdown(float(rec.value), float(kl1.value), kl_shared, float(total.value))
    if grad:
        tape.backward(total)
        out.grads = {k: v.grad for k, v in p.items()}
    return out


def vrnn_loss(params: ModelParams, x, eps_seq, *, grad: bool = False) -> LossBreakdown:
    """Sum over time of per-step squared error plus KL to the standard normal."""
    if params.kind != "vrnn":
        raise ValueError(f"vrnn_loss called with {params.kind} parameters")
    x, single = _as_batch(x, params.arch)
    B, T, _ = x.shape
    eps = _as_eps(eps_seq, B, single, (T, params.arch.latent[0]))
    tape = Tape()
    p, rec, kl1, kl2 = _recurrent_forward(params, x, np.zeros(B), [eps], tape)
    return _finish(tape, p, rec, kl1, kl2, grad)


def svrnn_loss(params: ModelParams, x, is_support, eps1_seq, eps2_seq, *, grad: bool = False) -> LossBreakdown:
    """Per-step squared error + support-gated KL of the first subspace + KL of the second.

    The first subspace's KL term counts only for support data; for real data
    its ``kl_primary`` contribution is exactly zero.
    """
    if params.kind != "svrnn":
        raise ValueError(f"svrnn_loss called with {params.kind} parameters")
    x, single = _as_batch(x, params.arch)
    B, T, _ = x.shape
    d1, d2 = params.arch.latent
    e1 = _as_eps(eps1_seq, B, single, (T, d1))
    e2 = _as_eps(eps2_seq, B, single, (T, d2))
    tape = Tape()
    p, rec, kl1, kl2 = _recurrent_forward(params, x, _gates(is_support, B), [e1, e2], tape)
    return _finish(tape, p, rec, kl1, kl2, grad)


# -- S-VAE -------------------------------------------------------------------

def _svae_geometry(arch: Architecture):
    return dict(stride=arch.stride, padding=arch.padding)


def svae_encode(p: Mapping, x, arch: Architecture, trace: list | None = None) -> tuple[GaussianLatent, GaussianLatent]:
    """Conv stack (ReLU) -> flatten -> dense to the two latent posteriors.

    ``x`` is ``(T, side, side)`` or a batch of those, time as channels.
    """
    if x.shape[-3:] != (arch.horizon, arch.grid_side, arch.grid_side):
        raise ValueError(f"S-VAE input must be ({arch.horizon}, {arch.grid_side}, {arch.grid_side}), got {x.shape}")
    geo = _svae_geometry(arch)
    if trace is not None:
        trace.append(("input", x.shape[-3:]))
    for i in range(len(arch.hidden)):
        x = ad.relu(ad.conv2d(x, p[f"enc.conv{i}.k"], p[f"enc.conv{i}.b"], **geo))
        if trace is not None:
            trace.append((f"conv{i + 1}", x.shape[-3:]))
    batched = x.value.ndim == 4
    flat = ad.reshape(x, (x.shape[0], -1) if batched else (-1,))
    out = _lin(p, "enc.fc", flat)
    z_total = sum(arch.latent)
    if trace is not None:
        trace.append(("fc", (z_total,)))
    mu, lv = ad.split(out, [z_total, z_total])
    mu1, mu2 = ad.split(mu, list(arch.latent))
    lv1, lv2 = ad.split(lv, list(arch.latent))
    return GaussianLatent(mu1, lv1), GaussianLatent(mu2, lv2)


def svae_decode(p: Mapping, z1, z2, arch: Architecture, trace: list | None = None) -> Variable:
    """Dense -> transposed convs (ReLU between) -> centre crop to the grid."""
    if z1.shape[-1] != arch.latent[0] or z2.shape[-1] != arch.latent[1]:
        raise ValueError(f"latents must have dims {arch.latent}, got {z1.shape[-1]}, {z2.shape[-1]}")
    s = arch.encoder_sizes()[-1]
    c = arch.hidden[-1]
    h = ad.relu(_lin(p, "dec.fc", ad.concat([z1, z2])))
    batched = h.value.ndim == 2
    h = ad.reshape(h, (h.shape[0], c, s, s) if batched else (c, s, s))
    if trace is not None:
        trace.append(("fc", h.shape[-3:]))
    n = len(arch.hidden)
    for i in range(n):
        h = ad.conv_transpose2d(h, p[f"dec.convT{i}.k"], p[f"dec.convT{i}.b"], stride=arch.stride,
                                padding=arch.padding, output_padding=arch.stride - 1)
        if i < n - 1:
            h = ad.relu(h)
        elif h.shape[-1] != arch.grid_side:
            h = ad.crop2d(h, arch.grid_side, arch.grid_side)
        if trace is not None:
            trace.append((f"convT{i + 1}", h.shape[-3:]))
    return h


def svae_loss(params: ModelParams, x, is_support, eps1, eps2, *, grad: bool = False) -> LossBreakdown:
    """Whole-datum squared error + support-gated KL of the first subspace + KL of the second."""
    if params.kind != "svae":
        raise ValueError(f"svae_loss called with {params.kind} parameters")
    arch = params.arch
    x, single = _as_batch(x, arch)
    B, T, _ = x.shape
    if T != arch.horizon:
        raise ValueError(f"S-VAE built for horizon {arch.horizon}, got {T}")
    e1 = _as_eps(eps1, B, single, (arch.latent[0],))
    e2 = _as_eps(eps2, B, single, (arch.latent[1],))
    tape = Tape()
    p = params.on_tape(tape)
    imgs = x.reshape(B, T, arch.grid_side, arch.grid_side)
    q1, q2 = svae_encode(p, tape.constant(imgs), arch)
    z1, z2 = ad.reparameterize(q1, e1), ad.reparameterize(q2, e2)
    xhat = svae_decode(p, z1, z2, arch)
    rec = _reconstruction(arch, xhat, imgs)
    kl1 = ad.weighted_mean(ad.kl_to_standard_normal(q1), _gates(is_support, B))
    kl2 = ad.vmean(ad.kl_to_standard_normal(q2))
    return _finish(tape, p, rec, kl1, kl2, grad)


# -- shared entry points -----------------------------------------------------

def draw_eps(arch: Architecture, batch: int, rng: RngStream) -> list[np.ndarray]:
    """One standard-normal draw array per latent subspace for a batch."""
    if arch.kind == "svae":
        return [rng.child(i).normal((batch, d)) for i, d in enumerate(arch.latent)]
    return [rng.child(i).normal((batch, arch.horizon, d)) for i, d in enumerate(arch.latent)]


def model_loss(params: ModelParams, x, is_support, eps: list, *, grad: bool = False) -> LossBreakdown:
    """Dispatch to the loss of ``params.kind``.  VRNN ignores support flags."""
    if params.kind == "vrnn":
        return vrnn_loss(params, x, eps[0], grad=grad)
    if params.kind == "svrnn":
        return svrnn_loss(params, x, is_support, eps[0], eps[1], grad=grad)
    return svae_loss(params, x, is_support, eps[0], eps[1], grad=grad)


def generate(params: ModelParams, n: int, seed: int, horizon: int | None = None) -> Dataset:
    """Sample ``n`` new series by decoding standard-normal latents.

    Recurrent models start from ``h_0 = 0`` and feed each decoded frame back
    through the recurrence.  The S-VAE decodes all frames at once, so its
    horizon is fixed by the architecture.
    """
    arch = params.arch
    T = arch.horizon if horizon is None else int(horizon)
    grid = ObservationGrid(arch.grid_side)
    meta = {"model": arch.kind, "seed": seed, "count": n}
    if n == 0:
        return Dataset(np.zeros((0, T, arch.n_g)), grid, "generated", meta)
    rng = RngStream(seed, 11)
    tape = Tape()
    p = params.on_tape(tape)
    if arch.kind == "svae":
        if T != arch.horizon:
            raise ValueError("S-VAE horizon is fixed by its channel count")
        z1 = tape.constant(rng.child(0).normal((n, arch.latent[0])))
        z2 = tape.constant(rng.child(1).normal((n, arch.latent[1])))
        out = svae_decode(p, z1, z2, arch).value.reshape(n, T, arch.n_g)
        return Dataset(out, grid, "generated", meta)
    draws = [rng.child(i).normal((n, T, d)) for i, d in enumerate(arch.latent)]
    h = tape.constant(np.zeros((n, arch.h_dim)))
    frames = []
    for t in range(T):
        zs = [tape.constant(d[:, t]) for d in draws]
        xhat = vrnn_step_decode(p, zs, h)
        frames.append(xhat.value)
        h = vrnn_recur(p, h, xhat, zs, arch.ln_eps)
    return Dataset(np.stack(frames, axis=1), grid, "generated", meta)


def shape_audit(arch: Architecture) -> list[tuple[str, tuple]]:
    """Layer extents as ``(layer, extent)`` rows, read off a real forward pass.

    Recurrent rows report the data/latent part of each layer input, matching
    how layer tables list them; the hidden-state width is reported separately.
    """
    params = zero_params(arch)
    t = params.tensors
    rows = []
    if arch.kind in ("vrnn", "svrnn"):
        n_hidden = len(arch.hidden)
        rows.append(("encoder.input", (t["enc.0.w"].shape[1] - arch.h_dim,)))
        for i in range(n_hidden):
            rows.append((f"encoder.H{i + 1}", (t[f"enc.{i}.w"].shape[0],)))
        heads = ["enc.head"] if arch.kind == "vrnn" else ["enc.head1", "enc.head2"]
        rows.append(("encoder.output", tuple(t[f"{h}.w"].shape[0] // 2 for h in heads)))
        rows.append(("decoder.input", tuple(arch.latent) if t["dec.0.w"].shape[1] - arch.h_dim == sum(arch.latent) else ()))
        for i in range(n_hidden):
            rows.append((f"decoder.H{i + 1}", (t[f"dec.{i}.w"].shape[0],)))
        rows.append(("decoder.output", (t["dec.out.w"].shape[0],)))
        rows.append(("hidden_state", (t["rec.w"].shape[0],)))
        # confirm a real step produces those extents
        tape = Tape()
        p = params.on_tape(tape)
        h = tape.constant(np.zeros(arch.h_dim))
        x = tape.constant(np.zeros(arch.n_g))
        if arch.kind == "vrnn":
            q = vrnn_step_encode(p, x, h)
            qs = [q]
        else:
            qs = list(svrnn_step_encode(p, x, h))
        zs = [q.mu for q in qs]
        xhat = vrnn_step_decode(p, zs, h)
        hn = vrnn_recur(p, h, x, zs)
        assert tuple(q.dim for q in qs) == rows[n_hidden + 1][1]
        assert xhat.shape == (arch.n_g,) and hn.shape == (arch.h_dim,)
        return rows
    tape = Tape()
    p = params.on_tape(tape)
    trace_enc, trace_dec = [], []
    x = tape.constant(np.zeros((arch.horizon, arch.grid_side, arch.grid_side)))
    q1, q2 = svae_encode(p, x, arch, trace_enc)
    svae_decode(p, q1.mu, q2.mu, arch, trace_dec)
    rows += [(f"encoder.{name}", tuple(s)) for name, s in trace_enc]
    rows += [(f"decoder.{name}", tuple(s)) for name, s in trace_dec]
    return rows
