"""Threat-field simulation: RBF spatial basis, noisy linear dynamics, grid sensing.

The field is ``c(r, t) = 1 + phi(r) . theta(t)`` where ``phi`` stacks Gaussian
radial basis functions and ``theta`` follows ``d theta/dt = A theta + noise``
with a Hurwitz ``A``.  Observations sample ``c`` on a uniform grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import RngStream

__all__ = [
    "SpatialBasis",
    "ThreatDynamics",
    "ThreatState",
    "ObservationGrid",
    "Datum",
    "Dataset",
    "GeneratorConfig",
    "rbf_eval",
    "threat_eval",
    "random_basis",
    "random_hurwitz",
    "rk4_step",
    "integrate_dynamics",
    "observe",
    "simulate_datum",
    "generate_pool",
    "generate_support",
    "subsample",
    "merge",
]

PROVENANCES = ("real", "support", "generated")

# stream ids below the per-datum range
_DYNAMICS_STREAM = 2**32
_SUBSAMPLE_STREAM = 2**32 + 1


@dataclass(frozen=True)
class SpatialBasis:
    centers: np.ndarray  # (n_p, 2)
    widths: np.ndarray  # (n_p,)

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.float64).reshape(-1, 2)
        w = np.asarray(self.widths, dtype=np.float64).reshape(-1)
        if c.shape[0] != w.shape[0] or c.shape[0] < 1:
            raise ValueError("need matching, non-empty centers and widths")
        if np.any(c < 0.0) or np.any(c > 1.0):
            raise ValueError("basis centers must lie in the unit square")
        if np.any(w <= 0.0):
            raise ValueError("basis widths must be positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "widths", w)

    @property
    def count(self) -> int:
        return self.widths.shape[0]


@dataclass(frozen=True)
class ThreatDynamics:
    A: np.ndarray
    process_noise_std: float = 0.25
    measurement_noise_std: float = 0.0
    dt: float = 0.01
    steps_per_observation: int = 100

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if np.max(np.linalg.eigvals(A).real) >= 0.0:
            raise ValueError("A is not Hurwitz")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.steps_per_observation < 1:
            raise ValueError("steps_per_observation must be a positive integer")
        if self.process_noise_std < 0 or self.measurement_noise_std < 0:
            raise ValueError("noise levels must be non-negative")
        object.__setattr__(self, "A", A)


@dataclass(frozen=True)
class ThreatState:
    theta: np.ndarray
    t: int = 0


@dataclass(frozen=True)
class ObservationGrid:
    """Cell-centred ``side x side`` lattice on the unit square, row-major."""

    side: int

    def __post_init__(self):
        if self.side < 1:
            raise ValueError("grid side must be positive")

    @property
    def n_points(self) -> int:
        return self.side * self.side

    @property
    def points(self) -> np.ndarray:
        ticks = (np.arange(self.side) + 0.5) / self.side
        rows, cols = np.meshgrid(ticks, ticks, indexing="ij")
        return np.stack([cols.ravel(), rows.ravel()], axis=1)


@dataclass
class Datum:
    observations: np.ndarray  # (T, n_g)
    provenance: str = "real"

    @property
    def horizon(self) -> int:
        return self.observations.shape[0]


@dataclass
class Dataset:
    """Homogeneous collection of time series, stored as a ``(N, T, n_g)`` array."""

    values: np.ndarray
    grid: ObservationGrid
    provenance: str = "real"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"dataset values must be (N, T, n_g), got shape {v.shape}")
        if v.shape[2] != self.grid.n_points:
            raise ValueError(f"observation length {v.shape[2]} does not match grid of {self.grid.n_points}")
        if v.shape[0] > 0 and v.shape[1] < 1:
            raise ValueError("horizon must be at least 1")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        self.values = v

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i) -> Datum:
        return Datum(self.values[i], self.provenance)

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    @property
    def n_points(self) -> int:
        return self.values.shape[2]

    def as_images(self) -> np.ndarray:
        """View as ``(N, T, side, side)``."""
        s = self.grid.side
        return self.values.reshape(len(self), self.horizon, s, s)


@dataclass(frozen=True)
class GeneratorConfig:
    """Threat-field generation settings.  Keys mirror the flat config file."""

    pool_count: int = 500
    grid_side: int = 100
    horizon: int = 4
    n_p: int = 4
    sigma1: float = 0.25
    sigma2: float = 0.0
    dt: float = 0.01
    seed: int = 0
    shared_dynamics: bool = True
    width_range: tuple = (0.02, 0.2)
    theta0_range: tuple = (-5.0, 5.0)


def rbf_eval(basis: SpatialBasis, r) -> np.ndarray:
    """Basis vector ``phi(r)``; ``r`` may be one point or an ``(m, 2)`` array."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0.0) or np.any(r > 1.0):
        raise ValueError("point outside the unit-square workspace")
    diff = r[..., None, :] - basis.centers
    return np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * basis.widths))


def threat_eval(basis: SpatialBasis, state: ThreatState, r) -> np.ndarray | float:
    theta = np.asarray(state.theta, dtype=np.float64)
    if theta.shape != (basis.count,):
        raise ValueError(f"theta has shape {theta.shape}, basis has {basis.count} functions")
    return 1.0 + rbf_eval(basis, r) @ theta


def random_basis(n_p: int, rng: RngStream, width_range=(0.02, 0.2)) -> SpatialBasis:
    centers = rng.uniform(0.0, 1.0, (n_p, 2))
    widths = rng.uniform(width_range[0], width_range[1], n_p)
    return SpatialBasis(centers, widths)


def random_hurwitz(n: int, rng: RngStream, real_range=(-1.0, -0.1), imag_max: float = 1.0) -> np.ndarray:
    """Random real matrix whose eigenvalues all have negative real part.

    A block-diagonal matrix of 1x1 blocks ``[a]`` and 2x2 rotation-scaling
    blocks ``[[a, w], [-w, a]]`` (eigenvalues ``a +- iw``) is conjugated by a
    random orthogonal matrix, so the spectrum is fixed by construction.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    lo, hi = real_range
    if hi >= 0:
        raise ValueError("real parts must be negative")
    n_pairs = int(rng.integers(0, n // 2 + 1))
    D = np.zeros((n, n))
    i = 0
    for _ in range(n_pairs):
        a = rng.uniform(lo, hi)
        w = rng.uniform(0.0, imag_max)
        D[i:i + 2, i:i + 2] = [[a, w], [-w, a]]
        i += 2
    while i < n:
        D[i, i] = rng.uniform(lo, hi)
        i += 1
    Q, R = np.linalg.qr(rng.normal((n, n)))
    Q = Q * np.sign(np.diag(R))
    return Q @ D @ Q.T


def rk4_step(f, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_dynamics(dyn: ThreatDynamics, theta0, horizon: int, rng: RngStream | None = None) -> list[ThreatState]:
    """States at observation indices ``1..horizon``.

    Each substep advances the drift by classical RK4 and then adds the
    additive noise increment ``sigma1 * sqrt(dt) * xi``.
    """
    theta = np.array(theta0, dtype=np.float64)
    A = dyn.A
    if theta.shape != (A.shape[0],):
        raise ValueError(f"theta0 has shape {theta.shape}, expected ({A.shape[0]},)")
    sigma = dyn.process_noise_std
    n_sub = dyn.steps_per_observation
    if sigma > 0:
        if rng is None:
            raise ValueError("process noise requires an rng stream")
        noise = rng.normal((horizon, n_sub, A.shape[0])) * (sigma * np.sqrt(dyn.dt))
    drift = lambda y: A @ y
    states = []
    for t in range(horizon):
        for s in range(n_sub):
            theta = rk4_step(drift, theta, dyn.dt)
            if sigma > 0:
                theta = theta + noise[t, s]
        states.append(ThreatState(theta.copy(), t + 1))
    return states


def observe(basis: SpatialBasis, state: ThreatState, grid: ObservationGrid,
            sigma2: float = 0.0, rng: RngStream | None = None) -> np.ndarray:
    x = threat_eval(basis, state, grid.points)
    if sigma2 > 0:
        if rng is None:
            raise ValueError("measurement noise requires an rng stream")
        x = x + rng.normal(x.shape, 0.0, sigma2)
    return x


def simulate_datum(basis: SpatialBasis, dyn: ThreatDynamics, theta0, grid: ObservationGrid,
                   horizon: int, rng: RngStream | None = None) -> np.ndarray:
    """One ``(horizon, n_g)`` observation series."""
    proc = rng.child(0) if rng is not None else None
    meas = rng.child(1) if rng is not None else None
    states = integrate_dynamics(dyn, theta0, horizon, proc)
    sigma2 = dyn.measurement_noise_std
    return np.stack([observe(basis, s, grid, sigma2, meas) for s in states])


def _check_config(count, grid_side, horizon, n_p):
    if count < 0:
        raise ValueError("count must be non-negative")
    if grid_side < 1 or horizon < 1 or n_p < 1:
        raise ValueError("grid_side, horizon and n_p must be positive")


def _generate(cfg: GeneratorConfig, count: int, provenance: str, theta0_override=None, A=None) -> Dataset:
    _check_config(count, cfg.grid_side, cfg.horizon, cfg.n_p)
    steps = int(round(1.0 / cfg.dt))
    if steps < 1 or abs(steps * cfg.dt - 1.0) > 1e-9:
        raise ValueError("dt must divide the unit observation interval")
    root = RngStream(cfg.seed)
    grid = ObservationGrid(cfg.grid_side)
    if A is not None:
        shared_A = np.asarray(A, dtype=np.float64)
        if shared_A.shape != (cfg.n_p, cfg.n_p):
            raise ValueError(f"A has shape {shared_A.shape}, expected ({cfg.n_p}, {cfg.n_p})")
    elif cfg.shared_dynamics:
        shared_A = random_hurwitz(cfg.n_p, root.child(_DYNAMICS_STREAM))
    else:
        shared_A = None
    values = np.empty((count, cfg.horizon, grid.n_points))
    centers, widths, theta0s, As = [], [], [], []
    for i in range(count):
        stream = root.child(i)
        basis = random_basis(cfg.n_p, stream.child(0), cfg.width_range)
        if theta0_override is not None:
            theta0 = np.array(theta0_override, dtype=np.float64)
        else:
            theta0 = stream.child(1).uniform(*cfg.theta0_range, cfg.n_p)
        A = shared_A if shared_A is not None else random_hurwitz(cfg.n_p, stream.child(2))
        dyn = ThreatDynamics(A, cfg.sigma1, cfg.sigma2, cfg.dt, steps)
        values[i] = simulate_datum(basis, dyn, theta0, grid, cfg.horizon, stream.child(3))
        centers.append(basis.centers.tolist())
        widths.append(basis.widths.tolist())
        theta0s.append(theta0.tolist())
        if shared_A is None:
            As.append(A.tolist())
    meta = {
        "seed": cfg.seed,
        "sigma1": cfg.sigma1,
        "sigma2": cfg.sigma2,
        "dt": cfg.dt,
        "n_p": cfg.n_p,
        "shared_dynamics": cfg.shared_dynamics,
        "A": shared_A.tolist() if shared_A is not None else As,
        "centers": centers,
        "widths": widths,
        "theta0": theta0s,
    }
    return Dataset(values, grid, provenance, meta)


def generate_pool(count: int, grid_side: int, horizon: int, n_p: int, sigma1: float,
                  sigma2: float, seed: int, **kwargs) -> Dataset:
    """Noisy "real-world" pool; each datum draws its own basis and initial state."""
    theta0 = kwargs.pop("theta0", None)
    A = kwargs.pop("A", None)
    cfg = GeneratorConfig(count, grid_side, horizon, n_p, sigma1, sigma2, seed=seed, **kwargs)
    return _generate(cfg, count, "real", theta0, A)


def generate_support(count: int, grid_side: int, horizon: int, n_p: int, seed: int,
                     theta0=None, A=None, **kwargs) -> Dataset:
    """Noiseless data from the known dynamics (both noise levels forced to zero).

    Pass the pool's dynamics matrix as ``A`` so that support and real data
    share one system; otherwise ``A`` is drawn from ``seed``.
    """
    kwargs.pop("sigma1", None)
    kwargs.pop("sigma2", None)
    cfg = GeneratorConfig(count, grid_side, horizon, n_p, 0.0, 0.0, seed=seed, **kwargs)
    return _generate(cfg, count, "support", theta0, A)


def subsample(pool: Dataset, n_d: int, seed: int) -> Dataset:
    """Uniform sample of ``n_d`` data without replacement."""
    if n_d > len(pool):
        raise ValueError(f"cannot draw {n_d} data from a pool of {len(pool)}")
    if n_d < 0:
        raise ValueError("n_d must be non-negative")
    idx = RngStream(seed, _SUBSAMPLE_STREAM).choice(len(pool), n_d)
    meta = dict(pool.metadata)
    for key in ("centers", "widths", "theta0"):
        if key in meta:
            meta[key] = [meta[key][i] for i in idx]
    if not meta.get("shared_dynamics", True) and "A" in meta:
        meta["A"] = [meta["A"][i] for i in idx]
    meta["subsample_seed"] = seed
    meta["indices"] = [int(i) for i in idx]
    return Dataset(pool.values[idx], pool.grid, pool.provenance, meta)


def merge(a: Dataset, b: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Stack two datasets; returns values and a per-datum support flag."""
    if a.values.shape[1:] != b.values.shape[1:]:
        raise ValueError(f"geometry mismatch: {a.values.shape[1:]} vs {b.values.shape[1:]}")
    values = np.concatenate([a.values, b.values])
    flags = np.concatenate([np.full(len(a), a.provenance == "support"),
                            np.full(len(b), b.provenance == "support")])
    return values, flags
