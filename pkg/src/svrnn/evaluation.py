"""Statistical similarity of datasets via PCA projections and sample moments.

PCA is fitted through the ``N x N`` Gram matrix of the centred data, which is
cheap when each flattened datum has far more entries than there are data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .threat import Dataset

__all__ = [
    "PcaBasis",
    "MomentReport",
    "SimilarityReport",
    "ZeroVarianceError",
    "flatten",
    "fit_pca",
    "project",
    "moments",
    "moment_report",
    "moment_distance",
    "similarity_report",
    "format_report",
    "threat_magnitude",
    "decay_fraction",
]

MOMENT_NAMES = ("mean", "variance", "skewness", "kurtosis")


class ZeroVarianceError(ValueError):
    """Skewness and kurtosis are undefined for constant samples.

    ``mean`` and ``variance`` carry the values that were still computable.
    """

    def __init__(self, mean: float, variance: float):
        super().__init__("sample variance is zero; skewness and kurtosis are undefined")
        self.mean = mean
        self.variance = variance


@dataclass
class PcaBasis:
    mean: np.ndarray  # (D,)
    components: np.ndarray  # (k, D), orthonormal rows
    eigenvalues: np.ndarray  # (k,), descending
    total_variance: float

    @property
    def k(self) -> int:
        return self.components.shape[0]


@dataclass
class MomentReport:
    label: str
    table: np.ndarray  # (4 moments, k axes)

    def cells(self) -> np.ndarray:
        return self.table.ravel()


@dataclass
class SimilarityReport:
    rows: list  # MomentReport, reference first
    distances: dict  # label -> distance to the reference row


def flatten(data) -> np.ndarray:
    if isinstance(data, Dataset):
        data = data.values
    data = np.asarray(data, dtype=np.float64)
    return data.reshape(data.shape[0], -1)


def fit_pca(data, k: int = 3) -> PcaBasis:
    """Top-``k`` principal directions (population covariance, 1/N).

    The eigenvectors ``u`` of ``G = Xc Xc^T / N`` give feature-space
    components ``Xc^T u / sqrt(N * lambda)``.
    """
    X = flatten(data)
    N = X.shape[0]
    if k < 1 or k > N - 1:
        raise ValueError(f"k={k} principal components need at least {k + 1} samples, got {N}")
    mean = X.mean(axis=0)
    Xc = X - mean
    G = (Xc @ Xc.T) / N
    evals, evecs = np.linalg.eigh(G)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    comps = np.zeros((k, X.shape[1]))
    scale = evals[0] if evals[0] > 0 else 1.0
    for i in range(k):
        lam = evals[i]
        if lam > 1e-13 * scale:
            comps[i] = Xc.T @ evecs[:, i] / np.sqrt(N * lam)
        else:
            evals[i] = 0.0
    # null directions: complete the orthonormal set
    null = [i for i in range(k) if evals[i] == 0.0]
    if null:
        rng = np.random.default_rng(0)
        for i in null:
            v = rng.standard_normal(X.shape[1])
            for j in range(k):
                if j != i and np.any(comps[j]):
                    v -= (comps[j] @ v) * comps[j]
            comps[i] = v / np.linalg.norm(v)
    return PcaBasis(mean, comps, evals[:k].copy(), float(np.trace(G)))


def project(basis: PcaBasis, data) -> np.ndarray:
    X = flatten(data)
    if X.shape[1] != basis.mean.shape[0]:
        raise ValueError(f"flattened length {X.shape[1]} does not match basis length {basis.mean.shape[0]}")
    return (X - basis.mean) @ basis.components.T


def moments(samples) -> tuple[float, float, float, float]:
    """Mean, population variance, skewness and (non-excess) kurtosis."""
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.size < 2:
        raise ValueError("need at least two samples")
    mu = float(s.mean())
    d = s - mu
    var = float(np.mean(d * d))
    if var <= 0.0:
        raise ZeroVarianceError(mu, 0.0)
    m3 = float(np.mean(d ** 3))
    m4 = float(np.mean(d ** 4))
    return mu, var, m3 / var ** 1.5, m4 / var ** 2


def moment_report(label: str, coords: np.ndarray) -> MomentReport:
    coords = np.asarray(coords, dtype=np.float64)
    table = np.empty((4, coords.shape[1]))
    for j in range(coords.shape[1]):
        try:
            table[:, j] = moments(coords[:, j])
        except ZeroVarianceError as err:
            table[:, j] = (err.mean, 0.0, 0.0, 0.0)
    return MomentReport(label, table)


def moment_distance(reference: MomentReport, other: MomentReport) -> float:
    """Sum over cells of ``|m_other - m_ref| / (|m_ref| + 1)``."""
    ref = reference.cells()
    return float(np.sum(np.abs(other.cells() - ref) / (np.abs(ref) + 1.0)))


def similarity_report(pool, datasets: dict, k: int = 3, reference_label: str = "Training data pool",
                      basis: PcaBasis | None = None) -> SimilarityReport:
    """Moment rows for the pool and each labelled dataset, plus distances.

    PCA is fitted on the pool unless ``basis`` is given.  ``datasets`` maps
    a row label to a dataset; rows appear in insertion order after the pool.
    """
    if basis is None:
        basis = fit_pca(pool, k)
    ref = moment_report(reference_label, project(basis, pool))
    rows = [ref]
    distances = {}
    shape = flatten(pool).shape[1]
    for label, data in datasets.items():
        X = flatten(data)
        if X.shape[1] != shape:
            raise ValueError(f"{label}: geometry mismatch with pool")
        row = moment_report(label, project(basis, X))
        rows.append(row)
        distances[label] = moment_distance(ref, row)
    return SimilarityReport(rows, distances)


def format_report(report: SimilarityReport) -> str:
    """Aligned text table: one row per dataset, 4 moments x k axes."""
    k = report.rows[0].table.shape[1]
    head = ["dataset"] + [f"{m[:4]}_S{j + 1}" for m in MOMENT_NAMES for j in range(k)] + ["distance"]
    lines = []
    width = max(len(r.label) for r in report.rows) + 2
    lines.append(head[0].ljust(width) + "".join(h.rjust(12) for h in head[1:]))
    for row in report.rows:
        cells = "".join(f"{v:12.4g}" for v in row.cells())
        dist = report.distances.get(row.label)
        lines.append(row.label.ljust(width) + cells + (f"{dist:12.4g}" if dist is not None else "".rjust(12)))
    return "\n".join(lines)


def threat_magnitude(data) -> np.ndarray:
    """Peak deviation from the unit baseline, ``max_j |x_t[j] - 1|``, shape ``(N, T)``."""
    values = data.values if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    return np.max(np.abs(values - 1.0), axis=2)


def decay_fraction(data, first: int = 1, last: int | None = None) -> float:
    """Share of data whose peak magnitude at ``last`` is below that at ``first`` (1-based)."""
    mag = threat_magnitude(data)
    if mag.shape[0] == 0:
        raise ValueError("empty dataset")
    last = mag.shape[1] if last is None else last
    return float(np.mean(mag[:, last - 1] < mag[:, first - 1]))
