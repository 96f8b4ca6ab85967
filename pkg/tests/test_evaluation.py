import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from svrnn.evaluation import (
    ZeroVarianceError,
    fit_pca,
    format_report,
    moment_distance,
    moment_report,
    moments,
    project,
    similarity_report,
)
from svrnn.tensor import RngStream
from svrnn.threat import Dataset, ObservationGrid


def rank3_data(seed, n=400, d=12):
    """Samples with exact covariance diag(9, 4, 1) along three orthonormal directions."""
    rng = RngStream(seed)
    Q, _ = np.linalg.qr(rng.normal((d, 3)))
    Z = rng.normal((n, 3))
    Z -= Z.mean(axis=0)
    # whiten so the sample covariance is exactly the identity, then scale
    L = np.linalg.cholesky(Z.T @ Z / n)
    Z = Z @ np.linalg.inv(L).T
    coords = Z * np.sqrt([9.0, 4.0, 1.0])
    return coords @ Q.T + rng.normal(d), Q


# -- PCA ---------------------------------------------------------------------

def test_rank_one_line():
    t = RngStream(1).normal(30)
    direction = np.array([1.0, 2.0, -2.0]) / 3.0
    X = np.outer(t, direction) + np.array([4.0, -1.0, 0.5])
    basis = fit_pca(X, k=3)
    assert basis.eigenvalues[0] > 0
    assert np.all(basis.eigenvalues[1:] <= 1e-10)
    np.testing.assert_allclose(basis.components @ basis.components.T, np.eye(3), atol=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_constructed_spectrum_recovered(seed):
    X, Q = rank3_data(seed)
    basis = fit_pca(X, k=3)
    np.testing.assert_allclose(basis.eigenvalues, [9.0, 4.0, 1.0], rtol=0, atol=1e-8)
    align = np.abs(np.sum(basis.components * Q.T, axis=1))
    np.testing.assert_allclose(align, 1.0, rtol=0, atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_gram_matches_dense_covariance(seed):
    X = RngStream(seed, 4).normal((10, 6))
    basis = fit_pca(X, k=5)
    Xc = X - X.mean(axis=0)
    evals, evecs = np.linalg.eigh(Xc.T @ Xc / 10)
    evals, evecs = evals[::-1][:5], evecs[:, ::-1][:, :5]
    assert np.max(np.abs(basis.eigenvalues - evals)) <= 1e-10
    align = np.abs(np.sum(basis.components * evecs.T, axis=1))
    assert np.max(np.abs(align - 1)) <= 1e-10


def test_trace_identity_and_reconstruction():
    X, _ = rank3_data(7)
    basis = fit_pca(X, k=3)
    assert abs(basis.eigenvalues.sum() - basis.total_variance) <= 1e-8 * basis.total_variance
    coords = project(basis, X)
    recon = coords @ basis.components + basis.mean
    assert np.linalg.norm(recon - X) <= 1e-8 * np.linalg.norm(X)


def test_project_properties():
    X, _ = rank3_data(8, n=50)
    basis = fit_pca(X, k=3)
    assert np.allclose(project(basis, basis.mean[None]), 0.0, atol=1e-12)
    coords = project(basis, X)
    d_full = np.linalg.norm(X[:, None] - X[None], axis=-1)
    d_proj = np.linalg.norm(coords[:, None] - coords[None], axis=-1)
    assert np.max(np.abs(d_full - d_proj)) <= 1e-8
    with pytest.raises(ValueError):
        project(basis, np.zeros((2, 5)))


def test_fit_pca_needs_enough_samples():
    with pytest.raises(ValueError):
        fit_pca(np.zeros((3, 10)), k=3)


def test_fit_pca_accepts_dataset():
    ds = Dataset(RngStream(2).normal((8, 2, 4)), ObservationGrid(2))
    basis = fit_pca(ds, k=3)
    assert basis.components.shape == (3, 8)


# -- moments -----------------------------------------------------------------

def test_two_point_moments():
    assert moments([-1.0, 1.0]) == (0.0, 1.0, 0.0, 1.0)


def test_constant_samples_error_keeps_mean_and_variance():
    with pytest.raises(ZeroVarianceError) as info:
        moments([2.5, 2.5, 2.5])
    assert info.value.mean == 2.5 and info.value.variance == 0.0


def test_normal_sample_bounds():
    mu, var, skew, kurt = moments(RngStream(11).normal(10**5))
    assert abs(skew) <= 0.05
    assert abs(kurt - 3) <= 0.1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([-3.0, -0.5, 0.25, 2.0, 4.0]), st.sampled_from([-7.0, 0.0, 1.5]))
def test_translation_and_scale_laws(seed, a, b):
    s = RngStream(seed).normal(200)
    m0 = moments(s)
    m1 = moments(a * s + b)
    assert m1[0] == pytest.approx(a * m0[0] + b, rel=1e-12, abs=1e-12)
    assert m1[1] == pytest.approx(a * a * m0[1], rel=1e-12)
    assert m1[2] == pytest.approx(np.sign(a) * m0[2], rel=1e-9, abs=1e-12)
    assert m1[3] == pytest.approx(m0[3], rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 60))
def test_kurtosis_lower_bound(seed, n):
    s = RngStream(seed).normal(n)
    _, _, g, k = moments(s)
    assert k >= g * g + 1 - 1e-12


# -- report ------------------------------------------------------------------

def test_pool_against_itself_is_zero():
    pool = RngStream(3).normal((40, 2, 9))
    rep = similarity_report(pool, {"copy": pool.copy()})
    assert rep.distances["copy"] == 0.0
    assert [r.label for r in rep.rows] == ["Training data pool", "copy"]


def test_distance_permutation_invariant():
    rng = RngStream(4)
    pool = rng.normal((40, 2, 9))
    gen = rng.child(1).normal((30, 2, 9)) * 1.3
    a = similarity_report(pool, {"g": gen}).distances["g"]
    b = similarity_report(pool, {"g": gen[rng.child(2).permutation(30)]}).distances["g"]
    assert a == pytest.approx(b, rel=1e-12)


def test_distance_formula():
    ref = moment_report("ref", np.array([[0.0, 1.0], [2.0, -1.0], [-2.0, 0.0], [0.0, 0.0]]))
    other = moment_report("x", np.array([[1.0, 1.0], [3.0, -1.0], [-1.0, 0.0], [1.0, 0.0]]))
    # ref cells: means (0,0) var (2,0.5) skew (0,0) kurt (1.5,2); other shifted by 1 on axis 0
    want = sum(abs(o - r) / (abs(r) + 1) for o, r in zip(other.cells(), ref.cells()))
    assert moment_distance(ref, other) == pytest.approx(want, rel=1e-14)
    assert moment_distance(ref, other) > 0


def test_report_geometry_mismatch_and_format():
    pool = RngStream(5).normal((10, 2, 4))
    with pytest.raises(ValueError, match="geometry"):
        similarity_report(pool, {"bad": np.zeros((5, 2, 9))})
    rep = similarity_report(pool, {"S-VRNN": pool[:6]})
    text = format_report(rep)
    assert "Training data pool" in text and "S-VRNN" in text
    assert len(text.splitlines()) == 3


def test_degenerate_generator_row():
    pool = RngStream(6).normal((10, 1, 4))
    rep = similarity_report(pool, {"flat": np.ones((5, 1, 4))})
    assert np.all(rep.rows[1].table[1] == 0)
    assert np.isfinite(rep.distances["flat"])


def test_threat_magnitude_and_decay_fraction():
    from svrnn.evaluation import decay_fraction, threat_magnitude

    vals = np.ones((3, 2, 4))
    vals[0, 0, 1], vals[0, 1, 2] = 3.0, 1.5   # decays
    vals[1, 0, 0], vals[1, 1, 0] = 0.5, -2.0  # grows
    vals[2, 0, 3], vals[2, 1, 3] = 2.0, 2.0   # flat
    assert np.array_equal(threat_magnitude(vals), [[2.0, 0.5], [0.5, 3.0], [1.0, 1.0]])
    assert decay_fraction(vals) == pytest.approx(1 / 3)
