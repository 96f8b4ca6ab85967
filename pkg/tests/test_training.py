import numpy as np
import pytest

from oracles import adam_reference
from svrnn.models import Architecture, init_params
from svrnn.tensor import RngStream
from svrnn.threat import generate_pool, generate_support
from svrnn.training import (
    AdamState,
    TrainConfig,
    adam_step,
    clip_by_global_norm,
    minibatch_iter,
    train,
)


# -- Adam --------------------------------------------------------------------

def test_adam_first_step_is_signed_lr():
    p = {"w": np.array([1.0, -2.0, 0.5])}
    g = {"w": np.array([3.0, -0.001, 1e3])}
    state = AdamState.zeros_like(p)
    out = adam_step(state, p, g, 1e-3)
    np.testing.assert_allclose(out["w"] - p["w"], -1e-3 * np.sign(g["w"]), rtol=1e-5, atol=0)
    assert state.t == 1


def test_adam_zero_gradient_no_move():
    p = {"w": np.array([1.0, 2.0])}
    state = AdamState.zeros_like(p)
    assert np.array_equal(adam_step(state, p, {"w": np.zeros(2)}, 1e-3)["w"], p["w"])


def test_adam_matches_reference_trace():
    grad = lambda x: 2.0 * (x - 3.0)
    want = adam_reference(grad, 0.5, 0.1, 5)
    p = {"x": np.array([0.5])}
    state = AdamState.zeros_like(p)
    for w in want:
        p = adam_step(state, p, {"x": grad(p["x"])}, 0.1)
        assert abs(p["x"][0] - w) <= 1e-12
    assert np.all(state.v["x"] >= 0)


def test_adam_lr_scale_equivariance():
    grads = [RngStream(1, i).normal(4) for i in range(6)]
    s1 = AdamState.zeros_like({"w": np.zeros(4)})
    s2 = AdamState.zeros_like({"w": np.zeros(4)})
    for g in grads:
        d1 = adam_step(s1, {"w": np.zeros(4)}, {"w": g}, 1e-3)["w"]
        d2 = adam_step(s2, {"w": np.zeros(4)}, {"w": g}, 2e-3)["w"]
        assert np.array_equal(d2, 2 * d1)


def test_adam_shape_errors():
    p = {"w": np.zeros(3)}
    with pytest.raises(ValueError):
        adam_step(AdamState.zeros_like(p), p, {"w": np.zeros(2)}, 1e-3)
    with pytest.raises(ValueError):
        adam_step(AdamState.zeros_like(p), p, {"v": np.zeros(3)}, 1e-3)


def test_clip_by_global_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    clipped, norm = clip_by_global_norm(g, 1.0)
    assert norm == 5.0
    assert np.allclose([clipped["a"][0], clipped["b"][0]], [0.6, 0.8], rtol=0, atol=1e-15)
    same, _ = clip_by_global_norm(g, 10.0)
    assert same is g


# -- batching ----------------------------------------------------------------

def test_batch_sizes_and_coverage():
    batches = minibatch_iter(25, 0, 10, epoch=0, seed=0)
    assert [len(b.indices) for b in batches] == [10, 10, 5]
    assert sorted(np.concatenate([b.indices for b in batches]).tolist()) == list(range(25))


def test_batch_flags_and_determinism():
    batches = minibatch_iter(5, 7, 4, epoch=3, seed=2)
    for b in batches:
        assert np.array_equal(b.is_support, b.indices >= 5)
    again = minibatch_iter(5, 7, 4, epoch=3, seed=2)
    assert all(np.array_equal(a.indices, b.indices) for a, b in zip(batches, again))
    other = minibatch_iter(5, 7, 4, epoch=4, seed=2)
    assert not all(np.array_equal(a.indices, b.indices) for a, b in zip(batches, other))


def test_batch_errors():
    with pytest.raises(ValueError):
        minibatch_iter(0, 0, 10, 0, 0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)


def test_support_fraction_controls_mix():
    batches = minibatch_iter(20, 200, 10, epoch=0, seed=1, support_fraction=0.5)
    idx = np.concatenate([b.indices for b in batches])
    assert (idx < 20).sum() == 20 and (idx >= 20).sum() == 20
    assert len(set(idx.tolist())) == 40
    capped = minibatch_iter(20, 5, 10, epoch=0, seed=1, support_fraction=0.9)
    assert sum(len(b.indices) for b in capped) == 25
    with pytest.raises(ValueError):
        TrainConfig(support_fraction=1.0)


# -- training loop -----------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_data():
    pool = generate_pool(12, 3, 3, 2, 0.25, 0.0, seed=1)
    sup = generate_support(8, 3, 3, 2, seed=2, A=np.array(pool.metadata["A"]))
    return pool, sup


def tiny_arch(kind):
    hidden = {"vrnn": (6,), "svrnn": (4, 6, 4), "svae": (2, 3)}[kind]
    latent = (2,) if kind == "vrnn" else (2, 2)
    return Architecture(kind, grid_side=3, horizon=3, h_dim=4, latent=latent, hidden=hidden)


def test_epochs_zero_returns_initial(tiny_data):
    pool, _ = tiny_data
    arch = tiny_arch("vrnn")
    res = train("vrnn", pool, None, TrainConfig(epochs=0, seed=3), arch=arch)
    assert res.history == []
    init = init_params(arch, 3)
    assert all(np.array_equal(res.params.tensors[k], v) for k, v in init.tensors.items())


def test_input_contract(tiny_data):
    pool, sup = tiny_data
    with pytest.raises(ValueError, match="VRNN takes no support set"):
        train("vrnn", pool, sup, TrainConfig(epochs=1), arch=tiny_arch("vrnn"))
    with pytest.raises(ValueError, match="support"):
        train("svrnn", pool, None, TrainConfig(epochs=1), arch=tiny_arch("svrnn"))
    wrong = generate_support(4, 4, 3, 2, seed=0)
    with pytest.raises(ValueError, match="geometry"):
        train("svrnn", pool, wrong, TrainConfig(epochs=1), arch=tiny_arch("svrnn"))


@pytest.mark.parametrize("kind", ["vrnn", "svrnn", "svae"])
def test_training_is_deterministic_and_learns(kind, tiny_data):
    pool, sup = tiny_data
    X_s = None if kind == "vrnn" else sup
    cfg = TrainConfig(epochs=15, seed=5, batch_size=4, learning_rate=1e-2)
    a = train(kind, pool, X_s, cfg, arch=tiny_arch(kind))
    b = train(kind, pool, X_s, cfg, arch=tiny_arch(kind))
    assert [r.as_row() for r in a.history] == [r.as_row() for r in b.history]
    assert all(np.array_equal(a.params.tensors[k], b.params.tensors[k]) for k in a.params.tensors)
    assert len(a.history) == 15
    assert a.history[-1].total < a.history[0].total
    assert 1 <= a.best_epoch <= 15


def test_split_history_gates_real_only_batches(tiny_data):
    pool, sup = tiny_data
    res = train("svrnn", pool, sup, TrainConfig(epochs=1, seed=0, batch_size=20), arch=tiny_arch("svrnn"))
    assert res.history[0].kl_primary > 0


def test_checkpoints_written(tiny_data, tmp_path):
    from svrnn.persistence import read_checkpoint

    pool, _ = tiny_data
    res = train("vrnn", pool, None, TrainConfig(epochs=2, seed=0, checkpoint_dir=str(tmp_path)),
                arch=tiny_arch("vrnn"))
    final = read_checkpoint(tmp_path / "vrnn_final.ckpt")
    assert all(np.array_equal(final.tensors[k], v) for k, v in res.params.tensors.items())
    assert (tmp_path / "vrnn_best.ckpt").exists()


def test_continue_from_params(tiny_data):
    pool, _ = tiny_data
    arch = tiny_arch("vrnn")
    start = init_params(arch, 9)
    res = train(start, pool, None, TrainConfig(epochs=1, seed=0))
    assert res.params.arch == arch
    assert not np.array_equal(res.params.tensors["dec.out.w"], start.tensors["dec.out.w"])
