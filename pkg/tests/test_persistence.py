import hashlib
import struct

import numpy as np
import pytest

from svrnn.models import MODEL_KINDS, Architecture, LossBreakdown, generate, init_params, zero_params
from svrnn.persistence import (
    ChecksumError,
    CountMismatchError,
    FormatError,
    MissingParameterError,
    TruncationError,
    VersionError,
    checkpoint_from_bytes,
    checkpoint_to_bytes,
    dataset_from_bytes,
    dataset_to_bytes,
    export_field_image,
    field_image_bytes,
    read_checkpoint,
    read_dataset,
    write_checkpoint,
    write_coordinates_csv,
    write_dataset,
    write_loss_history_csv,
    write_report_csv,
)
from svrnn.tensor import RngStream
from svrnn.threat import Dataset, ObservationGrid, generate_pool, generate_support

# frozen from the byte layouts checked by hand below
GOLDEN_DATASET_SHA256 = "8e7adabe30863c9f51c6f606c07aefe7298055942fedb3eff681282e31bfef38"
GOLDEN_CHECKPOINT_SHA256 = "2cc94e88b46ef4c3698f223ce4a557cfb228a34a74c400ee3850f20c51a56434"

TINY_VRNN = Architecture("vrnn", grid_side=2, horizon=2, h_dim=2, latent=(1,), hidden=(2,))


def small_dataset(provenance="real"):
    values = RngStream(1).normal((2, 3, 4)).astype(np.float32).astype(np.float64)
    return Dataset(values, ObservationGrid(2), provenance, {"seed": 1, "sigma1": 0.25})


# -- datasets ----------------------------------------------------------------

def test_dataset_bytes_by_hand():
    ds = Dataset(np.arange(4.0).reshape(1, 1, 4), ObservationGrid(2), "support", {})
    meta = b'provenance="support"'
    want = (b"SVTF" + struct.pack("<H", 1) + struct.pack("<IIII", 1, 1, 2, 2) + b"\x01"
            + struct.pack("<I", len(meta)) + meta + struct.pack("<4f", 0, 1, 2, 3))
    assert dataset_to_bytes(ds) == want


def test_dataset_golden_file():
    ds = generate_pool(1, 3, 2, 4, 0.25, 0.0, seed=42)
    assert hashlib.sha256(dataset_to_bytes(ds)).hexdigest() == GOLDEN_DATASET_SHA256


@pytest.mark.parametrize("provenance", ["real", "support", "generated"])
def test_dataset_roundtrip(tmp_path, provenance):
    ds = small_dataset(provenance)
    write_dataset(ds, tmp_path / "d.svtf")
    back = read_dataset(tmp_path / "d.svtf")
    assert np.array_equal(back.values, ds.values)
    assert back.provenance == provenance
    assert back.metadata == ds.metadata
    assert back.grid == ds.grid


def test_dataset_roundtrip_at_stored_precision():
    ds = generate_support(2, 3, 2, 4, seed=0)
    back = dataset_from_bytes(dataset_to_bytes(ds))
    assert np.array_equal(back.values, ds.values.astype(np.float32))
    assert dataset_to_bytes(back) == dataset_to_bytes(ds)


def test_dataset_truncated():
    raw = dataset_to_bytes(small_dataset())
    with pytest.raises(TruncationError):
        dataset_from_bytes(raw[:-3])
    with pytest.raises(TruncationError):
        dataset_from_bytes(raw[:10])


def test_dataset_extra_payload():
    with pytest.raises(CountMismatchError):
        dataset_from_bytes(dataset_to_bytes(small_dataset()) + b"\x00" * 4)


def test_dataset_bad_magic_names_expected():
    raw = bytearray(dataset_to_bytes(small_dataset()))
    raw[:4] = b"XXXX"
    with pytest.raises(FormatError, match="SVTF"):
        dataset_from_bytes(bytes(raw))


def test_dataset_bad_version():
    raw = bytearray(dataset_to_bytes(small_dataset()))
    raw[4:6] = struct.pack("<H", 9)
    with pytest.raises(VersionError):
        dataset_from_bytes(bytes(raw))


def test_dataset_write_is_atomic(tmp_path):
    path = tmp_path / "d.svtf"
    write_dataset(small_dataset(), path)
    assert [p.name for p in tmp_path.iterdir()] == ["d.svtf"]


def test_dataset_files_identical_for_identical_seeds(tmp_path):
    write_dataset(generate_pool(3, 3, 2, 4, 0.25, 0.0, seed=8), tmp_path / "a")
    write_dataset(generate_pool(3, 3, 2, 4, 0.25, 0.0, seed=8), tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


# -- checkpoints -------------------------------------------------------------

def test_checkpoint_bytes_by_hand():
    params = zero_params(TINY_VRNN)
    arch_lines = ("grid_side=2\nh_dim=2\nhidden=[2]\nhorizon=2\nkernel=3\nkind=\"vrnn\"\nlatent=[1]\n"
                  "ln_eps=1e-05\npadding=1\nreconstruction=\"sum\"\nstride=2").encode()
    body = b"SVCK" + struct.pack("<HB", 1, 4) + b"vrnn" + struct.pack("<I", len(arch_lines)) + arch_lines
    body += struct.pack("<I", len(params.tensors))
    for name, arr in params.tensors.items():
        body += struct.pack("<H", len(name)) + name.encode() + struct.pack("<B", arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape) + b"\x00" * (8 * arr.size)
    want = body + hashlib.blake2b(body, digest_size=8).digest()
    got = checkpoint_to_bytes(params)
    assert got == want
    assert hashlib.sha256(got).hexdigest() == GOLDEN_CHECKPOINT_SHA256


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_checkpoint_roundtrip_and_generation(tmp_path, kind):
    arch = Architecture(kind, grid_side=8 if kind == "svae" else 3, horizon=2, h_dim=3,
                        latent=(2,) if kind == "vrnn" else (2, 2), hidden=(3,) if kind != "svae" else (2, 3))
    params = init_params(arch, 4)
    write_checkpoint(params, tmp_path / "m.ckpt")
    back = read_checkpoint(tmp_path / "m.ckpt")
    assert back.arch == arch
    assert all(np.array_equal(back.tensors[k], v) for k, v in params.tensors.items())
    assert generate(back, 5, seed=2).values.tobytes() == generate(params, 5, seed=2).values.tobytes()


def test_checkpoint_flipped_byte():
    raw = bytearray(checkpoint_to_bytes(init_params(TINY_VRNN, 0)))
    raw[len(raw) // 2] ^= 0x01
    with pytest.raises(ChecksumError):
        checkpoint_from_bytes(bytes(raw))


def test_checkpoint_bad_magic_and_truncation():
    raw = checkpoint_to_bytes(init_params(TINY_VRNN, 0))
    with pytest.raises(FormatError, match="SVCK"):
        checkpoint_from_bytes(b"SVTF" + raw[4:])
    with pytest.raises(TruncationError):
        checkpoint_from_bytes(raw[:8])


def _with_checksum(body: bytes) -> bytes:
    return body + hashlib.blake2b(body, digest_size=8).digest()


def test_checkpoint_missing_parameter():
    params = init_params(TINY_VRNN, 0)
    del params.tensors["ln.bias"]
    with pytest.raises(MissingParameterError, match="ln.bias"):
        checkpoint_from_bytes(checkpoint_to_bytes(params))


def test_checkpoint_duplicate_and_trailing():
    params = zero_params(TINY_VRNN)
    raw = checkpoint_to_bytes(params)[:-8]
    # entry count claims one fewer entry than present -> trailing bytes
    count_pos = raw.index(b"stride=2") + len(b"stride=2")
    n = struct.unpack("<I", raw[count_pos:count_pos + 4])[0]
    fewer = raw[:count_pos] + struct.pack("<I", n - 1) + raw[count_pos + 4:]
    with pytest.raises(CountMismatchError):
        checkpoint_from_bytes(_with_checksum(fewer))
    more = raw[:count_pos] + struct.pack("<I", n + 1) + raw[count_pos + 4:]
    with pytest.raises(TruncationError):
        checkpoint_from_bytes(_with_checksum(more))


def test_checkpoint_version():
    raw = bytearray(checkpoint_to_bytes(zero_params(TINY_VRNN)))
    raw[4:6] = struct.pack("<H", 2)
    with pytest.raises(VersionError):
        checkpoint_from_bytes(bytes(raw))


# -- exporters ---------------------------------------------------------------

def test_pgm_constant_field():
    img = field_image_bytes(np.full((2, 9), 3.0), 1, 3)
    assert img == b"P5\n3 3\n255\n" + bytes([128] * 9)


def test_pgm_scaling_over_whole_datum():
    obs = np.zeros((2, 4))
    obs[0] = [0.0, 1.0, 2.0, 4.0]
    obs[1] = [1.0, 1.0, 1.0, 2.0]
    hot = field_image_bytes(obs, 1, 2)
    header = b"P5\n2 2\n255\n"
    assert hot[:len(header)] == header and len(hot) == len(header) + 4
    assert list(hot[len(header):]) == [0, 64, 128, 255]
    # the cooler frame keeps the datum-wide scale
    assert list(field_image_bytes(obs, 2, 2)[len(header):]) == [64, 64, 64, 128]
    with pytest.raises(ValueError):
        field_image_bytes(obs, 3, 2)
    with pytest.raises(ValueError):
        field_image_bytes(obs, 0, 2)


def test_export_field_image(tmp_path):
    ds = generate_pool(1, 5, 2, 4, 0.25, 0.0, seed=0)
    export_field_image(ds[0], 1, tmp_path / "f.pgm")
    raw = (tmp_path / "f.pgm").read_bytes()
    assert raw.startswith(b"P5\n5 5\n255\n") and len(raw) == len(b"P5\n5 5\n255\n") + 25


def test_csv_exporters(tmp_path):
    hist = [LossBreakdown(1.0, 0.5, 0.25, 1.75), LossBreakdown(0.5, 0.25, 0.0, 0.75)]
    write_loss_history_csv(hist, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,reconstruction,kl_primary,kl_shared,total"
    assert lines[2] == "2,0.5,0.25,0.0,0.75"
    write_coordinates_csv({"pool": np.array([[1.0, 2.0, 3.0]])}, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines() == ["x,y,z,dataset", "1.0,2.0,3.0,pool"]
    from svrnn.evaluation import similarity_report

    pool = RngStream(0).normal((10, 1, 4))
    write_report_csv(similarity_report(pool, {"g": pool[:5]}), tmp_path / "r.csv")
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0].startswith("dataset,mean_S1") and rows[0].endswith("distance")
    assert rows[1].endswith(",") and len(rows) == 3
