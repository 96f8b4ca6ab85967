import json

import numpy as np
import pytest

from svrnn import cli
from svrnn.persistence import read_dataset

SMALL = ["--pool-count", "10", "--grid-side", "8", "--nd", "5", "--n-s", "5", "--epochs", "2",
         "--n-generated", "4"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    line = err.strip().splitlines()[-1]
    prefix, payload = line.split(" ", 1)
    assert prefix == "svrnn-error"
    return json.loads(payload)


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "out"))
    return tmp_path


def test_pipeline(workdir, capsys):
    out = workdir / "out"
    assert run(capsys, "gen-pool", *SMALL)[0] == 0
    assert run(capsys, "make-dataset", "--pool", str(out / "pool.svtf"), *SMALL)[0] == 0
    assert run(capsys, "gen-support", "--pool", str(out / "pool.svtf"), *SMALL)[0] == 0
    assert read_dataset(out / "support.svtf").metadata["A"] == read_dataset(out / "pool.svtf").metadata["A"]
    assert run(capsys, "train", "--model", "svrnn", "--data", str(out / "train.svtf"),
               "--support", str(out / "support.svtf"), *SMALL)[0] == 0
    assert (out / "svrnn_best.ckpt").exists() and len((out / "loss_svrnn.csv").read_text().splitlines()) == 3
    assert run(capsys, "sample", "--checkpoint", str(out / "svrnn_final.ckpt"), *SMALL)[0] == 0
    assert len(read_dataset(out / "generated_svrnn.svtf")) == 4
    code, text, _ = run(capsys, "eval", "--pool", str(out / "pool.svtf"),
                        "--generated", f"S-VRNN={out / 'generated_svrnn.svtf'}", *SMALL)
    assert code == 0 and "S-VRNN" in text and "distance" in text
    assert run(capsys, "report", "--pool", str(out / "pool.svtf"),
               "--generated", str(out / "generated_svrnn.svtf"), *SMALL)[0] == 0
    assert (out / "images" / "generated_svrnn_0_t4.pgm").exists()
    assert (out / "pca_coordinates.csv").exists()


def test_sample_count_zero(workdir, capsys):
    out = workdir / "out"
    run(capsys, "gen-pool", *SMALL)
    run(capsys, "train", "--model", "vrnn", "--data", str(out / "pool.svtf"), "--epochs", "0", *SMALL[:6])
    code, _, _ = run(capsys, "sample", "--checkpoint", str(out / "vrnn_final.ckpt"), "--count", "0",
                     "--out", str(workdir / "empty.svtf"))
    assert code == 0
    ds = read_dataset(workdir / "empty.svtf")
    assert len(ds) == 0 and ds.values.shape == (0, 4, 64)


def test_vrnn_rejects_support(workdir, capsys):
    out = workdir / "out"
    run(capsys, "gen-pool", *SMALL)
    run(capsys, "gen-support", *SMALL)
    code, _, err = run(capsys, "train", "--model", "vrnn", "--data", str(out / "pool.svtf"),
                       "--support", str(out / "support.svtf"), *SMALL)
    assert code == cli.EXIT_CONTRACT
    assert error_of(err) == {"code": 5, "kind": "contract", "message": "VRNN takes no support set"}


def test_geometry_mismatch(workdir, capsys):
    out = workdir / "out"
    run(capsys, "gen-pool", *SMALL)
    run(capsys, "gen-support", "--grid-side", "6", "--nd", "5")
    code, _, err = run(capsys, "train", "--model", "svrnn", "--data", str(out / "pool.svtf"),
                       "--support", str(out / "support.svtf"), "--nd", "5")
    assert code == cli.EXIT_CONTRACT and "geometry" in error_of(err)["message"]


def test_error_codes(workdir, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["gen-pool", "--no-such-flag"])
    assert exc.value.code == cli.EXIT_USAGE
    assert error_of(capsys.readouterr().err)["kind"] == "usage"
    code, _, err = run(capsys, "gen-pool", "--grid-side", "zero")
    assert code == cli.EXIT_CONFIG and error_of(err)["kind"] == "config"
    code, _, err = run(capsys, "sample", "--checkpoint", str(workdir / "missing.ckpt"))
    assert code == cli.EXIT_MISSING
    bad = workdir / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    code, _, err = run(capsys, "sample", "--checkpoint", str(bad))
    assert code == cli.EXIT_FILE and "SVCK" in error_of(err)["message"]
    assert len(err.strip().splitlines()) == 1
    code, _, err = run(capsys, "gen-pool", "--config", str(workdir / "none.txt"))
    assert code == cli.EXIT_MISSING


def test_config_file_and_flag_precedence(workdir, capsys):
    conf = workdir / "c.txt"
    conf.write_text("pool_count = 3\nn_d = 2\ngrid_side = 4\nhorizon = 2\n")
    assert run(capsys, "gen-pool", "--config", str(conf), "--pool-count", "5")[0] == 0
    ds = read_dataset(workdir / "out" / "pool.svtf")
    assert ds.values.shape == (5, 2, 16)
    conf.write_text("bogus = 1\n")
    code, _, err = run(capsys, "gen-pool", "--config", str(conf))
    assert code == cli.EXIT_CONFIG and "bogus" in error_of(err)["message"]


def test_every_config_key_has_a_flag():
    from dataclasses import fields

    from svrnn.config import ExperimentConfig

    help_text = cli.build_parser()._subparsers._group_actions[0].choices["train"].format_help()
    for f in fields(ExperimentConfig):
        assert "--" + f.name.replace("_", "-") in help_text
    for code in range(7):
        assert f"  {code}  " in help_text


def test_identical_commands_identical_bytes(tmp_path, capsys):
    for name in ("a", "b"):
        run(capsys, "gen-pool", "--out-dir", str(tmp_path / name), *SMALL)
    assert (tmp_path / "a" / "pool.svtf").read_bytes() == (tmp_path / "b" / "pool.svtf").read_bytes()


def test_run_experiment_rows(workdir, capsys):
    code, text, _ = run(capsys, "run-experiment", "--preset", "paper-desk", "--nd", "5", "--seed", "7",
                        *SMALL[:4], "--n-s", "5", "--epochs", "1", "--n-generated", "3")
    assert code == 0
    labels = [line.split("  ")[0] for line in text.splitlines()[2:6]]
    assert labels == ["Training data pool", "S-VAE generated data", "VRNN generated data", "S-VRNN generated data"]
    seed_dir = workdir / "out" / "seed-7"
    assert json.loads((seed_dir / "summary.json").read_text())["seed"] == 7
    assert "seeds = 7" in (seed_dir / "config.txt").read_text()
    assert np.isfinite(json.loads((seed_dir / "summary.json").read_text())["distances"]["S-VRNN generated data"])
