import json

import numpy as np
import pytest

from cadlab.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from cadlab.data import generate_class_dataset, save_dataset
from cadlab.imagecore import read_netpbm


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    save_dataset(generate_class_dataset(6, seed=0, split="train"), root / "ds")
    rc = main([
        "train", "--dataset", str(root / "ds"),
        "--out", str(root / "model.bin"), "--epochs", "5",
    ])
    assert rc == EXIT_OK
    return root


def test_attack_compress_classify_pipeline(workdir, capsys):
    img = workdir / "ds" / "train_00000.pgm"
    rc = main([
        "attack", "--model", str(workdir / "model.bin"),
        "--image", str(img), "--label", "0", "--epsilon", "10",
        "--out", str(workdir / "adv.pgm"),
    ])
    assert rc == EXIT_OK
    adv = read_netpbm(workdir / "adv.pgm")
    clean = read_netpbm(img)
    assert np.abs(adv.planes - clean.planes).max() <= 10.0

    rc = main([
        "compress", "--image", str(workdir / "adv.pgm"),
        "--codec", "dct", "--target", "25",
        "--out", str(workdir / "s.dcx"),
        "--decoded-out", str(workdir / "dec.pgm"),
    ])
    assert rc == EXIT_OK
    assert (workdir / "s.dcx").stat().st_size > 0

    rc = main([
        "classify", "--model", str(workdir / "model.bin"),
        str(workdir / "dec.pgm"),
    ])
    assert rc == EXIT_OK
    out = capsys.readouterr().out.strip().splitlines()[-1]
    assert out.split("\t")[1].isdigit()


def test_compress_max(workdir):
    img = workdir / "ds" / "train_00001.pgm"
    rc = main([
        "compress", "--image", str(img), "--codec", "wavelet", "--max",
        "--out", str(workdir / "s.wvx"),
    ])
    assert rc == EXIT_OK


def test_compress_needs_target_or_max(workdir):
    img = workdir / "ds" / "train_00001.pgm"
    rc = main([
        "compress", "--image", str(img), "--codec", "dct",
        "--out", str(workdir / "x.dcx"),
    ])
    assert rc == EXIT_CONFIG


def test_experiment_table_dump(workdir, capsys):
    cfg = {
        "dataset_dir": str(workdir / "ds"),
        "model_path": str(workdir / "model.bin"),
        "attacks": [{"kind": "fgsm", "epsilon": 10}],
        "psnr_targets": [23.0],
        "include_max_compression": False,
        "max_images": 4,
    }
    cfg_path = workdir / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    rc = main([
        "experiment", "--config", str(cfg_path),
        "--out", str(workdir / "rep.json"),
    ])
    assert rc == EXIT_OK
    rc = main(["table", "--report", str(workdir / "rep.json")])
    assert rc == EXIT_OK
    text = capsys.readouterr().out
    assert "Uncompressed" in text and "FGSM (eps=10)" in text
    rc = main([
        "dump", "--config", str(cfg_path), "--n", "1",
        "--out", str(workdir / "dmp"),
    ])
    assert rc == EXIT_OK
    assert (workdir / "dmp" / "manifest.json").exists()


def test_missing_config_file_is_io_error(workdir):
    rc = main([
        "experiment", "--config", str(workdir / "nope.json"),
        "--out", str(workdir / "x.json"),
    ])
    assert rc == EXIT_IO


def test_incomplete_config_is_config_error(workdir):
    bad = workdir / "bad.json"
    bad.write_text(json.dumps({"model_path": "m"}))
    rc = main([
        "experiment", "--config", str(bad), "--out", str(workdir / "x.json"),
    ])
    assert rc == EXIT_CONFIG


def test_malformed_model_is_config_error(workdir):
    rc = main([
        "classify", "--model", str(workdir / "cfg.json"),
        str(workdir / "ds" / "train_00000.pgm"),
    ])
    assert rc == EXIT_CONFIG
