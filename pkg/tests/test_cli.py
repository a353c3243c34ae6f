import json
import shutil

import numpy as np
import pytest

from depthpack.cli import main
from depthpack.datasets import load_manifest


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_ds")
    rc = main(
        [
            "synth", "--kind", "flythrough", "--frames", "8", "--width", "32",
            "--height", "32", "--seed", "4", "--out", str(root / "ds"),
        ]
    )
    assert rc == 0
    return root


def test_synth_writes_manifest_and_trajectory(dataset):
    manifest = load_manifest(dataset / "ds" / "manifest.json")
    assert len(manifest.frames) == 8
    assert manifest.trajectory is not None


def test_synth_seed_reproducible(tmp_path):
    for name in ("a", "b"):
        main(["synth", "--kind", "noise", "--frames", "2", "--width", "8",
              "--height", "8", "--seed", "3", "--out", str(tmp_path / name)])
    a = (tmp_path / "a" / "frame_00000.rawf32").read_bytes()
    b = (tmp_path / "b" / "frame_00000.rawf32").read_bytes()
    assert a == b


def test_pack_unpack_roundtrip_prints_mae(dataset, capsys):
    packed = dataset / "packed.y4m"
    rc = main(["pack", "--manifest", str(dataset / "ds" / "manifest.json"),
               "--scheme", "vbp", "--bits", "24", "--out", str(packed)])
    assert rc == 0
    sidecar = json.loads((dataset / "packed.y4m.json").read_text())
    assert sidecar["bits"] == 24 and sidecar["scheme"] == "vbp"
    rc = main(["unpack", "--packed", str(packed), "--out", str(dataset / "unp"),
               "--reference", str(dataset / "ds" / "manifest.json")])
    assert rc == 0
    out = capsys.readouterr().out
    mae_line = [ln for ln in out.splitlines() if ln.startswith("mae_vs_reference")]
    assert mae_line
    # VBP-24 packing error bound (quantization-free path is ~2^-23)
    assert float(mae_line[0].split()[1]) <= 2**-23 + 1e-6


def test_pack_invalid_bits_exits_2(dataset):
    rc = main(["pack", "--manifest", str(dataset / "ds" / "manifest.json"),
               "--scheme", "vbp", "--bits", "7", "--out", str(dataset / "x.y4m")])
    assert rc == 2


def test_missing_manifest_exits_3(tmp_path):
    rc = main(["pack", "--manifest", str(tmp_path / "none.json"),
               "--scheme", "vbp", "--bits", "12", "--out", str(tmp_path / "x.y4m")])
    assert rc == 3


def test_empty_manifest_exits_2(tmp_path, capsys):
    bad = tmp_path / "empty.json"
    bad.write_text(json.dumps({
        "version": 1, "name": "x", "format": "rawf32", "width": 4, "height": 4,
        "fps": 30.0, "near": 0.1, "far": 100.0, "frames": [], "trajectory": None,
    }))
    rc = main(["pack", "--manifest", str(bad), "--scheme", "vbp", "--bits", "12",
               "--out", str(tmp_path / "x.y4m")])
    assert rc == 2


def test_sweep_csv_shape(dataset, capsys):
    out = dataset / "sweep.csv"
    rc = main(["sweep", "--manifest", str(dataset / "ds" / "manifest.json"),
               "--vbp-bits", "8,12", "--rp-np", "512", "--bitrates", "2e5",
               "--gop", "4", "--workers", "1", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("# depthpack")
    assert len(lines) == 2 + 3  # comment, header, 3 config rows

    rc = main(["sweep", "--manifest", str(dataset / "ds" / "manifest.json"),
               "--bitrates", "2e5", "--out", str(out)])
    assert rc == 2  # no configs given


def test_encode_writes_coded_csv(dataset, capsys):
    coded = dataset / "coded.csv"
    rc = main(["encode", "--manifest", str(dataset / "ds" / "manifest.json"),
               "--bits", "12", "--bitrate", "3e5", "--gop", "4",
               "--coded-csv", str(coded)])
    assert rc == 0
    lines = coded.read_text().strip().splitlines()
    assert lines[1] == "frame_index,type,qp,bits"
    assert len(lines) == 2 + 8
    out = capsys.readouterr().out
    assert "achieved_bps" in out


@pytest.mark.skipif(shutil.which("cat") is None, reason="needs cat")
def test_encode_external_null_codec(dataset, capsys):
    rc = main(["encode", "--manifest", str(dataset / "ds" / "manifest.json"),
               "--bits", "24", "--bitrate", "1e6", "--encoder-cmd", "cat"])
    assert rc == 0
    out = capsys.readouterr().out
    # lossless transport: only packing error remains
    mae = float(out.split()[1])
    assert mae <= 2**-23 + 1e-6


def test_encode_missing_external_command(dataset):
    rc = main(["encode", "--manifest", str(dataset / "ds" / "manifest.json"),
               "--bits", "12", "--bitrate", "1e6",
               "--encoder-cmd", "/no/such/encoder"])
    assert rc == 3


def test_oracle_train_predict_select_flow(dataset, capsys):
    ds = str(dataset / "ds" / "manifest.json")
    labels = str(dataset / "labels.csv")
    model = str(dataset / "model.json")
    rc = main(["oracle", "--manifest", ds, "--bitrates", "1e5,1e6",
               "--precisions", "8,12,16", "--gop", "4", "--out", labels])
    assert rc == 0
    assert len((dataset / "labels.csv").read_text().strip().splitlines()) == 2 + 16

    rc = main(["train", "--manifest", ds, "--labels", labels, "--model-out", model,
               "--log-out", str(dataset / "log.csv"), "--epochs", "30",
               "--seed", "1"])
    assert rc == 0
    log_lines = (dataset / "log.csv").read_text().strip().splitlines()
    assert log_lines[1] == "epoch,train_l1,test_l1"
    assert len(log_lines) == 2 + 30

    rc = main(["predict", "--manifest", ds, "--model", model,
               "--bitrate", "1e6", "--out", str(dataset / "pred.csv")])
    assert rc == 0
    pred_lines = (dataset / "pred.csv").read_text().strip().splitlines()
    assert len(pred_lines) == 2 + 8

    rc = main(["select", "--manifest", ds, "--model", model, "--labels", labels,
               "--out", str(dataset / "sel.csv")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "fraction_optimal" in out and "mean_error" in out


def test_predict_with_wrong_model_version(dataset, tmp_path):
    model = tmp_path / "model.json"
    payload = {
        "format_version": 1, "feature_version": 99, "feature_names": [],
        "precision_set": [8], "feature_mean": [], "feature_std": [],
        "weights": [], "biases": [],
    }
    model.write_text(json.dumps(payload))
    rc = main(["predict", "--manifest", str(dataset / "ds" / "manifest.json"),
               "--model", str(model), "--bitrate", "1e6",
               "--out", str(tmp_path / "pred.csv")])
    assert rc == 2


def test_bench_single_iteration(capsys):
    rc = main(["bench", "--iters", "1", "--width", "32", "--height", "32"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "median" in out and "p95" in out


def test_bench_median_not_above_p95(capsys):
    rc = main(["bench", "--iters", "9", "--width", "32", "--height", "32"])
    assert rc == 0
    words = capsys.readouterr().out.split()
    med = float(words[words.index("median") + 1])
    p95 = float(words[words.index("p95") + 1])
    assert med <= p95


def test_bench_kernels_runs(capsys):
    rc = main(["bench-kernels", "--width", "32", "--height", "32", "--iters", "2"])
    assert rc == 0
    assert "active backend" in capsys.readouterr().out


def test_single_inference_latency_512():
    # pinned with generous margin against the measured ~3.8 ms median
    import time

    from depthpack.oracle import DEFAULT_PRECISIONS
    from depthpack.predictor import extract_features, forward, init_model
    from depthpack.types import DepthMap

    rng = np.random.default_rng(0)
    dmap = DepthMap(512, 512, rng.random((512, 512)).astype(np.float32))
    model = init_model(DEFAULT_PRECISIONS, seed=0)
    for _ in range(3):
        forward(model, extract_features(dmap, bitrate=1e7))
    samples = []
    for _ in range(50):
        t0 = time.perf_counter()
        forward(model, extract_features(dmap, bitrate=1e7))
        samples.append(time.perf_counter() - t0)
    samples.sort()
    assert samples[len(samples) // 2] * 1e3 < 5.0
