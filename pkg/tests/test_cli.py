import numpy as np
import pytest

from dmclab import container
from dmclab.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from dmclab.manifest import read_kv


def test_flops_prints_total(capsys, tmp_path):
    assert main(["flops", "--manifest", str(tmp_path / "m.txt")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "total 228501504 (0.2285 GMACs)" in out
    assert read_kv(tmp_path / "m.txt")["total_macs"] == "228501504"


def test_unknown_subcommand_and_missing_command():
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_bad_loss_flag_is_usage_error(tmp_path):
    assert main(["train", "--data", str(tmp_path), "--out", str(tmp_path / "o"), "--losses", "cls,foo"]) == EXIT_USAGE


def test_missing_input_is_data_error(tmp_path):
    assert main(["decode", "--input", str(tmp_path / "nope.dmcv"), "--output", str(tmp_path / "x.rgb"),
                 "--manifest", str(tmp_path / "m.txt")]) == EXIT_DATA


def test_gradcheck_exit_codes(tmp_path):
    m = str(tmp_path / "m.txt")
    assert main(["gradcheck", "--seeds", "2", "--ops", "add,linear", "--manifest", m]) == EXIT_OK
    assert read_kv(m)["passed"] == "True"
    # an absurdly tight tolerance cannot be met by finite differences
    assert main(["gradcheck", "--seeds", "1", "--ops", "softmax", "--tolerance", "1e-30",
                 "--manifest", m]) == EXIT_NUMERIC
    assert main(["gradcheck", "--ops", "nope", "--manifest", m]) == EXIT_USAGE


def test_config_file_supplies_defaults(tmp_path, capsys):
    cfg = tmp_path / "flops.cfg"
    cfg.write_text("height=64\nwidth=64\n")
    assert main(["flops", "--config", str(cfg), "--manifest", str(tmp_path / "m.txt")]) == EXIT_OK
    assert read_kv(tmp_path / "m.txt")["height"] == "64"
    # command-line values win over the config file
    assert main(["flops", "--config", str(cfg), "--height", "32", "--manifest", str(tmp_path / "m.txt")]) == 0
    assert read_kv(tmp_path / "m.txt")["height"] == "32"
    cfg.write_text("bogus=1\n")
    assert main(["flops", "--config", str(cfg)]) == EXIT_USAGE


def test_encode_decode_raw_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    frames = [rng.integers(0, 256, (3, 32, 48), dtype=np.uint8) for _ in range(24)]
    raw = tmp_path / "in.rgb"
    container.write_raw(raw, frames)
    m = str(tmp_path / "m.txt")
    assert main(["encode", "--input", str(raw), "--output", str(tmp_path / "v.dmcv"), "--search-range", "2",
                 "--ref-mode", "previous", "--manifest", m]) == EXIT_OK
    assert read_kv(m)["gops"] == "2"
    assert main(["decode", "--input", str(tmp_path / "v.dmcv"), "--output", str(tmp_path / "out.rgb"),
                 "--manifest", m]) == EXIT_OK
    back = container.read_raw(tmp_path / "out.rgb")
    assert all(np.array_equal(a, b) for a, b in zip(frames, back)) and len(back) == 24
    # a partial GOP is not encodable
    container.write_raw(raw, frames[:14])
    assert main(["encode", "--input", str(raw), "--output", str(tmp_path / "w.dmcv"), "--manifest", m]) == EXIT_DATA


def test_synth_train_eval_infer_pipeline(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["synth", "--classes", "2", "--clips", "1", "--size", "32", "--out", str(data)]) == EXIT_OK
    assert len(list(data.glob("clip_*.dmcv"))) == 2
    assert (data / "manifest.txt").exists()
    run = tmp_path / "run"
    args = ["train", "--data", str(data), "--out", str(run), "--phase1-epochs", "1", "--phase2-epochs", "1",
            "--phase3-epochs", "1", "--stream-epochs", "1", "--batch-size", "4", "--lambda", "0.5"]
    assert main(args) == EXIT_OK
    manifest = read_kv(run / "manifest.txt")
    assert manifest["alpha"] == "10.0" and manifest["lambda"] == "0.5"
    assert (run / "model.dmcw").exists() and (run / "history.txt").exists()
    assert main(["eval", "--checkpoint", str(run / "model.dmcw"), "--data", str(data),
                 "--out", str(tmp_path / "ev")]) == EXIT_OK
    metrics = read_kv(tmp_path / "ev" / "metrics.txt")
    assert metrics["videos"] == "2" and "top1.fused.I+R+DMC" in metrics
    capsys.readouterr()
    assert main(["infer", "--checkpoint", str(run / "model.dmcw"), "--input", str(data / "clip_0000.dmcv"),
                 "--streams", "R,DMC", "--manifest", str(tmp_path / "m.txt")]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("predicted class ")
    scores = [float(s) for s in out.splitlines()[1].split()[1:]]
    assert len(scores) == 2 and sum(scores) == pytest.approx(1.0, abs=1e-5)
