"""End-to-end CLI flows at tiny scale."""

import json

import numpy as np
import pytest

from notefill import demo_corpus
from notefill.cli import main
from notefill.tokens import TokenSequence


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    midi_dir = root / "midis"
    demo_corpus.write_demo_corpus(midi_dir, count=6, bars=16, mode="melody", seed=8)
    return root


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    summary = json.loads(captured.out) if captured.out.strip() else None
    return code, summary, captured.err


@pytest.fixture(scope="module")
def token_dir(workspace):
    out = workspace / "tokens"
    code = main(["tokenize", str(workspace / "midis"), "--mode", "melody",
                 "--out", str(out), "--steps", "256"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def checkpoint(workspace, token_dir):
    ckpt = workspace / "model.pt"
    code = main(["train", "--corpus", str(token_dir), "--out", str(ckpt),
                 "--config", "desk_melody", "--steps", "40", "--seed", "1",
                 "--batch-size", "8"])
    assert code == 0
    return ckpt


def test_tokenize_summary(workspace, capsys):
    out = workspace / "tokens2"
    code, summary, _ = run_cli(capsys, "tokenize", workspace / "midis",
                               "--mode", "melody", "--out", out, "--steps", "256")
    assert code == 0
    assert summary["files_ok"] == 6
    assert summary["windows"] >= 6
    assert (out / "manifest.json").exists()


def test_train_and_sample_round(workspace, checkpoint, capsys):
    out_dir = workspace / "samples"
    code, summary, _ = run_cli(capsys, "sample", "--ckpt", checkpoint, "--n", "2",
                               "--steps", "4", "--seed", "3", "--out", out_dir)
    assert code == 0
    assert summary["count"] == 2
    piece = TokenSequence.load(out_dir / "sample_000.tok")
    assert piece.steps == 256
    assert not piece.has_masks()
    assert (out_dir / "sample_000.mid").exists()


def test_sample_determinism(workspace, checkpoint, capsys):
    out_a = workspace / "det_a"
    out_b = workspace / "det_b"
    for out in (out_a, out_b):
        code, _, _ = run_cli(capsys, "sample", "--ckpt", checkpoint, "--n", "1",
                             "--steps", "4", "--seed", "11", "--out", out)
        assert code == 0
    assert (out_a / "sample_000.tok").read_bytes() == (out_b / "sample_000.tok").read_bytes()


def test_infill_with_mask_file(workspace, token_dir, checkpoint, capsys):
    piece_path = sorted(token_dir.glob("*.tok"))[0]
    mask_path = workspace / "mask.json"
    mask_path.write_text(json.dumps(
        {"steps": 256, "tracks": 1, "runs": [[[64, 64]]]}
    ))
    out = workspace / "infilled.tok"
    code, summary, _ = run_cli(capsys, "infill", "--ckpt", checkpoint,
                               "--in", piece_path, "--mask", mask_path,
                               "--steps", "4", "--seed", "0", "--out", out)
    assert code == 0
    original = TokenSequence.load(piece_path)
    result = TokenSequence.load(out)
    assert (result.values[:64] == original.values[:64]).all()
    assert (result.values[128:] == original.values[128:]).all()


def test_evaluate_identity(workspace, token_dir, capsys):
    report_path = workspace / "report.json"
    code, summary, _ = run_cli(capsys, "evaluate", "--set", token_dir,
                               "--ground-truth", token_dir, "--out", report_path)
    assert code == 0
    assert summary["pitch"]["consistency"] == 1.0
    assert summary["duration"]["variance"] == 1.0
    assert json.loads(report_path.read_text())["pitch"]["consistency"] == 1.0


def test_export_midi_command(workspace, token_dir, capsys):
    piece = sorted(token_dir.glob("*.tok"))[0]
    out = workspace / "exported.mid"
    code, summary, _ = run_cli(capsys, "export-midi", "--in", piece, "--out", out)
    assert code == 0
    assert out.read_bytes()[:4] == b"MThd"


def test_train_classifier_command(workspace, token_dir, capsys):
    out = workspace / "clf.pt"
    code, summary, _ = run_cli(capsys, "train-classifier", "--corpus", token_dir,
                               "--out", out, "--seed", "0")
    assert code == 0
    assert summary["validation_accuracy"] >= 0.9


def test_missing_file_is_structured_error(workspace, capsys):
    code, summary, err = run_cli(capsys, "export-midi", "--in",
                                 workspace / "nope.tok", "--out", workspace / "x.mid")
    assert code == 2
    assert summary is None
    payload = json.loads(err)
    assert payload["error"]["type"] == "FileNotFoundError"


def test_central512_on_wrong_length_errors(workspace, token_dir, checkpoint, capsys):
    piece = sorted(token_dir.glob("*.tok"))[0]   # 256 steps, not 1024
    code, _, err = run_cli(capsys, "infill", "--ckpt", checkpoint, "--in", piece,
                           "--mask", "central512", "--steps", "4",
                           "--out", workspace / "never.tok")
    assert code == 2
    assert "1024" in json.loads(err)["error"]["message"]


def test_unknown_flag_exits_nonzero(capsys):
    with pytest.raises(SystemExit) as exc_info:
        main(["sample", "--bogus"])
    assert exc_info.value.code == 2


def test_confound_command_small_budget(workspace, capsys, tmp_path):
    from PIL import Image

    image = (demo_corpus.demo_scene_image(256, 64, seed=3) * 255).astype(np.uint8)
    image_path = workspace / "scene.png"
    Image.fromarray(image[::-1, :], mode="L").save(image_path)
    ref = demo_corpus.demo_sequences(1, bars=16, mode="melody", seed=78)[0]
    ref_path = workspace / "ref.tok"
    ref.save(ref_path)
    out_dir = workspace / "confound"
    code, summary, _ = run_cli(capsys, "confound", "--image", image_path,
                               "--reference", ref_path, "--out-dir", out_dir,
                               "--iterations", "2000", "--seed", "0")
    assert code == 0
    assert (out_dir / "comparison.png").exists()
    assert (out_dir / "report.json").exists()
    assert set(summary["scores"]) == {
        "consistency_pitch", "variance_pitch", "consistency_duration", "variance_duration",
    }
