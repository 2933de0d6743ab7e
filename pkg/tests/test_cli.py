import json
import subprocess
import sys

import numpy as np
import pytest

from scenecensor.bundle import ModelConfig, dump_bundle, train_bundle
from scenecensor.cli import EXIT_INPUT, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE, main
from scenecensor.testing import cluster_embeddings, synthetic_asset, write_asset, write_emb_manifest


@pytest.fixture(scope="module")
def manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    image, audio, labels = cluster_embeddings(40, image_dim=24, audio_dim=8, seed=9)
    return write_emb_manifest(root, image, audio, labels)


@pytest.fixture(scope="module")
def model(manifest):
    path = manifest.parent / "model.bin"
    assert main(["train", "--manifest", str(manifest), "--out", str(path),
                 "--image-dim", "8", "--audio-dim", "4", "--seed", "9"]) == EXIT_OK
    return path


def test_train_prints_held_out_table(model, manifest, capsys):
    out = model.parent / "again.bin"
    assert main(["train", "--manifest", str(manifest), "--out", str(out), "--kernel", "linear",
                 "--image-dim", "8", "--audio-dim", "4"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "trained on 72 items" in text and "held-out" in text


def test_eval_writes_json(model, manifest, tmp_path, capsys):
    report = tmp_path / "cv.json"
    assert main(["eval", "--manifest", str(manifest), "--model", str(model), "--k", "4",
                 "--json", str(report)]) == EXIT_OK
    assert "4-fold cross-validation" in capsys.readouterr().out
    data = json.loads(report.read_text())
    assert data["folds"] == 4 and set(data["classes"]) == {"appropriate", "inappropriate"}


def test_censor_end_to_end(tmp_path, capsys):
    video, audio = write_asset(synthetic_asset(10, fps=2, size=(8, 8), sample_rate=800, seed=2), tmp_path)
    rng = np.random.default_rng(0)
    bundle = train_bundle(rng.standard_normal((40, 1024)), rng.standard_normal((40, 128)),
                          np.repeat([-1, 1], 20), ModelConfig(image_dim=4, audio_dim=4))
    model = tmp_path / "model.bin"
    model.write_bytes(dump_bundle(bundle))
    code = main(["censor", str(video), str(audio), "--model", str(model), "--out", str(tmp_path / "out"),
                 "--report", str(tmp_path / "report.xml"), "--workers", "1"])
    assert code == EXIT_OK
    assert (tmp_path / "out" / "synthetic.y4m").exists()
    assert (tmp_path / "report.xml").read_bytes().startswith(b"<?xml")
    assert "inappropriate scene(s)" in capsys.readouterr().out


def test_usage_error_exits_1(capsys):
    with pytest.raises(SystemExit) as info:
        main(["train", "--manifest"])
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == EXIT_USAGE


@pytest.mark.parametrize("argv", [
    ["train", "--manifest", "/nonexistent/manifest.csv", "--out", "x.bin"],
    ["train", "--manifest", "{manifest}", "--out", "{tmp}/m.bin", "--C", "-1"],
    ["eval", "--manifest", "{manifest}", "--model", "{manifest}"],
    ["eval", "--manifest", "{manifest}", "--model", "{model}", "--k", "1000"],
    ["censor", "{manifest}", "{manifest}", "--model", "{model}", "--out", "{tmp}", "--report", "{tmp}/r.xml"],
])
def test_input_errors_exit_2(argv, manifest, model, tmp_path, capsys):
    argv = [a.format(manifest=manifest, model=model, tmp=tmp_path) for a in argv]
    assert main(argv) == EXIT_INPUT
    assert capsys.readouterr().err.startswith("error:")


def test_provider_failure_exits_2(tmp_path, capsys):
    video, audio = write_asset(synthetic_asset(10, fps=2, size=(8, 8), sample_rate=800), tmp_path)
    bundle = train_bundle(*cluster_embeddings(20, image_dim=8, audio_dim=4), ModelConfig(image_dim=2, audio_dim=2))
    model = tmp_path / "m.bin"
    model.write_bytes(dump_bundle(bundle))
    code = main(["censor", str(video), str(audio), "--model", str(model), "--provider",
                 f"precomputed:{tmp_path}", "--out", str(tmp_path / "o"), "--report", str(tmp_path / "r.xml")])
    assert code == EXIT_INPUT
    assert "segment 0" in capsys.readouterr().err


def test_unexpected_failure_exits_3(monkeypatch, manifest, tmp_path, capsys):
    import scenecensor.pipeline as pipeline

    def broken(*args, **kwargs):
        raise RuntimeError("unexpected")

    monkeypatch.setattr(pipeline, "run_train", broken)
    assert main(["train", "--manifest", str(manifest), "--out", str(tmp_path / "m.bin")]) == EXIT_INTERNAL
    assert "internal error" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "scenecensor", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "censor" in proc.stdout and "train" in proc.stdout
