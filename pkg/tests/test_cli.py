import json

import pytest

from atcsri import cli


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("clicorpus")
    code = cli.run(["synth", "--out", str(out), "--n-train", "16", "--n-dev", "8",
                    "--n-test", "6", "--seed", "4"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def ckpt(corpus_dir, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("cliout")
    cfg = out_dir / "run.cfg"
    cfg.write_text("max_epochs = 1\nbatch_size = 8\nlearning_rate = 1e-3\n")
    path = out_dir / "textcnn.ckpt"
    code = cli.run(["train", "--model", "textcnn", "--data", str(corpus_dir),
                    "--config", str(cfg), "--out", str(path), "--seed", "1"])
    assert code == 0
    return path


def test_no_command_is_usage_error(capsys):
    assert cli.run([]) == 1
    assert cli.run(["conjure"]) == 1
    capsys.readouterr()


def test_synth_writes_manifests(corpus_dir):
    for split in ("train", "dev", "test"):
        assert (corpus_dir / f"{split}.jsonl").is_file()
    assert any((corpus_dir / "wav").iterdir())


def test_synth_flag_out_of_range(tmp_path, capsys):
    code = cli.run(["synth", "--out", str(tmp_path), "--pilot-frac", "1.5"])
    assert code == 1
    assert "pilot_fraction" in capsys.readouterr().err


def test_train_artifacts(ckpt):
    assert ckpt.is_file()
    assert ckpt.with_suffix(".history.jsonl").is_file()
    assert ckpt.with_suffix(".vocab").is_file()


def test_eval_emits_json_then_table(ckpt, corpus_dir, capsys):
    code = cli.run(["eval", "--checkpoint", str(ckpt), "--data", str(corpus_dir),
                    "--split", "test"])
    out = capsys.readouterr().out
    assert code == 0
    report = json.loads(out.splitlines()[0])
    assert {"acc", "auc", "precision", "recall", "f1"} <= set(report)
    assert "confusion" in out


def test_predict_reports_role_and_probability(ckpt, capsys):
    code = cli.run(["predict", "--checkpoint", str(ckpt), "--text",
                    "air china four two three seven climb to eight thousand one hundred meters"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert set(payload) == {"role", "p_pilot"}
    assert payload["role"] in ("atco", "pilot")
    assert 0.0 <= payload["p_pilot"] <= 1.0


def test_predict_without_required_text_flag(ckpt, capsys):
    assert cli.run(["predict", "--checkpoint", str(ckpt)]) == 1
    assert "--text" in capsys.readouterr().err


def test_gradcheck_exit_zero(capsys):
    assert cli.run(["gradcheck", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert "max relative error" in out
    assert "FAIL" not in out


def test_mmsrinet_on_text_only_manifest_is_data_error(tmp_path, capsys):
    rows = [{"text": "air china one two three four climb", "role": "atco"},
            {"text": "descending spring five five", "role": "pilot"}]
    for split in ("train", "dev"):
        with open(tmp_path / f"{split}.jsonl", "w") as fh:
            for r in rows:
                fh.write(json.dumps(r) + "\n")
    code = cli.run(["train", "--model", "mmsrinet", "--data", str(tmp_path),
                    "--out", str(tmp_path / "m.ckpt")])
    assert code == 2
    assert "audio" in capsys.readouterr().err


def test_unknown_config_key_is_data_error(corpus_dir, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("learing_rate = 1e-3\n")
    code = cli.run(["train", "--model", "textcnn", "--data", str(corpus_dir),
                    "--config", str(cfg), "--out", str(tmp_path / "m.ckpt")])
    assert code == 2
    assert "learing_rate" in capsys.readouterr().err


def test_missing_manifest_dir_is_data_error(tmp_path, capsys):
    code = cli.run(["train", "--model", "textcnn", "--data",
                    str(tmp_path / "nowhere"), "--out", str(tmp_path / "m.ckpt")])
    assert code == 2
    assert "train.jsonl" in capsys.readouterr().err


def test_corrupt_checkpoint_is_data_error(tmp_path, corpus_dir, capsys):
    bad = tmp_path / "zero.ckpt"
    bad.write_bytes(b"\x00" * 64)
    code = cli.run(["eval", "--checkpoint", str(bad), "--data", str(corpus_dir)])
    assert code == 2
    assert "not a checkpoint" in capsys.readouterr().err


@pytest.fixture(scope="module")
def speech_ckpt(corpus_dir, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("clispeech")
    cfg = out_dir / "run.cfg"
    cfg.write_text("max_epochs = 1\nbatch_size = 8\n")
    path = out_dir / "crnn.ckpt"
    code = cli.run(["train", "--model", "crnn", "--data", str(corpus_dir),
                    "--config", str(cfg), "--out", str(path), "--seed", "2"])
    assert code == 0
    return path


def test_predict_from_wav(speech_ckpt, corpus_dir, capsys):
    wav = sorted((corpus_dir / "wav").glob("*.wav"))[0]
    code = cli.run(["predict", "--checkpoint", str(speech_ckpt), "--wav", str(wav)])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert 0.0 <= payload["p_pilot"] <= 1.0


def test_predict_without_required_wav_flag(speech_ckpt, capsys):
    assert cli.run(["predict", "--checkpoint", str(speech_ckpt),
                    "--text", "spring five five climb"]) == 1
    assert "--wav" in capsys.readouterr().err


def test_wrong_sample_rate_wav_is_data_error(speech_ckpt, corpus_dir, tmp_path, capsys):
    wav = next((corpus_dir / "wav").glob("*.wav"))
    blob = bytearray(wav.read_bytes())
    blob[24:28] = (16000).to_bytes(4, "little")  # fmt chunk sample-rate field
    bad = tmp_path / "fast.wav"
    bad.write_bytes(bytes(blob))
    code = cli.run(["predict", "--checkpoint", str(speech_ckpt), "--wav", str(bad)])
    assert code == 2
    assert "16000" in capsys.readouterr().err
