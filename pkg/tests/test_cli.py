import subprocess
import sys

import numpy as np
import pytest

from squim.checkpoint import load_checkpoint
from squim.cli import main
from squim.model import ModelConfig, init_params
from squim.signal import Waveform, save_wav


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "ds"
    assert main(["synth", "--n", "4", "--seed", "7", "--out-dir", str(d), "--workers", "1"]) == 0
    return d


@pytest.fixture(scope="module")
def init_ckpt(tmp_path_factory):
    p = tmp_path_factory.mktemp("ck") / "init.sqm"
    assert main(["train", "--preset", "desk", "--epochs", "0", "--out", str(p)]) == 0
    return p


def test_synth_writes_pairs_and_labels(data_dir):
    wavs = sorted(x.name for x in data_dir.glob("*.wav"))
    assert len(wavs) == 8 and "s7_00000_clean.wav" in wavs
    lines = (data_dir / "labels.tsv").read_text().splitlines()
    assert lines[0] == "id\tstoi\tsi_sdr\tsnr_db" and len(lines) == 5
    assert (data_dir / "manifest.json").exists()


def test_synth_is_reproducible(tmp_path, data_dir, capsys):
    code, out, err = run(capsys, "synth", "--n", "4", "--seed", "7", "--out-dir", tmp_path / "again")
    assert code == 0 and err.startswith("# config ")
    assert (tmp_path / "again" / "labels.tsv").read_bytes() == (data_dir / "labels.tsv").read_bytes()
    assert len(out.splitlines()) == 5


def test_seed_from_environment(tmp_path, data_dir, monkeypatch, capsys):
    monkeypatch.setenv("SQUIM_SEED", "7")
    assert run(capsys, "synth", "--n", "4", "--out-dir", tmp_path / "env")[0] == 0
    assert (tmp_path / "env" / "labels.tsv").read_bytes() == (data_dir / "labels.tsv").read_bytes()


def test_synth_rejects_inverted_snr_range(tmp_path, capsys):
    code, _, err = run(capsys, "synth", "--n", "2", "--snr-lo", "10", "--snr-hi", "0", "--out-dir", tmp_path)
    assert code == 2 and "snr" in err


def test_unknown_flag_is_usage_error(capsys):
    assert run(capsys, "oracle", "--est", "a", "--ref", "b", "--bogus")[0] == 2


def test_oracle_identity(data_dir, capsys):
    ref = data_dir / "s7_00000_clean.wav"
    code, out, _ = run(capsys, "oracle", "--est", ref, "--ref", ref, "--metric", "sisdr")
    assert code == 0 and out == "si_sdr\t60.000000\n"
    code, out, _ = run(capsys, "oracle", "--est", ref, "--ref", ref, "--metric", "all")
    vals = dict(line.split("\t") for line in out.splitlines())
    assert set(vals) == {"stoi", "si_sdr"} and float(vals["stoi"]) >= 0.99
    assert all(len(v.split(".")[1]) == 6 for v in vals.values())


def test_oracle_mismatch_exit_code(tmp_path, data_dir, capsys):
    save_wav(Waveform(np.ones(100) * 0.1), tmp_path / "short.wav")
    code, _, err = run(capsys, "oracle", "--est", tmp_path / "short.wav", "--ref", data_dir / "s7_00000_clean.wav")
    assert code == 2 and "error" in err
    save_wav(Waveform(np.ones(16000) * 0.1, 8000), tmp_path / "rate.wav")
    code, _, _ = run(capsys, "oracle", "--est", tmp_path / "rate.wav", "--ref", data_dir / "s7_00000_clean.wav")
    assert code == 2


def test_train_zero_epochs_equals_init(init_ckpt):
    ck = load_checkpoint(init_ckpt)
    ref = init_params(ModelConfig.desk(), 0)
    assert ck.config == ModelConfig.desk()
    assert all(np.array_equal(ck.params[n].data, ref[n].data) for n in ref)


def test_train_one_epoch_with_config(tmp_path, data_dir, capsys):
    (tmp_path / "c.cfg").write_text("N = 8\nP = 128\nR = 22\nh = 2\nd = 8\nd1 = 16\nnum_dprnn_blocks = 2\n"
                                    "epochs = 1\nbatch = 2\nw2 = 0\n")
    code, out, err = run(capsys, "train", "--config", tmp_path / "c.cfg", "--data", data_dir,
                         "--out", tmp_path / "t.sqm", "--log", tmp_path / "t.log", "--seed", "3")
    assert code == 0 and '"seed": 3' in err
    assert out.splitlines()[0].startswith("epoch\tstep") and len(out.splitlines()) == 2
    assert len((tmp_path / "t.log").read_text().splitlines()) == 1
    assert load_checkpoint(tmp_path / "t.sqm").params.step == 2


def test_malformed_config_exit_code(tmp_path, capsys):
    (tmp_path / "bad.cfg").write_text("N == = 3\nnot a line\n")
    assert run(capsys, "train", "--config", tmp_path / "bad.cfg", "--out", tmp_path / "x")[0] == 4
    (tmp_path / "bad2.cfg").write_text("P = 3\n")
    assert run(capsys, "train", "--config", tmp_path / "bad2.cfg", "--out", tmp_path / "x")[0] == 4


def test_missing_checkpoint_exit_code(tmp_path, data_dir, capsys):
    wav = data_dir / "s7_00000_degraded.wav"
    assert run(capsys, "estimate", "--checkpoint", tmp_path / "none.sqm", wav)[0] == 3
    assert run(capsys, "eval", "--checkpoint", tmp_path / "none.sqm", "--data", data_dir)[0] == 3
    (tmp_path / "junk.sqm").write_bytes(b"junk")
    assert run(capsys, "scatter", "--checkpoint", tmp_path / "junk.sqm", "--data", data_dir,
               "--out", tmp_path / "s.tsv")[0] == 3


def test_estimate_ranges(init_ckpt, data_dir, capsys):
    wavs = sorted(data_dir.glob("*_degraded.wav"))
    code, out, _ = run(capsys, "estimate", "--checkpoint", init_ckpt, *wavs)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "path\tstoi\tpesq\tsi_sdr" and len(lines) == 5
    for line in lines[1:]:
        s, q, d = map(float, line.split("\t")[1:])
        assert 0 < s < 1 and 1 < q < 4.64 and np.isfinite(d)


def test_eval_fresh_model(tmp_path, init_ckpt, data_dir, capsys):
    code, out, _ = run(capsys, "eval", "--checkpoint", init_ckpt, "--data", data_dir, "--json", tmp_path / "r.json")
    rows = {r.split("\t")[0]: r.split("\t")[1:] for r in out.splitlines()[1:]}
    assert code == 0 and rows["pesq"] == ["NA", "NA", "NA", "0"]
    assert all(np.isfinite(float(v)) for v in rows["stoi"] + rows["si_sdr"])
    assert (tmp_path / "r.json").exists()


def test_eval_with_pesq_labels(tmp_path, init_ckpt, data_dir, capsys):
    ids = [line.split("\t")[0] for line in (data_dir / "labels.tsv").read_text().splitlines()[1:]]
    (tmp_path / "p.tsv").write_text("id\tpesq\n" + "".join(f"{i}\t{1.5 + k * 0.7}\n" for k, i in enumerate(ids)))
    code, out, _ = run(capsys, "eval", "--checkpoint", init_ckpt, "--data", data_dir, "--pesq-labels", tmp_path / "p.tsv")
    assert code == 0 and out.splitlines()[2].split("\t")[4] == "4"


def test_scatter_export(tmp_path, init_ckpt, data_dir, capsys):
    code, out, _ = run(capsys, "scatter", "--checkpoint", init_ckpt, "--data", data_dir, "--out", tmp_path / "s.tsv")
    assert code == 0 and out == "rows\t8\n"
    assert len((tmp_path / "s.tsv").read_text().splitlines()) == 9


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "squim", "oracle"], capture_output=True, text=True)
    assert r.returncode == 2 and "usage" in r.stderr
