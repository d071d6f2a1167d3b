import json

import numpy as np
import pytest

from dynmask.attention import ToyModel
from dynmask.cli import main
from dynmask.core import validate_config
from dynmask.io import load_checkpoint, read_matrix_csv, rng_for, write_matrix_csv
from dynmask.tokenizer import SynthSpec, synth_motion

from oracles import maskgit_decode


def _files(tmp_path, T=24, D=3, V=6, seed=0):
    rng = np.random.default_rng(seed)
    motion = tmp_path / "motion.csv"
    write_matrix_csv(motion, np.cumsum(rng.standard_normal((T, D)), axis=0))
    cond = tmp_path / "cond.csv"
    write_matrix_csv(cond, rng.standard_normal((1, D)))
    cb = tmp_path / "codebook.csv"
    write_matrix_csv(cb, rng.standard_normal((V, D)) * 3)
    return motion, cond, cb


def _csv_rows(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), [line.split(",") for line in lines[1:]]


def test_analyze_static_synth_is_zero(tmp_path):
    assert main(["analyze", "--synth", "static:20", "--out", str(tmp_path)]) == 0
    header, rows = _csv_rows(tmp_path / "msd.csv")
    assert header[:3] == ["t", "omega", "phi_0"] and len(header) == 2 + 8
    assert len(rows) == 20 and all(float(r[1]) == 0.0 for r in rows)
    assert (tmp_path / "manifest.json").exists()


def test_analyze_noise_above_static(tmp_path):
    assert main(["analyze", "--synth", "static:32,noise:32", "--similarity", "--out", str(tmp_path)]) == 0
    _, rows = _csv_rows(tmp_path / "msd.csv")
    omega = np.array([float(r[1]) for r in rows])
    assert omega[40:].mean() > omega[:28].mean()
    S = read_matrix_csv(tmp_path / "similarity.csv")
    assert S.shape == (64, 64)


def test_analyze_missing_file_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert main(["analyze", "--input", str(missing), "--out", str(tmp_path / "o")]) == 3
    assert str(missing) in capsys.readouterr().err


def test_analyze_corrupt_row_names_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,4\n5,x\n")
    assert main(["analyze", "--input", str(bad), "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert f"{bad}:3" in err


def test_config_errors_exit_2(tmp_path):
    motion, cond, cb = _files(tmp_path)
    assert main(["analyze", "--input", str(motion), "--window", "3", "--out", str(tmp_path / "a")]) == 2
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("bogus = 1\n")
    assert main(["analyze", "--input", str(motion), "--config", str(cfg), "--out", str(tmp_path / "b")]) == 2
    args = ["maskplan", "--input", str(motion), "--condition", str(cond), "--codebook", str(cb)]
    assert main(args + ["--out", str(tmp_path / "c")]) == 2
    assert main(args + ["--K", "3", "--r", "0.5", "--out", str(tmp_path / "d")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_config_file_is_applied(tmp_path):
    motion, _, _ = _files(tmp_path)
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("# window override\nW = 4\n")
    assert main(["analyze", "--input", str(motion), "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    header, _ = _csv_rows(tmp_path / "o" / "msd.csv")
    assert len(header) == 2 + 4
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config"]["W"] == 4


def test_maskplan_dim_mismatch(tmp_path):
    motion, _, cb = _files(tmp_path)
    cond = tmp_path / "cond5.csv"
    write_matrix_csv(cond, np.ones((1, 5)))
    assert main(["maskplan", "--input", str(motion), "--condition", str(cond), "--codebook", str(cb),
                 "--K", "4", "--out", str(tmp_path / "o")]) == 2


def test_maskplan_counts(tmp_path, capsys):
    motion, cond, cb = _files(tmp_path)
    base = ["maskplan", "--input", str(motion), "--condition", str(cond), "--codebook", str(cb)]
    assert main(base + ["--r", "1", "--out", str(tmp_path / "r1")]) == 0
    _, rows = _csv_rows(tmp_path / "r1" / "maskplan.csv")
    assert sum(int(r[1]) for r in rows) == 0
    assert main(base + ["--K", "24", "--out", str(tmp_path / "all")]) == 0
    header, rows = _csv_rows(tmp_path / "all" / "maskplan.csv")
    assert header == ["t", "selected", "provenance", "s_dyn", "s_sem"]
    assert all(r[1] == "1" for r in rows)
    assert main(base + ["--K", "7", "--out", str(tmp_path / "k7")]) == 0
    out = capsys.readouterr().out.split()
    assert out == ["0", "24", "7"]


def test_maskplan_byte_identical(tmp_path):
    motion, cond, cb = _files(tmp_path)
    base = ["maskplan", "--input", str(motion), "--condition", str(cond), "--codebook", str(cb), "--r", "0.4"]
    assert main(base + ["--out", str(tmp_path / "a")]) == 0
    assert main(base + ["--out", str(tmp_path / "b")]) == 0
    for name in ("maskplan.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert motion.read_bytes() == (tmp_path / "motion.csv").read_bytes()


TRAIN_FLAGS = ["--epochs", "3", "--dim", "8", "--layers", "1", "--n-seq", "3"]


def test_train_writes_curve_and_checkpoint(tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--synth", "static:6,sine@2:6,noise:6", *TRAIN_FLAGS, "--out", str(out)]) == 0
    header, rows = _csv_rows(out / "loss.csv")
    assert header == ["epoch", "mean_loss"] and len(rows) == 3
    model, cb = load_checkpoint(out / "checkpoint")
    assert model.V == 16 and model.dim == 8 and cb.V == 16


@pytest.mark.slow
def test_train_default_recipe_reduces_loss(tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--out", str(out)]) == 0
    _, rows = _csv_rows(out / "loss.csv")
    loss = [float(r[1]) for r in rows]
    assert len(loss) == 30 and loss[-1] < loss[0]
    assert any(b < a for a, b in zip(loss, loss[1:]))


def test_train_zero_epochs_is_init(tmp_path):
    out = tmp_path / "run"
    assert main(["train", *TRAIN_FLAGS, "--epochs", "0", "--seed", "5", "--out", str(out)]) == 0
    model, cb = load_checkpoint(out / "checkpoint")
    cfg = validate_config({"epochs": 0, "dim": 8, "layers": 1, "seed": 5})
    init = ToyModel.init(cb.V, cb.D, cfg, rng_for(5, "init"))
    for k in init.params:
        assert np.array_equal(init.params[k], model.params[k]), k


def test_train_corpus_dir(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for i in range(3):
        seq, _ = synth_motion(SynthSpec("sine", 16, D_m=3, seed=i))
        write_matrix_csv(corpus / f"seq{i}.csv", seq.frames)
    assert main(["train", "--corpus", str(corpus), "--vocab", "5", *TRAIN_FLAGS,
                 "--out", str(tmp_path / "a")]) == 0
    (corpus / "seq1.csv").write_text("1,2,3\n4,oops,6\n")
    assert main(["train", "--corpus", str(corpus), *TRAIN_FLAGS, "--out", str(tmp_path / "b")]) == 3
    assert f"{corpus / 'seq1.csv'}:2" in capsys.readouterr().err
    assert main(["train", "--corpus", str(tmp_path / "missing"), "--out", str(tmp_path / "c")]) == 3


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt")
    assert main(["train", "--synth", "static:8,sine@2:8,noise:8", "--epochs", "2", "--dim", "8",
                 "--n-seq", "2", "--out", str(out)]) == 0
    cond = out / "cond.csv"
    write_matrix_csv(cond, np.random.default_rng(0).standard_normal((1, 4)))
    return out / "checkpoint", cond


def test_generate_outputs(tmp_path, checkpoint):
    ckpt, cond = checkpoint
    args = ["generate", "--checkpoint", str(ckpt), "--condition", str(cond), "--length", "49"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    trace = (tmp_path / "a" / "trace.jsonl").read_text().splitlines()
    assert len(trace) == 10
    frozen = sorted(p for line in trace for p in json.loads(line)["frozen_positions"])
    assert frozen == list(range(49))
    header, rows = _csv_rows(tmp_path / "a" / "tokens.csv")
    assert header == ["t", "token"] and all(1 <= float(r[1]) <= 16 for r in rows)
    assert read_matrix_csv(tmp_path / "a" / "embeddings.csv").shape == (49, 4)
    for name in ("tokens.csv", "embeddings.csv", "trace.jsonl", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_generate_zeroed_knobs_match_plain_decoding(tmp_path, checkpoint):
    ckpt, cond = checkpoint
    assert main(["generate", "--checkpoint", str(ckpt), "--condition", str(cond), "--length", "20",
                 "--alpha0", "0", "--beta", "0", "--sigma-max", "0", "--lambda-d", "0",
                 "--out", str(tmp_path)]) == 0
    model, _ = load_checkpoint(ckpt)
    from dynmask.core import TextCondition
    ref_tokens, _ = maskgit_decode(model, TextCondition(read_matrix_csv(cond)[0]), 20, 10, 1.0)
    _, rows = _csv_rows(tmp_path / "tokens.csv")
    assert [int(float(r[1])) for r in rows] == ref_tokens


def test_generate_errors(tmp_path, checkpoint):
    ckpt, cond = checkpoint
    assert main(["generate", "--checkpoint", str(tmp_path / "none"), "--condition", str(cond),
                 "--length", "5", "--out", str(tmp_path / "a")]) == 3
    assert main(["generate", "--checkpoint", str(ckpt), "--condition", str(cond),
                 "--length", "0", "--out", str(tmp_path / "b")]) == 2


def test_compare_signals(tmp_path, capsys):
    assert main(["compare-signals", "--n-seq", "3", "--out", str(tmp_path)]) == 0
    _, rows = _csv_rows(tmp_path / "compare_signals.csv")
    per_seq = {(r[0], r[1]) for r in rows if r[1] != "mean"}
    assert per_seq == {(s, str(i)) for s in ("omega", "velocity") for i in range(3)}
    means = {r[0]: float(r[2]) for r in rows if r[1] == "mean"}
    assert means["omega"] > 0
    assert "omega" in capsys.readouterr().out


def test_compare_signals_degenerate(tmp_path):
    assert main(["compare-signals", "--synth", "static:40", "--out", str(tmp_path)]) == 3
