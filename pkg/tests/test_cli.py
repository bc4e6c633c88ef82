import json
import os
import subprocess
import sys

import pytest

from casrel.cli import run
from casrel.model import CasRelModel

SUBCOMMANDS = ["train", "extract", "eval", "stats", "synth"]


@pytest.fixture
def corpus(tmp_path):
    path = tmp_path / "syn.jsonl"
    assert run(["synth", "--output", str(path), "--n", "24", "--seed", "3"]) == 0
    return path


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_exits_zero_and_lists_flags(cmd, capsys):
    assert run([cmd, "--help"]) == 0
    out = capsys.readouterr().out
    assert "--config" in out
    for flag in {"train": ["--seed", "--encoder", "--threshold"], "extract": ["--model", "--threshold"],
                 "eval": ["--mode", "--gold"], "stats": ["--input"], "synth": ["--seed", "--mix"]}[cmd]:
        assert flag in out


def test_usage_errors_exit_two(tmp_path):
    assert run([]) == 2
    assert run(["frobnicate"]) == 2
    assert run(["synth", "--output", str(tmp_path / "x.jsonl")]) == 2  # no seed
    assert run(["eval", "--pred", str(tmp_path / "missing.jsonl"), "--gold", str(tmp_path / "missing.jsonl")]) == 2
    assert run(["synth", "--output", str(tmp_path / "x.jsonl"), "--seed", "1", "--mix", "0.5", "0.5", "0.5"]) == 2


def test_bad_config_file_exits_two(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    assert run(["synth", "--config", str(cfg), "--output", str(tmp_path / "o.jsonl"), "--seed", "1"]) == 2
    cfg.write_text(json.dumps({"encoder": "bilstm"}))
    assert run(["train", "--config", str(cfg), "--input", str(cfg), "--output", str(tmp_path), "--seed", "1"]) == 2


def test_runtime_error_exits_one(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{oops\n")
    assert run(["stats", "--input", str(bad)]) == 1


def test_synth_is_deterministic(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for p in (a, b):
        assert run(["synth", "--seed", "7", "--n", "200", "--output", str(p), "--relations-out", str(p) + ".rel"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 200


def test_eval_of_gold_against_itself(corpus, tmp_path, capsys):
    out = tmp_path / "report.json"
    assert run(["eval", "--pred", str(corpus), "--gold", str(corpus), "--mode", "exact", "--output", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["overall"]["precision"] == rep["overall"]["recall"] == rep["overall"]["f1"] == 1.0
    assert (tmp_path / "report.txt").exists()
    assert "overall" in capsys.readouterr().out


def test_stats_command(corpus, tmp_path, capsys):
    out = tmp_path / "stats.json"
    assert run(["stats", "--input", str(corpus), "--output", str(out)]) == 0
    st = json.loads(out.read_text())[str(corpus)]
    assert st["ALL"] == 24 and st["Normal"] + st["EPO"] + st["SEO"] >= 24
    assert "Normal" in capsys.readouterr().out


def _train_args(corpus, out, *extra):
    return ["train", "--input", str(corpus), "--val", str(corpus), "--output", str(out), "--hidden-size", "8",
            "--layers", "1", "--heads", "2", "--epochs", "2", "--seed", "5", *extra]


@pytest.mark.parametrize("encoder", ["transformer", "bilstm"])
def test_train_then_extract_then_eval(corpus, tmp_path, encoder):
    out = tmp_path / "run"
    assert run(_train_args(corpus, out, "--encoder", encoder)) == 0
    for name in ("model.ckpt", "vocab.txt", "relations.json", "history.json", "train_log.jsonl"):
        assert (out / name).exists(), name
    model = CasRelModel.load(out / "model.ckpt")
    assert model.config.kind == encoder and model.config.hidden_size == 8
    assert len(json.loads((out / "history.json").read_text())["epochs"]) == 2

    pred = tmp_path / "pred.jsonl"
    assert run(["extract", "--model", str(out), "--input", str(corpus), "--output", str(pred)]) == 0
    assert len(pred.read_text().splitlines()) == 24
    assert run(["eval", "--pred", str(pred), "--gold", str(corpus)]) == 0


def test_train_is_reproducible(corpus, tmp_path):
    for name in ("a", "b"):
        assert run(_train_args(corpus, tmp_path / name)) == 0
    assert (tmp_path / "a" / "model.ckpt").read_bytes() == (tmp_path / "b" / "model.ckpt").read_bytes()
    assert (tmp_path / "a" / "history.json").read_text() == (tmp_path / "b" / "history.json").read_text()


def test_train_requires_seed(corpus, tmp_path):
    args = [a for a in _train_args(corpus, tmp_path / "x") if a not in ("--seed", "5")]
    assert run(args) == 2


def test_config_file_with_flags_winning(corpus, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({
        "train": str(corpus), "output": str(tmp_path / "cfg_run"), "seed": 1,
        "encoder": {"kind": "bilstm", "hidden_size": 6, "num_layers": 1, "num_heads": 2},
        "training": {"max_epochs": 1, "batch_size": 4},
    }))
    assert run(["train", "--config", str(cfg), "--hidden-size", "10", "--heads", "1"]) == 0
    model = CasRelModel.load(tmp_path / "cfg_run" / "model.ckpt")
    assert model.config.kind == "bilstm"
    assert model.config.hidden_size == 10 and model.config.num_heads == 1 and model.config.num_layers == 1


def test_unknown_config_setting_is_a_usage_error(corpus, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"training": {"epochz": 3}}))
    assert run(["train", "--config", str(cfg), "--input", str(corpus), "--output", str(tmp_path / "o"), "--seed", "1"]) == 2


def test_console_script_entry_point(tmp_path):
    env = dict(os.environ)
    out = subprocess.run([sys.executable, "-m", "casrel.cli", "synth", "--seed", "1", "--n", "3",
                          "--output", str(tmp_path / "s.jsonl")], capture_output=True, text=True, env=env)
    assert out.returncode == 0, out.stderr
    bad = subprocess.run([sys.executable, "-m", "casrel.cli", "nope"], capture_output=True, text=True, env=env)
    assert bad.returncode == 2 and "usage" in bad.stderr
