import os

import pandas as pd
import pytest

from marlcpc import cli
from marlcpc.__version__ import __version__
from marlcpc.train import FINAL_CHECKPOINT


def train_run(tmp_path, condition):
    out = str(tmp_path / condition)
    argv = ["-q", "train", "--env", "bandit", "--condition", condition]
    assert cli.main(argv + ["--budget", "0", "--seed", "1", "--out", out]) == 0
    return os.path.join(out, FINAL_CHECKPOINT)


def test_version(capsys):
    with pytest.raises(SystemExit) as exit:
        cli.main(["--version"])
    assert exit.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_train_requires_a_source():
    with pytest.raises(SystemExit) as exit:
        cli.main(["train", "--condition", "cpc"])
    assert exit.value.code == 2


def test_train_validation_errors(tmp_path):
    out = str(tmp_path / "run")
    argv = ["-q", "train", "--env", "bandit", "--condition", "telepathy"]
    assert cli.main(argv + ["--out", out]) == cli.EXIT_VALIDATION
    assert cli.main(["-q", "train", "--env", "maze"]) == cli.EXIT_VALIDATION

    config = tmp_path / "bad.ini"
    config.write_text("[run]\nenv = bandit\ncolour = blue\n")
    assert cli.main(["-q", "train", "--config", str(config)]) == cli.EXIT_VALIDATION


def test_train_and_eval(tmp_path, capsys):
    checkpoint = train_run(tmp_path, "cpc")
    assert os.path.isfile(checkpoint)
    argv = ["eval", "--checkpoint", checkpoint, "--episodes", "50"]
    assert cli.main(argv) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "welfare:" in out
    assert "message given state:" in out


def test_ablate(tmp_path):
    checkpoint = train_run(tmp_path, "message")
    report = str(tmp_path / "ablation.csv")
    argv = ["ablate", "--checkpoint", checkpoint, "--trials", "40", "--out", report]
    assert cli.main(argv) == cli.EXIT_OK
    frame = pd.read_csv(report)
    assert list(frame.columns) == cli.ABLATION_COLUMNS
    assert frame["mode"].tolist() == ["none", "random", "zero"]
    assert (frame["ci_lo"] <= frame["ci_hi"]).all()


def test_ablate_silent_checkpoint(tmp_path):
    checkpoint = train_run(tmp_path, "no-comm")
    argv = ["ablate", "--checkpoint", checkpoint, "--trials", "10"]
    assert cli.main(argv) == cli.EXIT_VALIDATION
    missing = str(tmp_path / "missing.ckpt")
    assert cli.main(["eval", "--checkpoint", missing]) == cli.EXIT_VALIDATION


def test_train_preset_beneath_config(tmp_path, monkeypatch):
    runs = list()

    def fake_train(config, output_dir, quiet=False):
        runs.append(config)
        return str(tmp_path)

    monkeypatch.setattr(cli, "trainRun", fake_train)
    config = tmp_path / "run.ini"
    config.write_text("[run]\nenv = observer\n\n[trainer]\nbudget = 4096\n")
    argv = ["-q", "train", "--config", str(config), "--preset", "observer-desk"]
    assert cli.main(argv + ["--seed", "2"]) == cli.EXIT_OK
    assert runs[-1].trainer.budget == 4096
    assert runs[-1].seed == 2

    argv = ["-q", "train", "--env", "bandit", "--preset", "bandit-coop"]
    assert cli.main(argv + ["--budget", "64"]) == cli.EXIT_OK
    assert runs[-1].env == "bandit"
    assert runs[-1].trainer.budget == 64


def test_train_config_line_diagnostics(tmp_path, caplog):
    config = tmp_path / "bad.ini"
    config.write_text("[run]\nenv = bandit\nseed = two\n")
    assert cli.main(["-q", "train", "--config", str(config)]) == cli.EXIT_VALIDATION
    assert "(line 3)" in caplog.text
    assert "seed" in caplog.text

    config.write_text("[run]\nenv = bandit\n\n[cpc]\nK = 5\nsymbols = 3\n")
    assert cli.main(["-q", "train", "--config", str(config)]) == cli.EXIT_VALIDATION
    assert "(line 6)" in caplog.text


def test_train_runtime_failure(tmp_path, monkeypatch):
    def broken_train(config, output_dir, quiet=False):
        raise RuntimeError("disk full")

    monkeypatch.setattr(cli, "trainRun", broken_train)
    argv = ["-q", "train", "--env", "bandit", "--out", str(tmp_path / "run")]
    assert cli.main(argv) == cli.EXIT_RUNTIME
