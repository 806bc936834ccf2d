import json
import subprocess
import sys

import pytest

from muonlab.cli import main


def write_cfg(tmp_path, **overrides):
    data = dict(task="char_lm", d_model=8, n_blocks=1, seq_len=8, batch_size=4, corpus_chars=4000,
                eval_batches=2, steps=4, eval_every=2)
    data.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return path


def test_train_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["train", "--config", str(cfg), "--seed", "5", "--out", str(tmp_path / "run")]) == 0
    assert "status=ok" in capsys.readouterr().out
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert summary["config"]["seed"] == 5


def test_train_divergence_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, task="synthetic_regression", optimizer="adamw", lr=100.0, steps=50, eval_every=0)
    assert main(["train", "--config", str(cfg)]) == 2


def test_sweep_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path, steps=2, eval_every=0)
    code = main(["sweep", "--config", str(cfg), "--lrs", "0.01,0.02", "--dirs", "none,row", "--seeds", "1",
                 "--out", str(tmp_path / "sw")])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("lr,none,row") and "best[row]=" in out
    assert (tmp_path / "sw" / "sweep_long.csv").exists()


def test_polar_bench_command(tmp_path, capsys):
    assert main(["polar-bench", "--shapes", "8x8", "--iters", "1..3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("shape,method") and len(lines) == 1 + 1 + 3 * 3
    assert main(["polar-bench", "--shapes", "8x8", "--iters", "5", "--out", str(tmp_path / "b.csv")]) == 0
    assert len((tmp_path / "b.csv").read_text().splitlines()) == 5


def test_grad_check_command(capsys):
    assert main(["grad-check", "--model", "mlp"]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["grad-check", "--model", "mlp", "--tol", "1e-14"]) == 2


@pytest.mark.parametrize(
    "argv,code",
    [
        (["train", "--config", "/nonexistent/cfg.json"], 3),
        (["sweep", "--lrs", "abc"], 1),
        (["sweep", "--dirs", "diag", "--lrs", "0.1", "--seeds", "1"], 1),
        (["polar-bench", "--shapes", "8by8"], 1),
        (["frobnicate"], 1),
        (["grad-check", "--model", "cnn"], 1),
    ],
)
def test_exit_codes(argv, code, capsys):
    try:
        result = main(argv)
    except SystemExit as exc:  # argparse usage errors
        result = exc.code
    assert result == code


def test_bad_config_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"unknown_key": 1}')
    assert main(["train", "--config", str(path)]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "muonlab", "grad-check", "--model", "mlp"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0 and "PASS" in proc.stdout
