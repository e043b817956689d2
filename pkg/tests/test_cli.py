import os

import numpy as np
import pytest

from selfrank.cli import main
from selfrank.config import ConfigError, ExperimentConfig
from selfrank.io import read_csv, read_manifest, write_csv

TINY = """\
image_size = 16
density_sigma = 1.5
n_labeled = 6
n_unlabeled = 10
n_test = 6
steps = 20
log_every = 5
"""


def cfg_file(tmp_path, text=TINY, name="c.txt"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def tree(root):
    out = {}
    for d, _, files in os.walk(root):
        for f in files:
            p = os.path.join(d, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


def test_gen_counting_manifest_counts(tmp_path, capsys):
    cfg = cfg_file(tmp_path, TINY.replace("n_unlabeled = 10", "n_unlabeled = 100"))
    assert main(["gen", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "ds")]) == 0
    groups = read_manifest(tmp_path / "ds" / "manifest.csv")
    assert len(groups) == 100 and all(len(m) == 5 for m in groups.values())
    assert "groups=100 pairs=1000" in capsys.readouterr().out


def test_gen_quality_groups(tmp_path, capsys):
    text = TINY.replace("n_unlabeled = 10", "n_unlabeled = 10") + (
        "task = quality\narch = conv:4,relu,gap,dense:1\ngroups_per_image = 4\n"
        "kinds = blur,awgn,jpeg,quantization\n")
    assert main(["gen", "--config", cfg_file(tmp_path, text), "--out", str(tmp_path / "q")]) == 0
    groups = read_manifest(tmp_path / "q" / "manifest.csv")
    assert len(groups) == 40 and all(len(m) == 5 for m in groups.values())
    assert "pairs=400" in capsys.readouterr().out


def test_gen_is_byte_identical(tmp_path):
    cfg = cfg_file(tmp_path)
    for name in ("a", "b"):
        assert main(["gen", "--config", cfg, "--seed", "9", "--out", str(tmp_path / name)]) == 0
    assert tree(tmp_path / "a") == tree(tmp_path / "b")
    saved = ExperimentConfig.load(tmp_path / "a" / "config.txt")
    assert saved.seed == 9 and saved.image_size == 16


def test_train_and_eval_round_trip(tmp_path):
    cfg = cfg_file(tmp_path)
    ds, tr = str(tmp_path / "ds"), str(tmp_path / "tr")
    assert main(["gen", "--config", cfg, "--out", ds]) == 0
    assert main(["train", "--config", cfg, "--arm", "multitask", "--data", ds, "--out", tr]) == 0
    loss = read_csv(os.path.join(tr, "loss.csv"))
    assert len(loss) == 20
    assert list(loss[0]) == ["step", "L_reg", "L_rank", "L", "active_pair_count"]
    assert all(np.isfinite(float(r["L"])) for r in loss)
    outs = []
    for name in ("e1", "e2"):
        assert main(["eval", "--config", cfg, "--data", ds, "--checkpoint", os.path.join(tr, "model.rpk"),
                     "--out", str(tmp_path / name)]) == 0
        outs.append((tmp_path / name / "metrics.csv").read_bytes())
    assert outs[0] == outs[1]
    test_row = [r for r in read_csv(os.path.join(tr, "metrics.csv")) if r["split"] == "test"][0]
    assert read_csv(tmp_path / "e1" / "metrics.csv")[0]["MAE"] == test_row["MAE"]


def test_lambda_zero_matches_baseline_bitwise(tmp_path):
    base = cfg_file(tmp_path, TINY, "a.txt")
    zero = cfg_file(tmp_path, TINY + "lam = 0\n", "b.txt")
    assert main(["train", "--config", base, "--arm", "baseline", "--out", str(tmp_path / "b")]) == 0
    assert main(["train", "--config", zero, "--arm", "multitask", "--out", str(tmp_path / "m")]) == 0
    assert (tmp_path / "b" / "model.rpk").read_bytes() == (tmp_path / "m" / "model.rpk").read_bytes()


def test_train_is_reproducible(tmp_path):
    cfg = cfg_file(tmp_path)
    for name in ("r1", "r2"):
        assert main(["train", "--config", cfg, "--seed", "4", "--out", str(tmp_path / name)]) == 0
    assert tree(tmp_path / "r1") == tree(tmp_path / "r2")


def test_oracle_predictions(tmp_path):
    cfg = cfg_file(tmp_path)
    ds = str(tmp_path / "ds")
    assert main(["gen", "--config", cfg, "--out", ds]) == 0
    truth = [r for r in read_csv(os.path.join(ds, "splits.csv")) if r["split"] == "test"]
    write_csv(tmp_path / "p.csv", ("index", "prediction"), [(r["index"], r["target"]) for r in truth])
    assert main(["eval", "--config", cfg, "--data", ds, "--predictions", str(tmp_path / "p.csv"),
                 "--out", str(tmp_path / "ev")]) == 0
    row = read_csv(tmp_path / "ev" / "metrics.csv")[0]
    assert float(row["MAE"]) == 0 and float(row["SROCC"]) == 1


def test_active_command(tmp_path):
    cfg = cfg_file(tmp_path, TINY + "al_steps = 3\nal_k = 10\n")
    assert main(["active", "--config", cfg, "--out", str(tmp_path / "al")]) == 0
    rows = read_csv(tmp_path / "al" / "cycles.csv")
    assert list(rows[0]) == ["cycle", "labeled_fraction", "policy", "MAE", "MSE", "LCC", "SROCC", "mean_certainty"]
    assert [r["policy"] for r in rows] == ["certainty"] * 10 + ["random"] * 10
    assert [float(r["labeled_fraction"]) for r in rows[:10]] == pytest.approx([i / 10 for i in range(1, 11)])


@pytest.mark.parametrize("text", ["bogus = 1\n", "steps = many\n", "task = chess\n", "lr = -1\n"])
def test_config_errors_exit_2(tmp_path, text):
    assert main(["train", "--config", cfg_file(tmp_path, TINY + text), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_usage_errors_exit_2(tmp_path):
    assert main(["train", "--arm", "nonsense", "--out", str(tmp_path)]) == 2
    assert main(["train", "--config", str(tmp_path / "missing.txt"), "--out", str(tmp_path / "o")]) == 2


def test_data_errors_exit_3(tmp_path):
    cfg = cfg_file(tmp_path)
    assert main(["train", "--config", cfg, "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "o")]) == 3
    assert main(["active", "--config", cfg_file(tmp_path, TINY + "al_initial = 0.5\nal_step = 0.5\n", "x.txt"),
                 "--out", str(tmp_path / "o")]) == 3


def test_divergence_exits_4_and_leaves_no_output(tmp_path):
    cfg = cfg_file(tmp_path, TINY + "lr = 1e6\nmomentum = 0\n")
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 4
    assert not (tmp_path / "o").exists()
    assert [p.name for p in tmp_path.iterdir()] == ["c.txt"]


def test_config_text_round_trip():
    cfg = ExperimentConfig(seed=5, lam=0.5, al_warm_start=False)
    assert ExperimentConfig.from_text(cfg.to_text()) == cfg
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("no equals sign")
