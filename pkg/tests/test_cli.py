import json
import time

import numpy as np
import pytest

from confmil import cli, milnet, trainer
from confmil.errors import NumericError
from confmil.evalsuite.report import parse_attention


def run(*argv):
    return cli.main(list(argv))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("--no-timestamp", "gen", "--out", str(d / "data.jsonl"), "--stats", str(d / "stats.txt")) == 0
    assert run("--no-timestamp", "train", "--dataset", str(d / "data.jsonl"), "--train-size", "100",
               "--epochs", "2", "--model-out", str(d / "m.ckpt"), "--log-out", str(d / "log.csv")) == 0
    assert run("--no-timestamp", "eval", "--model", str(d / "m.ckpt"), "--dataset", str(d / "data.jsonl"),
               "--metrics-out", str(d / "metrics.txt"), "--attention-out", str(d / "att.csv")) == 0
    return d


def body(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]


def test_gen_outputs(workdir):
    lines = (workdir / "data.jsonl").read_text().splitlines()
    assert len(lines) == 1 + 1157
    head = json.loads(lines[0])
    assert head["tool"].startswith("confmil ") and head["seed"] == "7" and "gen" in head["command"]
    assert "timestamp" not in head
    stats = dict(ln.split("=") for ln in body(workdir / "stats.txt"))
    assert int(stats["n_positive"]) + int(stats["n_negative"]) == 1157


def test_gen_rerun_identical(workdir, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run("--no-timestamp", "gen", "--out", "again.jsonl", "--n", "1157", "--seed", "7") == 0
    first = (workdir / "data.jsonl").read_text().splitlines()[1:]
    assert (tmp_path / "again.jsonl").read_text().splitlines()[1:] == first


@pytest.mark.parametrize("argv", [
    ("gen", "--n", "0", "--out", "x.jsonl"),
    ("gen", "--out", "/nonexistent-dir/x.jsonl"),
    ("train", "--dataset", "nope.jsonl", "--model-out", "m", "--log-out", "l"),
    ("train", "--dataset", "nope.jsonl", "--batch", "17", "--model-out", "m", "--log-out", "l"),
    ("frobnicate",),
    (),
])
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(*argv) == 2


def test_train_outputs(workdir):
    rows = body(workdir / "log.csv")
    assert rows[0] == "epoch,train_loss,val_loss,val_auroc,best_flag" and len(rows) == 3
    params, info = milnet.load_model(workdir / "m.ckpt", with_info=True)
    assert info["split_seed"] == 0 and info["train_size"] == 100 and "command" in info
    assert (workdir / "log.csv").read_text().startswith("# tool=confmil")


def test_train_one_epoch_and_size_500(workdir, tmp_path):
    assert run("train", "--dataset", str(workdir / "data.jsonl"), "--train-size", "500", "--epochs", "1",
               "--model-out", str(tmp_path / "m"), "--log-out", str(tmp_path / "l.csv")) == 0
    assert len(body(tmp_path / "l.csv")) == 2


def test_train_numeric_failure_exit_code(workdir, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NumericError("loss is nan")

    monkeypatch.setattr(trainer, "train", boom)
    assert run("train", "--dataset", str(workdir / "data.jsonl"), "--model-out", str(tmp_path / "m"),
               "--log-out", str(tmp_path / "l")) == 3


def test_eval_outputs(workdir):
    metrics = dict(ln.split("=") for ln in body(workdir / "metrics.txt"))
    for key in ("accuracy", "auroc", "auprc", "n", "top1", "top5", "top10", "n_positive_bags"):
        assert key in metrics
    assert metrics["n"] == "457"
    rows = parse_attention((workdir / "att.csv").read_text())
    sums = {}
    for r in rows:
        sums[r.bag_id] = sums.get(r.bag_id, 0.0) + r.alpha
    assert len(sums) == 457
    assert all(abs(s - 1.0) < 1e-9 for s in sums.values())


def test_eval_train_split(workdir, tmp_path):
    assert run("eval", "--model", str(workdir / "m.ckpt"), "--dataset", str(workdir / "data.jsonl"),
               "--split", "train", "--metrics-out", str(tmp_path / "m.txt")) == 0
    assert "n=500" in body(tmp_path / "m.txt")


def test_eval_incompatible_checkpoint(workdir, tmp_path):
    data = bytearray((workdir / "m.ckpt").read_bytes())
    data[8:12] = (7).to_bytes(4, "little")
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(data))
    assert run("eval", "--model", str(bad), "--dataset", str(workdir / "data.jsonl"),
               "--metrics-out", str(tmp_path / "m.txt")) == 4


def test_baselines(workdir, tmp_path):
    rf = tmp_path / "rf.txt"
    assert run("baseline", "rf", "--dataset", str(workdir / "data.jsonl"), "--trees", "1",
               "--metrics-out", str(rf)) == 0
    assert {ln.split("=")[0] for ln in body(rf)} == {"accuracy", "auroc", "auprc", "n"}
    le = tmp_path / "le.txt"
    assert run("baseline", "lowest-energy", "--dataset", str(workdir / "data.jsonl"),
               "--metrics-out", str(le)) == 0
    assert {ln.split("=")[0] for ln in body(le)} == {"top1", "top5", "top10", "n_positive_bags"}
    assert any(ln.startswith("# timestamp=") for ln in le.read_text().splitlines())


def test_gradcheck_exit_codes(capsys):
    assert run("gradcheck", "--bags", "1") == 0
    assert "max relative error" in capsys.readouterr().out
    assert run("gradcheck", "--bags", "1", "--corrupt-grad") == 5


@pytest.mark.slow
def test_gradcheck_default_run():
    assert run("gradcheck") == 0


def test_report(workdir, tmp_path):
    out = tmp_path / "rep"
    t = time.perf_counter()
    assert run("report", "--attention-csv", str(workdir / "att.csv"), "--out-dir", str(out)) == 0
    assert time.perf_counter() - t < 30
    rows = parse_attention((workdir / "att.csv").read_text())
    pos = next(r.bag_id for r in rows if r.bag_label == 1)
    svg = (out / f"{pos}.svg").read_text()
    assert 'class="key"' in svg and 'class="argmax"' in svg
    summary = body(out / "summary.csv")
    assert len(summary) == 1 + 457


def test_report_empty_and_malformed(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run("report", "--attention-csv", str(empty), "--out-dir", str(tmp_path / "e")) == 0
    assert body(tmp_path / "e" / "summary.csv") == [",".join(
        ["bag_id", "bag_label", "predicted_prob", "n_conformers", "argmax_conformer",
         "argmax_dihedral_deg", "argmax_alpha", "argmax_is_key"])]
    bad = tmp_path / "bad.csv"
    bad.write_text("bag_id,alpha\nx,0.5\n")
    assert run("report", "--attention-csv", str(bad), "--out-dir", str(tmp_path / "b")) == 2
    assert run("report", "--attention-csv", str(tmp_path / "missing.csv"), "--out-dir", str(tmp_path)) == 2
