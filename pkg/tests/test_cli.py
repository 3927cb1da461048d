import json
import subprocess
import sys

import numpy as np
import pytest

from hazfractal.cli import main
from hazfractal.hgnn import checkpoint, hgnn_forward, predict
from hazfractal.ingest import HaERecord, parse_records, read_meta, write_records
from hazfractal.mfdfa import DfaConfig, compute_hfs

QUICK = ["--epochs", "2", "--batch-size", "16", "--fusion-dim", "8", "--q-step", "1",
         "--num-classes", "2", "--lr", "1e-3"]


@pytest.fixture
def dataset(tmp_path):
    path = tmp_path / "data.jsonl"
    assert main(["synth", "--class", "fgn:hurst=0.2@1", "--class", "fgn:hurst=0.8@2", "--n", "256",
                 "--count", "15", "--seed", "2", "--out", str(path)]) == 0
    return path


def config_line(path):
    first = path.read_text().splitlines()[0]
    assert first.startswith("# config: ")
    return json.loads(first[len("# config: "):])


def test_synth_is_seeded_and_echoes_config(tmp_path, dataset):
    other = tmp_path / "again.jsonl"
    main(["synth", "--class", "fgn:hurst=0.2@1", "--class", "fgn:hurst=0.8@2", "--n", "256",
          "--count", "15", "--seed", "2", "--out", str(other)])
    assert other.read_bytes() == dataset.read_bytes()
    meta = read_meta(dataset.read_text().splitlines())
    assert meta["seed"] == 2 and len(meta["classes"]) == 2
    assert len(parse_records(dataset.read_text().splitlines())) == 30


def test_synth_preset_counts(tmp_path):
    out = tmp_path / "t3.jsonl"
    assert main(["synth", "--preset", "table3", "--aspect", "risk", "--total", "60", "--n", "128",
                 "--seed", "0", "--out", str(out)]) == 0
    labels = [r.risk for r in parse_records(out.read_text().splitlines())]
    assert np.bincount(labels, minlength=5)[1:].tolist() == [30, 26, 3, 1]


def test_synth_rejects_bad_hurst(tmp_path, capsys):
    assert main(["synth", "--kind", "fgn", "--hurst", "1.2", "--out", str(tmp_path / "x")]) == 1
    assert "1.2" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["analyze"])
    assert exc.value.code == 2


def test_analyze_matches_library_and_lists_failures(tmp_path, dataset, capsys):
    records = parse_records(dataset.read_text().splitlines())
    short = HaERecord("short", 1, 1, 1, hts=np.arange(20.0))
    mixed = tmp_path / "mixed.jsonl"
    with mixed.open("w") as fh:
        write_records([records[0], short], fh)
    out = tmp_path / "hfs.csv"
    assert main(["analyze", "--input", str(mixed), "--out", str(out)]) == 0
    assert "short" in capsys.readouterr().err
    rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
    assert rows[0] == ["id", "q", "h", "r2", "error"]
    expected = compute_hfs(records[0].series(), DfaConfig())
    got = np.array([float(r[2]) for r in rows[1:] if r[0] == records[0].id])
    np.testing.assert_array_equal(got, expected.h)
    assert rows[-1][0] == "short" and rows[-1][4]
    cfg = config_line(out)
    assert cfg["command"] == "analyze" and "threads" not in cfg and "out" not in cfg


def test_analyze_all_failed_or_empty(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert main(["analyze", "--input", str(empty), "--out", str(tmp_path / "o.csv")]) == 1
    bad = tmp_path / "bad.jsonl"
    with bad.open("w") as fh:
        write_records([HaERecord("a", 1, 1, 1, hts=[1.0, 2.0])], fh)
    assert main(["analyze", "--input", str(bad), "--out", str(tmp_path / "o.csv")]) == 1
    assert main(["analyze", "--input", str(tmp_path / "missing.jsonl"), "--out", "o.csv"]) == 4


def test_train_eval_consistency(tmp_path, dataset):
    run = tmp_path / "run"
    assert main(["train", "--input", str(dataset), "--out-dir", str(run), "--seed", "3", *QUICK]) == 0
    report = json.loads((run / "report.json").read_text())
    assert report["model"] == "HGNN[mF-DFA]"
    split = report["config"]["split"]
    assert (split["train"], split["validation"], split["test"]) == (24, 3, 3)

    # evaluating the checkpoint on the whole file agrees with predictions made directly
    assert main(["eval", "--checkpoint", str(run / "checkpoint.json"), "--input", str(dataset),
                 "--out-dir", str(tmp_path / "ev")]) == 0
    params, cfg, meta = checkpoint.load(run / "checkpoint.json")
    records = parse_records(dataset.read_text().splitlines())
    dfa = DfaConfig.from_dict(meta["dfa"])
    x = np.array([compute_hfs(r.series(), dfa).h for r in records])
    correct = predict(hgnn_forward(x, params, cfg)) == np.array([r.severity for r in records])
    ev = json.loads((tmp_path / "ev" / "eval_report.json").read_text())
    assert ev["eval"]["micro"]["recall"] == pytest.approx(correct.mean())


def test_eval_errors(tmp_path, dataset):
    run = tmp_path / "run"
    main(["train", "--input", str(dataset), "--out-dir", str(run), "--seed", "3", *QUICK])
    ckpt = str(run / "checkpoint.json")
    assert main(["eval", "--checkpoint", str(tmp_path / "none.json"), "--input", str(dataset),
                 "--out-dir", str(tmp_path / "e")]) == 4
    assert main(["eval", "--checkpoint", ckpt, "--input", str(dataset), "--aspect", "risk",
                 "--out-dir", str(tmp_path / "e")]) == 3
    high = tmp_path / "high.jsonl"
    with high.open("w") as fh:
        write_records([HaERecord("h", 4, 1, 1, hts=np.random.default_rng(0).normal(size=256))], fh)
    assert main(["eval", "--checkpoint", ckpt, "--input", str(high), "--out-dir", str(tmp_path / "e")]) == 3
    garbage = tmp_path / "garbage.json"
    garbage.write_text('{"format": "other"}')
    assert main(["eval", "--checkpoint", str(garbage), "--input", str(dataset),
                 "--out-dir", str(tmp_path / "e")]) == 3


def test_repeat_writes_one_checkpoint_per_run(tmp_path, dataset):
    run = tmp_path / "run"
    assert main(["pipeline", "--input", str(dataset), "--out-dir", str(run), "--repeat", "2",
                 "--variant", "hmf", *QUICK]) == 0
    assert {p.name for p in run.iterdir()} == {
        "checkpoint.json", "checkpoint_r1.json", "history.csv", "history_r1.csv",
        "report.json", "results.csv", "hfs.csv"}
    report = json.loads((run / "report.json").read_text())
    assert report["test"]["repetitions"] == 2 and report["model"] == "HGNN[HmF-DFA]"
    seeds = [json.loads((run / n).read_text())["meta"]["model_seed"]
             for n in ("checkpoint.json", "checkpoint_r1.json")]
    assert seeds == [0, 1]
    results = [l for l in (run / "results.csv").read_text().splitlines() if not l.startswith("#")]
    assert results[0] == "model,aspect,split,P,R,F1" and results[1].startswith("HGNN[HmF-DFA],severity,test,")


def test_thread_environment_variable(tmp_path, dataset, monkeypatch):
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("HAZFRACTAL_THREADS", threads)
        out = tmp_path / f"h{threads}.csv"
        assert main(["analyze", "--input", str(dataset), "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hazfractal", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "0.1.0"
