import csv
import json

import numpy as np
import pytest

from hirelabel import pipeline
from hirelabel.cli import main, parse_overrides, UsageError
from hirelabel.io import config_hash, read_json, read_transitions, write_jsonl


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv("OHIO_SEED", raising=False)


def run(*args):
    return main([str(a) for a in args])


def lines(path):
    return [json.loads(x) for x in open(path, encoding="utf-8") if x.strip()]


def test_overrides_parse_json_values():
    out = parse_overrides(["--env.kind", "routing", "--policy.episodes=3", "--learn.hidden", "[8, 8]"])
    assert out == {"env.kind": "routing", "policy.episodes": 3, "learn.hidden": [8, 8]}
    with pytest.raises(UsageError):
        parse_overrides(["--seed"])
    with pytest.raises(UsageError):
        parse_overrides(["stray"])


def test_flags_beat_config_and_env_beats_both(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 3, "policy": {"episodes": 7}}))
    resolved = pipeline.resolve(read_json(cfg), {"policy.episodes": 2})
    assert resolved["seed"] == 3 and resolved["policy"]["episodes"] == 2
    monkeypatch.setenv("OHIO_SEED", "11")
    assert pipeline.resolve(read_json(cfg))["seed"] == 11


def test_collect_counts_and_manifest(tmp_path):
    out = tmp_path / "raw.jsonl"
    assert run("collect", "--out", out) == 0
    recs = lines(out)
    assert len(recs) == 250 * 40
    man = read_json(str(out) + ".manifest.json")
    assert man["records"] == 10000 and man["episodes"] == 250
    assert man["config_hash"] == config_hash(man["config"])
    assert man["seed"] == 0


SC = ["--env.kind", "supply_chain", "--policy.kind", "OrderUpTo", "--policy.episodes", 2]


def test_collect_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for p in (a, b):
        assert run("collect", "--out", p, *SC) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.jsonl"
    run("collect", "--out", c, *SC, "--seed", 1)
    assert a.read_bytes() != c.read_bytes()


def test_state_only_mode(tmp_path):
    out = tmp_path / "raw.jsonl"
    assert run("collect", "--out", out, "--policy.episodes", 2, "--policy.state_only", "true") == 0
    assert all(r["a"] is None for r in lines(out))


def test_relabel_report_and_observed_state_baseline(tmp_path):
    raw = tmp_path / "raw.jsonl"
    run("collect", "--out", raw, "--policy.episodes", 5)
    rel = tmp_path / "rel.jsonl"
    assert run("relabel", "--in", raw, "--out", rel) == 0
    rep = read_json(str(rel) + ".report.json")
    assert rep["retention"] == 1.0
    assert rep["mean_inv_loss"] < 1e-10
    base = tmp_path / "base.jsonl"
    assert run("relabel", "--in", raw, "--out", base, "--relabel.baseline", "ObservedState",
               "--low_level.full_state_goals", "true") == 0
    trs = read_transitions(raw)
    for rec in lines(base):
        window_end = next(tr for tr in trs if tr.episode == rec["ep"] and tr.t == rec["t"] + 4)
        assert rec["u"] == list(window_end.s_next[:2])


def test_corrupt_input_names_line(tmp_path, capsys):
    raw = tmp_path / "raw.jsonl"
    run("collect", "--out", raw, "--policy.episodes", 1)
    text = raw.read_text().splitlines()
    text[6] = text[6][:20]
    raw.write_text("\n".join(text) + "\n")
    assert run("relabel", "--in", raw, "--out", tmp_path / "rel.jsonl") == 2
    assert "line 7" in capsys.readouterr().err


def test_train_on_trivial_dataset_and_reload(tmp_path):
    rng = np.random.default_rng(0)
    S = rng.uniform(-1, 1, size=(500, 1))
    data = tmp_path / "lin.jsonl"
    write_jsonl(data, ({"ep": 0, "t": i, "s": s, "u": 2 * s, "u_kind": "GoalState", "r": 0.0, "s_next": s,
                        "inv_loss": 0.0} for i, s in enumerate(S)))
    model = tmp_path / "m.json"
    assert run("train", "--data", data, "--model", model, "--learn.epochs", 200, "--learn.hidden", "[32]",
               "--learn.lr", 0.003) == 0
    with open(str(model) + ".curve.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 200
    assert float(rows[-1]["loss"]) < 1e-3


def test_eval_matches_in_memory_policy(tmp_path):
    raw, rel, model, res = (tmp_path / n for n in ("raw.jsonl", "rel.jsonl", "m.json", "res.json"))
    common = ["--policy.episodes", 10, "--learn.epochs", 5, "--eval.episodes", 3]
    assert run("collect", "--out", raw, *common) == 0
    assert run("relabel", "--in", raw, "--out", rel, *common) == 0
    assert run("train", "--data", rel, "--model", model, *common) == 0
    assert run("eval", "--model", model, "--out", res, "--table", tmp_path / "t.csv", *common) == 0
    out = read_json(res)
    cfg = pipeline.resolve({}, {"policy.episodes": 10, "learn.epochs": 5, "eval.episodes": 3})
    from hirelabel.io import read_samples
    policy, _ = pipeline.fit(cfg, read_samples(rel))
    direct = pipeline.evaluate(cfg, policy)
    assert out["rows"][0]["mean_return"] == direct.mean
    assert out["rows"][0]["model"] == "m.json"
    assert (tmp_path / "t.csv").read_text().startswith("model,mean_return")


def test_empty_dataset_exit_code(tmp_path):
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    assert run("train", "--data", empty, "--model", tmp_path / "m.json") == 2
    assert run("relabel", "--in", empty, "--out", tmp_path / "r.jsonl") == 2


def test_missing_files_exit_code(tmp_path):
    assert run("eval", "--model", tmp_path / "nope.json", "--out", tmp_path / "r.json") == 2
    assert run("relabel", "--in", tmp_path / "nope.jsonl", "--out", tmp_path / "r.jsonl") == 2
    assert run("collect", "--config", tmp_path / "nope.json", "--out", tmp_path / "r.jsonl") == 2


def test_incompatible_model_exit_code(tmp_path):
    raw, rel, model = tmp_path / "raw.jsonl", tmp_path / "rel.jsonl", tmp_path / "m.json"
    run("collect", "--out", raw, "--policy.episodes", 2)
    run("relabel", "--in", raw, "--out", rel)
    run("train", "--data", rel, "--model", model, "--learn.epochs", 1)
    assert run("eval", "--model", model, "--out", tmp_path / "r.json", "--env.kind", "supply_chain") == 2


def test_usage_errors(tmp_path):
    assert run() == 1
    assert run("collect") == 1
    assert run("frobnicate") == 1
    assert run("collect", "--out", tmp_path / "x", "--env.kind", "moon") == 1
    assert run("collect", "--out", tmp_path / "x", "--nosection", "1") == 1
    assert run("train", "--data", tmp_path / "x", "--model", tmp_path / "m", "--learn.expectile", 2) == 1


def test_check_subset(tmp_path, capsys):
    assert run("check", "--only", "1", "--quick", "--out", tmp_path) == 0
    assert "criterion 1" in capsys.readouterr().out.lower()
    assert (tmp_path / "acceptance.json").exists()
