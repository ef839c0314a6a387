import json

import numpy as np
import pytest

from hirelabel.core import HighAction, HighActionKind, RelabeledSample, Transition
from hirelabel.errors import NonFiniteValue
from hirelabel.io import (
    DataError,
    config_hash,
    dumps,
    read_json,
    read_samples,
    read_transitions,
    sample_record,
    transition_record,
    write_jsonl,
)


def test_floats_round_trip_exactly():
    x = [0.1, 1 / 3, 2.0**-60, 1e300, -0.0, 7.0]
    assert json.loads(dumps(x)) == x
    assert dumps(7.0) == "7.0"
    assert dumps(3) == "3"


def test_non_finite_floats_are_refused():
    with pytest.raises(NonFiniteValue):
        dumps(float("nan"))


def test_config_hash_ignores_key_order():
    a = {"b": 1, "a": {"y": [1, 2], "x": 0.5}}
    b = {"a": {"x": 0.5, "y": [1, 2]}, "b": 1}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({**a, "b": 2})
    assert len(config_hash(a)) == 64


def test_transition_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    trs = [Transition(0, t, s=rng.normal(size=3), s_next=rng.normal(size=3),
                      a=None if t == 1 else rng.normal(size=2), r=None if t == 2 else float(rng.normal()))
           for t in range(4)]
    path = tmp_path / "raw.jsonl"
    assert write_jsonl(path, (transition_record(tr) for tr in trs)) == 4
    assert read_transitions(path) == trs


def test_sample_round_trip(tmp_path):
    smp = [RelabeledSample(s=[0.1, 0.2], u=HighAction([0.25, 0.75], HighActionKind.DISTRIBUTION), r=1.5,
                           s_next=[0.3, 0.4], inv_loss=1e-12, episode=2, t=3)]
    path = tmp_path / "rel.jsonl"
    write_jsonl(path, (sample_record(s) for s in smp))
    back = read_samples(path)[0]
    np.testing.assert_array_equal(back.u.values, smp[0].u.values)
    assert back.u.kind is HighActionKind.DISTRIBUTION
    assert (back.r, back.inv_loss, back.episode, back.t) == (1.5, 1e-12, 2, 3)


def test_corrupt_line_is_named(tmp_path):
    path = tmp_path / "raw.jsonl"
    good = dumps(transition_record(Transition(0, 0, s=[0.0], s_next=[1.0])))
    path.write_text(good + "\n" + good.replace('"t":0', '"t":1') + "\n{not json\n")
    with pytest.raises(DataError, match="line 3"):
        read_transitions(path)


def test_bad_record_is_named(tmp_path):
    path = tmp_path / "raw.jsonl"
    path.write_text('{"ep": 0, "t": 0, "s": [1.0]}\n')
    with pytest.raises(DataError, match="line 1"):
        read_transitions(path)


def test_bad_json_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{\n  oops\n}")
    with pytest.raises(DataError, match="line 2"):
        read_json(path)
