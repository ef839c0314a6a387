"""JSON / JSONL formats for datasets, checkpoints and reports.

Floats are written with 17 significant digits so every double survives a
round trip exactly. Output is deterministic: same object, same bytes.
"""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .core import HighAction, HighActionKind, RelabeledSample, Transition
from .errors import HirelabelError, NonFiniteValue


class DataError(HirelabelError):
    """Malformed input file; the message names the line."""


def _encode(obj) -> str:
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise NonFiniteValue(f"cannot serialize non-finite float {x}")
        s = "%.17g" % x
        # keep floats recognizable as floats
        if not any(ch in s for ch in ".eEn"):
            s += ".0"
        return s
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k), ensure_ascii=False)}:{_encode(v)}" for k, v in obj.items()) + "}"
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return _encode(obj.value)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return _encode(obj)


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: line {exc.lineno}: {exc.msg}") from exc


def config_hash(obj) -> str:
    """SHA-256 of the canonical (sorted-key) serialization."""
    def canon(o):
        if isinstance(o, dict):
            return {str(k): canon(o[k]) for k in sorted(o, key=str)}
        if isinstance(o, (list, tuple)):
            return [canon(v) for v in o]
        return o
    return hashlib.sha256(dumps(canon(obj)).encode("utf-8")).hexdigest()


def write_jsonl(path, records: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps(rec) + "\n")
            n += 1
    return n


def read_jsonl(path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, object)``; blank lines are skipped."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise DataError(f"{path}: line {lineno}: expected a JSON object")
            yield lineno, obj


def transition_record(tr: Transition) -> dict:
    return {"ep": tr.episode, "t": tr.t, "s": tr.s, "a": tr.a, "r": tr.r, "s_next": tr.s_next}


def read_transitions(path) -> list[Transition]:
    out = []
    for lineno, obj in read_jsonl(path):
        try:
            out.append(Transition(episode=int(obj["ep"]), t=int(obj["t"]), s=obj["s"], a=obj.get("a"),
                                  r=obj.get("r"), s_next=obj["s_next"]))
        except (KeyError, TypeError, ValueError, HirelabelError) as exc:
            raise DataError(f"{path}: line {lineno}: bad transition record ({exc})") from exc
    return out


def sample_record(s: RelabeledSample) -> dict:
    return {"ep": s.episode, "t": s.t, "s": s.s, "u": s.u.values, "u_kind": s.u.kind.value, "r": s.r,
            "s_next": s.s_next, "inv_loss": s.inv_loss}


def read_samples(path) -> list[RelabeledSample]:
    out = []
    for lineno, obj in read_jsonl(path):
        try:
            u = HighAction(obj["u"], HighActionKind(obj["u_kind"]))
            out.append(RelabeledSample(s=obj["s"], u=u, r=float(obj["r"]), s_next=obj["s_next"],
                                       inv_loss=float(obj["inv_loss"]), episode=int(obj.get("ep", 0)),
                                       t=int(obj.get("t", 0))))
        except (KeyError, TypeError, ValueError, HirelabelError) as exc:
            raise DataError(f"{path}: line {lineno}: bad relabeled record ({exc})") from exc
    return out
