"""``hirelabel`` command line: collect | relabel | train | eval | check.

Every command takes ``--config FILE`` (JSON) and any number of dotted
overrides mirroring config keys, e.g. ``--env.kind supply_chain``,
``--relabel.method=CEM`` or ``--seed 3``. Values are parsed as JSON when possible and kept
as strings otherwise. Flags beat the config file; ``OHIO_SEED`` beats both
for the seed.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, pipeline
from .errors import (
    ConstraintViolation,
    DimMismatch,
    EmptyDataset,
    EmptyOutput,
    FlowExceedsInventory,
    HirelabelError,
    IncompatibleModel,
    InfeasibleReconstruction,
    InvalidConfig,
    MissingRewardSource,
    NonConsecutiveTime,
    NonFiniteGradient,
    NonFiniteJacobian,
    NonFiniteLoss,
    NonFiniteValue,
    NumericalBreakdown,
    SingularInnerMatrix,
    TrajectoryError,
)
from .io import (
    DataError,
    config_hash,
    read_json,
    read_samples,
    read_transitions,
    sample_record,
    transition_record,
    write_json,
    write_jsonl,
)
from .learn import load_checkpoint, save_checkpoint

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

_NUMERIC = (NonFiniteLoss, NonFiniteGradient, NonFiniteJacobian, NumericalBreakdown, SingularInnerMatrix,
            InfeasibleReconstruction)
_DATA = (DataError, TrajectoryError, DimMismatch, NonConsecutiveTime, NonFiniteValue, EmptyDataset, EmptyOutput,
         MissingRewardSource, IncompatibleModel, FlowExceedsInventory, ConstraintViolation)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(extra: Sequence[str]) -> dict:
    """``["--a.b", "1", "--c.d=x"]`` -> ``{"a.b": 1, "c.d": "x"}``; ``--seed`` is the one undotted key."""
    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) < 3:
            raise UsageError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"{tok} needs a value")
            i += 1
            value = extra[i]
        if "." not in key and key != "seed":
            raise UsageError(f"unknown option --{key}")
        out[key] = _parse_value(value)
        i += 1
    return out


def load_config(path: Optional[str], overrides: dict) -> dict:
    base = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise DataError(f"config file {path} does not exist")
        base = read_json(p)
        if not isinstance(base, dict):
            raise InvalidConfig(f"{path}: expected a JSON object")
    return pipeline.resolve(base, overrides)


def _manifest(path, command: str, cfg: dict, **extra) -> None:
    write_json(path, {
        "command": command,
        "version": __version__,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        **extra,
        "config": cfg,
    })


def _sidecar(path, suffix: str) -> Path:
    p = Path(path)
    return p.with_name(p.name + suffix)


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise DataError(f"{what} {path} does not exist")
    return p


# ---------------------------------------------------------------------------
# commands


def cmd_collect(cfg: dict, out_path) -> dict:
    raw = pipeline.collect(cfg)
    n = write_jsonl(out_path, (transition_record(tr) for tr in raw))
    episodes = len({tr.episode for tr in raw})
    _manifest(_sidecar(out_path, ".manifest.json"), "collect", cfg, records=n, episodes=episodes,
              output=str(out_path))
    return {"records": n, "episodes": episodes}


def cmd_relabel(cfg: dict, in_path, out_path) -> dict:
    raw = read_transitions(_require(in_path, "raw dataset"))
    if not raw:
        raise EmptyDataset(f"{in_path} holds no transitions")
    samples, report = pipeline.relabel(cfg, raw)
    write_jsonl(out_path, (sample_record(s) for s in samples))
    rep = {**report.as_dict(), "config_hash": config_hash(cfg), "input": str(in_path)}
    write_json(_sidecar(out_path, ".report.json"), rep)
    _manifest(_sidecar(out_path, ".manifest.json"), "relabel", cfg, input=str(in_path), output=str(out_path),
              retained=report.retained, windows=report.windows)
    return rep


def write_curve(path, curve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "mean_weight"])
        for row in curve:
            mw = row.get("mean_weight")
            w.writerow([row["epoch"], "%.17g" % row["loss"], "" if mw is None else "%.17g" % mw])


def cmd_train(cfg: dict, data_path, model_path) -> dict:
    pipeline.learner_config(cfg)  # reject a bad learn section before touching the data
    samples = read_samples(_require(data_path, "relabeled dataset"))
    if not samples:
        raise EmptyDataset(f"{data_path} holds no samples")
    policy, curve = pipeline.fit(cfg, samples)
    save_checkpoint(model_path, policy, cfg, cfg["seed"])
    write_curve(_sidecar(model_path, ".curve.csv"), curve)
    _manifest(_sidecar(model_path, ".manifest.json"), "train", cfg, input=str(data_path), output=str(model_path),
              samples=len(samples), final_loss=curve[-1]["loss"] if curve else None)
    return {"samples": len(samples), "final_loss": curve[-1]["loss"] if curve else None}


def cmd_eval(cfg: dict, model_paths: Sequence[str], out_path, table_path=None) -> dict:
    env = pipeline.build_env(cfg)
    ref, floor = pipeline.reference_scores(cfg, env)
    rows = []
    for mp in model_paths:
        policy = load_checkpoint(_require(mp, "model"))
        res = pipeline.evaluate({**cfg, "eval": {**cfg["eval"], "reference": ref, "floor": floor}}, policy, env)
        rows.append({"model": Path(mp).name, **res.as_dict()})
    out = {"config_hash": config_hash(cfg), "seed": cfg["seed"], "env": cfg["env"]["kind"],
           "eval_seed": cfg["eval"]["seed"], "reference_return": ref, "floor_return": floor, "rows": rows}
    write_json(out_path, out)
    if table_path:
        with open(table_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "mean_return", "std_return", "normalized_score", "episodes"])
            for r in rows:
                w.writerow([r["model"], "%.17g" % r["mean_return"], "%.17g" % r["std_return"],
                            "%.17g" % r["normalized_score"], r["episodes"]])
    return out


def cmd_check(seed: int, out_dir, only=None, quick: bool = False, stream=None) -> bool:
    from . import acceptance

    stream = sys.stdout if stream is None else stream
    results = acceptance.run_all(seed=seed, only=only, quick=quick, out_dir=out_dir, stream=stream)
    return all(r.passed for r in results)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hirelabel", description="Relabel low-level logs with inferred high-level actions.")
    parser.add_argument("--version", action="version", version=f"hirelabel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("collect", help="roll a behavior policy and write raw transitions (JSONL)")
    p.add_argument("--config")
    p.add_argument("--out", required=True)

    p = sub.add_parser("relabel", help="invert the low level to recover high-level actions")
    p.add_argument("--config")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="fit BC or AWR on a relabeled dataset")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)

    p = sub.add_parser("eval", help="evaluate checkpoints with seeded episodes")
    p.add_argument("--config")
    p.add_argument("--model", required=True, action="append", help="repeat for one table row per model")
    p.add_argument("--out", required=True)
    p.add_argument("--table", help="optional CSV score table")

    p = sub.add_parser("check", help="run the acceptance suite")
    p.add_argument("--out", help="directory for pipeline artifacts and results")
    p.add_argument("--only", help="comma-separated criterion numbers")
    p.add_argument("--quick", action="store_true", help="reduced sizes (smoke run)")
    p.add_argument("--seed", type=int, default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        if args.command == "check":
            if extra:
                raise UsageError(f"check takes no config overrides: {' '.join(extra)}")
            seed = args.seed if args.seed is not None else pipeline.resolve()["seed"]
            only = None if not args.only else [int(x) for x in args.only.split(",")]
            return EXIT_OK if cmd_check(seed, args.out, only, args.quick) else EXIT_NUMERIC
        cfg = load_config(args.config, parse_overrides(extra))
        if args.command == "collect":
            info = cmd_collect(cfg, args.out)
            print(f"wrote {info['records']} transitions from {info['episodes']} episodes to {args.out}")
        elif args.command == "relabel":
            rep = cmd_relabel(cfg, args.in_path, args.out)
            print(f"{rep['method']}: kept {rep['retained']}/{rep['windows']} windows "
                  f"(mean inv_loss {rep['mean_inv_loss']:.3g}) -> {args.out}")
        elif args.command == "train":
            info = cmd_train(cfg, args.data, args.model)
            print(f"trained on {info['samples']} samples, final loss {info['final_loss']:.6g} -> {args.model}")
        elif args.command == "eval":
            out = cmd_eval(cfg, args.model, args.out, args.table)
            for r in out["rows"]:
                print(f"{r['model']}: return {r['mean_return']:.3f} +- {r['std_return']:.3f}, "
                      f"normalized {r['normalized_score']:.2f}")
        return EXIT_OK
    except UsageError as exc:
        print(f"hirelabel: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code below
        code = exit_code(exc)
        if code is None:
            raise
        label = {EXIT_USAGE: "invalid configuration", EXIT_DATA: "data error", EXIT_NUMERIC: "numeric failure"}
        print(f"hirelabel: {label[code]}: {exc}", file=sys.stderr)
        return code


def exit_code(exc: BaseException) -> Optional[int]:
    """Exit code for an exception, or ``None`` for unexpected ones."""
    if isinstance(exc, _NUMERIC):
        return EXIT_NUMERIC
    if isinstance(exc, _DATA + (OSError,)):
        return EXIT_DATA
    if isinstance(exc, (InvalidConfig, ValueError, TypeError, KeyError)):
        return EXIT_USAGE
    if isinstance(exc, HirelabelError):
        return EXIT_DATA
    return None

if __name__ == "__main__":
    sys.exit(main())
