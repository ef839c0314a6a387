"""Offline pipeline on the planar point mass, end to end.

A scripted goal-setter drives an LQR tracker; only the low-level states and
actions are logged. The hidden goals are recovered by inverting the tracker,
a policy is cloned on them, and it is scored against the expert and the
hold-position floor. The same data relabeled with the observed state five
steps later is the naive baseline.

    python3 demos/goal_pipeline.py [linear|nonlinear] [episodes]
"""
import sys
import time

from hirelabel import pipeline

kind = sys.argv[1] if len(sys.argv) > 1 else "linear"
episodes = int(sys.argv[2]) if len(sys.argv) > 2 else 40

cfg = pipeline.resolve({"env": {"kind": kind}, "policy": {"episodes": episodes, "noise_std": 20.0},
                        "learn": {"epochs": 60}, "eval": {"episodes": 20}})
t0 = time.time()
raw = pipeline.collect(cfg)
print(f"collected {len(raw)} low-level transitions ({time.time() - t0:.1f} s)")

env = pipeline.build_env(cfg)
ref, floor = pipeline.reference_scores(cfg, env)
print(f"expert return {ref:.1f}, hold-position floor {floor:.1f}")
cfg["eval"].update(reference=ref, floor=floor)

for baseline in ("OHIO", "ObservedState"):
    run = pipeline.merge(cfg, {"relabel": {"baseline": baseline}})
    samples, report = pipeline.relabel(run, raw)
    policy, curve = pipeline.fit(run, samples)
    res = pipeline.evaluate(run, policy, env)
    print(f"{baseline:>13}: kept {report.retained}/{report.windows} windows, "
          f"final loss {curve[-1]['loss']:.4f}, normalized score {res.normalized:.1f}")
