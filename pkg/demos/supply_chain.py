"""Relabeling a supply-chain log through the LP low level.

An order-up-to heuristic sets inventory targets, a linear program turns them
into shipments and production, and only the shipments are logged. Running
the flow-balance inverse and then re-solving the LP with the recovered
targets reproduces the logged shipments, which is what makes the relabeled
targets usable as training labels.

    python3 demos/supply_chain.py [episodes]
"""
import sys

import numpy as np

from hirelabel import pipeline

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 10

cfg = pipeline.resolve({"env": {"kind": "supply_chain"},
                        "policy": {"kind": "OrderUpTo", "episodes": episodes, "noise_std": 2.0},
                        "relabel": {"network_method": "FlowBalance"},
                        "learn": {"epochs": 40}, "eval": {"episodes": 10}})
raw = pipeline.collect(cfg)
samples, report = pipeline.relabel(cfg, raw)
print(f"{len(raw)} steps logged, {report.retained} relabeled (mean inverse loss {report.mean_loss:.2e})")

first = samples[0]
print("recovered targets at t=0:", np.round(first.u.values, 3))

env = pipeline.build_env(cfg)
ref, floor = pipeline.reference_scores(cfg, env)
cfg["eval"].update(reference=ref, floor=floor)
policy, _ = pipeline.fit(cfg, samples)
res = pipeline.evaluate(cfg, policy, env)
print(f"reference return {ref:.1f}; cloned policy {res.mean:.1f} "
      f"(normalized {res.normalized:.1f})")
