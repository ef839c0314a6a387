"""Exhaustive order-up-to search on the three-store network.

Every store-level triple in {5, ..., 20}^3 is scored by its mean return over
the same 20 seeded episodes, with shipments produced by the LP low level.
The winner is the frozen heuristic used as the network reference policy.

    python3 demos/order_up_to_search.py [out.json]
"""
import sys
import time

from hirelabel.envs import SupplyChainEnv
from hirelabel.io import write_json
from hirelabel.policies import order_up_to_grid_search

if __name__ == "__main__":
    t0 = time.time()
    best, best_mean, table = order_up_to_grid_search(SupplyChainEnv())
    print(f"best store levels {best}: mean return {best_mean:.4f} ({time.time() - t0:.0f} s)")
    top = sorted(table, key=lambda row: -row[1])[:10]
    for levels, mean in top:
        print(f"  {levels}  {mean:.4f}")
    if len(sys.argv) > 1:
        write_json(sys.argv[1], {"best": best, "best_mean": best_mean,
                                 "table": [[list(k), v] for k, v in table]})
