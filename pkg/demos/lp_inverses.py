"""Two ways to invert a rebalancing LP, and where they disagree.

On a two-node network the flow-balance inverse sets each target to the
stock the observed flows leave behind. The duality-gap inverse searches for
targets under which the observed flows are optimal and reports the gap that
remains. An optimal decision has zero gap; a wasteful one (vehicles sent
around a cycle) keeps a gap equal to the wasted cost.
"""
import numpy as np

from hirelabel.lp import NetworkProblem, complete_edges, duality_inverse, flow_balance_targets, rebalancing_policy

edges = complete_edges(2)
net = NetworkProblem(q=np.array([5.0, 1.0]), edges=edges, cost=np.ones(len(edges)), q_target=np.array([2.0, 4.0]))
dec = rebalancing_policy(net)
print("optimal flows", dec.flows, "cost", dec.flow_cost)
print("flow-balance targets", flow_balance_targets(net, dec.flows))
print("duality gap at optimum", duality_inverse(net, dec.flows).epsilon)

cycle = dec.flows + 1.0  # one extra vehicle each way
print("cycled flows", cycle, "gap", duality_inverse(net, cycle).epsilon)
