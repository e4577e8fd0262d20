#!/usr/bin/env python3
"""Walkthrough: spotting and naming a failed link on a five-node cycle.

Five identical leaky integrators pass their state around a directed ring.
At t = 5 the link from node 1 to node 2 breaks.  Watching only nodes 2 and
3, the first derivative of y_2 and the second derivative of y_3 jump at
that instant, and the pair of jump orders (1, 2) matches exactly one column
of the precomputed lookup table: the failed link is named without ever
observing it directly.
"""

import numpy as np

from netfdi import (DetectorConfig, FailureEvent, NetworkSystem, SubsystemModel,
                    detect, gen_cycle, isolate, lookup_table, relation_matrix,
                    simulate)

graph = gen_cycle(5)
model = SubsystemModel(A=[[-1.0]], B=[[1.0]], C=[[1.0]], Gamma=[[1.0]])
sensors = (2, 3)

print("=== tables the designer precomputes offline ===")
rel = relation_matrix(graph, r=1, z=4)
table = lookup_table(graph, sensors, r=1, z=4)
print("relation matrix R (rows = edges, cols = nodes):")
print(rel.entries)
print("lookup table D (rows = sensors 2,3; cols = edges):")
print(table.table)
print("each column of D is the signature an edge failure would produce\n")

print("=== the network runs; edge 2 = (1 -> 2) fails at t = 5 ===")
sys_net = NetworkSystem(graph, model)
trace = simulate(sys_net, x0=[1, 2, 3, 4, 5], t0=0.0, t_end=10.0, dt=1e-3,
                 schedule=[FailureEvent(edge=2, time=5.0)])
print(f"simulated {len(trace.times)} samples; state stays continuous at t=5:")
b = trace.segments[0].stop
print(f"  x(5-) = x(5+) = {np.round(trace.states[b], 6)}\n")

print("=== detection from sensor outputs alone ===")
for mode in ("analytic", "finite-difference"):
    events = detect(trace, sensors, DetectorConfig(z=4, mode=mode))
    for event in events:
        verdict = isolate(event, table)
        print(f"{mode:>18}: jump orders {event.orders.tolist()} at t={event.time}"
              f" -> {verdict.verdict} {verdict.edges}")

print("\nthe signature (1, 2) matches only column 2 of D: edge (1 -> 2) failed.")
