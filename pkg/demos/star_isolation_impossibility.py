#!/usr/bin/env python3
"""Why a star network can be monitored for failures but never diagnosed.

All four edges of an inward star share the same head.  A failure of any of
them jumps the hub's first derivative, so one sensor at the hub detects
everything; but every edge produces exactly the same jump pattern at every
node, so no sensor set, not even all of them, can tell which edge broke.
"""

from netfdi import (gen_star, greedy_detection, greedy_isolation, indicator_set,
                    relation_matrix, resolution_deficit)

graph = gen_star(5)
rel = relation_matrix(graph, r=1, z=1)

print("star with edges (q -> 5) for q = 1..4; relation matrix:")
print(rel.entries)

m_d = greedy_detection(rel)
print(f"\ngreedy detection set: {m_d}  (the hub sees every failure at order 1)")

every = (1, 2, 3, 4, 5)
print(f"resolution deficit with ALL nodes observed: f_I = "
      f"{resolution_deficit(rel, every)} of {graph.n_edges} edges")
for edge in (1, 2):
    print(f"  indicator set of edge {edge} over V: "
          f"{sorted(indicator_set(rel, every, edge))}")
print("identical indicator sets: the edges are indistinguishable by jumps")

m_i = greedy_isolation(rel, m_d)
print(f"\ngreedy isolation returns: {m_i!r}  (None = isolation impossible)")
print("this holds for stars of any size: detection is one sensor, isolation is hopeless")
