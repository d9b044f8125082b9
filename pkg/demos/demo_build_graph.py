"""
Building and querying a political graph
=======================================

Nodes carry one of eight kinds and edges one of five relations; each
relation only admits certain (source kind, target kind) pairs.
"""

import numpy as np

from hinrep.errors import SchemaError
from hinrep.hin import Edge, Hin, Node, NodeKind as N, RelationKind as R, validate_edge

# two legislators in one party, a governor of their state who appointed one of them
nodes = [
    Node("leg:a", N.LEGISLATOR, "Legislator A"),
    Node("leg:b", N.LEGISLATOR, "Legislator B"),
    Node("gov:x", N.GOVERNOR, "Governor X"),
    Node("party:d", N.PARTY, "Party D"),
    Node("state:s", N.STATE, "State S"),
]
edges = [
    Edge("leg:a", "party:d", R.PARTY_AFFILIATION),
    Edge("leg:b", "party:d", R.PARTY_AFFILIATION),
    Edge("gov:x", "party:d", R.PARTY_AFFILIATION),
    Edge("gov:x", "state:s", R.HOME_STATE),
    Edge("leg:a", "state:s", R.HOME_STATE),
    Edge("gov:x", "leg:b", R.APPOINT),
]
rng = np.random.default_rng(0)
features = {n.id: rng.standard_normal(4) for n in nodes}
hin = Hin(nodes, edges, features)
print(hin.num_nodes, "nodes,", hin.num_edges, "edges", hin.relation_counts())

# edges are traversed both ways, so the party sees all three members
print("party members:", hin.neighbors("party:d", R.PARTY_AFFILIATION))
print("leg:b positives:", sorted(hin.positive_set("leg:b")))

# negatives come from outside the positive set and never include the node itself
print("negatives for leg:b:", hin.sample_negatives("leg:b", 2, np.random.default_rng(1)))

# the relation table is checked on construction
print(validate_edge(N.PRESIDENT, N.JUSTICE, R.APPOINT), validate_edge(N.JUSTICE, N.PARTY, R.PARTY_AFFILIATION))
try:
    Hin(nodes, edges + [Edge("party:d", "leg:a", R.PARTY_AFFILIATION)], features)
except SchemaError as exc:
    print("rejected:", exc)

# row-normalized adjacency per relation drives the mean aggregation
A = hin.mean_adjacency(R.PARTY_AFFILIATION).toarray()
print(np.round(A, 3))

# ablations work on copies
print(hin.drop_relation([R.APPOINT]).num_edges, hin.num_edges)
