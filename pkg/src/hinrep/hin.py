"""Typed heterogeneous graph of political actors and their social context."""

from __future__ import annotations

from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple

import numpy as np
from scipy import sparse

from .errors import SchemaError, UnknownEntityError


class NodeKind(str, Enum):
    OFFICE_TERM = "N1"
    LEGISLATOR = "N2"
    PRESIDENT = "N3"
    GOVERNOR = "N4"
    STATE = "N5"
    INSTITUTION = "N6"
    JUSTICE = "N7"
    PARTY = "N8"


class RelationKind(str, Enum):
    PARTY_AFFILIATION = "R1"
    HOME_STATE = "R2"
    HOLD_OFFICE = "R3"
    TIME_IN_OFFICE = "R4"
    APPOINT = "R5"


N = NodeKind
R = RelationKind

#: Node kinds that carry stances (legislators, presidents, governors, justices).
ACTOR_KINDS = frozenset({N.LEGISLATOR, N.PRESIDENT, N.GOVERNOR, N.JUSTICE})

_PARTISANS = (N.LEGISLATOR, N.PRESIDENT, N.GOVERNOR)
_OFFICE_HOLDERS = (N.LEGISLATOR, N.PRESIDENT, N.GOVERNOR, N.JUSTICE)

# Home state targets the state kind; the printed codomain for R2 is the governor kind.
ALLOWED_ENDPOINTS = {
    R.PARTY_AFFILIATION: frozenset((s, N.PARTY) for s in _PARTISANS),
    R.HOME_STATE: frozenset((s, N.STATE) for s in _OFFICE_HOLDERS),
    R.HOLD_OFFICE: frozenset((s, N.INSTITUTION) for s in _OFFICE_HOLDERS),
    R.TIME_IN_OFFICE: frozenset((s, N.OFFICE_TERM) for s in _OFFICE_HOLDERS),
    R.APPOINT: frozenset({(N.PRESIDENT, N.JUSTICE), (N.GOVERNOR, N.LEGISLATOR)}),
}


def validate_edge(src_kind, dst_kind, rel):
    """True iff an edge ``src -> dst`` of relation ``rel`` is permitted."""
    return (NodeKind(src_kind), NodeKind(dst_kind)) in ALLOWED_ENDPOINTS[RelationKind(rel)]


class Node(NamedTuple):
    id: str
    kind: NodeKind
    name: str


class Edge(NamedTuple):
    src: str
    dst: str
    rel: RelationKind


class Hin:
    """Immutable typed graph with per-node feature vectors.

    Edges are stored in their schema direction but every query treats them
    as undirected.  Nodes get contiguous indices in ascending id order.

    ``features`` maps node id to a vector; every node needs one and all
    must share a positive dimension.  Construction raises
    :class:`SchemaError` naming the first offending record, e.g.
    ``edges[4]``.
    """

    def __init__(self, nodes: Iterable[Node], edges: Iterable[Edge],
                 features: Mapping[str, np.ndarray]):
        nodes = [Node(n.id, NodeKind(n.kind), n.name) for n in nodes]
        if not nodes:
            raise SchemaError("nodes", "graph has no nodes")
        kind_of = {}
        for i, node in enumerate(nodes):
            if node.id in kind_of:
                raise SchemaError(f"nodes[{i}]", f"duplicate node id {node.id!r}")
            kind_of[node.id] = node.kind

        checked = []
        seen = set()
        for i, e in enumerate(edges):
            e = Edge(e.src, e.dst, RelationKind(e.rel))
            for end in (e.src, e.dst):
                if end not in kind_of:
                    raise SchemaError(f"edges[{i}]", f"unknown endpoint {end!r}")
            if not validate_edge(kind_of[e.src], kind_of[e.dst], e.rel):
                raise SchemaError(
                    f"edges[{i}]",
                    f"relation {e.rel.value} does not allow "
                    f"{kind_of[e.src].value} -> {kind_of[e.dst].value} "
                    f"({e.src!r} -> {e.dst!r})")
            if e in seen:
                raise SchemaError(f"edges[{i}]", f"duplicate edge {e.src!r} -> {e.dst!r} {e.rel.value}")
            seen.add(e)
            checked.append(e)

        order = sorted(nodes, key=lambda n: n.id)
        dim = None
        rows = []
        for node in order:
            if node.id not in features:
                raise SchemaError(f"features[{node.id!r}]", "missing feature vector")
            v = np.asarray(features[node.id], dtype=np.float64)
            if v.ndim != 1 or v.size == 0:
                raise SchemaError(f"features[{node.id!r}]", "feature must be a non-empty vector")
            if dim is None:
                dim = v.size
            elif v.size != dim:
                raise SchemaError(f"features[{node.id!r}]", f"dimension {v.size} != {dim}")
            if not np.all(np.isfinite(v)):
                raise SchemaError(f"features[{node.id!r}]", "non-finite feature value")
            rows.append(v)

        self._nodes = tuple(order)
        self._edges = tuple(checked)
        self._index = {n.id: i for i, n in enumerate(order)}
        feats = np.vstack(rows)
        feats.setflags(write=False)
        self._features = feats

    # -------------------------------------------------------------- basics

    @property
    def nodes(self):
        return self._nodes

    @property
    def edges(self):
        return self._edges

    @property
    def ids(self):
        return tuple(n.id for n in self._nodes)

    @property
    def features(self):
        """Read-only ``n x d_in`` matrix, row-aligned with :attr:`ids`."""
        return self._features

    @property
    def feature_dim(self):
        return self._features.shape[1]

    @property
    def num_nodes(self):
        return len(self._nodes)

    @property
    def num_edges(self):
        return len(self._edges)

    def __len__(self):
        return len(self._nodes)

    def __contains__(self, entity):
        return entity in self._index

    def __eq__(self, other):
        if not isinstance(other, Hin):
            return NotImplemented
        return (self._nodes == other._nodes
                and set(self._edges) == set(other._edges)
                and np.array_equal(self._features, other._features))

    def __repr__(self):
        return f"Hin(nodes={self.num_nodes}, edges={self.num_edges}, d_in={self.feature_dim})"

    def index(self, entity):
        try:
            return self._index[entity]
        except KeyError:
            raise UnknownEntityError(entity) from None

    def kind(self, entity):
        return self._nodes[self.index(entity)].kind

    def feature_map(self):
        return {n.id: self._features[i] for i, n in enumerate(self._nodes)}

    def indices_of_kinds(self, kinds):
        kinds = set(kinds)
        return np.array([i for i, n in enumerate(self._nodes) if n.kind in kinds], dtype=np.intp)

    @cached_property
    def actor_indices(self):
        return self.indices_of_kinds(ACTOR_KINDS)

    def relation_counts(self):
        counts = {r.value: 0 for r in RelationKind}
        for e in self._edges:
            counts[e.rel.value] += 1
        return counts

    # -------------------------------------------------------- neighborhoods

    @cached_property
    def _adjacency(self):
        """Per relation, a list of sorted neighbor-index arrays (symmetric)."""
        n = self.num_nodes
        sets = {r: [set() for _ in range(n)] for r in RelationKind}
        for e in self._edges:
            i, j = self._index[e.src], self._index[e.dst]
            sets[e.rel][i].add(j)
            sets[e.rel][j].add(i)
        return {r: [np.array(sorted(s), dtype=np.intp) for s in per_node]
                for r, per_node in sets.items()}

    def neighbor_indices(self, i, rel):
        return self._adjacency[RelationKind(rel)][i]

    def neighbors(self, entity, rel):
        """Ids adjacent to ``entity`` under ``rel``, in ascending id order."""
        i = self.index(entity)
        return [self._nodes[j].id for j in self.neighbor_indices(i, rel)]

    @cached_property
    def _positive_mask(self):
        n = self.num_nodes
        mask = np.zeros((n, n), dtype=bool)
        for e in self._edges:
            i, j = self._index[e.src], self._index[e.dst]
            mask[i, j] = mask[j, i] = True
        mask.setflags(write=False)
        return mask

    def positive_indices(self, i):
        return np.flatnonzero(self._positive_mask[i])

    def positive_set(self, entity):
        """Union of neighbors over all relations, excluding the entity itself."""
        i = self.index(entity)
        return {self._nodes[j].id for j in self.positive_indices(i)}

    def mean_adjacency(self, rel):
        """Sparse ``n x n`` CSR matrix whose row i averages over i's ``rel``-neighbors.

        Rows of nodes without neighbors under ``rel`` are zero.
        """
        return self._mean_adjacency[RelationKind(rel)]

    def message_sources(self, rel):
        """``(cols, A_sub)``: nodes with any ``rel``-neighbor and the matching columns of
        :meth:`mean_adjacency`, so ``A @ M == A_sub @ M[cols]``."""
        return self._message_sources[RelationKind(rel)]

    @cached_property
    def _message_sources(self):
        out = {}
        for r, A in self._mean_adjacency.items():
            cols = np.flatnonzero(np.diff(A.tocsc().indptr))
            out[r] = (cols, A[:, cols].tocsr())
        return out

    @cached_property
    def _mean_adjacency(self):
        n = self.num_nodes
        out = {}
        for r, per_node in self._adjacency.items():
            rows, cols, vals = [], [], []
            for i, nbrs in enumerate(per_node):
                if not nbrs.size:
                    continue
                rows.extend([i] * nbrs.size)
                cols.extend(nbrs.tolist())
                vals.extend([1.0 / nbrs.size] * nbrs.size)
            out[r] = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
        return out

    def negative_indices(self, i, k, rng):
        """Draw up to ``k`` distinct non-neighbors of node ``i`` (never ``i`` itself)."""
        if k < 0:
            raise ValueError("k must be non-negative")
        if k == 0:
            return np.empty(0, dtype=np.intp)
        candidates = np.flatnonzero(~self._positive_mask[i])
        candidates = candidates[candidates != i]
        if candidates.size <= k:
            return candidates
        return rng.choice(candidates, size=k, replace=False)

    def sample_negatives(self, entity, k, rng):
        """Up to ``k`` ids drawn uniformly without replacement from non-neighbors."""
        i = self.index(entity)
        return [self._nodes[j].id for j in self.negative_indices(i, k, rng)]

    # ------------------------------------------------------------- ablation

    def _with_edges(self, edges):
        return Hin(self._nodes, edges, self.feature_map())

    def with_features(self, features):
        return Hin(self._nodes, self._edges, features)

    def drop_relation(self, rels):
        """Copy of the graph without any edge of the given relations."""
        rels = {RelationKind(r) for r in rels}
        return self._with_edges([e for e in self._edges if e.rel not in rels])

    def drop_edge_fraction(self, fraction, rng):
        """Copy of the graph with ``floor(fraction * |E|)`` edges removed uniformly."""
        if not 0.0 <= fraction <= 1.0:
            raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
        m = self.num_edges
        n_drop = int(np.floor(round(fraction * m, 9)))
        drop = set(rng.choice(m, size=n_drop, replace=False).tolist()) if n_drop else set()
        return self._with_edges([e for k, e in enumerate(self._edges) if k not in drop])
