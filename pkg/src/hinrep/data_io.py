"""Dataset JSON loading and writing, fallback features, synthetic data, CSV export.

Dataset document::

    {"nodes":    [{"id": str, "kind": "N1".."N8", "name": str}, ...],
     "edges":    [{"src": str, "dst": str, "rel": "R1".."R5"}, ...],
     "features": {"dim": int, "vectors": {id: [float, ...]}},
     "labels":   [{"id": str, "source": "liberal"|"conservative", "score": float}]}

Nodes without a vector get :func:`default_features`.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, EnumerationError, SchemaError
from .hin import ACTOR_KINDS, Edge, Hin, Node, NodeKind, RelationKind
from .objectives import SOURCES, ExpertLabels, LabelEntry, bin_score

log = logging.getLogger(__name__)

FEATURE_SEED = 0
_KINDS = {k.value for k in NodeKind}
_RELS = {r.value for r in RelationKind}


def default_features(node_id, name, dim, seed=FEATURE_SEED):
    """Unit-norm pseudo-random vector keyed on ``(node_id, seed)``.

    ``name`` is accepted for signature symmetry with text encoders and does
    not influence the result.
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    digest = hashlib.sha256(f"{seed}\x00{node_id}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------- loading


def _require(cond, record, message):
    if not cond:
        raise SchemaError(record, message)


def _is_str(x):
    return isinstance(x, str) and x != ""


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def parse_dataset(doc, feature_seed=FEATURE_SEED):
    """Validate a decoded dataset document and build ``(Hin, ExpertLabels)``."""
    _require(isinstance(doc, dict), "dataset", "top level must be an object")
    for key in ("nodes", "edges"):
        _require(isinstance(doc.get(key), list), key, "missing or not a list")

    nodes = []
    for i, rec in enumerate(doc["nodes"]):
        where = f"nodes[{i}]"
        _require(isinstance(rec, dict), where, "must be an object")
        _require(_is_str(rec.get("id")), where, "field 'id' must be a non-empty string")
        if rec.get("kind") not in _KINDS:
            raise EnumerationError(where, f"unknown node kind {rec.get('kind')!r}")
        name = rec.get("name", rec["id"])
        _require(isinstance(name, str), where, "field 'name' must be a string")
        nodes.append(Node(rec["id"], NodeKind(rec["kind"]), name))

    edges = []
    for i, rec in enumerate(doc["edges"]):
        where = f"edges[{i}]"
        _require(isinstance(rec, dict), where, "must be an object")
        for key in ("src", "dst"):
            _require(_is_str(rec.get(key)), where, f"field {key!r} must be a non-empty string")
        if rec.get("rel") not in _RELS:
            raise EnumerationError(where, f"unknown relation {rec.get('rel')!r}")
        edges.append(Edge(rec["src"], rec["dst"], RelationKind(rec["rel"])))

    feats = doc.get("features", {})
    _require(isinstance(feats, dict), "features", "must be an object")
    dim = feats.get("dim")
    _require(isinstance(dim, int) and not isinstance(dim, bool) and dim > 0,
             "features.dim", f"must be a positive integer, got {dim!r}")
    vectors = feats.get("vectors", {})
    _require(isinstance(vectors, dict), "features.vectors", "must be an object")
    known = {n.id for n in nodes}
    for node_id, vec in vectors.items():
        where = f"features.vectors[{node_id!r}]"
        _require(node_id in known, where, "vector for an unknown node")
        _require(isinstance(vec, list) and all(_is_number(x) for x in vec), where,
                 "must be a list of finite numbers")
        _require(len(vec) == dim, where, f"length {len(vec)} != dim {dim}")
    features = {n.id: (np.array(vectors[n.id], dtype=np.float64) if n.id in vectors
                       else default_features(n.id, n.name, dim, feature_seed))
                for n in nodes}

    hin = Hin(nodes, edges, features)

    entries = []
    kind_of = {n.id: n.kind for n in nodes}
    raw_labels = doc.get("labels", [])
    _require(isinstance(raw_labels, list), "labels", "must be a list")
    for i, rec in enumerate(raw_labels):
        where = f"labels[{i}]"
        _require(isinstance(rec, dict), where, "must be an object")
        ent = rec.get("id")
        _require(ent in kind_of, where, f"label for unknown node {ent!r}")
        _require(kind_of[ent] in ACTOR_KINDS, where,
                 f"label on non-actor node {ent!r} ({kind_of[ent].value})")
        if rec.get("source") not in SOURCES:
            raise EnumerationError(where, f"unknown label source {rec.get('source')!r}")
        score = rec.get("score")
        _require(_is_number(score) and 0.0 <= score <= 1.0, where,
                 f"score must be a number in [0, 1], got {score!r}")
        entries.append(LabelEntry(ent, rec["source"], float(score), bin_score(score)))
    labels = ExpertLabels(tuple(entries))
    return hin, labels


def load_dataset(path):
    """Read, validate and return ``(Hin, ExpertLabels)`` from a dataset file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise DataError(f"dataset not found: {path}") from None
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    hin, labels = parse_dataset(doc)
    log.info("loaded %s: %s", path, summarize(hin, labels))
    return hin, labels


def summarize(hin, labels):
    return {
        "nodes": hin.num_nodes,
        "edges": hin.num_edges,
        "edges_per_relation": hin.relation_counts(),
        "labels_per_source": {s: len(labels.select(s)) for s in SOURCES},
    }


def dataset_document(hin, labels):
    """Canonical JSON-ready document; features are always written out."""
    return {
        "nodes": [{"id": n.id, "kind": n.kind.value, "name": n.name} for n in hin.nodes],
        "edges": [{"src": e.src, "dst": e.dst, "rel": e.rel.value} for e in hin.edges],
        "features": {"dim": hin.feature_dim,
                     "vectors": {n.id: hin.features[i].tolist() for i, n in enumerate(hin.nodes)}},
        "labels": [{"id": e.entity, "source": e.source, "score": e.score} for e in labels.entries],
    }


def write_dataset(path, hin, labels):
    Path(path).write_text(json.dumps(dataset_document(hin, labels)))


# ---------------------------------------------------------------- synthetic


@dataclass
class SynthConfig:
    n_legislators: int = 200
    n_states: int = 50
    n_terms: int = 4
    n_governors: int = 50
    n_presidents: int = 3
    n_justices: int = 9
    n_parties: int = 2
    feature_dim: int = 64
    beta: float = 0.5
    noise: float = 0.05
    label_coverage: float = 0.8
    seed: int = 0

    def __post_init__(self):
        counts = ("n_legislators", "n_states", "n_terms", "n_governors", "n_presidents",
                  "n_justices", "feature_dim")
        for name in counts:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_parties != 2:
            raise ConfigError("the synthetic generator models exactly two parties")
        for name in ("beta", "noise", "label_coverage"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")

    @property
    def num_nodes(self):
        return (self.n_legislators + self.n_states + self.n_terms + self.n_parties + 4
                + self.n_governors + self.n_presidents + self.n_justices)


INSTITUTIONS = (("inst:house", "House of Representatives"), ("inst:senate", "Senate"),
                ("inst:supreme_court", "Supreme Court"), ("inst:white_house", "White House"))
PARTY_MEANS = (0.15, 0.85)


def _balanced(rng, n):
    """Party assignment with counts differing by at most one, randomly ordered."""
    return rng.permutation(np.arange(n) % 2)


def _term_subset(rng, n_terms):
    keep = rng.random(n_terms) < 0.6
    if not keep.any():
        keep[rng.integers(n_terms)] = True
    return np.flatnonzero(keep)


def gen_synthetic(cfg=None):
    """Political graph with a planted two-party ideology.

    Each actor's ideology is its party mean (0.15 or 0.85) plus uniform
    noise in ``[-noise, noise]``, clamped to [0, 1].  Liberal score is the
    ideology, conservative score its complement; each source labels a
    random ``label_coverage`` share of actors.  Features are
    :func:`default_features` plus ``beta`` times a party direction
    (justices take the party of the president who appointed them).
    Topology and labels do not depend on ``beta``.
    """
    cfg = cfg or SynthConfig()
    rng = np.random.default_rng(cfg.seed)
    w = lambda n: len(str(max(n - 1, 0)))

    nodes, edges = [], []
    party_of = {}
    R = RelationKind

    terms = [f"term:{k:0{w(cfg.n_terms)}d}" for k in range(cfg.n_terms)]
    nodes += [Node(t, NodeKind.OFFICE_TERM, f"Term {k}") for k, t in enumerate(terms)]
    states = [f"state:{k:0{w(cfg.n_states)}d}" for k in range(cfg.n_states)]
    nodes += [Node(s, NodeKind.STATE, f"State {k}") for k, s in enumerate(states)]
    parties = [f"party:{k}" for k in range(cfg.n_parties)]
    nodes += [Node(p, NodeKind.PARTY, f"Party {'AB'[k]}") for k, p in enumerate(parties)]
    nodes += [Node(i, NodeKind.INSTITUTION, name) for i, name in INSTITUTIONS]

    def terms_edges(actor):
        for k in _term_subset(rng, cfg.n_terms):
            edges.append(Edge(actor, terms[k], R.TIME_IN_OFFICE))

    legislators = [f"leg:{k:0{w(cfg.n_legislators)}d}" for k in range(cfg.n_legislators)]
    leg_party = _balanced(rng, cfg.n_legislators)
    leg_state = {}
    for k, leg in enumerate(legislators):
        nodes.append(Node(leg, NodeKind.LEGISLATOR, f"Legislator {k}"))
        party_of[leg] = int(leg_party[k])
        leg_state[leg] = int(rng.integers(cfg.n_states))
        edges.append(Edge(leg, parties[party_of[leg]], R.PARTY_AFFILIATION))
        edges.append(Edge(leg, states[leg_state[leg]], R.HOME_STATE))
        chamber = "inst:senate" if rng.random() < 0.25 else "inst:house"
        edges.append(Edge(leg, chamber, R.HOLD_OFFICE))
        terms_edges(leg)

    governors = [f"gov:{k:0{w(cfg.n_governors)}d}" for k in range(cfg.n_governors)]
    gov_party = _balanced(rng, cfg.n_governors)
    for k, gov in enumerate(governors):
        nodes.append(Node(gov, NodeKind.GOVERNOR, f"Governor {k}"))
        party_of[gov] = int(gov_party[k])
        state = k % cfg.n_states
        edges.append(Edge(gov, parties[party_of[gov]], R.PARTY_AFFILIATION))
        edges.append(Edge(gov, states[state], R.HOME_STATE))
        terms_edges(gov)
        # governors occasionally appoint a same-party legislator from their state
        pool = [l for l in legislators if leg_state[l] == state and party_of[l] == party_of[gov]]
        if pool and rng.random() < 0.3:
            edges.append(Edge(gov, pool[int(rng.integers(len(pool)))], R.APPOINT))

    presidents = [f"pres:{k:0{w(cfg.n_presidents)}d}" for k in range(cfg.n_presidents)]
    for k, pres in enumerate(presidents):
        nodes.append(Node(pres, NodeKind.PRESIDENT, f"President {k}"))
        party_of[pres] = k % 2
        edges.append(Edge(pres, parties[party_of[pres]], R.PARTY_AFFILIATION))
        edges.append(Edge(pres, states[int(rng.integers(cfg.n_states))], R.HOME_STATE))
        edges.append(Edge(pres, "inst:white_house", R.HOLD_OFFICE))
        terms_edges(pres)

    justices = [f"just:{k:0{w(cfg.n_justices)}d}" for k in range(cfg.n_justices)]
    for k, just in enumerate(justices):
        nodes.append(Node(just, NodeKind.JUSTICE, f"Justice {k}"))
        pres = presidents[int(rng.integers(cfg.n_presidents))]
        party_of[just] = party_of[pres]
        edges.append(Edge(pres, just, R.APPOINT))
        edges.append(Edge(just, states[int(rng.integers(cfg.n_states))], R.HOME_STATE))
        edges.append(Edge(just, "inst:supreme_court", R.HOLD_OFFICE))
        terms_edges(just)

    actors = legislators + governors + presidents + justices
    noise = rng.uniform(-1.0, 1.0, size=len(actors)) * cfg.noise
    ideology = {a: float(np.clip(PARTY_MEANS[party_of[a]] + z, 0.0, 1.0))
                for a, z in zip(actors, noise)}
    records = []
    for source in ("liberal", "conservative"):
        chosen = rng.random(len(actors)) < cfg.label_coverage
        for a, keep in zip(actors, chosen):
            if keep:
                s = ideology[a] if source == "liberal" else 1.0 - ideology[a]
                records.append((a, source, s))
    labels = ExpertLabels.from_scores(records)

    direction = default_features("__party_direction__", "", cfg.feature_dim, cfg.seed)
    features = {}
    for node in nodes:
        v = default_features(node.id, node.name, cfg.feature_dim, cfg.seed)
        if node.id in party_of:
            v = v + cfg.beta * (1.0 if party_of[node.id] else -1.0) * direction
        features[node.id] = v
    return Hin(nodes, edges, features), labels


# ---------------------------------------------------------------- export


def export_embeddings(emb, hin, path):
    """Write ``id,kind,name,x_0..x_{d-1}`` CSV, one row per node."""
    values = emb.values if hasattr(emb, "values") else np.asarray(emb)
    if values.shape[0] != hin.num_nodes:
        raise ValueError(f"{values.shape[0]} embedding rows for {hin.num_nodes} nodes")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "kind", "name"] + [f"x_{k}" for k in range(values.shape[1])])
        for node, row in zip(hin.nodes, values):
            writer.writerow([node.id, node.kind.value, node.name] + [repr(float(x)) for x in row])


def read_embeddings(path):
    """Inverse of :func:`export_embeddings`: ``(ids, kinds, names, matrix)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = list(reader)
    ids = [r[0] for r in rows]
    kinds = [r[1] for r in rows]
    names = [r[2] for r in rows]
    return ids, kinds, names, np.array([[float(x) for x in r[3:]] for r in rows])
