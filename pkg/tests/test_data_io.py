import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _malformed import CASES, base
from hinrep.errors import ConfigError, DataError, EnumerationError, SchemaError
from hinrep.hin import NodeKind, validate_edge
from hinrep.data_io import (SynthConfig, default_features, export_embeddings, gen_synthetic,
                            load_dataset, parse_dataset, read_embeddings, write_dataset)

TINY = SynthConfig(n_legislators=12, n_states=3, n_terms=2, n_governors=3, n_presidents=2,
                   n_justices=3, feature_dim=6, seed=1)


# ---------------------------------------------------------------- features


def test_default_features_deterministic_unit_norm():
    a = default_features("leg:1", "x", 16)
    assert np.array_equal(a, default_features("leg:1", "other name", 16))
    assert abs(np.linalg.norm(a) - 1.0) < 1e-12
    assert not np.array_equal(a, default_features("leg:1", "x", 16, seed=1))
    with pytest.raises(ValueError):
        default_features("a", "a", 0)


def test_default_features_distinct_ids_not_parallel():
    vecs = [default_features(f"node{i}", "", 64) for i in range(200)]
    cos = [float(vecs[2 * k] @ vecs[2 * k + 1]) for k in range(100)]
    assert max(cos) < 0.99


# ---------------------------------------------------------------- loading


def minimal():
    return {"nodes": [{"id": "l", "kind": "N3", "name": "Leg"}, {"id": "p", "kind": "N8", "name": "P"}],
            "edges": [{"src": "l", "dst": "p", "rel": "R1"}],
            "features": {"dim": 4}}


def test_minimal_file_loads(tmp_path):
    path = tmp_path / "d.json"
    path.write_text(json.dumps(minimal()))
    hin, labels = load_dataset(path)
    assert hin.num_nodes == 2 and hin.num_edges == 1 and len(labels) == 0
    np.testing.assert_array_equal(hin.features[0], default_features("l", "Leg", 4))


def test_unknown_relation_is_enumeration_error():
    doc = minimal()
    doc["edges"][0]["rel"] = "R9"
    with pytest.raises(EnumerationError, match=r"edges\[0\]"):
        parse_dataset(doc)


def test_missing_and_unreadable_files(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_dataset(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(DataError):
        load_dataset(bad)


def test_scores_are_binned_at_load():
    doc = base()
    doc["labels"] = [{"id": "leg", "source": "liberal", "score": 0.95},
                     {"id": "gov", "source": "conservative", "score": 0.1}]
    _, labels = parse_dataset(doc)
    assert [e.label for e in labels.entries] == [4, 1]


def test_malformed_corpus_size():
    assert len(CASES) >= 10


@pytest.mark.parametrize("name, doc, record", CASES, ids=[c[0] for c in CASES])
def test_malformed_documents_name_the_record(name, doc, record):
    with pytest.raises(SchemaError) as info:
        parse_dataset(doc)
    assert record in str(info.value)
    assert isinstance(info.value, DataError)


def test_round_trip_through_writer(tmp_path):
    hin, labels = gen_synthetic(TINY)
    write_dataset(tmp_path / "a.json", hin, labels)
    h2, l2 = load_dataset(tmp_path / "a.json")
    assert h2 == hin and l2 == labels
    write_dataset(tmp_path / "b.json", h2, l2)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


# ---------------------------------------------------------------- synthetic


def test_gen_is_deterministic():
    a, b = gen_synthetic(TINY), gen_synthetic(TINY)
    assert a == b
    assert gen_synthetic(replace(TINY, seed=2)) != a


@settings(max_examples=10, deadline=None)
@given(st.floats(0, 1), st.integers(0, 50))
def test_beta_changes_features_only(beta, seed):
    cfg = replace(TINY, seed=seed)
    h0, l0 = gen_synthetic(cfg)
    h1, l1 = gen_synthetic(replace(cfg, beta=beta))
    assert h0.nodes == h1.nodes and h0.edges == h1.edges and l0 == l1
    if beta != cfg.beta:
        assert not np.array_equal(h0.features, h1.features)


def test_node_count_arithmetic():
    cfg = SynthConfig(n_legislators=200, n_states=50, n_terms=4, n_governors=7, n_presidents=3,
                      n_justices=5, feature_dim=4)
    hin, _ = gen_synthetic(cfg)
    assert hin.num_nodes == 200 + 50 + 4 + 2 + 4 + 7 + 3 + 5 == cfg.num_nodes
    counts = {k: sum(n.kind == k for n in hin.nodes) for k in NodeKind}
    assert counts[NodeKind.LEGISLATOR] == 200 and counts[NodeKind.INSTITUTION] == 4


def test_default_graph_size():
    hin, labels = gen_synthetic()
    assert hin.num_nodes == 322 and hin.feature_dim == 64
    assert 0.7 < len(labels.select("liberal")) / 262 < 0.9


def test_noise_free_labels_follow_party():
    hin, labels = gen_synthetic(replace(TINY, noise=0.0, beta=1.0))
    lib = {e.entity: e.label for e in labels.select("liberal")}
    con = {e.entity: e.label for e in labels.select("conservative")}
    assert set(lib.values()) <= {1, 3}
    for ent in set(lib) & set(con):
        assert con[ent] == 4 - lib[ent]
    party = {e.src: e.dst for e in hin.edges if e.rel.value == "R1"}
    for ent, lbl in lib.items():
        if ent in party:
            assert lbl == (1 if party[ent] == "party:0" else 3)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_every_generated_edge_is_valid(seed):
    hin, labels = gen_synthetic(replace(TINY, seed=seed))
    for e in hin.edges:
        assert validate_edge(hin.kind(e.src), hin.kind(e.dst), e.rel)
    assert all(0 <= e.score <= 1 for e in labels.entries)


@pytest.mark.parametrize("kw", [dict(noise=2.0), dict(beta=-0.1), dict(n_legislators=0),
                                dict(n_parties=3)])
def test_synth_config_validation(kw):
    with pytest.raises(ConfigError):
        SynthConfig(**kw)


# ---------------------------------------------------------------- export


def test_export_embeddings_shape_and_round_trip(tmp_path):
    hin, _ = gen_synthetic(TINY)
    emb = np.random.default_rng(0).normal(size=(hin.num_nodes, 5)) * 1e3
    path = tmp_path / "e.csv"
    export_embeddings(emb, hin, path)
    lines = path.read_text().splitlines()
    assert len(lines) == hin.num_nodes + 1
    assert all(len(line.split(",")) == 5 + 3 for line in lines)
    ids, kinds, _, back = read_embeddings(path)
    assert ids == list(hin.ids)
    assert set(kinds) <= {k.value for k in NodeKind}
    assert np.abs(back - emb).max() < 1e-9


def test_export_rejects_row_mismatch(tmp_path):
    hin, _ = gen_synthetic(TINY)
    with pytest.raises(ValueError):
        export_embeddings(np.zeros((3, 2)), hin, tmp_path / "e.csv")
