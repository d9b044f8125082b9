import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import _oracles as oracle
from _graphs import N, R, build, random_hin
from hinrep import autodiff as ad
from hinrep.autodiff import Tape, Tensor
from hinrep.errors import ConfigError, DataError, DimensionError, UnknownEntityError
from hinrep.hin import Edge, Hin, Node
from hinrep.model import (EmbeddingTable, embed, forward, init_params, input_transform,
                          load_checkpoint, param_shapes, predict_stances, rgcn_layer,
                          save_checkpoint, stance_heads, ungated_layer)


def set_value(params, name, value):
    params[name].value[...] = value


def identity_params(d, n_layers=1, **kw):
    p = init_params(d, d, n_layers, 5, seed=0, **kw)
    for name, t in p.items():
        t.value[...] = 0.0
    return p


# ---------------------------------------------------------------- init


def test_init_is_deterministic_and_glorot_bounded():
    a = init_params(6, 4, 2, 5, seed=3)
    b = init_params(6, 4, 2, 5, seed=3)
    for name in a.tensors:
        assert np.array_equal(a[name].value, b[name].value)
        assert a[name].requires_grad
    W = a["input.W"].value
    assert np.abs(W).max() <= np.sqrt(6 / (6 + 4))
    assert not a["input.b"].value.any()


def test_default_input_shape():
    shapes = param_shapes(768, 512, 2, 5)
    assert shapes["input.W"] == (512, 768)
    assert shapes["layers.0.gate.W"] == (512, 1024)
    # 5 relation transforms per layer
    assert sum(1 for k in shapes if k.startswith("layers.1.R") and k.endswith(".W")) == 5


def test_zero_layers_has_only_input_and_heads():
    p = init_params(3, 4, 0, 5, seed=0)
    assert sorted(p.tensors) == sorted(["input.W", "input.b", "head_liberal.W", "head_liberal.b",
                                        "head_conservative.W", "head_conservative.b"])


def test_parameter_count_formula():
    d_in, d, L, D = 7, 6, 3, 5
    p = init_params(d_in, d, L, D, seed=0)
    expected = d * d_in + d + L * (6 * (d * d + d) + 2 * d * d + d) + 2 * (D * d + D)
    assert p.n_entries == expected


@pytest.mark.parametrize("kw", [dict(d_in=0), dict(d_hidden=-1), dict(n_labels=0), dict(n_layers=-1)])
def test_init_rejects_bad_dims(kw):
    args = dict(d_in=3, d_hidden=4, n_layers=1, n_labels=5) | kw
    with pytest.raises(ConfigError):
        init_params(**args, seed=0)


# ---------------------------------------------------------------- input transform


def test_input_transform_identity_example():
    p = init_params(2, 2, 0, 5, seed=0)
    set_value(p, "input.W", np.eye(2))
    out = input_transform(p, np.array([[1.0, -1.0], [0.0, 0.0]])).value
    np.testing.assert_allclose(out, [[1.0, -0.01], [0.0, 0.0]])


def test_input_transform_relu_variant():
    p = init_params(2, 2, 0, 5, seed=0, activation="relu")
    set_value(p, "input.W", np.eye(2))
    assert input_transform(p, np.array([[1.0, -1.0]])).value.tolist() == [[1.0, 0.0]]


def test_input_transform_matches_dense_recomputation():
    p = init_params(5, 4, 0, 5, seed=7)
    v = np.random.default_rng(7).normal(size=(6, 5))
    np.testing.assert_allclose(input_transform(p, v).value,
                               oracle.input_rows(oracle.raw(p), v), atol=1e-13)


def test_input_transform_dimension_error():
    p = init_params(5, 4, 0, 5, seed=7)
    with pytest.raises(DimensionError):
        input_transform(p, np.ones((3, 4)))


# ---------------------------------------------------------------- layers


def isolated_graph(x):
    return build([("a", N.LEGISLATOR)], [], features={"a": x})


def test_isolated_node_gated_half_average():
    x = np.array([0.5, -1.0, 2.0])
    p = identity_params(3)
    set_value(p, "layers.0.self.W", np.eye(3))
    out = rgcn_layer(p, 0, isolated_graph(x), Tensor(x[None, :])).value[0]
    np.testing.assert_allclose(out, 0.5 * np.tanh(x) + 0.5 * x, atol=1e-15)


def test_single_neighbor_aggregate_is_neighbor_state():
    from hinrep.model import aggregate
    h = build([("a", N.LEGISLATOR), ("b", N.PARTY)], [("a", "b", R.PARTY_AFFILIATION)], dim=2)
    p = identity_params(2)
    set_value(p, "layers.0.R1.W", np.eye(2))
    x = np.array([[1.0, 2.0], [3.0, -4.0]])
    u = aggregate(p, 0, h, Tensor(x)).value
    np.testing.assert_allclose(u, [[3.0, -4.0], [1.0, 2.0]])


def test_ungated_isolated_node_is_activation():
    x = np.array([0.5, -1.0])
    p = identity_params(2, gated=False)
    set_value(p, "layers.0.self.W", np.eye(2))
    out = ungated_layer(p, 0, isolated_graph(x), Tensor(x[None, :])).value[0]
    np.testing.assert_allclose(out, [0.5, -0.01])


def test_large_negative_gate_bias_passes_state_through():
    h = random_hin(2, n=8, dim=3)
    p = identity_params(3)
    set_value(p, "layers.0.gate.b", -50.0)
    x = np.random.default_rng(0).normal(size=(8, 3))
    out = rgcn_layer(p, 0, h, Tensor(x)).value
    np.testing.assert_allclose(out, x, atol=1e-20 + 1e-12)


@pytest.mark.parametrize("gated", [True, False])
@pytest.mark.parametrize("seed", range(3))
def test_layer_matches_straight_line_oracle(seed, gated):
    h = random_hin(100 + seed, n=20, dim=5)
    p = init_params(5, 6, 2, 5, seed=seed, gated=gated)
    ours = forward(p, h).value
    ref = oracle.forward_rows(oracle.raw(p), h, 2, gated=gated)
    assert np.abs(ours - ref).max() < 1e-10


def test_gate_entries_strictly_inside_unit_interval():
    h = random_hin(4, n=10, dim=3)
    p = init_params(3, 4, 1, 5, seed=1)
    x = input_transform(p, h.features)
    from hinrep.model import aggregate, linear
    u = aggregate(p, 0, h, x)
    g = ad.sigmoid(linear(ad.concat(u, x), p["layers.0.gate.W"], p["layers.0.gate.b"])).value
    assert np.all((g > 0) & (g < 1))


def test_ungated_variant_leaves_gate_grads_zero():
    h = random_hin(6, n=10, dim=3)
    p = init_params(3, 4, 2, 5, seed=0, gated=False)
    p.zero_grad()
    with Tape() as tape:
        loss = ad.sum_squares(forward(p, h))
    tape.backward(loss)
    assert not p["layers.0.gate.W"].grad.any() and not p["layers.1.gate.b"].grad.any()
    assert p["layers.0.self.W"].grad.any()


def test_forward_zero_layers_is_input_transform():
    h = random_hin(1, n=6, dim=3)
    p = init_params(3, 4, 0, 5, seed=0)
    np.testing.assert_array_equal(forward(p, h).value, input_transform(p, h.features).value)


def test_forward_shape_and_finiteness():
    h = random_hin(9, n=15, dim=4)
    p = init_params(4, 8, 3, 5, seed=2)
    emb = embed(p, h)
    assert isinstance(emb, EmbeddingTable)
    assert emb.values.shape == (15, 8) and np.all(np.isfinite(emb.values))


def test_forward_gradients_pass_grad_check():
    h = random_hin(21, n=20, dim=4)
    p = init_params(4, 5, 2, 5, seed=0)
    w = np.random.default_rng(0).normal(size=(20, 5))
    report = ad.grad_check(lambda: ad.sum_(ad.hadamard(forward(p, h), Tensor(w))),
                           dict(p.items()))
    assert report.passed, report.worst


# ---------------------------------------------------------------- heads


def test_zero_heads_are_uniform():
    p = init_params(3, 4, 0, 5, seed=0)
    set_value(p, "head_liberal.W", 0.0)
    lib, _ = stance_heads(p, Tensor(np.random.default_rng(0).normal(size=(3, 4))))
    np.testing.assert_allclose(lib.value, 0.2, atol=1e-15)


def test_head_rows_sum_to_one_and_peaked_logits():
    p = init_params(3, 5, 0, 5, seed=4)
    x = Tensor(np.random.default_rng(1).normal(size=(7, 5)))
    lib, con = stance_heads(p, x)
    np.testing.assert_allclose(lib.value.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(con.value.sum(axis=1), 1.0, atol=1e-12)
    set_value(p, "head_liberal.W", np.eye(5))
    peaked, _ = stance_heads(p, Tensor(np.array([[10.0, 0, 0, 0, 0]])))
    assert peaked.value.argmax() == 0
    np.testing.assert_allclose(peaked.value[0, 0], 1.0 / (1.0 + 4.0 * np.exp(-10.0)), rtol=1e-12)


def test_predict_stances_by_id():
    h = random_hin(3, n=8, dim=3)
    p = init_params(3, 4, 1, 5, seed=0)
    x = forward(p, h)
    lib, con = predict_stances(p, x, h, [h.ids[2], h.ids[0]])
    full_l, _ = stance_heads(p, x)
    np.testing.assert_allclose(lib.value, full_l.value[[2, 0]])
    with pytest.raises(UnknownEntityError):
        predict_stances(p, x, h, ["nope"])


# ---------------------------------------------------------------- equivariance


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000), st.integers(0, 1000))
def test_relabeling_nodes_permutes_embeddings(graph_seed, perm_seed):
    h = random_hin(graph_seed, n=12, dim=3)
    perm = np.random.default_rng(perm_seed).permutation(h.num_nodes)
    rename = {old: f"m{perm[i]:02d}" for i, old in enumerate(h.ids)}
    feats = {rename[k]: v for k, v in h.feature_map().items()}
    h2 = Hin([Node(rename[n.id], n.kind, n.name) for n in h.nodes],
             [Edge(rename[e.src], rename[e.dst], e.rel) for e in reversed(h.edges)], feats)
    p = init_params(3, 4, 2, 5, seed=0)
    a, b = embed(p, h), embed(p, h2)
    for old in h.ids:
        np.testing.assert_allclose(a.row(old), b.row(rename[old]), atol=1e-12)


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip(tmp_path):
    p = init_params(3, 4, 1, 5, seed=5, activation="relu")
    save_checkpoint(tmp_path / "c.json", p, {"seed": 5})
    q, cfg = load_checkpoint(tmp_path / "c.json")
    assert cfg == {"seed": 5} and q.arch() == p.arch()
    for name in p.tensors:
        assert np.array_equal(p[name].value, q[name].value)


def test_checkpoint_rejects_shape_mismatch(tmp_path):
    import json
    p = init_params(3, 4, 1, 5, seed=5)
    path = tmp_path / "c.json"
    save_checkpoint(path, p)
    doc = json.loads(path.read_text())
    doc["tensors"]["input.W"]["shape"] = [4, 4]
    path.write_text(json.dumps(doc))
    with pytest.raises(DataError, match="input.W"):
        load_checkpoint(path)
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "missing.json")


def test_snapshot_restore():
    p = init_params(3, 4, 1, 5, seed=5)
    snap = p.snapshot()
    p["input.W"].value += 1.0
    p.restore(snap)
    assert np.array_equal(p["input.W"].value, snap["input.W"])
