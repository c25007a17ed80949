"""Cold/hot serving parity, cache staleness, tie-breaking, latency trials."""

import numpy as np
import pytest

from fuserec import text
from fuserec.errors import StaleCacheError
from fuserec.fusion import PredictionHead
from fuserec.graph import build_graph, encode
from fuserec.model import copy_model, init_model
from fuserec.serve import (
    EmbeddingCache,
    Server,
    precompute,
    run_latency_trial,
    serve_topk,
)


def serving_world(variant="hybrid", n_users=12, n_items=9, seed=0):
    rng = np.random.default_rng(seed)
    recs = []
    for u in range(n_users):
        for it in rng.choice(n_items, size=3, replace=False):
            recs.append((f"u{u}", f"i{it}"))
    graph, idmap = build_graph(recs, extra_items=[f"i{j}" for j in range(n_items)])
    texts = {
        graph.num_users + j: f"thing number {j} with words {j % 3}"
        for j in range(n_items)
    }
    corpus = text.tokenize_corpus(texts, graph.num_nodes, num_buckets=128)
    model = init_model(
        graph.num_nodes, variant=variant, d_g=6, d_s=6, d_h=8,
        num_layers=2, num_buckets=128, seed=seed,
    )
    return graph, idmap, corpus, model


def all_items(graph):
    return np.arange(graph.num_users, graph.num_nodes, dtype=np.int64)


class TestPrecompute:
    def test_matches_direct_encoders(self):
        graph, _, corpus, model = serving_world()
        cache = precompute(model, graph, corpus)
        h = encode(graph, model.node_table, model.effective_gnn_weights())
        e, _ = text.encode_nodes(corpus, model.text_table)
        assert np.array_equal(cache.structural, h)
        assert np.array_equal(cache.semantic, e)
        assert cache.model_version == model.version_hash()

    def test_unused_sides_are_zero(self):
        graph, _, corpus, model = serving_world(variant="gnn_only")
        cache = precompute(model, graph, corpus)
        assert np.all(cache.semantic == 0.0)
        graph, _, corpus, model = serving_world(variant="text_only")
        cache = precompute(model, graph, corpus)
        assert np.all(cache.structural == 0.0)


@pytest.mark.parametrize("variant", ["hybrid", "gnn_only", "text_only"])
def test_hot_equals_cold_for_every_user(variant):
    graph, _, corpus, model = serving_world(variant=variant)
    server = Server(model, graph, corpus)
    server.build_cache()
    cand = all_items(graph)
    for u in range(graph.num_users):
        hot, _ = server.topk(u, 5, "hot", cand)
        cold, _ = server.topk(u, 5, "cold", cand)
        assert np.array_equal(hot, cold), f"user {u} diverged"


def test_quantized_hot_equals_cold():
    graph, _, corpus, model = serving_world()
    server = Server(model, graph, corpus, quantize=True)
    server.build_cache()
    cand = all_items(graph)
    for u in range(graph.num_users):
        hot, _ = server.topk(u, 4, "hot", cand)
        cold, _ = server.topk(u, 4, "cold", cand)
        assert np.array_equal(hot, cold)


def test_hot_without_cache_is_an_error():
    graph, _, corpus, model = serving_world()
    server = Server(model, graph, corpus)
    with pytest.raises(StaleCacheError):
        server.topk(0, 3, "hot", all_items(graph))


def test_stale_cache_is_an_error_not_a_fallback():
    graph, _, corpus, model = serving_world()
    other = copy_model(model)
    other.head.out_bias += 1.0
    stale = precompute(other, graph, corpus)
    server = Server(model, graph, corpus, cache=stale)
    with pytest.raises(StaleCacheError):
        server.topk(0, 3, "hot", all_items(graph))
    # cold mode never consults the cache
    top, _ = server.topk(0, 3, "cold", all_items(graph))
    assert top.size == 3


def passthrough_head(d_g, d_s):
    """Head whose logit equals the h_i block's first coordinate exactly.

    relu(x) - relu(-x) == x recovers the signed value through the hidden
    nonlinearity.
    """
    in_dim = 2 * (d_g + d_s)
    hidden = np.zeros((in_dim, 2))
    hidden[d_g + d_s, 0] = 1.0
    hidden[d_g + d_s, 1] = -1.0
    return PredictionHead(
        hidden=hidden,
        hidden_bias=np.zeros(2),
        out=np.array([1.0, -1.0]),
        out_bias=0.0,
    )


def test_ranking_from_known_logits():
    graph, idmap, corpus, model = serving_world()
    model.head = passthrough_head(model.d_g, model.d_s)
    server = Server(model, graph, corpus)
    cache = server.build_cache()
    c1 = idmap.items["i1"] + graph.num_users
    c2 = idmap.items["i2"] + graph.num_users
    c3 = idmap.items["i3"] + graph.num_users
    cache.structural[c1, 0] = 0.2
    cache.structural[c2, 0] = -0.1
    cache.structural[c3, 0] = 0.9
    top, _ = server.topk(0, 3, "hot", [c1, c2, c3])
    assert top.tolist() == [c3, c1, c2]


def test_ties_break_by_ascending_item_id():
    graph, _, corpus, model = serving_world()
    # zero head scores every candidate identically
    model.head = PredictionHead(
        hidden=np.zeros((model.fused_dim, 2)),
        hidden_bias=np.zeros(2),
        out=np.zeros(2),
        out_bias=0.0,
    )
    server = Server(model, graph, corpus)
    server.build_cache()
    cand = all_items(graph)[::-1].copy()  # hand them over in descending order
    top, _ = server.topk(0, 4, "hot", cand)
    assert top.tolist() == sorted(cand.tolist())[:4]


def test_k_larger_than_candidates_returns_everything():
    graph, _, corpus, model = serving_world()
    server = Server(model, graph, corpus)
    cand = all_items(graph)[:3]
    top, _ = server.topk(0, 50, "cold", cand)
    assert sorted(top.tolist()) == sorted(cand.tolist())


def test_empty_candidates_rejected():
    graph, _, corpus, model = serving_world()
    server = Server(model, graph, corpus)
    with pytest.raises(ValueError):
        server.topk(0, 3, "cold", [])


def test_unknown_mode_rejected():
    graph, _, corpus, model = serving_world()
    server = Server(model, graph, corpus)
    with pytest.raises(ValueError):
        server.topk(0, 3, "warm", all_items(graph))


def test_serve_topk_one_shot_matches_server():
    graph, _, corpus, model = serving_world()
    cand = all_items(graph)
    via_fn, sample = serve_topk(2, 5, "cold", cand, model, graph, corpus)
    server = Server(model, graph, corpus)
    via_server, _ = server.topk(2, 5, "cold", cand)
    assert np.array_equal(via_fn, via_server)
    assert sample.mode == "cold" and sample.elapsed_ms >= 0.0


def test_latency_trial_counts_and_warmup():
    graph, _, corpus, model = serving_world()
    server = Server(model, graph, corpus)
    server.build_cache()
    users = np.arange(graph.num_users, dtype=np.int64)
    cand = all_items(graph)
    sets = {int(u): cand for u in users}
    stats = run_latency_trial(server, users, sets, "hot", 3, n_requests=40, warmup=5, seed=0)
    assert stats.count == 40
    assert stats.mean_ms > 0.0
    assert stats.min_ms <= stats.p50_ms <= stats.p99_ms <= stats.max_ms


def test_latency_trial_replays_same_users(monkeypatch):
    graph, _, corpus, model = serving_world()
    server = Server(model, graph, corpus)
    server.build_cache()
    users = np.arange(graph.num_users, dtype=np.int64)
    sets = {int(u): all_items(graph) for u in users}

    seen = []
    orig = Server.topk

    def spy(self, user, k, mode, candidates, request_id=0):
        seen.append(user)
        return orig(self, user, k, mode, candidates, request_id)

    monkeypatch.setattr(Server, "topk", spy)
    run_latency_trial(server, users, sets, "hot", 3, n_requests=10, warmup=2, seed=9)
    first = list(seen)
    seen.clear()
    run_latency_trial(server, users, sets, "hot", 3, n_requests=10, warmup=2, seed=9)
    assert seen == first
