import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def dense_propagation(graph, h, w, activation="relu"):
    """Reference oracle: D^(-1/2) A D^(-1/2) H W built from dense matrices.

    Deliberately does NOT share code with fuserec.graph. Zero-degree nodes
    get a zero row (their adjacency row is empty, so the normalization
    never divides by zero).
    """
    n = graph.num_nodes
    a = np.zeros((n, n), dtype=np.float64)
    for v in range(n):
        for u in graph.neighbors(v):
            a[v, u] = 1.0
    deg = a.sum(axis=1)
    d_inv_sqrt = np.zeros(n)
    nz = deg > 0
    d_inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    norm = np.diag(d_inv_sqrt) @ a @ np.diag(d_inv_sqrt)
    pre = norm @ h @ w
    if activation == "relu":
        return np.maximum(pre, 0.0)
    return pre


def random_bipartite(rng, max_nodes=50):
    """Random interaction list plus its built graph, at most max_nodes nodes."""
    from fuserec.graph import build_graph

    n_users = int(rng.integers(1, max_nodes // 2))
    n_items = int(rng.integers(1, max_nodes - n_users))
    n_edges = int(rng.integers(1, 4 * (n_users + n_items)))
    inter = [
        (f"u{rng.integers(n_users)}", f"i{rng.integers(n_items)}")
        for _ in range(n_edges)
    ]
    # keep some isolated nodes around via the extra-id path
    graph, idmap = build_graph(
        inter,
        extra_users=[f"u{k}" for k in range(n_users)],
        extra_items=[f"i{k}" for k in range(n_items)],
    )
    return graph, idmap
