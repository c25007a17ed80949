"""Bipartite user-item interaction graph and structural embedding propagation.

Nodes share one dense id space: users first (0..num_users-1), then items
(num_users..num_users+num_items-1). The adjacency is stored symmetrically in
CSR form; each edge also carries the precomputed normalization weight
1 / sqrt(deg(v) * deg(u)), so one layer of propagation is

    h_v  <-  act( sum_{u in N(v)} h_u / sqrt(deg v * deg u)  @  W )

There are no self loops: a node without neighbors propagates to the zero
vector, which is intentional and covered by tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Sequence, Tuple

import numpy as np

from fuserec import kernels
from fuserec.errors import DimensionError, EmptyGraphError, NonEdgeError
from fuserec.linalg import Array, apply_activation


@dataclass
class IdMap:
    """External user/item ids to dense internal indices (and back)."""

    users: Dict[Hashable, int] = field(default_factory=dict)
    items: Dict[Hashable, int] = field(default_factory=dict)

    def user_node(self, user_id) -> int:
        return self.users[user_id]

    def item_node(self, item_id, num_users: int) -> int:
        return num_users + self.items[item_id]


@dataclass
class InteractionGraph:
    num_users: int
    num_items: int
    indptr: np.ndarray  # int64, length num_nodes + 1
    indices: np.ndarray  # int64, neighbor node ids
    edge_norm: np.ndarray  # float64, 1/sqrt(deg v * deg u) aligned with indices
    degree: np.ndarray  # int64 per node

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items

    @property
    def num_edges(self) -> int:
        # undirected edge count; storage is symmetric
        return self.indices.shape[0] // 2

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def item_node_id(self, item_index: int) -> int:
        return self.num_users + item_index

    def user_positive_items(self, user: int) -> np.ndarray:
        """Item indices (0-based within items) the user has interacted with."""
        return self.neighbors(user) - self.num_users


def build_graph(
    interactions: Sequence[Tuple],
    extra_users: Sequence[Hashable] = (),
    extra_items: Sequence[Hashable] = (),
) -> Tuple[InteractionGraph, IdMap]:
    """Build the deduplicated bipartite graph from (user, item, ...) records.

    Records may carry weight and timestamp fields after the two ids; both are
    ignored here. Duplicated pairs collapse to one edge. ``extra_users`` and
    ``extra_items`` reserve dense ids for nodes that have no train edges yet
    (they end up with degree zero), so a catalog can include cold items.
    """
    if len(interactions) == 0:
        raise EmptyGraphError("no interactions: the pipeline requires at least one edge")

    idmap = IdMap()
    for rec in interactions:
        u, i = rec[0], rec[1]
        if isinstance(u, (int, np.integer)) and u < 0:
            raise ValueError(f"negative user id: {u}")
        if isinstance(i, (int, np.integer)) and i < 0:
            raise ValueError(f"negative item id: {i}")
        if u not in idmap.users:
            idmap.users[u] = len(idmap.users)
        if i not in idmap.items:
            idmap.items[i] = len(idmap.items)
    for u in extra_users:
        if u not in idmap.users:
            idmap.users[u] = len(idmap.users)
    for i in extra_items:
        if i not in idmap.items:
            idmap.items[i] = len(idmap.items)

    num_users = len(idmap.users)
    num_items = len(idmap.items)
    n = num_users + num_items

    pairs = np.empty((len(interactions), 2), dtype=np.int64)
    for k, rec in enumerate(interactions):
        pairs[k, 0] = idmap.users[rec[0]]
        pairs[k, 1] = num_users + idmap.items[rec[1]]
    pairs = np.unique(pairs, axis=0)

    # Symmetric COO -> CSR.
    src = np.concatenate([pairs[:, 0], pairs[:, 1]])
    dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    degree = np.bincount(src, minlength=n).astype(np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(degree, out=indptr[1:])
    edge_norm = 1.0 / np.sqrt(degree[src] * degree[dst]).astype(np.float64)
    return (
        InteractionGraph(
            num_users=num_users,
            num_items=num_items,
            indptr=indptr,
            indices=dst,
            edge_norm=edge_norm,
            degree=degree,
        ),
        idmap,
    )


def norm_constant(graph: InteractionGraph, v: int, u: int) -> float:
    """c_vu = sqrt(deg v * deg u) for an existing edge (v, u)."""
    row = graph.neighbors(v)
    if u not in row:
        raise NonEdgeError(f"({v}, {u}) is not an edge")
    return math.sqrt(float(graph.degree[v]) * float(graph.degree[u]))


def propagate(
    graph: InteractionGraph,
    h_prev: Array,
    w: Array,
    activation: str = "relu",
) -> Array:
    """One propagation layer: act(normalized neighbor sum of h_prev, times w)."""
    if h_prev.shape[0] != graph.num_nodes:
        raise DimensionError(
            f"h_prev has {h_prev.shape[0]} rows, graph has {graph.num_nodes} nodes"
        )
    if w.shape[0] != h_prev.shape[1]:
        raise DimensionError(
            f"weight rows {w.shape[0]} do not match embedding dim {h_prev.shape[1]}"
        )
    agg = kernels.csr_aggregate(graph.indptr, graph.indices, graph.edge_norm, h_prev)
    return apply_activation(agg @ w, activation)


def propagate_rows(
    graph: InteractionGraph,
    h_prev: Array,
    w: Array,
    rows: np.ndarray,
    activation: str = "relu",
) -> Array:
    """Propagate only the listed node rows (cold-path recomputation)."""
    agg = kernels.csr_aggregate_rows(
        graph.indptr, graph.indices, graph.edge_norm, h_prev, rows
    )
    return apply_activation(agg @ w, activation)


def encode(
    graph: InteractionGraph,
    h0: Array,
    weights: Sequence[Array],
) -> Array:
    """Stack L propagation layers; hidden layers use relu, the last identity."""
    if len(weights) < 1:
        raise DimensionError("encode requires at least one layer weight")
    h = h0
    last = len(weights) - 1
    for l, w in enumerate(weights):
        h = propagate(graph, h, w, "identity" if l == last else "relu")
    return h


def layer_activations(graph: InteractionGraph, h0: Array, weights: Sequence[Array]):
    """encode() keeping per-layer intermediates, for the training backward pass.

    Returns (aggregated, pre_activation, output) lists indexed by layer.
    """
    aggs: List[Array] = []
    pres: List[Array] = []
    outs: List[Array] = [h0]
    last = len(weights) - 1
    for l, w in enumerate(weights):
        agg = kernels.csr_aggregate(graph.indptr, graph.indices, graph.edge_norm, outs[-1])
        pre = agg @ w
        aggs.append(agg)
        pres.append(pre)
        outs.append(apply_activation(pre, "identity" if l == last else "relu"))
    return aggs, pres, outs
