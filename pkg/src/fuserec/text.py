"""Deterministic hashed bag-of-words text encoder.

Stands in for a heavyweight language-model encoder behind the same
interface: text in, fixed-width vector out. Tokens are hashed with FNV-1a
(64-bit) into a bucket table of learnable vectors; a document embedding is
the count-weighted bucket sum, L2-normalized. Empty text maps to the zero
vector. The bucket hash is pinned so corpora re-encode identically across
runs and machines.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple

import numpy as np

from fuserec.linalg import Array

DEFAULT_BUCKETS = 1 << 18

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a_64(token: str) -> int:
    """FNV-1a 64-bit hash of the token's UTF-8 bytes."""
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def tokenize(text: str) -> Counter:
    """Lowercase, split on every non-alphanumeric codepoint, drop empties."""
    bag: Counter = Counter()
    word: List[str] = []
    for ch in text.lower():
        if ch.isalnum():
            word.append(ch)
        elif word:
            bag["".join(word)] += 1
            word.clear()
    if word:
        bag["".join(word)] += 1
    return bag


def bucket(token: str, num_buckets: int) -> int:
    return fnv1a_64(token) % num_buckets


def make_text_table(num_buckets: int, dim: int, seed: int) -> Array:
    """Bucket embedding table, rows ~ N(0, 1/dim) from the seeded generator."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((num_buckets, dim)) / np.sqrt(dim)


def bag_to_buckets(bag: Counter, num_buckets: int) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted (bucket ids, counts) for a token bag; collisions merge counts."""
    acc: Dict[int, float] = {}
    for token, count in bag.items():
        b = bucket(token, num_buckets)
        acc[b] = acc.get(b, 0.0) + count
    if not acc:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    ids = np.fromiter(sorted(acc), count=len(acc), dtype=np.int64)
    counts = np.array([acc[int(b)] for b in ids], dtype=np.float64)
    return ids, counts


def encode_text(text: str, table: Array) -> Array:
    """Embed one document: normalized count-weighted bucket sum, or zeros."""
    ids, counts = bag_to_buckets(tokenize(text), table.shape[0])
    if ids.size == 0:
        return np.zeros(table.shape[1], dtype=np.float64)
    v = counts @ table[ids]
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return np.zeros(table.shape[1], dtype=np.float64)
    return v / norm


@dataclass
class TokenizedCorpus:
    """Per-node bucket counts in CSR form over the graph's node id space.

    Nodes without text have empty rows and encode to the zero vector.
    """

    num_buckets: int
    indptr: np.ndarray  # int64, num_nodes + 1
    bucket_ids: np.ndarray  # int64
    counts: np.ndarray  # float64

    @property
    def num_nodes(self) -> int:
        return self.indptr.shape[0] - 1

    def node_slice(self, node: int) -> slice:
        return slice(self.indptr[node], self.indptr[node + 1])


def tokenize_corpus(
    texts_by_node: Dict[int, str], num_nodes: int, num_buckets: int = DEFAULT_BUCKETS
) -> TokenizedCorpus:
    """Tokenize and hash every node's text once, ahead of training/serving."""
    per_node: List[Tuple[np.ndarray, np.ndarray]] = []
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    for node in range(num_nodes):
        text = texts_by_node.get(node, "")
        ids, counts = bag_to_buckets(tokenize(text), num_buckets)
        per_node.append((ids, counts))
        indptr[node + 1] = indptr[node] + ids.size
    total = int(indptr[-1])
    bucket_ids = np.empty(total, dtype=np.int64)
    counts_arr = np.empty(total, dtype=np.float64)
    for node, (ids, counts) in enumerate(per_node):
        s = indptr[node]
        bucket_ids[s : s + ids.size] = ids
        counts_arr[s : s + ids.size] = counts
    return TokenizedCorpus(
        num_buckets=num_buckets, indptr=indptr, bucket_ids=bucket_ids, counts=counts_arr
    )


def encode_nodes(
    corpus: TokenizedCorpus, table: Array, nodes: Iterable[int] | None = None
) -> Tuple[Array, Array]:
    """Embed many nodes at once.

    Returns (embeddings, raw_norms); raw_norms[i] is the pre-normalization
    vector length (0 for empty rows), which the training backward pass needs.
    When ``nodes`` is None all nodes are encoded in id order.
    """
    if nodes is None:
        rows = np.arange(corpus.num_nodes, dtype=np.int64)
    else:
        rows = np.asarray(list(nodes), dtype=np.int64)
    d = table.shape[1]
    out = np.zeros((rows.shape[0], d), dtype=np.float64)
    norms = np.zeros(rows.shape[0], dtype=np.float64)
    lens = corpus.indptr[rows + 1] - corpus.indptr[rows]
    nnz = int(lens.sum())
    if nnz == 0:
        return out, norms
    seg_ends = np.cumsum(lens)
    seg_starts = seg_ends - lens
    pos = (
        np.arange(nnz, dtype=np.int64)
        - np.repeat(seg_starts, lens)
        + np.repeat(corpus.indptr[rows], lens)
    )
    contrib = corpus.counts[pos][:, None] * table[corpus.bucket_ids[pos]]
    nonempty = lens > 0
    out[nonempty] = np.add.reduceat(contrib, seg_starts[nonempty], axis=0)
    raw = np.linalg.norm(out, axis=1)
    norms[:] = raw
    safe = raw > 0
    out[safe] /= raw[safe, None]
    return out, norms
