"""Losses, negative sampling, Adam, and the training loop.

Implicit-feedback setup: every user-item edge of the training graph is a
positive; negatives are sampled uniformly per positive from the items the
user never interacted with (4 per positive by default). Loss is binary
cross-entropy on the head's sigmoid output, optionally mixed with a
temperature-scaled distillation term against a frozen teacher.

The loop is single-threaded and bit-deterministic for a fixed seed; only the
wall-clock fields of the report vary between runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from fuserec import model as model_mod
from fuserec import text
from fuserec.config import ExperimentConfig
from fuserec.errors import DivergenceError
from fuserec.fusion import fuse_batch, head_forward_cached
from fuserec.graph import InteractionGraph, encode
from fuserec.linalg import Array, sigmoid
from fuserec.model import ModelParams, copy_model, count_params
from fuserec.text import TokenizedCorpus

PROB_EPS = 1e-7


def bce_loss(probs: Array, labels: Array) -> float:
    """Mean binary cross-entropy; probabilities clamped to [1e-7, 1-1e-7]."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.size == 0:
        raise ValueError("empty batch")
    if probs.shape != labels.shape:
        raise ValueError(f"shape mismatch {probs.shape} vs {labels.shape}")
    p = np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log1p(-p)))


def bce_from_logits(logits: Array, labels: Array) -> Tuple[float, Array]:
    """(loss, dloss/dlogits). The gradient is zero where the clamp is active."""
    p = sigmoid(logits)
    loss = bce_loss(p, labels)
    n = logits.shape[0]
    inside = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
    dlogits = np.where(inside, (p - labels) / n, 0.0)
    return loss, dlogits


def distill_loss(
    student_logits: Array,
    teacher_logits: Array,
    labels: Array,
    temperature: float,
    lam: float,
) -> float:
    """lam * BCE(hard labels) + (1-lam) * T^2 * mean KL(teacher || student).

    Both distributions are Bernoulli over temperature-softened logits.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    student_logits = np.asarray(student_logits, dtype=np.float64)
    teacher_logits = np.asarray(teacher_logits, dtype=np.float64)
    if student_logits.shape != teacher_logits.shape:
        raise ValueError("student/teacher length mismatch")
    hard = bce_loss(sigmoid(student_logits), labels)
    if lam == 1.0:
        return hard
    p = np.clip(sigmoid(teacher_logits / temperature), PROB_EPS, 1.0 - PROB_EPS)
    q = np.clip(sigmoid(student_logits / temperature), PROB_EPS, 1.0 - PROB_EPS)
    kl = p * np.log(p / q) + (1.0 - p) * np.log((1.0 - p) / (1.0 - q))
    soft = temperature**2 * float(np.mean(kl))
    return lam * hard + (1.0 - lam) * soft


def distill_from_logits(
    student_logits: Array,
    teacher_logits: Array,
    labels: Array,
    temperature: float,
    lam: float,
) -> Tuple[float, Array]:
    """Distillation loss plus its gradient in the student logits."""
    loss = distill_loss(student_logits, teacher_logits, labels, temperature, lam)
    _, d_hard = bce_from_logits(student_logits, labels)
    if lam == 1.0:
        return loss, lam * d_hard
    # d/ds of T^2 * mean KL = T * (q - p) / n
    n = student_logits.shape[0]
    p = sigmoid(teacher_logits / temperature)
    q = sigmoid(student_logits / temperature)
    d_soft = temperature * (q - p) / n
    return loss, lam * d_hard + (1.0 - lam) * d_soft


def sample_negatives(
    graph: InteractionGraph, user: int, k: int, rng: np.random.Generator
) -> Tuple[np.ndarray, bool]:
    """k distinct item nodes the user has no edge to, uniformly sampled.

    Returns (items, exhausted). When fewer than k candidates exist, every
    available negative is returned and exhausted is True.
    """
    positives = graph.neighbors(user)  # sorted item nodes
    first_item = graph.num_users
    available = graph.num_items - positives.size
    if k >= available:
        keep = np.ones(graph.num_items, dtype=bool)
        keep[positives - first_item] = False
        all_neg = np.nonzero(keep)[0].astype(np.int64) + first_item
        return rng.permutation(all_neg), True
    # sequential rejection: first occurrences of accepted draws are a uniform
    # without-replacement sample
    collected = np.empty(0, dtype=np.int64)
    while collected.size < k:
        need = k - collected.size
        draw = rng.integers(first_item, graph.num_nodes, size=max(32, 2 * need))
        ok = draw[~np.isin(draw, positives)]
        collected = np.concatenate([collected, ok])
        _, first_idx = np.unique(collected, return_index=True)
        collected = collected[np.sort(first_idx)]
    return collected[:k], False


class Adam:
    """Adam with a shared global step; embedding tables update lazily.

    Lazy steps touch only the rows present in the sparse gradient while
    bias correction still uses the global step count.
    """

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: Dict[str, Array] = {}
        self._v: Dict[str, Array] = {}

    def begin_step(self) -> None:
        self.t += 1

    def _state(self, name: str, shape) -> Tuple[Array, Array]:
        if name not in self._m:
            self._m[name] = np.zeros(shape, dtype=np.float64)
            self._v[name] = np.zeros(shape, dtype=np.float64)
        return self._m[name], self._v[name]

    def step(self, name: str, param: Array, grad: Array) -> Array:
        m, v = self._state(name, param.shape)
        m *= self.beta1
        m += (1.0 - self.beta1) * grad
        v *= self.beta2
        v += (1.0 - self.beta2) * grad * grad
        m_hat = m / (1.0 - self.beta1**self.t)
        v_hat = v / (1.0 - self.beta2**self.t)
        return param - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def step_lazy(self, name: str, table: Array, rows: np.ndarray, row_grads: Array) -> None:
        """In-place update of the touched rows only."""
        if rows.size == 0:
            return
        m, v = self._state(name, table.shape)
        m[rows] *= self.beta1
        m[rows] += (1.0 - self.beta1) * row_grads
        v[rows] *= self.beta2
        v[rows] += (1.0 - self.beta2) * row_grads * row_grads
        m_hat = m[rows] / (1.0 - self.beta1**self.t)
        v_hat = v[rows] / (1.0 - self.beta2**self.t)
        table[rows] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainingReport:
    epochs: int
    wall_clock_seconds: float
    trainable_params: int
    total_params: int
    final_loss: float
    seed: int
    epoch_seconds: List[float] = field(default_factory=list)
    epoch_losses: List[float] = field(default_factory=list)


@dataclass
class _TeacherCache:
    """Frozen teacher embeddings plus its head, enough to score any pair."""

    h_mat: Optional[Array]
    e_mat: Optional[Array]
    head: object
    d_g: int
    d_s: int

    def logits(self, u_nodes: np.ndarray, i_nodes: np.ndarray) -> Array:
        z = fuse_batch(self.h_mat, self.e_mat, u_nodes, i_nodes, self.d_g, self.d_s)
        logits, _ = head_forward_cached(z, self.head)
        return logits


def build_teacher_cache(
    teacher: ModelParams, graph: InteractionGraph, corpus: TokenizedCorpus
) -> _TeacherCache:
    h_mat = None
    if teacher.variant != "text_only":
        h_mat = encode(graph, teacher.node_table, teacher.effective_gnn_weights())
    e_mat = None
    if teacher.variant != "gnn_only":
        e_mat, _ = text.encode_nodes(corpus, teacher.text_table)
    return _TeacherCache(
        h_mat=h_mat, e_mat=e_mat, head=teacher.effective_head(), d_g=teacher.d_g, d_s=teacher.d_s
    )


def _epoch_pairs(
    graph: InteractionGraph, negatives_per_positive: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One epoch's (user nodes, item nodes, labels), shuffled."""
    end = graph.indptr[graph.num_users]
    pos_u = np.repeat(
        np.arange(graph.num_users, dtype=np.int64),
        np.diff(graph.indptr[: graph.num_users + 1]),
    )
    pos_i = graph.indices[:end]
    neg_u_parts: List[np.ndarray] = []
    neg_i_parts: List[np.ndarray] = []
    for u in range(graph.num_users):
        n_pos = graph.indptr[u + 1] - graph.indptr[u]
        if n_pos == 0:
            continue
        negs, _ = sample_negatives(graph, u, negatives_per_positive * int(n_pos), rng)
        if negs.size:
            neg_u_parts.append(np.full(negs.size, u, dtype=np.int64))
            neg_i_parts.append(negs)
    u_all = np.concatenate([pos_u] + neg_u_parts)
    i_all = np.concatenate([pos_i] + neg_i_parts)
    labels = np.concatenate(
        [np.ones(pos_u.size), np.zeros(u_all.size - pos_u.size)]
    )
    perm = rng.permutation(u_all.size)
    return u_all[perm], i_all[perm], labels[perm]


def train(
    model: ModelParams,
    graph: InteractionGraph,
    corpus: TokenizedCorpus,
    cfg: ExperimentConfig,
    teacher: Optional[ModelParams] = None,
) -> Tuple[ModelParams, TrainingReport]:
    """Run cfg.training.epochs of mini-batch Adam; returns (trained copy, report).

    The input model is never mutated. Distillation requires a teacher; its
    embeddings are precomputed once (the teacher is read-only). Non-finite
    loss aborts with epoch/batch diagnostics.
    """
    t_start = time.monotonic()
    cfg.validate()
    if cfg.flags.distill and teacher is None:
        raise ValueError("distillation config requires a teacher model")
    out = copy_model(model)
    tr = cfg.training
    opt = Adam(lr=tr.lr)
    teacher_cache = (
        build_teacher_cache(teacher, graph, corpus) if cfg.flags.distill else None
    )
    # the semantic side is constant while the text table is frozen
    sem_cache = None
    if out.variant != "gnn_only" and not out.trainable.get("text_table"):
        sem_cache, _ = text.encode_nodes(corpus, out.text_table)

    root = np.random.SeedSequence([cfg.seed, 0x7472])
    epoch_losses: List[float] = []
    epoch_seconds: List[float] = []

    if tr.epochs == 0:
        rng = np.random.default_rng(root.spawn(1)[0])
        u, i, y = _epoch_pairs(graph, tr.negatives_per_positive, rng)
        logits, _ = model_mod.forward_batch(out, graph, corpus, u, i, sem_cache)
        final_loss = bce_loss(sigmoid(logits), y)
        total = time.monotonic() - t_start
        return out, TrainingReport(
            epochs=0,
            wall_clock_seconds=total,
            trainable_params=count_params(out, trainable_only=True),
            total_params=count_params(out),
            final_loss=final_loss,
            seed=cfg.seed,
        )

    seeds = root.spawn(tr.epochs)
    for epoch in range(tr.epochs):
        t_epoch = time.monotonic()
        rng = np.random.default_rng(seeds[epoch])
        u_all, i_all, y_all = _epoch_pairs(graph, tr.negatives_per_positive, rng)
        batch_losses: List[float] = []
        batch_sizes: List[int] = []
        for batch, start in enumerate(range(0, u_all.size, tr.batch_size)):
            u = u_all[start : start + tr.batch_size]
            i = i_all[start : start + tr.batch_size]
            y = y_all[start : start + tr.batch_size]
            logits, tape = model_mod.forward_batch(out, graph, corpus, u, i, sem_cache)
            if teacher_cache is not None:
                t_logits = teacher_cache.logits(u, i)
                loss, dlogits = distill_from_logits(
                    logits, t_logits, y, tr.distill_temperature, tr.distill_lambda
                )
            else:
                loss, dlogits = bce_from_logits(logits, y)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, batch, f"non-finite loss {loss!r}")
            batch_losses.append(loss)
            batch_sizes.append(u.size)
            grads = model_mod.backward_batch(out, graph, corpus, tape, dlogits)
            opt.begin_step()
            for name in sorted(grads):
                if name == "text_table":
                    rows, row_grads = grads[name]
                    opt.step_lazy(name, out.text_table, rows, row_grads)
                else:
                    cur = model_mod.get_param(out, name)
                    model_mod.set_param(out, name, opt.step(name, cur, grads[name]))
        epoch_losses.append(float(np.average(batch_losses, weights=batch_sizes)))
        epoch_seconds.append(time.monotonic() - t_epoch)

    total = time.monotonic() - t_start
    return out, TrainingReport(
        epochs=tr.epochs,
        wall_clock_seconds=total,
        trainable_params=count_params(out, trainable_only=True),
        total_params=count_params(out),
        final_loss=epoch_losses[-1],
        seed=cfg.seed,
        epoch_seconds=epoch_seconds,
        epoch_losses=epoch_losses,
    )
