"""End-to-end experiment rows: prepare data, train per config, evaluate.

One prepared dataset serves every configuration row. Accuracy is always
evaluated through the serving pipeline in hot mode (hot and cold scores are
identical by construction, and quantized configs are evaluated through their
quantized head); the latency trial mode follows the config's cache flag.

Rows that only change serving (quantization, caching) reuse the trained
unoptimized hybrid rather than retraining it; LoRA fine-tunes that same
base, and distillation uses it as the teacher. The reuse is deterministic,
so a fixed seed reproduces every row bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from fuserec import metrics, model as model_mod, text
from fuserec.config import PRESET_ORDER, ExperimentConfig, copy_config, make_preset
from fuserec.data import Interaction, SplitDataset, split_leave_one_out
from fuserec.errors import DivergenceError
from fuserec.graph import InteractionGraph, IdMap, build_graph
from fuserec.model import ModelParams, attach_lora, copy_model, init_model
from fuserec.serve import Server, run_latency_trial
from fuserec.text import TokenizedCorpus, tokenize_corpus
from fuserec.train import TrainingReport, train


@dataclass
class PreparedData:
    graph: InteractionGraph
    idmap: IdMap
    corpus: TokenizedCorpus
    split: SplitDataset
    eligible_users: np.ndarray  # user node ids with a held-out positive
    test_positive: Dict[int, int]  # user node -> held-out item node
    candidate_sets: Dict[int, np.ndarray]  # user node -> candidate item nodes


def prepare_data(
    interactions: Sequence[Interaction],
    item_texts: Dict[str, str],
    seed: int,
    candidates_per_user: int = 100,
    num_buckets: int = text.DEFAULT_BUCKETS,
) -> PreparedData:
    """Split, build the training graph, tokenize text, draw candidate sets.

    Every item mentioned anywhere (train, held-out, or text-only) becomes a
    graph node, so items with no training edges are still rankable. Candidate
    sets are one held-out positive plus sampled negatives, drawn per user
    from a seed-derived stream, excluding everything the user interacted with.
    """
    split = split_leave_one_out(interactions, seed)
    split.item_texts = dict(item_texts)
    all_items = sorted(
        {rec[1] for rec in interactions} | set(item_texts.keys())
    )
    graph, idmap = build_graph(split.train, extra_items=all_items)
    texts_by_node = {
        idmap.items[item_id] + graph.num_users: doc
        for item_id, doc in item_texts.items()
        if item_id in idmap.items
    }
    corpus = tokenize_corpus(texts_by_node, graph.num_nodes, num_buckets)

    test_positive: Dict[int, int] = {}
    for user_id, item_id in split.test_positive.items():
        if user_id in idmap.users and item_id in idmap.items:
            u = idmap.users[user_id]
            test_positive[u] = idmap.items[item_id] + graph.num_users
    eligible = np.array(sorted(test_positive), dtype=np.int64)

    first_item = graph.num_users
    n_items = graph.num_items
    candidate_sets: Dict[int, np.ndarray] = {}
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x63616E]))
    for u in eligible.tolist():
        pos = test_positive[u]
        excluded = set(graph.neighbors(u).tolist())
        excluded.add(pos)
        n_negs = min(candidates_per_user - 1, n_items - len(excluded))
        negs: List[int] = []
        seen = set()
        while len(negs) < n_negs:
            draw = rng.integers(first_item, graph.num_nodes, size=2 * (n_negs - len(negs)) + 8)
            for item in draw.tolist():
                if item in excluded or item in seen:
                    continue
                seen.add(item)
                negs.append(item)
                if len(negs) == n_negs:
                    break
        candidate_sets[u] = np.concatenate(
            [np.array([pos], dtype=np.int64), np.array(negs, dtype=np.int64)]
        )
    return PreparedData(
        graph=graph,
        idmap=idmap,
        corpus=corpus,
        split=split,
        eligible_users=eligible,
        test_positive=test_positive,
        candidate_sets=candidate_sets,
    )


@dataclass
class AccuracySummary:
    precision: float
    recall: float
    ndcg: float
    n_users: int
    n_excluded: int  # users with an empty relevant set (counted, not averaged)


def evaluate_accuracy(server: Server, prepared: PreparedData, k: int) -> AccuracySummary:
    """Mean P@k / R@k / NDCG@k over eligible users via hot-path scoring."""
    p_sum = r_sum = n_sum = 0.0
    n = 0
    excluded = 0
    for u in prepared.eligible_users.tolist():
        relevant = {prepared.test_positive[u]}
        if not relevant:
            excluded += 1
            continue
        top, _ = server.topk(u, k, "hot", prepared.candidate_sets[u])
        ranking = top.tolist()
        p_sum += metrics.precision_at_k(ranking, relevant, k)
        r_sum += metrics.recall_at_k(ranking, relevant, k)
        n_sum += metrics.ndcg_at_k(ranking, relevant, k)
        n += 1
    if n == 0:
        return AccuracySummary(0.0, 0.0, 0.0, 0, excluded)
    return AccuracySummary(p_sum / n, r_sum / n, n_sum / n, n, excluded)


def _init_for_config(cfg: ExperimentConfig, prepared: PreparedData) -> ModelParams:
    return init_model(
        num_nodes=prepared.graph.num_nodes,
        variant=cfg.variant,
        d_g=cfg.dims.d_g,
        d_s=cfg.dims.d_s,
        d_h=cfg.dims.d_h,
        num_layers=cfg.dims.L,
        num_buckets=prepared.corpus.num_buckets,
        seed=cfg.seed,
    )


def _train_with_label(
    cfg: ExperimentConfig,
    model: ModelParams,
    prepared: PreparedData,
    teacher: Optional[ModelParams] = None,
) -> Tuple[ModelParams, TrainingReport]:
    try:
        return train(model, prepared.graph, prepared.corpus, cfg, teacher=teacher)
    except DivergenceError as exc:
        raise DivergenceError(
            exc.epoch, exc.batch, f"[{cfg.label}] {exc.message}"
        ) from exc


def _base_hybrid(
    cfg: ExperimentConfig, prepared: PreparedData, shared: Dict
) -> Tuple[ModelParams, TrainingReport]:
    """Train (once) the unoptimized hybrid this config's flags build upon."""
    if "hybrid_base" not in shared:
        base_cfg = copy_config(cfg)
        base_cfg.variant = "hybrid"
        base_cfg.flags.quantize = base_cfg.flags.distill = False
        base_cfg.flags.lora = base_cfg.flags.cache = False
        base_cfg.label = "Hybrid (Unoptimized)"
        model0 = _init_for_config(base_cfg, prepared)
        shared["hybrid_base"] = _train_with_label(base_cfg, model0, prepared)
    return shared["hybrid_base"]


def train_single(
    cfg: ExperimentConfig, prepared: PreparedData
) -> Tuple[ModelParams, TrainingReport]:
    """Train one configuration from scratch (no cross-row reuse)."""
    return _train_with_label(cfg, _init_for_config(cfg, prepared), prepared)


def run_experiment(
    cfg: ExperimentConfig, prepared: PreparedData, shared: Optional[Dict] = None
) -> Dict:
    """Produce one report row for a config; ``shared`` caches the hybrid base."""
    cfg.validate()
    shared = shared if shared is not None else {}

    if cfg.flags.distill:
        teacher, teacher_report = _base_hybrid(cfg, prepared, shared)
        student_cfg = copy_config(cfg)
        student_cfg.dims.d_g = max(1, cfg.dims.d_g // 2)
        student_cfg.dims.d_s = max(1, cfg.dims.d_s // 2)
        student_cfg.dims.d_h = max(1, cfg.dims.d_h // 2)
        student = _init_for_config(student_cfg, prepared)
        model, report = _train_with_label(student_cfg, student, prepared, teacher=teacher)
    elif cfg.flags.lora:
        base, _ = _base_hybrid(cfg, prepared, shared)
        adapted = copy_model(base)
        attach_lora(adapted, rank=cfg.dims.lora_rank, alpha=cfg.dims.lora_alpha, seed=cfg.seed)
        model, report = _train_with_label(cfg, adapted, prepared)
    elif cfg.variant == "hybrid":
        model, report = _base_hybrid(cfg, prepared, shared)
    else:
        model0 = _init_for_config(cfg, prepared)
        model, report = _train_with_label(cfg, model0, prepared)

    server = Server(
        model, prepared.graph, prepared.corpus, quantize=cfg.flags.quantize
    )
    server.build_cache()
    acc = evaluate_accuracy(server, prepared, cfg.eval.k)
    mode = "hot" if cfg.flags.cache else "cold"
    stats = run_latency_trial(
        server,
        prepared.eligible_users,
        prepared.candidate_sets,
        mode=mode,
        k=cfg.eval.k,
        n_requests=cfg.eval.n_latency_requests,
        warmup=cfg.eval.warmup,
        seed=cfg.seed,
    )
    return {
        "config": cfg.label,
        "precision_at_10": acc.precision,
        "recall_at_10": acc.recall,
        "ndcg_at_10": acc.ndcg,
        "latency_mean_ms": stats.mean_ms,
        "latency_std_ms": stats.std_ms,
        "train_seconds": report.wall_clock_seconds,
        "trainable_params": report.trainable_params,
        "seed": cfg.seed,
    }


def run_matrix(
    prepared: PreparedData,
    base_cfg: ExperimentConfig,
    preset_names: Optional[Sequence[str]] = None,
) -> List[Dict]:
    """All requested benchmark rows in canonical order, sharing one base."""
    names = list(preset_names) if preset_names else list(PRESET_ORDER)
    shared: Dict = {}
    rows = []
    for name in names:
        cfg = make_preset(name, base_cfg)
        rows.append(run_experiment(cfg, prepared, shared))
    return rows
