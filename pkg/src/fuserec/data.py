"""Dataset loading, splitting, and the planted synthetic benchmark generator.

Interactions are (user_id, item_id, rating, timestamp) tuples with string
ids. The ratings-file loader accepts comma- and ``::``-separated records
(auto-detected per line) and keeps rows at or above the positive threshold.
The review loader reads newline-delimited JSON in either the
asin/reviewText/overall or business_id/text/stars key scheme.

The synthetic generator plants cluster structure in both modalities with
independent noise. Every held-out positive is a lightly-adopted niche item
from the user's own cluster: its structural trace is a handful of edges, too
thin for a graph-only ranker to place, while its text names the cluster
outright. Text-only rankers lack the user side entirely. Recovering the
held-out interaction therefore needs both modalities, which is the property
the benchmark measures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from fuserec.errors import DataFormatError

Interaction = Tuple[str, str, float, int]


def load_movielens(path, threshold: float = 4.0) -> List[Interaction]:
    """Parse a ratings file; rows with rating >= threshold are positives.

    Delimiter (comma or ``::``) is detected per line. A single leading
    header line is tolerated and skipped.
    """
    out: List[Interaction] = []
    saw_any = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split("::") if "::" in line else line.split(",")
            if len(fields) != 4:
                raise DataFormatError(f"{path}: line {lineno}: expected 4 fields, got {len(fields)}")
            user, item, rating_s, ts_s = (f.strip() for f in fields)
            try:
                rating = float(rating_s)
                ts = int(float(ts_s))
            except ValueError:
                if lineno == 1 and not saw_any:
                    continue  # header row
                raise DataFormatError(
                    f"{path}: line {lineno}: non-numeric rating/timestamp in {line!r}"
                ) from None
            saw_any = True
            if rating >= threshold:
                out.append((user, item, rating, ts))
    if not saw_any:
        raise DataFormatError(f"{path}: no interaction records found")
    return out


def load_json_reviews(path) -> Tuple[Dict[str, str], Dict[str, List[float]]]:
    """Newline-delimited review JSON -> (id -> concatenated text, id -> ratings).

    Accepts asin/reviewText/overall or business_id/text/stars keys; records
    keyed by user_id only are also accepted (lets the same format carry
    user-side documents). Missing text becomes an empty string. Unparseable
    lines are skipped and counted; more than 10% skipped is an error.
    """
    texts: Dict[str, str] = {}
    ratings: Dict[str, List[float]] = {}
    skipped = 0
    total = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            total += 1
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                skipped += 1
                continue
            if not isinstance(rec, dict):
                skipped += 1
                continue
            key = rec.get("asin") or rec.get("business_id") or rec.get("user_id")
            if key is None:
                skipped += 1
                continue
            key = str(key)
            piece = rec.get("reviewText", rec.get("text", "")) or ""
            if key in texts:
                texts[key] = f"{texts[key]} {piece}" if piece else texts[key]
            else:
                texts[key] = piece
            rating = rec.get("overall", rec.get("stars"))
            if rating is not None:
                ratings.setdefault(key, []).append(float(rating))
            else:
                ratings.setdefault(key, [])
    if total == 0:
        raise DataFormatError(f"{path}: no records found")
    if skipped > 0.10 * total:
        raise DataFormatError(f"{path}: {skipped}/{total} records unparseable (>10%)")
    return texts, ratings


@dataclass
class SplitDataset:
    """Train interactions plus one held-out positive per evaluable user."""

    train: List[Interaction]
    test_positive: Dict[str, str]  # user_id -> held-out item_id
    item_texts: Dict[str, str] = field(default_factory=dict)


def split_leave_one_out(interactions: Sequence[Interaction], seed: int = 0) -> SplitDataset:
    """Hold out each user's latest interaction; ties break by largest item id.

    Users with a single interaction stay train-only. The split is fully
    deterministic; ``seed`` is accepted for interface stability but unused.
    """
    by_user: Dict[str, List[Interaction]] = {}
    for rec in interactions:
        by_user.setdefault(rec[0], []).append(rec)
    train: List[Interaction] = []
    test: Dict[str, str] = {}
    for user, recs in by_user.items():
        if len(recs) < 2:
            train.extend(recs)
            continue
        held = max(recs, key=lambda r: (r[3], r[1]))
        test[user] = held[1]
        held_once = False
        for rec in recs:
            if not held_once and rec is held:
                held_once = True
                continue
            train.append(rec)
    return SplitDataset(train=train, test_positive=test)


@dataclass
class SyntheticSpec:
    """Generator knobs; the defaults match the reference benchmark."""

    clusters: int = 20
    niche_fraction: float = 0.40  # lightly-adopted items with descriptive text
    fresh_fraction: float = 0.15  # new arrivals: descriptive text, no history
    history_length: int = 18
    history_noise: float = 0.05  # chance a draw ignores the user's cluster
    adoptions_per_user: int = 1  # in-train niche interactions per user
    text_noise: float = 0.05  # chance an item's text comes from another cluster
    keywords_per_cluster: int = 12
    keywords_per_item: int = 8
    noise_tokens_per_item: int = 4
    noise_vocab: int = 200


# item roles in the planted catalog
ROLE_STAPLE = 0
ROLE_NICHE = 1
ROLE_FRESH = 2


def generate_synthetic(
    n_users: int,
    n_items: int,
    seed: int,
    spec: SyntheticSpec = None,
    return_assignments: bool = False,
):
    """Planted cold-start dataset -> (interactions, item_id -> text).

    Users and items belong to latent clusters, and the catalog splits into
    three roles. Staples carry the interaction history: each user draws
    ``history_length`` of them, own cluster up to ``history_noise``. Niche
    items are sparse in the graph, adopted only ``adoptions_per_user`` times
    per user, and every user's final interaction (unique latest timestamp,
    so a leave-one-out split holds out exactly this pair) is another niche
    item from their cluster. Fresh items round out the catalog as cold
    decoys with zero training interactions. All items carry text naming
    their cluster: ``keywords_per_item`` of the cluster's
    ``keywords_per_cluster`` keywords (cluster resampled at rate
    ``text_noise``) plus filler tokens. Ranking the held-out item therefore
    leans on text: the structural trace of a niche item is a handful of
    edges, too thin to place it reliably, while its text names the cluster
    outright. Text alone cannot personalize either, because users carry no
    text of their own.

    ``return_assignments=True`` appends a dict with the planted user/item
    cluster and role assignments (for measuring the construction).
    """
    if n_users < 10 or n_items < 10:
        raise ValueError("need at least 10 users and 10 items")
    sp = spec or SyntheticSpec()
    if sp.niche_fraction + sp.fresh_fraction >= 1.0:
        raise ValueError("niche_fraction + fresh_fraction must leave room for staples")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x73796E]))
    c = min(sp.clusters, n_items // 3)

    item_cluster = rng.integers(0, c, size=n_items)
    user_cluster = rng.integers(0, c, size=n_users)
    role = rng.choice(
        3,
        size=n_items,
        p=[1.0 - sp.niche_fraction - sp.fresh_fraction, sp.niche_fraction, sp.fresh_fraction],
    )
    # pin one item of every role per cluster so no pool is ever empty
    for r in (ROLE_STAPLE, ROLE_NICHE, ROLE_FRESH):
        lo = r * c
        item_cluster[lo : lo + c] = np.arange(c)
        role[lo : lo + c] = r

    pools = [
        [np.nonzero((item_cluster == cl) & (role == r))[0] for cl in range(c)]
        for r in (ROLE_STAPLE, ROLE_NICHE, ROLE_FRESH)
    ]
    anywhere = [np.nonzero(role == r)[0] for r in (ROLE_STAPLE, ROLE_NICHE, ROLE_FRESH)]

    def draw(r: int, cl: int) -> int:
        pool = anywhere[r] if rng.random() < sp.history_noise else pools[r][cl]
        return int(pool[rng.integers(pool.size)])

    interactions: List[Interaction] = []
    for u in range(n_users):
        cl = int(user_cluster[u])
        chosen: set = set()
        for _ in range(sp.history_length):
            item = draw(ROLE_STAPLE, cl)
            if item in chosen:
                continue  # thin histories are fine; duplicates are not
            chosen.add(item)
            interactions.append((f"u{u}", f"i{item}", 5.0, int(rng.integers(1, 1000))))
        for _ in range(sp.adoptions_per_user):
            item = draw(ROLE_NICHE, cl)
            if item in chosen:
                continue
            chosen.add(item)
            interactions.append((f"u{u}", f"i{item}", 5.0, int(rng.integers(1000, 1500))))
        # the future interaction: a niche item with the unique latest
        # timestamp, never one this user already adopted, so the held-out
        # pair stays absent from training
        held = draw(ROLE_NICHE, cl)
        for _ in range(100):
            if held not in chosen:
                break
            held = draw(ROLE_NICHE, cl)
        else:  # tiny catalogs can exhaust a cluster pool; fall back to any free niche
            free = [int(i) for i in anywhere[ROLE_NICHE] if int(i) not in chosen]
            held = free[int(rng.integers(len(free)))] if free else held
        interactions.append((f"u{u}", f"i{held}", 5.0, 2000))

    texts: Dict[str, str] = {}
    for i in range(n_items):
        cl = int(item_cluster[i])
        if rng.random() < sp.text_noise:
            cl = int(rng.integers(0, c))
        kws = rng.choice(sp.keywords_per_cluster, size=sp.keywords_per_item, replace=False)
        words = [f"topic{cl}kw{int(k)}" for k in kws]
        fillers = rng.integers(0, sp.noise_vocab, size=sp.noise_tokens_per_item)
        words += [f"filler{int(f)}" for f in fillers]
        texts[f"i{i}"] = " ".join(words)
    if return_assignments:
        meta = {
            "item_cluster": item_cluster,
            "user_cluster": user_cluster,
            "role": role,
            "clusters": c,
        }
        return interactions, texts, meta
    return interactions, texts


def write_dataset(out_dir, interactions: Sequence[Interaction], texts: Dict[str, str]) -> None:
    """Write interactions.csv (ratings format) and items.jsonl (review format)."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "interactions.csv"), "w", encoding="utf-8") as fh:
        for user, item, rating, ts in interactions:
            fh.write(f"{user},{item},{rating},{ts}\n")
    with open(os.path.join(out_dir, "items.jsonl"), "w", encoding="utf-8") as fh:
        for item_id in texts:
            fh.write(json.dumps({"asin": item_id, "reviewText": texts[item_id]}) + "\n")


def load_dataset(data_dir) -> Tuple[List[Interaction], Dict[str, str]]:
    """Load a directory written by write_dataset (or equivalently shaped)."""
    import os

    inter_path = os.path.join(data_dir, "interactions.csv")
    items_path = os.path.join(data_dir, "items.jsonl")
    if not os.path.exists(inter_path):
        raise DataFormatError(f"{data_dir}: missing interactions.csv")
    interactions = load_movielens(inter_path)
    texts: Dict[str, str] = {}
    if os.path.exists(items_path):
        texts, _ = load_json_reviews(items_path)
    return interactions, texts
