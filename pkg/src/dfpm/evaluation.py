"""Per-user classification metrics, group breakdowns, significance tests,
and factor/cluster inspection.

Precision, recall and F1 are computed per user (each user's profile is
one binary classifier); macro-F1 is the unweighted mean of per-user F1.
Degenerate denominators yield 0 by convention so fixtures are exact.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .errors import DataError
from .models import MULT_FAMILY, ModelState
from .solver import ExampleMatrix

#: half-open training-positive buckets for the per-group breakdown
GROUP_BOUNDARIES = ((0, 50), (50, 100), (100, 200), (200, 500), (500, None))
GROUP_LABELS = ("<50", "50-100", "100-200", "200-500", ">500")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class UserMetrics:
    user_id: str
    precision: float
    recall: float
    f1: float
    n_train_positives: int = 0


@dataclass(frozen=True)
class GroupStats:
    label: str
    min_train_positives: int
    max_train_positives: int | None  # None = unbounded
    n_users: int
    precision: float
    recall: float
    macro_f1: float


@dataclass(frozen=True)
class GroupReport:
    groups: tuple[GroupStats, ...]


def score_user(w: np.ndarray, examples) -> ConfusionCounts:
    """Confusion counts of the hard +1/-1 predictions against true labels."""
    examples = list(examples)
    if not examples:
        return ConfusionCounts()
    mat = ExampleMatrix.from_examples(examples, len(w))
    pred = np.where(mat.scores(w) >= 0, 1.0, -1.0)
    pos = mat.y == 1.0
    return ConfusionCounts(
        tp=int(np.sum(pos & (pred == 1.0))),
        fp=int(np.sum(~pos & (pred == 1.0))),
        tn=int(np.sum(~pos & (pred == -1.0))),
        fn=int(np.sum(pos & (pred == -1.0))),
    )


def user_metrics(counts: ConfusionCounts, user_id: str = "", n_train_positives: int = 0) -> UserMetrics:
    """Precision/recall/F1 with the 0-on-degenerate-denominator convention."""
    p = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    r = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return UserMetrics(user_id=user_id, precision=p, recall=r, f1=f1, n_train_positives=n_train_positives)


def macro_f1(per_user) -> float:
    """Unweighted mean of per-user F1."""
    per_user = list(per_user)
    if not per_user:
        raise ValueError("macro_f1 needs at least one user")
    return float(np.mean([m.f1 for m in per_user]))


def group_users(per_user) -> GroupReport:
    """Bucket users by training-positive count and average within buckets."""
    groups = []
    for (lo, hi), label in zip(GROUP_BOUNDARIES, GROUP_LABELS):
        members = [
            m for m in per_user if m.n_train_positives >= lo and (hi is None or m.n_train_positives < hi)
        ]
        groups.append(
            GroupStats(
                label=label,
                min_train_positives=lo,
                max_train_positives=hi,
                n_users=len(members),
                precision=float(np.mean([m.precision for m in members])) if members else 0.0,
                recall=float(np.mean([m.recall for m in members])) if members else 0.0,
                macro_f1=macro_f1(members) if members else 0.0,
            )
        )
    return GroupReport(groups=tuple(groups))


def paired_t_test(a, b) -> tuple[float, float]:
    """Two-sided paired t-test; p from the regularized incomplete beta.

    Degenerate cases are pinned: identical samples give (0, 1); zero
    variance with nonzero mean difference gives (+/-inf, 0).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired_t_test needs two equal-length 1-d samples")
    n = len(a)
    if n < 2:
        raise ValueError("paired_t_test needs at least 2 pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return float(np.sign(mean)) * float("inf"), 0.0
    t = mean / (sd / np.sqrt(n))
    nu = n - 1
    p = float(betainc(nu / 2.0, 0.5, nu / (nu + t * t)))
    return float(t), p


def top_factor_features(factors: np.ndarray, vocab, n: int):
    """Per factor column, the n largest-weight terms (ties by index)."""
    K = factors.shape[0]
    if len(vocab) != K:
        raise ValueError(f"vocabulary length {len(vocab)} does not match K={K}")
    n = min(n, K)
    out = []
    for h in range(factors.shape[1]):
        col = factors[:, h]
        order = np.argsort(-col, kind="stable")[:n]
        out.append([(vocab.terms[i], float(col[i])) for i in order])
    return out


def top_items_per_cluster(state: ModelState, data):
    """Per cluster, items ranked by how many members have them as positives.

    Only defined for the one-hot variants (dfpm-mult and its H=1 special
    case bhlr); ties rank lexicographically by item id.
    """
    if state.variant not in MULT_FAMILY:
        raise ValueError(f"variant {state.variant.value!r} has no user clusters to inspect")
    by_id = {ds.user_id: ds for ds in data}
    H = state.factors.shape[1]
    counters = [Counter() for _ in range(H)]
    for p in state.profiles:
        ds = by_id.get(p.user_id)
        if ds is None:
            raise DataError(f"no dataset for trained user {p.user_id!r}")
        counters[p.cluster].update(
            ex.item_id for ex in ds.all_examples() if ex.label == 1
        )
    return [
        sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
        for counter in counters
    ]


def cluster_sizes(state: ModelState) -> list[int]:
    """Number of users assigned to each cluster (one-hot variants only)."""
    if state.variant not in MULT_FAMILY:
        raise ValueError(f"variant {state.variant.value!r} has no user clusters")
    H = state.factors.shape[1]
    sizes = [0] * H
    for p in state.profiles:
        sizes[p.cluster] += 1
    return sizes


# ---------------------------------------------------------------------------
# Model-level evaluation and report files
# ---------------------------------------------------------------------------


def evaluate_model(state: ModelState, datasets, split: str = "test") -> list[UserMetrics]:
    """Per-user metrics of a trained state on one split of the datasets."""
    if split not in ("train", "validation", "test"):
        raise ValueError(f"unknown split {split!r}")
    by_id = {ds.user_id: ds for ds in datasets}
    missing = [p.user_id for p in state.profiles if p.user_id not in by_id]
    if missing:
        raise DataError(f"datasets missing trained users: {missing[:5]}")
    out = []
    for p in state.profiles:
        ds = by_id[p.user_id]
        counts = score_user(p.w, getattr(ds, split))
        out.append(user_metrics(counts, user_id=p.user_id, n_train_positives=ds.n_train_positives))
    return out


def overall_means(per_user) -> dict:
    per_user = list(per_user)
    return {
        "precision": float(np.mean([m.precision for m in per_user])),
        "recall": float(np.mean([m.recall for m in per_user])),
        "macro_f1": macro_f1(per_user),
    }


def write_metrics_report(path, per_user, significance: dict | None = None) -> None:
    """JSON report: overall means, per-group breakdown, optional t-test."""
    report = {
        "overall": overall_means(per_user),
        "groups": [
            {
                "group": g.label,
                "min_train_positives": g.min_train_positives,
                "max_train_positives": g.max_train_positives,
                "n_users": g.n_users,
                "precision": g.precision,
                "recall": g.recall,
                "macro_f1": g.macro_f1,
            }
            for g in group_users(per_user).groups
        ],
    }
    if significance is not None:
        report["significance"] = significance
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")


def write_factor_report(path, top_features) -> None:
    """JSON array per factor of {"term", "weight"} pairs."""
    payload = [
        [{"term": term, "weight": weight} for term, weight in factor]
        for factor in top_features
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def write_cluster_report(path, sizes, top_items, top_n: int | None = None) -> None:
    """JSON array per cluster: size plus ranked {"item_id", "count"} list."""
    payload = [
        {
            "cluster": h,
            "n_users": sizes[h],
            "top_items": [
                {"item_id": item, "count": count}
                for item, count in (items if top_n is None else items[:top_n])
            ],
        }
        for h, items in enumerate(top_items)
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
