"""Evaluation metrics and the novelty characterization tables.

Alongside the usual suspects (edit-distance accuracy, NMI, purity, top-k),
this module owns the clustering-based characterization: how well do cheap
style measurements organize a window of recent samples into the structures
the ground truth says are there. Everything is deterministic under a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ontology import BinningScheme
from .seeding import derive_rng
from .style_metrics import MEASUREMENT_NAMES, StyleVector

__all__ = [
    "MetricsError",
    "levenshtein",
    "char_accuracy",
    "word_accuracy",
    "nmi",
    "purity",
    "topk_accuracy",
    "pearson",
    "kmeans",
    "CLUSTER_GROUPS",
    "ROW_ORDER",
    "CATEGORY_ROW",
    "CharacterizationCell",
    "characterize",
    "REPORT_COLUMNS",
    "summarize_group",
]


class MetricsError(ValueError):
    pass


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance, two-row dynamic program."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (ca != cb),
            )
        prev = cur
    return prev[-1]


def char_accuracy(truth: str, prediction: str) -> float:
    """1 - edit distance over the longer length; two empty strings match."""
    if not truth and not prediction:
        return 1.0
    return 1.0 - levenshtein(truth, prediction) / max(len(truth), len(prediction))


def _tokens(text: str) -> list:
    return text.split(" ") if text else []


def word_accuracy(truth: str, prediction: str) -> float:
    """char_accuracy lifted to space-separated tokens."""
    t = _tokens(truth)
    p = _tokens(prediction)
    if not t and not p:
        return 1.0
    return 1.0 - _token_levenshtein(t, p) / max(len(t), len(p))


def _token_levenshtein(a: list, b: list) -> int:
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ta in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, tb in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ta != tb))
        prev = cur
    return prev[-1]


def _contingency(a, b):
    la, ia = np.unique(a, return_inverse=True)
    lb, ib = np.unique(b, return_inverse=True)
    table = np.zeros((la.size, lb.size), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def nmi(a, b, normalization: str = "geometric") -> float:
    """Normalized mutual information between two label sequences.

    Natural-log entropies. When both partitions are single-cluster the
    agreement is perfect by convention (1.0); when only one side is
    degenerate there is nothing to share (0.0).
    """
    a = list(a)
    b = list(b)
    if len(a) != len(b):
        raise MetricsError("nmi: label sequences must align")
    if not a:
        raise MetricsError("nmi: empty labelings")
    table = _contingency(a, b).astype(np.float64)
    n = table.sum()
    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    ha = float(-(pa * np.log(pa, where=pa > 0, out=np.zeros_like(pa))).sum())
    hb = float(-(pb * np.log(pb, where=pb > 0, out=np.zeros_like(pb))).sum())
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    p = table / n
    outer = pa[:, None] * pb[None, :]
    nz = p > 0
    info = float((p[nz] * np.log(p[nz] / outer[nz])).sum())
    if normalization == "geometric":
        denom = math.sqrt(ha * hb)
    elif normalization == "arithmetic":
        denom = 0.5 * (ha + hb)
    elif normalization == "min":
        denom = min(ha, hb)
    elif normalization == "max":
        denom = max(ha, hb)
    else:
        raise MetricsError(f"nmi: unknown normalization {normalization!r}")
    return info / denom


def purity(clusters, truth) -> float:
    """Fraction of samples claimed by their cluster's majority truth label."""
    clusters = list(clusters)
    truth = list(truth)
    if len(clusters) != len(truth):
        raise MetricsError("purity: label sequences must align")
    if not clusters:
        raise MetricsError("purity: empty labelings")
    table = _contingency(clusters, truth)
    return float(table.max(axis=1).sum() / table.sum())


def topk_accuracy(rankings, truths, k: int = 3) -> float:
    """Fraction of samples whose truth label appears in the first k ranks.

    Rankings include the novelty slot, so a truly novel sample counts as
    correct when the novel label ranks high enough.
    """
    rankings = list(rankings)
    truths = list(truths)
    if len(rankings) != len(truths):
        raise MetricsError("topk_accuracy: rankings and truths must align")
    if not rankings:
        raise MetricsError("topk_accuracy: empty input")
    hits = sum(1 for ranks, t in zip(rankings, truths) if t in list(ranks)[:k])
    return hits / len(rankings)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size or x.size < 2:
        raise MetricsError("pearson: need two aligned series of length >= 2")
    xd = x - x.mean()
    yd = y - y.mean()
    denom = math.sqrt(float((xd * xd).sum()) * float((yd * yd).sum()))
    if denom == 0.0:
        raise MetricsError("pearson: a series has zero variance")
    return float((xd * yd).sum()) / denom


def _kmeans_once(x: np.ndarray, k: int, rng, max_iter: int, tol: float):
    n = x.shape[0]
    centers = [x[int(rng.integers(n))]]
    for _ in range(1, k):
        d2 = np.min(
            ((x[:, None, :] - np.asarray(centers)[None, :, :]) ** 2).sum(axis=2), axis=1
        )
        total = d2.sum()
        if total <= 0:
            break  # duplicates exhausted the spread; fewer centers than asked
        probs = d2 / total
        centers.append(x[int(rng.choice(n, p=probs))])
    centers = np.asarray(centers, dtype=np.float64)
    prev_inertia = np.inf
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        inertia = float(d2[np.arange(n), assign].sum())
        new_centers = []
        for c in range(centers.shape[0]):
            members = x[assign == c]
            if members.shape[0]:
                new_centers.append(members.mean(axis=0))
        centers = np.asarray(new_centers, dtype=np.float64)
        if abs(prev_inertia - inertia) <= tol:
            break
        prev_inertia = inertia
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    inertia = float(d2[np.arange(n), assign].sum())
    return assign, centers, inertia


def kmeans(
    x,
    k: int,
    seed: int = 0,
    restarts: int = 10,
    max_iter: int = 300,
    tol: float = 1e-6,
):
    """Lloyd's algorithm with k-means++ seeding and explicit degeneracy.

    Returns (assignments, centers, inertia, k_effective). Duplicated points
    cannot seed distinct centers, so k_effective can come back below k; an
    all-identical population collapses to a single cluster.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise MetricsError("kmeans: empty input")
    k = min(k, x.shape[0])
    best = None
    for restart in range(restarts):
        rng = derive_rng(seed, "kmeans", restart)
        assign, centers, inertia = _kmeans_once(x, k, rng, max_iter, tol)
        if best is None or inertia < best[2] - 1e-15:
            best = (assign, centers, inertia)
    assign, centers, inertia = best
    return assign, centers, inertia, int(centers.shape[0])


# Cluster groups: attribute measured, cluster count. The novelty-category
# group (NC) clusters the full measurement bundle.
CLUSTER_GROUPS = {
    "PP": ("pen_pressure", 3),
    "CS": ("character_size", 3),
    "WS": ("word_spacing", 3),
    "SA": ("slant_angle", 4),
    "NC": (None, 3),
}

ROW_ORDER = ("Style", "Background", "Pen", "No Novelty")

CATEGORY_ROW = {
    "Writer": "Style",
    "Letter/Style": "Style",
    "Background": "Background",
    "Pen": "Pen",
    "None": "No Novelty",
}


@dataclass
class CharacterizationCell:
    purity: float
    k_effective: int
    n: int


def _measurement_matrix(measurements) -> np.ndarray:
    rows = []
    for m in measurements:
        if isinstance(m, StyleVector):
            rows.append(m.as_array(MEASUREMENT_NAMES))
        else:
            rows.append(np.asarray(m, dtype=float))
    return np.asarray(rows, dtype=np.float64)


def characterize(
    measurements,
    novelty_types,
    subtypes,
    scheme: BinningScheme,
    seed: int = 0,
    window: int | None = 32,
) -> dict:
    """Cluster-purity table over the trailing evaluation window.

    Rows split the samples by novelty category; columns are the cluster
    groups. Style-attribute cells cluster that one measurement and score
    purity against the ontology's bins; the NC cell clusters the full
    (min-max normalized) measurement bundle and scores purity against the
    novelty subtype. Cells with no samples are absent from the row dict.
    """
    measurements = list(measurements)
    novelty_types = list(novelty_types)
    subtypes = list(subtypes)
    if not (len(measurements) == len(novelty_types) == len(subtypes)):
        raise MetricsError("characterize: inputs must align")
    if window is not None and len(measurements) > window:
        measurements = measurements[-window:]
        novelty_types = novelty_types[-window:]
        subtypes = subtypes[-window:]
    mat = _measurement_matrix(measurements)
    attr_col = {name: i for i, name in enumerate(MEASUREMENT_NAMES)}

    table = {}
    for row_name in ROW_ORDER:
        idx = [
            i
            for i, t in enumerate(novelty_types)
            if CATEGORY_ROW.get(t, "Style") == row_name
        ]
        if not idx:
            continue
        row = {}
        sub = mat[idx]
        for group, (attr, k) in CLUSTER_GROUPS.items():
            if attr is None:
                span = sub.max(axis=0) - sub.min(axis=0)
                normed = np.where(span > 0, (sub - sub.min(axis=0)) / np.where(span > 0, span, 1.0), 0.0)
                assign, _, _, k_eff = kmeans(normed, k, seed=seed)
                truth = [subtypes[i] for i in idx]
            else:
                values = sub[:, attr_col[attr]]
                assign, _, _, k_eff = kmeans(values, k, seed=seed)
                truth = [scheme.assign(attr, v) for v in values]
            row[group] = CharacterizationCell(
                purity=purity(assign.tolist(), truth),
                k_effective=k_eff,
                n=len(idx),
            )
        table[row_name] = row
    return table


REPORT_COLUMNS = (
    "Novelty Detection Acc.",
    "Mean Char. Acc.",
    "NMI",
    "Writer ID Acc.",
)


def summarize_group(rows, top_k: int = 3, nmi_normalization: str = "geometric") -> dict:
    """One report line from joined (record, truth) rows.

    Each row is a dict with keys: decision (bool), is_novel (bool), truth
    writer (str), ranked labels (list), and optionally truth/predicted
    transcripts. Novel samples' truth label for ranking purposes is the
    novelty slot.
    """
    if not rows:
        raise MetricsError("summarize_group: no rows")
    detection = float(np.mean([r["decision"] == r["is_novel"] for r in rows]))
    char_scores = [
        char_accuracy(r["truth_transcript"], r["predicted_transcript"])
        for r in rows
        if r.get("truth_transcript") is not None
        and r.get("predicted_transcript") is not None
    ]
    mean_char = float(np.mean(char_scores)) if char_scores else None
    truth_labels = [r["ranking_truth"] for r in rows]
    pred_top1 = [r["ranked"][0] for r in rows]
    if len(set(truth_labels)) == 1 and len(set(pred_top1)) == 1:
        nmi_val = 1.0 if truth_labels[0] == pred_top1[0] else nmi(truth_labels, pred_top1)
    else:
        nmi_val = nmi(truth_labels, pred_top1, normalization=nmi_normalization)
    writer_id = topk_accuracy([r["ranked"] for r in rows], truth_labels, k=top_k)
    return {
        "Novelty Detection Acc.": detection,
        "Mean Char. Acc.": mean_char,
        "NMI": nmi_val,
        "Writer ID Acc.": writer_id,
    }
