"""Style ontology: discrete bins, the writer knowledge graph, and difficulty.

Continuous style measurements become discrete attribute descriptors through
equal-frequency binning; samples and writers attach to those bins in a small
knowledge graph whose edge agreement measures how consistently a writer
sticks to their habits. The same machinery grades generated novelties into
Easy/Medium/Hard tiers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .style_metrics import STYLE_ATTRIBUTES, StyleVector

__all__ = [
    "BIN_COUNTS",
    "DIFFICULTY_ORDER",
    "OntologyError",
    "BinningScheme",
    "KnowledgeGraph",
    "WriterDistanceMatrix",
    "fit_bins",
    "build_graph",
    "consistency",
    "writer_distances",
    "style_novelty_scores",
    "appearance_novelty_scores",
    "tertile_labels",
    "assign_difficulty",
]

# Slant gets one extra bin: its candidate set distinguishes left/upright/right
# leaning plus the strong italic tail.
BIN_COUNTS = {
    "pen_pressure": 3,
    "slant_angle": 4,
    "word_spacing": 3,
    "character_size": 3,
}

DIFFICULTY_ORDER = ("Hard", "Medium", "Easy")


class OntologyError(ValueError):
    pass


def _as_matrix(styles) -> np.ndarray:
    rows = []
    for sv in styles:
        if isinstance(sv, StyleVector):
            rows.append(sv.as_array())
        else:
            rows.append(np.asarray(sv, dtype=float)[: len(STYLE_ATTRIBUTES)])
    mat = np.asarray(rows, dtype=float)
    if mat.ndim != 2 or mat.shape[1] != len(STYLE_ATTRIBUTES):
        raise OntologyError(
            f"styles must provide {len(STYLE_ATTRIBUTES)} attributes per sample"
        )
    return mat


@dataclass
class BinningScheme:
    """Interior bin edges per attribute; bin i covers (edge[i-1], edge[i]]."""

    edges: dict

    def bins(self, attribute: str) -> int:
        return len(self.edges[attribute]) + 1

    def assign(self, attribute: str, value: float) -> int:
        return int(np.searchsorted(self.edges[attribute], value, side="left"))

    def assign_vector(self, style: StyleVector) -> dict:
        return {
            attr: self.assign(attr, getattr(style, attr)) for attr in self.edges
        }

    def to_dict(self) -> dict:
        return {attr: [float(e) for e in edges] for attr, edges in self.edges.items()}

    @classmethod
    def from_dict(cls, payload: dict) -> "BinningScheme":
        return cls(edges={attr: np.asarray(v, dtype=float) for attr, v in payload.items()})


def fit_bins(styles, counts: dict = BIN_COUNTS) -> BinningScheme:
    """Equal-frequency bin edges from a style population.

    Edges are nearest-rank quantiles at k/bins; when duplicated values make
    an edge collide with the previous one it is pushed up to the next
    distinct value. Attributes with fewer distinct values than bins raise.
    """
    mat = _as_matrix(styles)
    edges = {}
    for j, attr in enumerate(STYLE_ATTRIBUTES):
        bins = counts[attr]
        values = np.sort(mat[:, j])
        distinct = np.unique(values)
        if distinct.size < bins:
            raise OntologyError(
                f"{attr}: need at least {bins} distinct values to fit {bins} bins, "
                f"got {distinct.size}"
            )
        cuts = []
        prev = -math.inf
        for k in range(1, bins):
            rank = max(1, math.ceil(k * values.size / bins))
            edge = float(values[rank - 1])
            if edge <= prev:
                above = distinct[distinct > prev]
                if above.size == 0:
                    raise OntologyError(
                        f"{attr}: duplicated values leave no room for {bins} bins"
                    )
                edge = float(above[0])
            cuts.append(edge)
            prev = edge
        edges[attr] = np.asarray(cuts, dtype=float)
    return BinningScheme(edges=edges)


@dataclass
class KnowledgeGraph:
    """Bipartite attribute graph: samples and writers connect to style bins.

    Writer edges carry the modal bin of the writer's samples (ties resolve to
    the lower bin index).
    """

    scheme: BinningScheme
    sample_bins: dict
    writer_of: dict
    writer_bins: dict

    def nodes(self) -> list:
        out = [{"type": "sample", "id": sid} for sid in self.sample_bins]
        out += [{"type": "writer", "id": w} for w in self.writer_bins]
        for attr in STYLE_ATTRIBUTES:
            for idx in range(self.scheme.bins(attr)):
                out.append({"type": "bin", "attribute": attr, "index": idx})
        return out

    def edges(self) -> list:
        out = []
        for sid, bins in self.sample_bins.items():
            for attr, idx in bins.items():
                out.append(
                    {"kind": "sample-bin", "sample": sid, "attribute": attr, "bin": idx}
                )
        for writer, bins in self.writer_bins.items():
            for attr, idx in bins.items():
                out.append(
                    {"kind": "writer-bin", "writer": writer, "attribute": attr, "bin": idx}
                )
        return out

    def to_dict(self) -> dict:
        return {
            "bins": self.scheme.to_dict(),
            "nodes": self.nodes(),
            "edges": self.edges(),
        }


def build_graph(samples, styles, scheme: BinningScheme) -> KnowledgeGraph:
    """Attach each sample and each writer's modal habits to attribute bins.

    `samples` yields (sample_id, writer_id) pairs or objects with .id and
    .writer; `styles` is the aligned sequence of StyleVectors.
    """
    pairs = []
    for item in samples:
        if hasattr(item, "id") and hasattr(item, "writer"):
            pairs.append((item.id, item.writer))
        else:
            sid, writer = item
            pairs.append((sid, writer))
    styles = list(styles)
    if len(pairs) != len(styles):
        raise OntologyError("samples and styles must align one-to-one")

    sample_bins = {}
    writer_of = {}
    votes = {}
    for (sid, writer), sv in zip(pairs, styles):
        if sid in sample_bins:
            raise OntologyError(f"duplicate sample id {sid!r}")
        assigned = scheme.assign_vector(sv)
        sample_bins[sid] = assigned
        writer_of[sid] = writer
        per_writer = votes.setdefault(writer, {attr: {} for attr in STYLE_ATTRIBUTES})
        for attr, idx in assigned.items():
            per_writer[attr][idx] = per_writer[attr].get(idx, 0) + 1

    writer_bins = {}
    for writer, per_attr in votes.items():
        modal = {}
        for attr, counts in per_attr.items():
            best = max(sorted(counts), key=lambda idx: counts[idx])
            modal[attr] = best
        writer_bins[writer] = modal
    return KnowledgeGraph(
        scheme=scheme,
        sample_bins=sample_bins,
        writer_of=writer_of,
        writer_bins=writer_bins,
    )


def consistency(graph: KnowledgeGraph):
    """Fraction of sample-attribute edges that agree with the writer's modal
    bin, plus the list of disagreeing (sample_id, attribute) pairs."""
    total = 0
    mismatches = []
    for sid, bins in graph.sample_bins.items():
        modal = graph.writer_bins[graph.writer_of[sid]]
        for attr, idx in bins.items():
            total += 1
            if idx != modal[attr]:
                mismatches.append((sid, attr))
    if total == 0:
        raise OntologyError("consistency: graph has no sample edges")
    return 1.0 - len(mismatches) / total, sorted(mismatches)


def _normalize_columns(mat: np.ndarray, low: np.ndarray, high: np.ndarray) -> np.ndarray:
    span = high - low
    out = np.zeros_like(mat, dtype=float)
    ok = span > 0
    out[:, ok] = (mat[:, ok] - low[ok]) / span[ok]
    return out


@dataclass
class WriterDistanceMatrix:
    writers: list
    distances: np.ndarray

    def lookup(self, a: str, b: str) -> float:
        return float(self.distances[self.writers.index(a), self.writers.index(b)])


def writer_distances(styles_by_writer: dict) -> WriterDistanceMatrix:
    """L1 distances between per-writer mean styles.

    Attributes are min-max normalized across writers first so no single
    measurement's units dominate. A single-writer population yields [[0.0]].
    """
    if not styles_by_writer:
        raise OntologyError("writer_distances: no writers given")
    writers = sorted(styles_by_writer)
    means = np.vstack([_as_matrix(styles_by_writer[w]).mean(axis=0) for w in writers])
    low = means.min(axis=0)
    high = means.max(axis=0)
    normed = _normalize_columns(means, low, high)
    diffs = np.abs(normed[:, None, :] - normed[None, :, :]).sum(axis=2)
    return WriterDistanceMatrix(writers=writers, distances=diffs)


def style_novelty_scores(novel_styles, known_writer_styles: dict) -> np.ndarray:
    """Raw difficulty scores for style-borne novelty (writer / letter).

    Each novel sample scores its minimum L1 distance to any known writer's
    mean style; attributes are min-max normalized over the union of known
    means and the novel population. Larger = farther from every known writer
    = easier to spot.
    """
    if not known_writer_styles:
        raise OntologyError("style_novelty_scores: no known writers given")
    novel = _as_matrix(novel_styles)
    known = np.vstack(
        [_as_matrix(known_writer_styles[w]).mean(axis=0) for w in sorted(known_writer_styles)]
    )
    stacked = np.vstack([known, novel])
    low = stacked.min(axis=0)
    high = stacked.max(axis=0)
    known_n = _normalize_columns(known, low, high)
    novel_n = _normalize_columns(novel, low, high)
    dists = np.abs(novel_n[:, None, :] - known_n[None, :, :]).sum(axis=2)
    return dists.min(axis=1)


def appearance_novelty_scores(images, masks) -> np.ndarray:
    """Raw difficulty scores for appearance-borne novelty (pen / background).

    255 minus the mean background intensity: busier, darker backgrounds score
    higher and are easier to notice.
    """
    scores = []
    for image, mask in zip(images, masks):
        bg = np.asarray(image)[~np.asarray(mask, dtype=bool)]
        if bg.size == 0:
            raise OntologyError("appearance_novelty_scores: image has no background")
        scores.append(255.0 - float(bg.mean()))
    return np.asarray(scores, dtype=float)


def tertile_labels(scores) -> list:
    """Rank-based tertiles over a population: top third Easy, bottom Hard.

    Depends on ranks only, so any monotone rescaling of the raw scores leaves
    the labels unchanged. Ties resolve by input order (stable sort).
    """
    scores = np.asarray(scores, dtype=float)
    n = scores.size
    if n == 0:
        raise OntologyError("tertile_labels: empty population")
    order = np.argsort(scores, kind="stable")
    cut1 = math.ceil(n / 3)
    cut2 = math.ceil(2 * n / 3)
    labels = [""] * n
    for rank, idx in enumerate(order):
        if rank < cut1:
            labels[idx] = "Hard"
        elif rank < cut2:
            labels[idx] = "Medium"
        else:
            labels[idx] = "Easy"
    return labels


def assign_difficulty(novelty_type: str, raw_scores) -> list:
    """Difficulty labels for one generated novel population.

    `raw_scores` come from style_novelty_scores (Writer, Letter/Style) or
    appearance_novelty_scores (Pen, Background); in both conventions larger
    means easier.
    """
    if novelty_type not in ("Writer", "Letter/Style", "Pen", "Background"):
        raise OntologyError(f"assign_difficulty: not a novel type: {novelty_type!r}")
    return tertile_labels(raw_scores)
