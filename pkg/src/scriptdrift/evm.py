"""Open-set recognition over feature vectors.

Each training point becomes a potential anchor whose rejection boundary is a
Weibull fit over its smallest scaled distances to other-class points; a
greedy set cover keeps only the anchors needed to explain each class. Known
class scores are the max anchor activation; the K+1 probability vector
scales the normalized known scores by the best score and appends 1 minus it
as the probability of novelty. A threshold calibrated to the equal-error
point turns that tail probability into a novel/known decision.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MODEL_FORMAT",
    "MODEL_FORMAT_VERSION",
    "EvmError",
    "EvmHyperparams",
    "EvmClass",
    "EvmModel",
    "CalibrationResult",
    "weibull_mle",
    "pairwise_distances",
    "fit",
    "class_scores",
    "predict",
    "ranked_labels",
    "calibrate_threshold",
    "save_model",
    "load_model",
]

_MARGIN_FLOOR = 1e-12
# Shape returned for zero-spread samples: steep enough that the activation
# is effectively a step at the common margin, small enough that the log-scale
# products stay finite.
_DEGENERATE_SHAPE = 1e8


class EvmError(ValueError):
    pass


@dataclass(frozen=True)
class EvmHyperparams:
    tail_size: int = 1000
    cover_threshold: float = 0.5
    distance: str = "cosine"
    distance_multiplier: float = 0.5

    def __post_init__(self):
        if self.tail_size < 1:
            raise EvmError("tail_size must be >= 1")
        if not 0.0 < self.cover_threshold <= 1.0:
            raise EvmError("cover_threshold must be in (0, 1]")
        if self.distance not in ("cosine", "euclidean"):
            raise EvmError(f"unknown distance {self.distance!r}")
        if self.distance_multiplier <= 0:
            raise EvmError("distance_multiplier must be positive")


@dataclass
class EvmClass:
    label: str
    anchors: np.ndarray  # (n, d) float32
    shapes: np.ndarray  # (n,) float64 Weibull shape per anchor
    scales: np.ndarray  # (n,) float64 Weibull scale per anchor


@dataclass
class EvmModel:
    classes: list
    hyper: EvmHyperparams
    extractor_id: str = "raw"
    novelty_threshold: float | None = None
    _labels: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self._labels = [c.label for c in self.classes]

    @property
    def labels(self) -> list:
        return list(self._labels)


def weibull_mle(samples, tol: float = 1e-9, max_iter: int = 200):
    """Maximum-likelihood (shape, scale) of a two-parameter Weibull.

    Newton iteration on the profiled shape equation, falling back to the
    fixed-point update whenever a Newton step leaves the domain. Zero samples
    are clamped to a tiny positive floor. All-equal samples have no finite
    maximizer (the likelihood grows without bound as the shape does); they
    return the limiting fit, a step boundary at the common value, as a large
    fixed shape. That case is real: tails against duplicated points are
    constant. A fit that fails to settle raises naming the iteration count.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise EvmError("weibull_mle: need at least 2 samples")
    if np.any(x < 0):
        raise EvmError("weibull_mle: samples must be non-negative")
    x = np.maximum(x, _MARGIN_FLOOR)
    if x.max() == x.min():
        return _DEGENERATE_SHAPE, float(x[0])
    ln = np.log(x)
    mean_ln = ln.mean()

    def moments(k):
        # Stable weighted moments of ln(x) under weights prop. to x^k.
        z = k * ln
        z -= z.max()
        w = np.exp(z)
        w /= w.sum()
        m1 = float(np.dot(w, ln))
        m2 = float(np.dot(w, ln * ln))
        return m1, m2 - m1 * m1

    # Standard moment-based start; falls back to 1.0 for zero-variance logs.
    spread = ln.std()
    k = 1.2 / spread if spread > 0 else 1.0
    for iteration in range(1, max_iter + 1):
        m1, var = moments(k)
        g = m1 - 1.0 / k - mean_ln
        gprime = var + 1.0 / (k * k)
        step = g / gprime if gprime > 0 else np.nan
        new_k = k - step
        if not np.isfinite(new_k) or new_k <= 0:
            denom = m1 - mean_ln
            if denom <= 0:
                raise EvmError(
                    f"weibull_mle: iteration left the domain after {iteration} iterations"
                )
            new_k = 1.0 / denom
        if abs(new_k - k) <= tol * max(1.0, abs(new_k)):
            k = new_k
            z = k * ln
            zmax = z.max()
            log_mean_pow = zmax + np.log(np.mean(np.exp(z - zmax)))
            scale = float(np.exp(log_mean_pow / k))
            return float(k), scale
        k = new_k
    raise EvmError(f"weibull_mle: no convergence after {max_iter} iterations")


def pairwise_distances(a, b, metric: str = "cosine") -> np.ndarray:
    """Distance matrix between row sets. Cosine distance of a zero vector
    is defined as 1 to everything (its direction is unknowable)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if metric == "euclidean":
        aa = np.sum(a * a, axis=1)[:, None]
        bb = np.sum(b * b, axis=1)[None, :]
        sq = aa + bb - 2.0 * (a @ b.T)
        return np.sqrt(np.maximum(sq, 0.0))
    if metric == "cosine":
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        zero_a = na == 0
        zero_b = nb == 0
        na = np.where(zero_a, 1.0, na)
        nb = np.where(zero_b, 1.0, nb)
        sim = (a / na[:, None]) @ (b / nb[:, None]).T
        dist = 1.0 - sim
        dist[zero_a, :] = 1.0
        dist[:, zero_b] = 1.0
        return np.clip(dist, 0.0, 2.0)
    raise EvmError(f"unknown distance {metric!r}")


def _anchor_activations(cls: EvmClass, x: np.ndarray, metric: str) -> np.ndarray:
    """exp(-(d / scale)^shape) for every (point, anchor) pair."""
    d = pairwise_distances(x, cls.anchors.astype(np.float64), metric)
    with np.errstate(divide="ignore", over="ignore"):
        z = cls.shapes[None, :] * np.log(d / cls.scales[None, :])
        return np.exp(-np.exp(z))


def fit(features_by_class: dict, hyper: EvmHyperparams = EvmHyperparams(), extractor_id: str = "raw") -> EvmModel:
    """Fit one anchor per training point, then reduce by greedy set cover.

    `features_by_class` maps class label to an (n, d) array. Tail sizes
    larger than the available other-class points use all of them. Classes
    are fitted independently (the per-class work only reads other classes'
    raw points), so the loop parallelizes trivially; the reference
    implementation keeps it sequential and vectorized.
    """
    labels = sorted(features_by_class)
    if len(labels) < 2:
        raise EvmError("fit: need at least 2 classes")
    stacks = {}
    for label in labels:
        pts = np.asarray(features_by_class[label], dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise EvmError(f"fit: class {label!r} needs a non-empty (n, d) array")
        stacks[label] = pts

    classes = []
    for label in labels:
        own = stacks[label]
        others = np.vstack([stacks[l] for l in labels if l != label])
        d = pairwise_distances(own, others, hyper.distance)
        tail = min(hyper.tail_size, d.shape[1])
        tails = np.partition(d, tail - 1, axis=1)[:, :tail]
        margins = np.maximum(hyper.distance_multiplier * tails, _MARGIN_FLOOR)
        shapes = np.empty(own.shape[0])
        scales = np.empty(own.shape[0])
        for i in range(own.shape[0]):
            shapes[i], scales[i] = weibull_mle(margins[i])

        full = EvmClass(
            label=label,
            anchors=own.astype(np.float32),
            shapes=shapes,
            scales=scales,
        )
        keep = _greedy_cover(full, own, hyper)
        classes.append(
            EvmClass(
                label=label,
                anchors=full.anchors[keep],
                shapes=shapes[keep],
                scales=scales[keep],
            )
        )
    return EvmModel(classes=classes, hyper=hyper, extractor_id=extractor_id)


def _greedy_cover(cls: EvmClass, own: np.ndarray, hyper: EvmHyperparams) -> list:
    """Minimal-ish anchor subset: every class point must be activated at or
    above the cover threshold by some kept anchor. Ties prefer the earlier
    anchor, and the kept list comes back in original index order."""
    act = _anchor_activations(cls, own, hyper.distance)  # (points, anchors)
    covers = act.T >= hyper.cover_threshold  # (anchors, points)
    # Every anchor activates itself at exactly 1.0 (distance 0), so the
    # greedy loop always terminates with all points covered.
    n_points = own.shape[0]
    uncovered = np.ones(n_points, dtype=bool)
    kept = []
    while uncovered.any():
        gains = (covers & uncovered[None, :]).sum(axis=1)
        best = int(np.argmax(gains))
        if gains[best] == 0:
            raise EvmError("set cover stalled; cover threshold above self-activation")
        kept.append(best)
        uncovered &= ~covers[best]
    return sorted(kept)


def class_scores(model: EvmModel, x) -> np.ndarray:
    """(n, K) max anchor activation per known class."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    dim = model.classes[0].anchors.shape[1]
    if x.shape[1] != dim:
        raise EvmError(f"feature dimension {x.shape[1]} != model dimension {dim}")
    cols = [
        _anchor_activations(cls, x, model.hyper.distance).max(axis=1)
        for cls in model.classes
    ]
    return np.stack(cols, axis=1)


def predict(model: EvmModel, x) -> np.ndarray:
    """K+1 probability vectors: known scores normalized to sum one, scaled
    by the top score, with 1 - top appended as the novelty probability.

    All-zero known scores yield (0, ..., 0, 1)."""
    scores = class_scores(model, x)
    km = scores.max(axis=1)
    total = scores.sum(axis=1)
    safe = np.where(total > 0, total, 1.0)
    known = scores / safe[:, None] * km[:, None]
    out = np.concatenate([known, (1.0 - km)[:, None]], axis=1)
    return out


def ranked_labels(model: EvmModel, probs: np.ndarray, novel_label: str = "novel") -> list:
    """Per row, all K+1 labels ordered by descending probability (stable)."""
    labels = model.labels + [novel_label]
    probs = np.atleast_2d(probs)
    order = np.argsort(-probs, axis=1, kind="stable")
    return [[labels[j] for j in row] for row in order]


@dataclass
class CalibrationResult:
    threshold: float
    fpr: float
    fnr: float

    @property
    def eer(self) -> float:
        return 0.5 * (self.fpr + self.fnr)


def calibrate_threshold(known_scores, novel_scores) -> CalibrationResult:
    """Equal-error threshold over top known-class scores (k_m values).

    A sample is flagged novel when its k_m falls strictly below the
    threshold. Candidates are every observed score, each score's float
    successor, and 0.0; the smallest candidate minimizing |FPR - FNR| wins,
    so perfectly separated sets return the smallest representable qualifying
    value.
    """
    known = np.asarray(known_scores, dtype=np.float64).ravel()
    novel = np.asarray(novel_scores, dtype=np.float64).ravel()
    if known.size == 0 or novel.size == 0:
        raise EvmError("calibrate_threshold: both score sets must be non-empty")
    observed = np.unique(np.concatenate([known, novel]))
    candidates = np.unique(
        np.concatenate([[0.0], observed, np.nextafter(observed, np.inf)])
    )
    known_sorted = np.sort(known)
    novel_sorted = np.sort(novel)
    fpr = np.searchsorted(known_sorted, candidates, side="left") / known.size
    fnr = 1.0 - np.searchsorted(novel_sorted, candidates, side="left") / novel.size
    gap = np.abs(fpr - fnr)
    best = int(np.argmin(gap))  # first minimum = smallest threshold
    return CalibrationResult(
        threshold=float(candidates[best]), fpr=float(fpr[best]), fnr=float(fnr[best])
    )


_MAGIC = b"EVM1"
MODEL_FORMAT = "EVM1"
MODEL_FORMAT_VERSION = 1
_DISTANCE_CODES = {"cosine": 0, "euclidean": 1}
_DISTANCE_NAMES = {v: k for k, v in _DISTANCE_CODES.items()}


def save_model(model: EvmModel, path) -> None:
    """Versioned little-endian binary container with a CRC32 trailer."""
    chunks = [_MAGIC, struct.pack("<I", MODEL_FORMAT_VERSION)]
    hyper = model.hyper
    thr = np.nan if model.novelty_threshold is None else float(model.novelty_threshold)
    chunks.append(
        struct.pack(
            "<BIdd d",
            _DISTANCE_CODES[hyper.distance],
            hyper.tail_size,
            hyper.cover_threshold,
            hyper.distance_multiplier,
            thr,
        )
    )
    ext = model.extractor_id.encode("utf-8")
    chunks.append(struct.pack("<H", len(ext)))
    chunks.append(ext)
    chunks.append(struct.pack("<I", len(model.classes)))
    for cls in model.classes:
        label = cls.label.encode("utf-8")
        anchors = np.ascontiguousarray(cls.anchors, dtype="<f4")
        shapes = np.ascontiguousarray(cls.shapes, dtype="<f8")
        scales = np.ascontiguousarray(cls.scales, dtype="<f8")
        chunks.append(struct.pack("<H", len(label)))
        chunks.append(label)
        chunks.append(struct.pack("<II", anchors.shape[0], anchors.shape[1]))
        chunks.append(anchors.tobytes())
        chunks.append(shapes.tobytes())
        chunks.append(scales.tobytes())
    payload = b"".join(chunks)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(struct.pack("<I", crc))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise EvmError("model file truncated")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(path) -> EvmModel:
    raw = open(path, "rb").read()
    if len(raw) < len(_MAGIC) + 4:
        raise EvmError("model file truncated")
    payload, trailer = raw[:-4], raw[-4:]
    (crc,) = struct.unpack("<I", trailer)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise EvmError("model file checksum mismatch")
    rd = _Reader(payload)
    if rd.take(4) != _MAGIC:
        raise EvmError("not an EVM model file (bad magic)")
    (version,) = rd.unpack("<I")
    if version != MODEL_FORMAT_VERSION:
        raise EvmError(f"unsupported model version {version}")
    dist_code, tail, cover, mult, thr = rd.unpack("<BIdd d")
    if dist_code not in _DISTANCE_NAMES:
        raise EvmError(f"unknown distance code {dist_code}")
    (ext_len,) = rd.unpack("<H")
    extractor_id = rd.take(ext_len).decode("utf-8")
    (n_classes,) = rd.unpack("<I")
    classes = []
    for _ in range(n_classes):
        (label_len,) = rd.unpack("<H")
        label = rd.take(label_len).decode("utf-8")
        n, d = rd.unpack("<II")
        anchors = np.frombuffer(rd.take(n * d * 4), dtype="<f4").reshape(n, d).copy()
        shapes = np.frombuffer(rd.take(n * 8), dtype="<f8").copy()
        scales = np.frombuffer(rd.take(n * 8), dtype="<f8").copy()
        classes.append(EvmClass(label=label, anchors=anchors, shapes=shapes, scales=scales))
    if rd.pos != len(payload):
        raise EvmError("model file has trailing bytes")
    return EvmModel(
        classes=classes,
        hyper=EvmHyperparams(
            tail_size=tail,
            cover_threshold=cover,
            distance=_DISTANCE_NAMES[dist_code],
            distance_multiplier=mult,
        ),
        extractor_id=extractor_id,
        novelty_threshold=None if np.isnan(thr) else float(thr),
    )
