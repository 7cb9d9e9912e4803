"""Width-invariant gradient descriptors for line images.

Line images share a height but not a width, so the raw HOG grid cannot be a
fixed-length feature. Two poolings fix that: the global mean over all block
descriptors, and a sectioned variant that splits the block columns into M
contiguous spans, averaging each, with the global mean prepended. Both keep
the dimension a function of the extractor alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .corpus import as_line_image

__all__ = [
    "FeatureError",
    "FeatureVector",
    "EXTRACTORS",
    "hog_blocks",
    "mean_hog",
    "m_mean_hog",
    "extract",
    "extractor_dimension",
    "save_features",
    "load_features",
]

_TARGET_HEIGHT = 64
_CELL = 8
_BINS = 9
_BLOCK = 2  # cells per block side, stride one cell
_CLIP = 0.2
_EPS = 1e-12
_SECTIONS = 10


class FeatureError(ValueError):
    pass


@dataclass
class FeatureVector:
    values: np.ndarray
    extractor_id: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)


def _resize_to_height(image: np.ndarray, target: int = _TARGET_HEIGHT) -> np.ndarray:
    h, w = image.shape
    if h == target:
        return image
    new_w = max(1, round(w * target / h))
    pil = Image.fromarray(image, mode="L").resize((new_w, target), Image.BILINEAR)
    return np.asarray(pil, dtype=np.uint8)


def _gradients(image: np.ndarray):
    """Centered [-1, 0, 1] differences with replicated edges."""
    f = image.astype(np.float64)
    padded = np.pad(f, 1, mode="edge")
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    return gx, gy


def _cell_histograms(image: np.ndarray) -> np.ndarray:
    """(cell_rows, cell_cols, BINS) magnitude-weighted orientation histograms.

    Orientations are unsigned (mod 180 degrees); magnitude splits linearly
    between the two nearest bin centers (0, 20, ... 160 degrees, wrapping).
    Centering a bin on 0 keeps axis-aligned gradients in one bin, and the
    wrap makes mirroring a pure bin permutation, so mirrored images keep
    their descriptor norms. Trailing columns that do not fill a cell are
    dropped.
    """
    h, w = image.shape
    cols = w // _CELL
    rows = h // _CELL
    if cols < 1:
        raise FeatureError(f"image narrower ({w}px) than one {_CELL}px cell")
    image = image[: rows * _CELL, : cols * _CELL]
    gx, gy = _gradients(image)
    magnitude = np.hypot(gx, gy)
    theta = np.degrees(np.arctan2(gy, gx)) % 180.0
    pos = theta / 20.0
    lower = np.floor(pos)
    frac = pos - lower
    lower_bin = lower.astype(np.int64) % _BINS
    upper_bin = (lower_bin + 1) % _BINS

    rr, cc = np.indices(image.shape)
    cell = (rr // _CELL) * cols + (cc // _CELL)
    size = rows * cols * _BINS
    hist = np.bincount(
        (cell * _BINS + lower_bin).ravel(),
        weights=(magnitude * (1.0 - frac)).ravel(),
        minlength=size,
    )
    hist += np.bincount(
        (cell * _BINS + upper_bin).ravel(),
        weights=(magnitude * frac).ravel(),
        minlength=size,
    )
    return hist.reshape(rows, cols, _BINS)


def _l2_hys(blocks: np.ndarray) -> np.ndarray:
    norm = np.sqrt(np.sum(blocks**2, axis=-1, keepdims=True) + _EPS**2)
    out = blocks / norm
    np.clip(out, None, _CLIP, out=out)
    norm = np.sqrt(np.sum(out**2, axis=-1, keepdims=True) + _EPS**2)
    return out / norm


def hog_blocks(image) -> np.ndarray:
    """L2-Hys-normalized 2x2-cell block descriptors.

    Returns (block_rows, block_cols, 36). The image is first resized to a
    64px height preserving aspect; an all-flat image yields all-zero blocks
    (the epsilon in the normalizer keeps zero energy at zero).
    """
    image = _resize_to_height(as_line_image(image))
    hist = _cell_histograms(image)
    if hist.shape[1] < _BLOCK:
        raise FeatureError(
            f"image too narrow: {hist.shape[1]} cell column(s), need >= {_BLOCK}"
        )
    blocks = np.concatenate(
        [hist[:-1, :-1], hist[:-1, 1:], hist[1:, :-1], hist[1:, 1:]], axis=2
    )
    return _l2_hys(blocks)


def mean_hog(image) -> np.ndarray:
    """Mean of all block descriptors: one 36-dim vector for any width."""
    return hog_blocks(image).mean(axis=(0, 1))


def m_mean_hog(image, sections: int = _SECTIONS) -> np.ndarray:
    """Sectioned mean descriptors with the global mean prepended.

    Block columns split into `sections` contiguous spans (remainder spread
    over the leftmost spans); each span is averaged, giving localized shape
    cues the global mean washes out. Dimension: (sections + 1) * 36.
    """
    blocks = hog_blocks(image)
    n_cols = blocks.shape[1]
    if n_cols < sections:
        raise FeatureError(
            f"image too narrow: {n_cols} block column(s) cannot fill {sections} sections"
        )
    parts = [blocks.mean(axis=(0, 1))]
    for span in np.array_split(np.arange(n_cols), sections):
        parts.append(blocks[:, span].mean(axis=(0, 1)))
    return np.concatenate(parts)


_BLOCK_DIM = _BLOCK * _BLOCK * _BINS

EXTRACTORS = {
    "mean-hog": {"fn": mean_hog, "dimension": _BLOCK_DIM},
    "m-mean-hog": {
        "fn": lambda image: m_mean_hog(image, _SECTIONS),
        "dimension": (_SECTIONS + 1) * _BLOCK_DIM,
    },
}


def extractor_dimension(extractor_id: str) -> int:
    try:
        return EXTRACTORS[extractor_id]["dimension"]
    except KeyError:
        raise FeatureError(f"unknown extractor {extractor_id!r}") from None


def extract(image, extractor_id: str = "mean-hog") -> FeatureVector:
    if extractor_id not in EXTRACTORS:
        raise FeatureError(f"unknown extractor {extractor_id!r}")
    values = EXTRACTORS[extractor_id]["fn"](image)
    return FeatureVector(values=values, extractor_id=extractor_id)


def save_features(path, ids, matrix, extractor_id: str) -> None:
    """Write an id-aligned feature matrix as JSON (floats round-trip exactly)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    ids = list(ids)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise FeatureError("save_features: ids and matrix rows must align")
    payload = {
        "format": "scriptdrift-features",
        "version": 1,
        "extractor": extractor_id,
        "dimension": int(matrix.shape[1]),
        "ids": ids,
        "vectors": [[float(v) for v in row] for row in matrix],
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_features(path):
    """Read a feature file; returns (ids, matrix, extractor_id)."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "scriptdrift-features":
        raise FeatureError(f"{path}: not a feature file")
    matrix = np.asarray(payload["vectors"], dtype=np.float64)
    if matrix.size == 0:
        matrix = matrix.reshape(0, payload["dimension"])
    if matrix.shape[1] != payload["dimension"]:
        raise FeatureError(f"{path}: dimension header disagrees with rows")
    return payload["ids"], matrix, payload["extractor"]
