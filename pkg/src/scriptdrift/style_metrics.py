"""Interpretable style measurements of a handwriting line image.

All measures operate on a global-threshold binarization of the line: pen
pressure (mean ink intensity), slant angle (shear search over a fixed
candidate set), word spacing (mean width of wide column gaps), character
size (mean ink run per written column), and Shannon entropy of the pen and
background regions. These are deliberately cheap, deterministic functions;
they feed the ontology bins and the novelty characterization tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import as_line_image

__all__ = [
    "SLANT_ANGLES",
    "STYLE_ATTRIBUTES",
    "MEASUREMENT_NAMES",
    "NoInkError",
    "StyleVector",
    "otsu_threshold",
    "foreground_mask",
    "pen_pressure",
    "slant_angle",
    "word_spacing",
    "character_size",
    "region_entropy",
    "style_vector",
    "shear_row_shifts",
]

# Candidate slant angles (degrees); positive leans the tops of strokes to
# the right. The asymmetric spacing puts more resolution near upright.
SLANT_ANGLES = (-45, -30, -20, -15, -5, 0, 5, 15, 20, 30, 45)

# The four attributes the ontology bins.
STYLE_ATTRIBUTES = ("pen_pressure", "slant_angle", "word_spacing", "character_size")

# Full measurement bundle, in StyleVector field order.
MEASUREMENT_NAMES = STYLE_ATTRIBUTES + ("background_entropy", "pen_entropy")

_SPACE_QUANTILE = 0.30
_MIN_WORD_GAP_PX = 3.0


class NoInkError(ValueError):
    """Raised when a measure needs ink pixels and the mask has none."""


@dataclass(frozen=True)
class StyleVector:
    """The six per-line measurements, in a fixed order."""

    pen_pressure: float
    slant_angle: float
    word_spacing: float
    character_size: float
    background_entropy: float
    pen_entropy: float

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in MEASUREMENT_NAMES}

    @classmethod
    def from_dict(cls, payload: dict) -> "StyleVector":
        return cls(**{name: float(payload[name]) for name in MEASUREMENT_NAMES})

    def as_array(self, names=STYLE_ATTRIBUTES) -> np.ndarray:
        return np.array([getattr(self, name) for name in names], dtype=float)


def otsu_threshold(image) -> int:
    """Otsu's global threshold; ink is everything at or below it.

    Ties in the between-class variance resolve to the smallest threshold, so
    constant images degrade predictably (all-0 pages are all ink, all-255
    pages are all background).
    """
    image = as_line_image(image)
    counts = np.bincount(image.ravel(), minlength=256).astype(np.float64)
    total = counts.sum()
    p = counts / total
    omega0 = np.cumsum(p)
    mu_cum = np.cumsum(p * np.arange(256))
    mu_total = mu_cum[-1]
    omega1 = 1.0 - omega0
    valid = (omega0 > 0) & (omega1 > 0)
    sigma_b = np.zeros(256)
    om0 = omega0[valid]
    om1 = omega1[valid]
    mu0 = mu_cum[valid] / om0
    mu1 = (mu_total - mu_cum[valid]) / om1
    sigma_b[valid] = om0 * om1 * (mu0 - mu1) ** 2
    return int(np.argmax(sigma_b))


def foreground_mask(image) -> np.ndarray:
    """Boolean ink mask from Otsu's threshold (True = pen)."""
    image = as_line_image(image)
    return image <= otsu_threshold(image)


def _require_ink(mask, measure: str) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError(f"{measure}: mask must be 2-D, got shape {mask.shape}")
    if not mask.any():
        raise NoInkError(f"{measure}: no ink pixels in mask")
    return mask


def pen_pressure(image, mask=None) -> float:
    """Mean intensity of the ink pixels (lower = heavier pressure)."""
    image = as_line_image(image)
    if mask is None:
        mask = foreground_mask(image)
    mask = _require_ink(mask, "pen_pressure")
    return float(image[mask].mean())


def shear_row_shifts(angle_deg: float, height: int) -> np.ndarray:
    """Per-row horizontal pixel shifts of a shear by `angle_deg`.

    The bottom row is the anchor (shift 0); a positive angle pushes the top
    rows to the right. Rounding is symmetric, so shifting by -angle exactly
    undoes shifting by +angle.
    """
    offsets = math.tan(math.radians(angle_deg)) * (height - 1 - np.arange(height))
    return np.rint(offsets).astype(np.int64)


def _vertical_stroke_score(mask, shifts) -> int:
    """Sum of squared column heights over contiguous full columns.

    A column counts only when its ink is one unbroken vertical run (count ==
    extent); that rewards shears that straighten strokes into solid verticals.
    """
    height = mask.shape[0]
    rows, cols = np.nonzero(mask)
    cols = cols + shifts[rows]
    cols -= cols.min()
    width = int(cols.max()) + 1
    n = np.bincount(cols, minlength=width)
    top = np.full(width, height, dtype=np.int64)
    bot = np.full(width, -1, dtype=np.int64)
    np.minimum.at(top, cols, rows)
    np.maximum.at(bot, cols, rows)
    extent = bot - top + 1
    contiguous = (n > 0) & (n == extent)
    return int(np.sum(extent[contiguous] ** 2, dtype=np.int64))


def slant_angle(mask, angles=SLANT_ANGLES) -> int:
    """Dominant slant: the candidate whose removal best straightens strokes.

    For each candidate angle the mask is sheared by the opposite angle and
    scored by `_vertical_stroke_score`; ties prefer the smallest magnitude,
    then the negative angle.
    """
    mask = _require_ink(mask, "slant_angle")
    height = mask.shape[0]
    best_angle = None
    best_score = -1
    for angle in sorted(angles, key=lambda a: (abs(a), a)):
        score = _vertical_stroke_score(mask, shear_row_shifts(-angle, height))
        if score > best_score:
            best_score = score
            best_angle = angle
    return int(best_angle)


def _nearest_rank(values: np.ndarray, q: float) -> float:
    ordered = np.sort(values)
    rank = max(1, math.ceil(q * ordered.size))
    return float(ordered[rank - 1])


def _space_columns(mask, measure: str):
    """Column ink counts plus the space-column labeling shared by the
    word-spacing and character-size measures.

    The space threshold is the 30% nearest-rank quantile of the ink-bearing
    column counts; a column is a space when its count falls strictly below
    that, which makes every empty column a space and leaves the quantile
    column itself as written text.
    """
    mask = _require_ink(mask, measure)
    counts = mask.sum(axis=0).astype(np.int64)
    ink_counts = counts[counts > 0]
    cut = _nearest_rank(ink_counts, _SPACE_QUANTILE)
    return counts, counts < cut


def character_size(mask) -> float:
    """Mean ink pixels per written (non-space) column: a stroke-height proxy."""
    counts, space = _space_columns(mask, "character_size")
    written = counts[~space]
    if written.size == 0:
        raise NoInkError("character_size: every column is a space column")
    return float(written.mean())


def word_spacing(mask) -> float:
    """Mean width of the wide interior gaps between written columns.

    Gaps narrower than max(0.5 * character_size, 3px) are treated as letter
    spacing and ignored; a line with no qualifying gap measures 0.0.
    """
    counts, space = _space_columns(mask, "word_spacing")
    written_cols = np.flatnonzero(~space)
    if written_cols.size == 0:
        raise NoInkError("word_spacing: every column is a space column")
    gaps = np.diff(written_cols) - 1
    gaps = gaps[gaps > 0]
    if gaps.size == 0:
        return 0.0
    cutoff = max(0.5 * float(counts[~space].mean()), _MIN_WORD_GAP_PX)
    word_gaps = gaps[gaps >= cutoff]
    if word_gaps.size == 0:
        return 0.0
    return float(word_gaps.mean())


def region_entropy(image, mask=None, region: str = "background") -> float:
    """Shannon entropy (bits) of the 256-bin intensity histogram of a region.

    `region` selects the pen ("foreground") or page ("background") pixels.
    Ranges over [0, 8]: 0 for a flat region, 8 for a uniform spread.
    """
    if region not in ("foreground", "background"):
        raise ValueError(f"region_entropy: unknown region {region!r}")
    image = as_line_image(image)
    if mask is None:
        mask = foreground_mask(image)
    mask = np.asarray(mask, dtype=bool)
    values = image[mask] if region == "foreground" else image[~mask]
    if values.size == 0:
        raise ValueError(f"region_entropy: empty {region} region")
    counts = np.bincount(values, minlength=256)
    p = counts[counts > 0] / values.size
    return float(-(p * np.log2(p)).sum()) + 0.0


def style_vector(image, mask=None) -> StyleVector:
    """All six measurements of one line image.

    The binarization is computed once and shared. Raises NoInkError for a
    blank page (pen_pressure is undefined without ink).
    """
    image = as_line_image(image)
    if mask is None:
        mask = foreground_mask(image)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise NoInkError(
            "style_vector: no ink pixels; pen_pressure is undefined on a blank page"
        )
    return StyleVector(
        pen_pressure=pen_pressure(image, mask),
        slant_angle=float(slant_angle(mask)),
        word_spacing=word_spacing(mask),
        character_size=character_size(mask),
        background_entropy=region_entropy(image, mask, "background"),
        pen_entropy=region_entropy(image, mask, "foreground"),
    )
