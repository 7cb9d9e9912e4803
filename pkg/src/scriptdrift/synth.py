"""Synthetic data with controlled properties.

Used by the self-check suite, the demos, and the tests: line images whose
style measurements are known by construction, and Gaussian point clouds for
exercising the open-set model without any real corpus.
"""

from __future__ import annotations

import numpy as np

from .corpus import as_line_image
from .seeding import derive_rng
from .style_metrics import shear_row_shifts

__all__ = ["blank_page", "render_line", "pentagon_blobs", "center_blob"]


def blank_page(height: int, width: int, background: int = 255) -> np.ndarray:
    return np.full((height, width), background, dtype=np.uint8)


def render_line(
    words=(4, 3, 5),
    bar_width: int = 3,
    bar_height: int | None = None,
    letter_gap: int = 4,
    word_gap=20,
    height: int = 64,
    margin: int = 8,
    ink: int = 40,
    background: int = 255,
    slant_deg: float = 0.0,
) -> np.ndarray:
    """Render a line of vertical-bar 'words' on a flat background.

    Each word is a count of bars; bars are `bar_width` wide, `bar_height`
    tall (full height by default), drawn up from the bottom margin of the
    canvas. `word_gap` may be one int or one per inter-word gap. A nonzero
    `slant_deg` shears the rendered bars (the margin must absorb the shift).
    """
    words = [int(w) for w in words]
    if any(w < 1 for w in words):
        raise ValueError("each word needs at least one bar")
    gaps = word_gap if hasattr(word_gap, "__len__") else [word_gap] * (len(words) - 1)
    gaps = [int(g) for g in gaps]
    if len(gaps) != len(words) - 1:
        raise ValueError("need one word_gap per inter-word gap")
    if bar_height is None:
        bar_height = height
    if bar_height > height:
        raise ValueError("bar_height exceeds canvas height")

    word_widths = [w * bar_width + (w - 1) * letter_gap for w in words]
    width = 2 * margin + sum(word_widths) + sum(gaps)
    mask = np.zeros((height, width), dtype=bool)
    x = margin
    for j, w in enumerate(words):
        for i in range(w):
            col = x + i * (bar_width + letter_gap)
            mask[height - bar_height :, col : col + bar_width] = True
        x += word_widths[j]
        if j < len(gaps):
            x += gaps[j]

    if slant_deg:
        shifts = shear_row_shifts(slant_deg, height)
        rows, cols = np.nonzero(mask)
        cols = cols + shifts[rows]
        if cols.min() < 0 or cols.max() >= width:
            raise ValueError("slant shifts exceed the margin; widen the canvas")
        sheared = np.zeros_like(mask)
        sheared[rows, cols] = True
        mask = sheared

    image = np.full((height, width), background, dtype=np.uint8)
    image[mask] = ink
    return as_line_image(image)


def pentagon_blobs(n_per_class: int = 200, sigma: float = 0.1, radius: float = 5.0, seed: int = 0):
    """Five isotropic Gaussian classes centered on a regular pentagon.

    Returns (points, labels): points of shape (5 * n_per_class, 2), labels a
    list of class strings 'w0'..'w4'.
    """
    rng = derive_rng(seed, "pentagon")
    angles = np.pi / 2 + 2.0 * np.pi * np.arange(5) / 5
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    points = []
    labels = []
    for k, center in enumerate(centers):
        points.append(center + sigma * rng.standard_normal((n_per_class, 2)))
        labels.extend([f"w{k}"] * n_per_class)
    return np.vstack(points), labels


def center_blob(n: int = 200, sigma: float = 0.1, seed: int = 0) -> np.ndarray:
    """Points at the pentagon's center: novel w.r.t. `pentagon_blobs` classes."""
    rng = derive_rng(seed, "center")
    return sigma * rng.standard_normal((n, 2))
