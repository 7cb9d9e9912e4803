"""Image transforms that inject appearance and style novelties.

A Transform is a serializable (kind, params) record; `apply` executes one on
a line image and `compose` chains several into a pipeline whose subtype label
joins the step labels ("Slant w/ Dilate"). `build_novel_pool` drives the
transforms over a base corpus to mint a difficulty-graded novelty manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import ontology
from .corpus import (
    UNKNOWN_WRITER,
    LineRecord,
    Manifest,
    as_line_image,
    load_image,
    make_manifest,
    save_image,
)
from .seeding import derive_rng
from .style_metrics import foreground_mask, shear_row_shifts, style_vector

__all__ = [
    "AugmentError",
    "Transform",
    "BackgroundAsset",
    "gaussian_noise",
    "antique_background",
    "reflect_horizontal",
    "reflect_vertical",
    "gaussian_blur",
    "invert_color",
    "dilate",
    "erode",
    "shear",
    "resize",
    "pen_color",
    "pen_texture",
    "background_texture",
    "compose",
    "diamond_element",
    "dilate_mask",
    "erode_mask",
    "apply",
    "build_novel_pool",
]

_MAX_SHEAR_DEG = 60.0

# Kinds that replace the page behind the writing; a pipeline may contain at
# most one of these.
_BACKGROUND_KINDS = {"antique_background", "background_texture"}

# Kinds that consume randomness and therefore need an rng (or a seed).
_STOCHASTIC_KINDS = {"gaussian_noise", "antique_background", "pen_texture", "background_texture"}


class AugmentError(ValueError):
    pass


@dataclass(frozen=True)
class Transform:
    """One transform step (or a composed pipeline when kind == 'compose')."""

    kind: str
    params: dict = field(default_factory=dict)
    label: str = ""
    seed: int | None = None

    def to_dict(self) -> dict:
        params = dict(self.params)
        if self.kind == "compose":
            params["steps"] = [t.to_dict() for t in params["steps"]]
        out = {"kind": self.kind, "params": params, "label": self.label}
        if self.seed is not None:
            out["seed"] = self.seed
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "Transform":
        kind = payload["kind"]
        params = dict(payload.get("params", {}))
        if kind == "compose":
            steps = [cls.from_dict(p) for p in params["steps"]]
            return compose(steps, label=payload.get("label", ""))
        factory = _FACTORIES.get(kind)
        if factory is None:
            raise AugmentError(f"unknown transform kind {kind!r}")
        return factory(**params, label=payload.get("label", "") or None, seed=payload.get("seed"))


def _make(kind, params, default_label, label=None, seed=None) -> Transform:
    return Transform(kind=kind, params=params, label=label or default_label, seed=seed)


def gaussian_noise(sigma: float = 25.0, label=None, seed=None) -> Transform:
    if sigma <= 0:
        raise AugmentError("gaussian_noise: sigma must be positive")
    return _make("gaussian_noise", {"sigma": float(sigma)}, "Noise", label, seed)


def gaussian_blur(sigma: float = 1.5, label=None, seed=None) -> Transform:
    if sigma <= 0:
        raise AugmentError("gaussian_blur: sigma must be positive")
    return _make("gaussian_blur", {"sigma": float(sigma)}, "Blur", label, seed)


def reflect_horizontal(label=None, seed=None) -> Transform:
    """Flip over the horizontal axis (top-bottom mirror)."""
    return _make("reflect_horizontal", {}, "Reflect0", label, seed)


def reflect_vertical(label=None, seed=None) -> Transform:
    """Flip over the vertical axis (left-right mirror)."""
    return _make("reflect_vertical", {}, "Reflect1", label, seed)


def invert_color(label=None, seed=None) -> Transform:
    return _make("invert_color", {}, "InvertColor", label, seed)


def dilate(radius: int = 1, label=None, seed=None) -> Transform:
    if radius < 1:
        raise AugmentError("dilate: radius must be >= 1")
    return _make("dilate", {"radius": int(radius)}, "Dilate", label, seed)


def erode(radius: int = 1, label=None, seed=None) -> Transform:
    if radius < 1:
        raise AugmentError("erode: radius must be >= 1")
    return _make("erode", {"radius": int(radius)}, "Erode", label, seed)


def shear(degrees: float, label=None, seed=None) -> Transform:
    if abs(degrees) > _MAX_SHEAR_DEG:
        raise AugmentError(f"shear: |degrees| must be <= {_MAX_SHEAR_DEG}")
    return _make("shear", {"degrees": float(degrees)}, "Slant", label, seed)


def resize(scale: float = 1.5, label=None, seed=None) -> Transform:
    if scale <= 0:
        raise AugmentError("resize: scale must be positive")
    default = "Increase Size" if scale > 1 else "Decrease Size"
    return _make("resize", {"scale": float(scale)}, default, label, seed)


def pen_color(value: int, label=None, seed=None) -> Transform:
    if not 0 <= value <= 255:
        raise AugmentError("pen_color: value must be in [0, 255]")
    return _make("pen_color", {"value": int(value)}, "Pen Color", label, seed)


def pen_texture(asset: str, label=None, seed=None) -> Transform:
    return _make("pen_texture", {"asset": str(asset)}, "Pen Texture", label, seed)


def antique_background(asset: str, label=None, seed=None) -> Transform:
    return _make("antique_background", {"asset": str(asset)}, "Antique", label, seed)


def background_texture(asset: str, label=None, seed=None) -> Transform:
    return _make("background_texture", {"asset": str(asset)}, "Background Texture", label, seed)


_FACTORIES = {
    "gaussian_noise": gaussian_noise,
    "gaussian_blur": gaussian_blur,
    "reflect_horizontal": reflect_horizontal,
    "reflect_vertical": reflect_vertical,
    "invert_color": invert_color,
    "dilate": dilate,
    "erode": erode,
    "shear": shear,
    "resize": resize,
    "pen_color": pen_color,
    "pen_texture": pen_texture,
    "antique_background": antique_background,
    "background_texture": background_texture,
}


def compose(transforms, label=None) -> Transform:
    """Chain transforms into one pipeline; label defaults to joined steps."""
    steps = []
    for t in transforms:
        if t.kind == "compose":
            steps.extend(t.params["steps"])
        else:
            steps.append(t)
    if not steps:
        raise AugmentError("compose: empty pipeline")
    backgrounds = [t for t in steps if t.kind in _BACKGROUND_KINDS]
    if len(backgrounds) > 1:
        raise AugmentError("compose: at most one background replacement per pipeline")
    joined = " w/ ".join(t.label for t in steps)
    return Transform(kind="compose", params={"steps": steps}, label=label or joined)


@dataclass
class BackgroundAsset:
    """A page or pen texture; tileable assets repeat to cover larger lines."""

    id: str
    image: np.ndarray
    tileable: bool = True

    def __post_init__(self):
        self.image = as_line_image(self.image)


def diamond_element(radius: int) -> np.ndarray:
    """4-connected structuring element: |dx| + |dy| <= radius."""
    if radius < 1:
        raise AugmentError("structuring element radius must be >= 1")
    span = np.arange(-radius, radius + 1)
    return (np.abs(span[:, None]) + np.abs(span[None, :])) <= radius


def dilate_mask(mask, radius: int = 1) -> np.ndarray:
    """Binary dilation by the 4-connected diamond (outside counts as off)."""
    mask = np.asarray(mask, dtype=bool)
    return ndimage.binary_dilation(mask, structure=diamond_element(radius))


def erode_mask(mask, radius: int = 1) -> np.ndarray:
    """Binary erosion by the 4-connected diamond (outside counts as off)."""
    mask = np.asarray(mask, dtype=bool)
    return ndimage.binary_erosion(mask, structure=diamond_element(radius), border_value=0)


def _background_fill(image, mask) -> int:
    bg = image[~mask]
    if bg.size == 0:
        return 255
    return int(np.median(bg))


def _asset_crop(asset: BackgroundAsset, shape, rng) -> np.ndarray:
    tile = asset.image
    h, w = shape
    if tile.shape[0] < h or tile.shape[1] < w:
        if not asset.tileable:
            raise AugmentError(
                f"asset {asset.id!r} ({tile.shape[0]}x{tile.shape[1]}) is smaller than "
                f"the line ({h}x{w}) and not tileable"
            )
        reps = (-(-h // tile.shape[0]), -(-w // tile.shape[1]))
        tile = np.tile(tile, reps)
    top = int(rng.integers(tile.shape[0] - h + 1))
    left = int(rng.integers(tile.shape[1] - w + 1))
    return tile[top : top + h, left : left + w]


def _need_rng(transform: Transform, rng):
    if transform.seed is not None:
        return derive_rng(transform.seed, "transform", transform.kind)
    if rng is None:
        raise AugmentError(f"{transform.kind}: transform needs an rng (or a seed)")
    return rng


def _resolve_asset(transform: Transform, assets) -> BackgroundAsset:
    asset_id = transform.params["asset"]
    if not assets or asset_id not in assets:
        raise AugmentError(f"{transform.kind}: unknown asset id {asset_id!r}")
    return assets[asset_id]


def _shear_image(image, degrees: float) -> np.ndarray:
    mask = foreground_mask(image)
    fill = _background_fill(image, mask)
    shifts = shear_row_shifts(degrees, image.shape[0])
    out = np.full_like(image, fill)
    width = image.shape[1]
    for r, s in enumerate(shifts):
        s = int(s)
        if s >= 0:
            if s < width:
                out[r, s:] = image[r, : width - s]
        else:
            if -s < width:
                out[r, : width + s] = image[r, -s:]
    return out


def _resize_image(image, scale: float) -> np.ndarray:
    from PIL import Image

    h, w = image.shape
    new_h = max(1, round(h * scale))
    new_w = max(1, round(w * scale))
    resized = np.asarray(
        Image.fromarray(image, mode="L").resize((new_w, new_h), Image.BILINEAR),
        dtype=np.uint8,
    )
    if new_h == h:
        return resized
    if new_h > h:
        top = (new_h - h) // 2
        return resized[top : top + h]
    fill = _background_fill(image, foreground_mask(image))
    out = np.full((h, new_w), fill, dtype=np.uint8)
    top = (h - new_h) // 2
    out[top : top + new_h] = resized
    return out


def _blend_pen(image, mask, values) -> np.ndarray:
    """Blend replacement values into ink pixels, weighted by pen pressure.

    Darker originals (heavier pressure) take more of the new value, so faint
    strokes keep their faintness under a pen swap.
    """
    out = image.astype(np.float64)
    weight = (255.0 - out[mask]) / 255.0
    out[mask] = weight * values + (1.0 - weight) * out[mask]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def apply(image, transform: Transform, rng=None, assets=None) -> np.ndarray:
    """Run one transform (or pipeline) on a line image; returns a new image."""
    image = as_line_image(image)
    kind = transform.kind

    if kind == "compose":
        out = image
        for step in transform.params["steps"]:
            out = apply(out, step, rng=rng, assets=assets)
        return out
    if kind == "reflect_horizontal":
        return np.flipud(image).copy()
    if kind == "reflect_vertical":
        return np.fliplr(image).copy()
    if kind == "invert_color":
        return (255 - image.astype(np.int16)).astype(np.uint8)
    if kind == "gaussian_noise":
        gen = _need_rng(transform, rng)
        noisy = image.astype(np.float64) + gen.normal(0.0, transform.params["sigma"], image.shape)
        return np.clip(np.rint(noisy), 0, 255).astype(np.uint8)
    if kind == "gaussian_blur":
        blurred = ndimage.gaussian_filter(image.astype(np.float64), transform.params["sigma"])
        return np.clip(np.rint(blurred), 0, 255).astype(np.uint8)
    if kind == "dilate":
        mask = foreground_mask(image)
        grown = dilate_mask(mask, transform.params["radius"])
        out = image.copy()
        new_pixels = grown & ~mask
        if new_pixels.any() and mask.any():
            out[new_pixels] = int(round(float(image[mask].mean())))
        return out
    if kind == "erode":
        mask = foreground_mask(image)
        kept = erode_mask(mask, transform.params["radius"])
        out = image.copy()
        removed = mask & ~kept
        if removed.any():
            out[removed] = _background_fill(image, mask)
        return out
    if kind == "shear":
        return _shear_image(image, transform.params["degrees"])
    if kind == "resize":
        return _resize_image(image, transform.params["scale"])
    if kind == "pen_color":
        mask = foreground_mask(image)
        if not mask.any():
            return image.copy()
        return _blend_pen(image, mask, float(transform.params["value"]))
    if kind == "pen_texture":
        asset = _resolve_asset(transform, assets)
        gen = _need_rng(transform, rng)
        mask = foreground_mask(image)
        if not mask.any():
            return image.copy()
        crop = _asset_crop(asset, image.shape, gen)
        return _blend_pen(image, mask, crop[mask].astype(np.float64))
    if kind in _BACKGROUND_KINDS:
        asset = _resolve_asset(transform, assets)
        gen = _need_rng(transform, rng)
        mask = foreground_mask(image)
        out = _asset_crop(asset, image.shape, gen).copy()
        # The writing itself is laid over the new page verbatim: ink pixel
        # values (and hence pen pressure on the original mask) are untouched.
        out[mask] = image[mask]
        return out
    raise AugmentError(f"unknown transform kind {kind!r}")


def _type_slug(novelty_type: str) -> str:
    return novelty_type.lower().replace("/", "-").replace(" ", "-")


def build_novel_pool(
    base: Manifest,
    recipe: dict,
    seed: int,
    assets=None,
    out_dir=None,
    known_writers=None,
    known_writer_styles=None,
):
    """Mint a manifest of transformed novelty samples from a base corpus.

    `recipe` maps novelty types to {"count": n, "subtypes": [{"name",
    "transforms": [...]}]}; subtypes rotate round-robin. Writer-type entries
    draw their base records from writers outside `known_writers` and carry no
    transforms unless given. Every generated sample is measured and
    difficulty-graded per type (style distance for Writer and Letter/Style,
    background darkness for Pen and Background). With `out_dir` set the
    images are written as PNGs; the returned (manifest, images) always carries
    the arrays keyed by record id.

    `recipe` may set "replacement": true to sample base records with
    replacement (needed when count exceeds the base pool).
    """
    types = recipe.get("types", recipe)
    replacement = bool(recipe.get("replacement", False)) if "types" in recipe else False
    if known_writers is None:
        known_writers = set(base.known_writers)
    else:
        known_writers = set(known_writers)
    out_root = Path(out_dir) if out_dir is not None else None
    if out_root is not None:
        out_root.mkdir(parents=True, exist_ok=True)

    records = []
    images = {}
    for novelty_type in sorted(types):
        entry = types[novelty_type]
        if novelty_type not in ("Writer", "Letter/Style", "Pen", "Background"):
            raise AugmentError(f"recipe: not a novel type: {novelty_type!r}")
        count = int(entry["count"])
        subtypes = entry.get("subtypes") or [{"name": "", "transforms": []}]
        if novelty_type == "Writer":
            candidates = [rec for rec in base if rec.writer not in known_writers and rec.writer != UNKNOWN_WRITER]
            if not candidates:
                raise AugmentError("recipe: Writer novelty needs base records from unknown writers")
        else:
            candidates = list(base.records)
        if not candidates:
            raise AugmentError(f"recipe: no base records available for {novelty_type}")
        if not replacement and count > len(candidates):
            raise AugmentError(
                f"recipe: {novelty_type} wants {count} samples from {len(candidates)} "
                f"base records without replacement"
            )
        picker = derive_rng(seed, "novel-pool", novelty_type, "pick")
        if replacement:
            chosen = [candidates[int(i)] for i in picker.integers(len(candidates), size=count)]
        else:
            order = picker.permutation(len(candidates))[:count]
            chosen = [candidates[int(i)] for i in order]

        slug = _type_slug(novelty_type)
        group_rows = []
        for i, base_rec in enumerate(chosen):
            sub = subtypes[i % len(subtypes)]
            steps = [Transform.from_dict(p) if isinstance(p, dict) else p for p in sub.get("transforms", [])]
            rng_i = derive_rng(seed, "novel-pool", novelty_type, i)
            image = load_image(base_rec, root=base.root)
            for step in steps:
                image = apply(image, step, rng=rng_i, assets=assets)
            subtype = sub.get("name") or (
                compose(steps).label if steps else "Novel Writer"
            )
            rec_id = f"nv-{slug}-{i:05d}-{base_rec.id}"
            filename = f"{rec_id}.png"
            if out_root is not None:
                save_image(image, out_root / filename)
            group_rows.append(
                {
                    "rec": LineRecord(
                        id=rec_id,
                        image=filename,
                        writer=base_rec.writer,
                        transcript=base_rec.transcript,
                        appearance=base_rec.appearance,
                        novelty_type=novelty_type,
                        novelty_subtype=subtype,
                        difficulty="Unassigned",
                    ),
                    "image": image,
                }
            )

        if group_rows:
            if novelty_type in ("Writer", "Letter/Style"):
                if not known_writer_styles:
                    raise AugmentError(
                        f"recipe: {novelty_type} difficulty needs known_writer_styles"
                    )
                styles = [style_vector(row["image"]) for row in group_rows]
                scores = ontology.style_novelty_scores(styles, known_writer_styles)
            else:
                masks = [foreground_mask(row["image"]) for row in group_rows]
                scores = ontology.appearance_novelty_scores(
                    [row["image"] for row in group_rows], masks
                )
            labels = ontology.assign_difficulty(novelty_type, scores)
            for row, difficulty in zip(group_rows, labels):
                rec = row["rec"]
                records.append(
                    LineRecord(
                        id=rec.id,
                        image=rec.image,
                        writer=rec.writer,
                        transcript=rec.transcript,
                        appearance=rec.appearance,
                        novelty_type=rec.novelty_type,
                        novelty_subtype=rec.novelty_subtype,
                        difficulty=difficulty,
                    )
                )
                images[rec.id] = row["image"]

    manifest = make_manifest(
        records,
        root=out_root,
        alphabet=base.alphabet,
        known_writers=known_writers,
    )
    return manifest, images
