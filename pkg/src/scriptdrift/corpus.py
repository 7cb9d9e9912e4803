"""Line-image corpus handling: records, JSONL manifests, fold splits.

A corpus is a set of grayscale handwriting line images plus a manifest that
assigns each image an id, a writer, an optional transcript, an appearance
label, and novelty bookkeeping. Manifests are line-delimited JSON so they can
be streamed, diffed, and concatenated with standard tools.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .seeding import derive_rng

__all__ = [
    "NOVELTY_TYPES",
    "DIFFICULTIES",
    "APPEARANCE_LABELS",
    "UNKNOWN_WRITER",
    "ManifestError",
    "LineRecord",
    "Manifest",
    "NoveltyFlags",
    "FoldSplit",
    "make_manifest",
    "load_manifest",
    "write_manifest",
    "as_line_image",
    "load_image",
    "save_image",
    "ground_truth_novelty",
    "split_folds",
]

NOVELTY_TYPES = ("None", "Writer", "Letter/Style", "Pen", "Background")
DIFFICULTIES = ("Easy", "Medium", "Hard", "Unassigned")
APPEARANCE_LABELS = (
    "OriginalWhite",
    "Noise",
    "Antique",
    "Reflect0",
    "Blur",
    "Reflect1",
    "InvertColor",
)
UNKNOWN_WRITER = "UNKNOWN"

_RECORD_FIELDS = (
    "id",
    "image",
    "writer",
    "transcript",
    "appearance",
    "novelty_type",
    "novelty_subtype",
    "difficulty",
)


class ManifestError(ValueError):
    """Raised for malformed manifests; carries the offending line when known."""


@dataclass
class LineRecord:
    """One manifest row describing a single line image."""

    id: str
    image: str
    writer: str
    transcript: str | None = None
    appearance: str = "OriginalWhite"
    novelty_type: str = "None"
    novelty_subtype: str = ""
    difficulty: str = "Unassigned"

    def __post_init__(self):
        if not self.id:
            raise ManifestError("record id must be non-empty")
        if not self.writer:
            raise ManifestError(f"record {self.id!r}: writer must be non-empty")
        if self.novelty_type not in NOVELTY_TYPES:
            raise ManifestError(
                f"record {self.id!r}: unknown novelty_type {self.novelty_type!r}"
            )
        if self.difficulty not in DIFFICULTIES:
            raise ManifestError(
                f"record {self.id!r}: unknown difficulty {self.difficulty!r}"
            )
        if self.appearance not in APPEARANCE_LABELS and not self.appearance.startswith(
            "other:"
        ):
            raise ManifestError(
                f"record {self.id!r}: appearance {self.appearance!r} is not a known "
                f"label and carries no 'other:' tag"
            )
        if self.novelty_type == "None":
            # Non-novel rows stay clean: no subtype, no difficulty grade.
            if self.novelty_subtype != "" or self.difficulty != "Unassigned":
                raise ManifestError(
                    f"record {self.id!r}: novelty_type 'None' requires empty subtype "
                    f"and difficulty 'Unassigned'"
                )

    def to_json(self) -> str:
        payload = {name: getattr(self, name) for name in _RECORD_FIELDS}
        return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))


@dataclass
class NoveltyFlags:
    """Per-category ground truth; None means the category is unlabeled."""

    character: bool | None
    writer: bool | None
    appearance: bool | None

    def any(self) -> bool:
        return any(flag is True for flag in (self.character, self.writer, self.appearance))


@dataclass
class Manifest:
    """An ordered collection of records plus the known-world summary sets.

    `alphabet` and `known_writers` default to what the records themselves
    contain; pass explicit sets when the manifest describes data measured
    against some other training world (e.g. a novelty pool).
    """

    records: list[LineRecord]
    root: Path | None = None
    alphabet: frozenset = frozenset()
    known_writers: frozenset = frozenset()
    unknown_char_ids: frozenset = frozenset()
    _by_id: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._by_id = {}
        for rec in self.records:
            if rec.id in self._by_id:
                raise ManifestError(f"duplicate record id {rec.id!r}")
            self._by_id[rec.id] = rec

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, rec_id: str) -> LineRecord:
        return self._by_id[rec_id]

    def __contains__(self, rec_id: str) -> bool:
        return rec_id in self._by_id

    def image_path(self, rec: LineRecord) -> Path:
        path = Path(rec.image)
        if not path.is_absolute() and self.root is not None:
            path = self.root / path
        return path

    def writers(self) -> list:
        """Distinct writer ids in first-appearance order (UNKNOWN included)."""
        seen = dict.fromkeys(rec.writer for rec in self.records)
        return list(seen)


def _derive_alphabet(records) -> frozenset:
    chars = set()
    for rec in records:
        if rec.transcript is not None:
            chars.update(rec.transcript)
    return frozenset(chars)


def _derive_writers(records) -> frozenset:
    return frozenset(rec.writer for rec in records if rec.writer != UNKNOWN_WRITER)


def make_manifest(records, root=None, alphabet=None, known_writers=None) -> Manifest:
    """Build a manifest, deriving the known-world sets unless given."""
    records = list(records)
    derived_alpha = alphabet is None
    if derived_alpha:
        alphabet = _derive_alphabet(records)
    if known_writers is None:
        known_writers = _derive_writers(records)
    unknown_ids = frozenset()
    if not derived_alpha:
        unknown_ids = frozenset(
            rec.id
            for rec in records
            if rec.transcript is not None
            and any(ch not in alphabet for ch in rec.transcript)
        )
    return Manifest(
        records=records,
        root=Path(root) if root is not None else None,
        alphabet=frozenset(alphabet),
        known_writers=frozenset(known_writers),
        unknown_char_ids=unknown_ids,
    )


def load_manifest(path, alphabet=None, known_writers=None, check_images=True) -> Manifest:
    """Parse a JSONL manifest.

    Malformed lines and duplicate ids raise ManifestError naming the line.
    Image files are checked to exist (unless check_images=False) but are not
    decoded here. Records whose transcript falls outside an explicitly given
    alphabet still load; their ids land in `unknown_char_ids`.
    """
    path = Path(path)
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(payload, dict):
                raise ManifestError(f"{path}:{lineno}: record must be a JSON object")
            extra = set(payload) - set(_RECORD_FIELDS)
            if extra:
                raise ManifestError(
                    f"{path}:{lineno}: unknown manifest fields {sorted(extra)}"
                )
            try:
                rec = LineRecord(**payload)
            except (TypeError, ManifestError) as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            records.append(rec)
    manifest = make_manifest(
        records, root=path.parent, alphabet=alphabet, known_writers=known_writers
    )
    if check_images:
        for rec in manifest:
            img = manifest.image_path(rec)
            if not img.is_file():
                raise ManifestError(f"record {rec.id!r}: image file missing: {img}")
    return manifest


def write_manifest(manifest: Manifest, path) -> None:
    """Serialize records in order, one canonical JSON object per line."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in manifest:
            fh.write(rec.to_json())
            fh.write("\n")


def as_line_image(arr) -> np.ndarray:
    """Validate and return a 2-D uint8 line image (contiguous)."""
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError(f"line image must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("line image must be non-empty")
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"line image must be integer-typed, got {arr.dtype}")
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("line image intensities must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return np.ascontiguousarray(arr)


def load_image(source, root=None) -> np.ndarray:
    """Decode a PNG/PGM line image to a 2-D uint8 array.

    Multi-channel sources are reduced to luminance with ITU-R BT.601 weights.
    """
    if isinstance(source, LineRecord):
        source = source.image
    path = Path(source)
    if not path.is_absolute() and root is not None:
        path = Path(root) / path
    with Image.open(path) as im:
        if im.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
            raise ValueError(f"{path}: expected 8-bit grayscale, got mode {im.mode!r}")
        if im.mode != "L":
            im = im.convert("L")
        arr = np.asarray(im, dtype=np.uint8)
    return as_line_image(arr)


def save_image(arr, path) -> None:
    """Write a 2-D uint8 array as PNG or PGM chosen by the file suffix."""
    arr = as_line_image(arr)
    path = Path(path)
    Image.fromarray(arr, mode="L").save(path)


def ground_truth_novelty(
    record: LineRecord, alphabet, known_writers, known_appearances=None
) -> NoveltyFlags:
    """Per-category novelty of one record against a known world.

    A category with no usable label comes back None rather than False: a
    missing transcript says nothing about character novelty, and UNKNOWN
    writers carry no identity to compare.
    """
    if record.transcript is None:
        character = None
    else:
        character = any(ch not in alphabet for ch in record.transcript)
    if record.writer == UNKNOWN_WRITER:
        writer = None
    else:
        writer = record.writer not in known_writers
    if known_appearances is None:
        appearance = None
    else:
        appearance = record.appearance not in known_appearances
    return NoveltyFlags(character=character, writer=writer, appearance=appearance)


@dataclass
class FoldSplit:
    train: Manifest
    val: Manifest
    test: Manifest


def _deal(groups, folds, rng):
    """Deal each group's records round-robin into `folds` parts.

    Each group starts at a random fold offset so short groups do not pile up
    in the low-numbered folds.
    """
    parts = [[] for _ in range(folds)]
    for group in groups:
        group = list(group)
        rng.shuffle(group)
        start = int(rng.integers(folds))
        for i, rec in enumerate(group):
            parts[(start + i) % folds].append(rec)
    return parts


def _two_half_parts(records, folds, rng):
    """Core split: half the writers stratified across parts, half disjoint.

    Returns `folds` record lists, or None when there are too few writers for
    a disjoint writer group per part.
    """
    by_writer = {}
    unknown = []
    for rec in records:
        if rec.writer == UNKNOWN_WRITER:
            unknown.append(rec)
        else:
            by_writer.setdefault(rec.writer, []).append(rec)
    writers = sorted(by_writer)
    if len(writers) < 2 * folds:
        return None
    order = list(writers)
    rng.shuffle(order)
    half_a = order[: (len(order) + 1) // 2]
    half_b = order[(len(order) + 1) // 2 :]

    # Stratified half: every part sees (a slice of) every writer.
    parts = _deal([by_writer[w] for w in half_a], folds, rng)
    # Disjoint half: whole writers dealt to parts, each writer in one part only.
    for i, w in enumerate(half_b):
        parts[i % folds].extend(by_writer[w])
    if unknown:
        for part, extra in zip(parts, _deal([unknown], folds, rng)):
            part.extend(extra)
    return parts


def _stratified_parts(records, folds, rng):
    """Fallback split for small corpora: per-writer round-robin only."""
    by_writer = {}
    for rec in records:
        by_writer.setdefault(rec.writer, []).append(rec)
    return _deal([by_writer[w] for w in sorted(by_writer)], folds, rng)


def _order_of(manifest_records, subset):
    index = {id(rec): i for i, rec in enumerate(manifest_records)}
    return sorted(subset, key=lambda rec: index[id(rec)])


def split_folds(manifest: Manifest, folds: int, seed: int) -> list:
    """Writer-aware cross-validation splits.

    Writers are halved at random; one half is stratified so its writers appear
    in every fold, the other is dealt out as disjoint writer groups, one per
    fold, so every test split contains writers absent from its training split.
    The train+val remainder of each round is re-split by the same scheme to
    carve a validation set (falling back to a plain stratified deal when the
    remainder has too few writers to support disjoint groups). Samples with
    the UNKNOWN writer are dealt randomly. Deterministic under `seed`.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    writers = {rec.writer for rec in manifest if rec.writer != UNKNOWN_WRITER}
    if len(writers) < 2 * folds:
        raise ManifestError(
            f"need at least {2 * folds} identified writers for {folds} folds, "
            f"got {len(writers)}"
        )
    rng = derive_rng(seed, "split-folds")
    parts = _two_half_parts(manifest.records, folds, rng)
    splits = []
    for f in range(folds):
        test_recs = _order_of(manifest.records, parts[f])
        test_ids = {rec.id for rec in test_recs}
        remainder = [rec for rec in manifest.records if rec.id not in test_ids]
        inner_rng = derive_rng(seed, "split-folds", "carve-val", f)
        inner = _two_half_parts(remainder, folds, inner_rng)
        if inner is None:
            inner = _stratified_parts(remainder, folds, inner_rng)
        val_recs = _order_of(manifest.records, inner[0])
        val_ids = {rec.id for rec in val_recs}
        train_recs = [rec for rec in remainder if rec.id not in val_ids]
        splits.append(
            FoldSplit(
                train=make_manifest(train_recs, root=manifest.root),
                val=make_manifest(val_recs, root=manifest.root),
                test=make_manifest(test_recs, root=manifest.root),
            )
        )
    return splits
