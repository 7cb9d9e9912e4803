"""Factorial generation of novelty test streams.

A test spec fixes where novelty starts (mean introduction point), how much of
the post-introduction window is novel (density), what kind and difficulty of
novelty appears, how the novel samples spread over the window (a Beta-shaped
placement), and the stream length. The full factorial enumeration is the
benchmark's backbone; each generated stream can be reordered within its
novel/non-novel classes to probe ordering sensitivity without changing the
ground truth mask.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .corpus import Manifest
from .seeding import derive_rng, derive_seed

__all__ = [
    "TestgenError",
    "DISTRIBUTIONS",
    "DEFAULT_GRID",
    "TestSpec",
    "TestStream",
    "enumerate_specs",
    "generate",
    "reorder",
    "save_stream",
    "load_stream",
]


class TestgenError(ValueError):
    pass


# Beta(a, b) placement shapes for novel slots within the post window.
DISTRIBUTIONS = {
    "High": (1.5, 4.0),
    "Low": (4.0, 1.5),
    "Mid": (4.0, 4.0),
    "Flat": (1.0, 1.0),
}

DEFAULT_GRID = {
    "introduction_points": [0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
    "densities": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
    "novelty_types": ["Writer", "Letter/Style", "Background"],
    "difficulties": ["Easy", "Medium", "Hard"],
    "distributions": ["High", "Low", "Mid", "Flat"],
    "lengths": [512, 768, 1024],
    "jitter": 0.05,
    "max_reorders": 9,
}


@dataclass(frozen=True)
class TestSpec:
    introduction_point: float
    novelty_density: float
    novelty_type: str
    difficulty: str
    distribution: str
    length: int
    seed: int
    reorder_index: int = 0

    def __post_init__(self):
        if not 0.0 < self.introduction_point < 1.0:
            raise TestgenError("introduction_point must lie in (0, 1)")
        if not 0.0 < self.novelty_density <= 1.0:
            raise TestgenError("novelty_density must lie in (0, 1]")
        if self.distribution not in DISTRIBUTIONS:
            raise TestgenError(f"unknown distribution {self.distribution!r}")
        if self.length < 2:
            raise TestgenError("length must be >= 2")

    def name(self) -> str:
        t = self.novelty_type.lower().replace("/", "-").replace(" ", "-")
        return (
            f"ip{self.introduction_point:g}_d{self.novelty_density:g}_{t}"
            f"_{self.difficulty.lower()}_{self.distribution.lower()}"
            f"_L{self.length}_k{self.reorder_index}"
        )

    def to_dict(self) -> dict:
        return {
            "introduction_point": self.introduction_point,
            "novelty_density": self.novelty_density,
            "novelty_type": self.novelty_type,
            "difficulty": self.difficulty,
            "distribution": self.distribution,
            "length": self.length,
            "seed": self.seed,
            "reorder_index": self.reorder_index,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TestSpec":
        return cls(**payload)


def enumerate_specs(grid: dict | None = None, master_seed: int = 0) -> list:
    """Full factorial spec list; each spec gets a seed derived from its index."""
    cfg = dict(DEFAULT_GRID)
    if grid:
        unknown = set(grid) - set(DEFAULT_GRID)
        if unknown:
            raise TestgenError(f"unknown grid keys {sorted(unknown)}")
        cfg.update(grid)
    specs = []
    index = 0
    for ip in cfg["introduction_points"]:
        for density in cfg["densities"]:
            for ntype in cfg["novelty_types"]:
                for diff in cfg["difficulties"]:
                    for dist in cfg["distributions"]:
                        for length in cfg["lengths"]:
                            specs.append(
                                TestSpec(
                                    introduction_point=float(ip),
                                    novelty_density=float(density),
                                    novelty_type=ntype,
                                    difficulty=diff,
                                    distribution=dist,
                                    length=int(length),
                                    seed=derive_seed(master_seed, "testspec", index),
                                )
                            )
                            index += 1
    return specs


@dataclass
class TestStream:
    """An ordered id sequence plus (unsealed) ground truth."""

    spec: TestSpec
    sample_ids: list
    introduction_index: int | None = None
    is_novel: list | None = None

    def __len__(self):
        return len(self.sample_ids)


def _place_slots(rng, distribution: str, n_novel: int, window: int) -> list:
    """Distinct post-window slots for the novel samples.

    Beta draws are sorted and floored onto the window; collisions push
    forward, then a backward pass restores the upper bound. Requires
    n_novel <= window.
    """
    if n_novel > window:
        raise TestgenError("unsatisfiable density: more novel samples than slots")
    a, b = DISTRIBUTIONS[distribution]
    draws = np.sort(rng.beta(a, b, size=n_novel))
    slots = np.minimum((draws * window).astype(int), window - 1)
    for i in range(1, n_novel):
        if slots[i] <= slots[i - 1]:
            slots[i] = slots[i - 1] + 1
    if n_novel:
        slots[-1] = min(slots[-1], window - 1)
    for i in range(n_novel - 2, -1, -1):
        if slots[i] >= slots[i + 1]:
            slots[i] = slots[i + 1] - 1
    if n_novel and slots[0] < 0:
        raise TestgenError("unsatisfiable density: could not place novel slots")
    return [int(s) for s in slots]


def generate(
    spec: TestSpec,
    non_novel: Manifest,
    novel: Manifest,
    jitter: float = 0.05,
) -> TestStream:
    """Materialize one stream from the pools.

    Non-novel samples come from `non_novel` (every record must be non-novel);
    novel slots draw from `novel` filtered to the spec's type and difficulty.
    Selection is without replacement; pools that cannot cover the stream
    raise. The realized introduction index jitters uniformly within
    +-jitter of the stream length around the spec's mean point.
    """
    rng = derive_rng(spec.seed, "stream")
    length = spec.length
    offset = rng.uniform(-jitter, jitter) if jitter > 0 else 0.0
    intro = round((spec.introduction_point + offset) * length)
    intro = max(1, min(length - 1, intro))
    window = length - intro
    n_novel = round(spec.novelty_density * window)

    bad = [rec.id for rec in non_novel if rec.novelty_type != "None"]
    if bad:
        raise TestgenError(f"non-novel pool contains novelty rows, e.g. {bad[0]!r}")
    novel_candidates = [
        rec
        for rec in novel
        if rec.novelty_type == spec.novelty_type and rec.difficulty == spec.difficulty
    ]
    n_plain = length - n_novel
    if len(non_novel) < n_plain:
        raise TestgenError(
            f"non-novel pool too small: need {n_plain}, have {len(non_novel)}"
        )
    if len(novel_candidates) < n_novel:
        raise TestgenError(
            f"novel pool too small for {spec.novelty_type}/{spec.difficulty}: "
            f"need {n_novel}, have {len(novel_candidates)}"
        )

    slots = _place_slots(rng, spec.distribution, n_novel, window)
    novel_positions = {intro + s for s in slots}

    plain_order = rng.permutation(len(non_novel))[:n_plain]
    novel_order = rng.permutation(len(novel_candidates))[:n_novel]
    plain_iter = iter(non_novel.records[i].id for i in plain_order)
    novel_iter = iter(novel_candidates[i].id for i in novel_order)

    ids = []
    mask = []
    for pos in range(length):
        if pos in novel_positions:
            ids.append(next(novel_iter))
            mask.append(True)
        else:
            ids.append(next(plain_iter))
            mask.append(False)
    return TestStream(spec=spec, sample_ids=ids, introduction_index=intro, is_novel=mask)


def reorder(stream: TestStream, k: int, max_reorders: int = 9) -> TestStream:
    """Permute samples within the novel and non-novel classes separately.

    The novelty mask, introduction index, and id multiset are untouched; only
    which sample occupies which same-class position changes. `k` indexes the
    reordering (1-based) and seeds it jointly with the spec's seed.
    """
    if not 1 <= k <= max_reorders:
        raise TestgenError(f"reorder index {k} outside 1..{max_reorders}")
    if stream.is_novel is None:
        raise TestgenError("reorder needs the stream's novelty mask")
    rng = derive_rng(stream.spec.seed, "reorder", k)
    ids = list(stream.sample_ids)
    for group_flag in (False, True):
        positions = [i for i, f in enumerate(stream.is_novel) if f == group_flag]
        shuffled = [ids[i] for i in positions]
        rng.shuffle(shuffled)
        for pos, sid in zip(positions, shuffled):
            ids[pos] = sid
    return TestStream(
        spec=replace(stream.spec, reorder_index=k),
        sample_ids=ids,
        introduction_index=stream.introduction_index,
        is_novel=list(stream.is_novel),
    )


def _oracle_path(path: Path) -> Path:
    return path.with_name(path.stem + ".oracle.json")


def save_stream(stream: TestStream, path) -> None:
    """Write the stream (ids only) plus a sealed sibling oracle file.

    The oracle (introduction index and per-position novelty) lives next to
    the stream as `<name>.oracle.json` so an agent can consume the stream
    without seeing the answers.
    """
    path = Path(path)
    body = {
        "format": "scriptdrift-stream",
        "version": 1,
        "spec": stream.spec.to_dict(),
        "samples": list(stream.sample_ids),
    }
    path.write_text(json.dumps(body), encoding="utf-8")
    if stream.introduction_index is not None and stream.is_novel is not None:
        oracle = {
            "format": "scriptdrift-stream-oracle",
            "version": 1,
            "introduction_index": stream.introduction_index,
            "is_novel": [bool(b) for b in stream.is_novel],
        }
        _oracle_path(path).write_text(json.dumps(oracle), encoding="utf-8")


def load_stream(path, with_oracle: bool = True) -> TestStream:
    path = Path(path)
    body = json.loads(path.read_text(encoding="utf-8"))
    if body.get("format") != "scriptdrift-stream":
        raise TestgenError(f"{path}: not a stream file")
    stream = TestStream(
        spec=TestSpec.from_dict(body["spec"]),
        sample_ids=list(body["samples"]),
    )
    oracle_file = _oracle_path(path)
    if with_oracle and oracle_file.is_file():
        oracle = json.loads(oracle_file.read_text(encoding="utf-8"))
        if oracle.get("format") != "scriptdrift-stream-oracle":
            raise TestgenError(f"{oracle_file}: not a stream oracle file")
        stream.introduction_index = int(oracle["introduction_index"])
        stream.is_novel = [bool(b) for b in oracle["is_novel"]]
        if len(stream.is_novel) != len(stream.sample_ids):
            raise TestgenError(f"{oracle_file}: novelty mask length mismatch")
    return stream
