"""Mint graded novelty pools from a base corpus.

A base corpus of four writers is split into a known world (w0..w2) and a
held-out donor (w3). The recipe mints three pools: unseen-writer samples
drawn from the donor, stroke-morphology variants of known writing, and
pen-color changes. Every generated sample is measured and graded Easy,
Medium, or Hard by how far it sits from the known world.
"""

import tempfile
from collections import Counter
from pathlib import Path

from scriptdrift import augment, corpus, style_metrics, synth
from scriptdrift.seeding import derive_rng

SEED = 12

RECIPE = {
    "types": {
        "Writer": {"count": 9},
        "Letter/Style": {
            "count": 9,
            "subtypes": [
                {"name": "Dilate", "transforms": [{"kind": "dilate", "params": {"radius": 1}}]},
                {"name": "Erode", "transforms": [{"kind": "erode", "params": {"radius": 1}}]},
                {"name": "Shear", "transforms": [{"kind": "shear", "params": {"degrees": 12.0}}]},
            ],
        },
        "Pen": {
            "count": 9,
            "subtypes": [
                {"name": "Gray Pen", "transforms": [{"kind": "pen_color", "params": {"value": 150}}]},
                {"name": "Faint Pen", "transforms": [{"kind": "pen_color", "params": {"value": 200}}]},
            ],
        },
    },
    "replacement": True,
}


def build_base(root: Path) -> corpus.Manifest:
    rng = derive_rng(SEED, "novelty-demo-base")
    records = []
    for w in range(4):
        for i in range(6):
            image = synth.render_line(
                words=(3 + i % 3, 4),
                bar_height=28 + 4 * w + int(rng.integers(3)),
                ink=35 + 22 * w,
                slant_deg=(-20, -5, 5, 20)[w],
                word_gap=14 + 4 * w,
                margin=50,
            )
            rid = f"s{w}{i}"
            corpus.save_image(image, root / f"{rid}.png")
            records.append(corpus.LineRecord(id=rid, image=f"{rid}.png", writer=f"w{w}"))
    return corpus.make_manifest(records, root=root, known_writers={"w0", "w1", "w2"})


def main():
    root = Path(tempfile.mkdtemp(prefix="novelty-pool-"))
    base = build_base(root)
    known_styles = {}
    for rec in base:
        if rec.writer in base.known_writers:
            vec = style_metrics.style_vector(corpus.load_image(rec, root=base.root))
            known_styles.setdefault(rec.writer, []).append(vec)

    manifest, images = augment.build_novel_pool(
        base, RECIPE, seed=SEED, out_dir=root / "pool", known_writer_styles=known_styles
    )
    print(f"base corpus: {len(base)} lines, known writers {sorted(base.known_writers)}")
    print(f"novel pool:  {len(manifest)} samples -> {root / 'pool'}")
    print()

    by_type = Counter(rec.novelty_type for rec in manifest)
    print("samples per novelty type:", dict(sorted(by_type.items())))
    print()
    print(f"{'type':<14}{'subtype':<14}{'difficulty':<10}  example id")
    seen = set()
    for rec in manifest:
        key = (rec.novelty_type, rec.novelty_subtype, rec.difficulty)
        if key in seen:
            continue
        seen.add(key)
        print(f"{rec.novelty_type:<14}{rec.novelty_subtype:<14}{rec.difficulty:<10}  {rec.id}")
    print()

    grades = Counter((rec.novelty_type, rec.difficulty) for rec in manifest)
    print("difficulty grading is balanced per type (tertiles of the raw scores):")
    for novelty_type in sorted(by_type):
        row = {d: grades[(novelty_type, d)] for d in ("Easy", "Medium", "Hard")}
        print(f"  {novelty_type:<14}{row}")

    donors = {rec.writer for rec in manifest if rec.novelty_type == "Writer"}
    print()
    print(f"unseen-writer samples all come from the held-out donor: {donors}")
    assert donors == {"w3"}
    assert all(images[rec.id].dtype.name == "uint8" for rec in manifest)


if __name__ == "__main__":
    main()
