"""Every pipeline stage end to end, driven through the command line entry point.

Builds a synthetic four-writer corpus in a temp directory, holds writer w3
out of the known world, and then walks the whole chain: measure styles,
build the knowledge graph and writer distances, mint a novelty pool,
extract features, train and calibrate the open-set model, generate test
streams, run them, score the records against the sealed oracles, and plot
the false-positive series. Finishes by proving the rerun is byte-identical.
"""

import json
import sys
import tempfile
from pathlib import Path

from scriptdrift import cli, corpus, synth

SETTINGS = {
    "seed": 11,
    "testgen": {
        "introduction_points": [0.5],
        "densities": [0.5],
        "novelty_types": ["Writer"],
        "difficulties": ["Easy"],
        "distributions": ["Flat"],
        "lengths": [32],
        "jitter": 0.0,
        "max_reorders": 1,
    },
    "runner": {"batch_size": 4, "prior_window": 8, "ramp": 4},
}

RECIPE = {"types": {"Writer": {"count": 36}}, "replacement": True}


def build_corpus(root: Path):
    img_dir = root / "img"
    img_dir.mkdir()
    records = []
    for w in range(4):
        for i in range(8):
            image = synth.render_line(
                words=(3 + i % 3, 4, 2 + (i + w) % 2),
                bar_width=3,
                bar_height=40 + 2 * ((i + w) % 6),
                letter_gap=4,
                word_gap=10 + 3 * w + i % 3,
                ink=28 + 24 * w + 2 * (i % 3),
                slant_deg=-21.0 + 14.0 * w + 1.5 * (i % 4),
                margin=34,
            )
            rid = f"s{w}{i:03d}"
            corpus.save_image(image, img_dir / f"{rid}.png")
            records.append(
                corpus.LineRecord(id=rid, image=f"img/{rid}.png", writer=f"w{w}")
            )
    corpus.write_manifest(corpus.make_manifest(records), root / "base.jsonl")
    known = [rec for rec in records if rec.writer != "w3"]
    corpus.write_manifest(corpus.make_manifest(known), root / "known.jsonl")


def run(*argv):
    argv = [str(a) for a in argv]
    print(f"$ scriptdrift {' '.join(argv)}")
    rc = cli.main(argv)
    if rc != 0:
        sys.exit(f"stage failed with exit code {rc}")


def pipeline(root: Path, out: Path):
    cfg = root / "settings.json"
    base = root / "base.jsonl"
    pool = out / "novel" / "manifest.jsonl"
    common = ("--config", cfg, "--jobs", 1)
    run("measure", *common, "--manifest", base, "--out", out / "measures" / "base.jsonl")
    run("graph", *common, "--manifest", base,
        "--measures", out / "measures" / "base.jsonl", "--out", out / "graph.json")
    run("distances", *common, "--manifest", base,
        "--measures", out / "measures" / "base.jsonl", "--out", out / "distances.csv")
    run("inject", *common, "--base", base, "--known-writers", "w0,w1,w2",
        "--recipe", root / "recipe.json", "--out", out / "novel")
    run("measure", *common, "--manifest", pool, "--out", out / "measures" / "novel.jsonl")
    run("featurize", *common, "--manifest", base, "--out", out / "feats" / "base.json")
    run("featurize", *common, "--manifest", pool, "--out", out / "feats" / "novel.json")
    run("train", *common, "--features", out / "feats" / "base.json",
        "--labels", root / "known.jsonl", "--out", out / "model.evm")
    run("calibrate", *common, "--model", out / "model.evm",
        "--features", out / "feats" / "base.json",
        "--features", out / "feats" / "novel.json",
        "--labels", base, "--labels", pool, "--out", out / "model.calibrated.evm")
    run("gen-tests", *common, "--pools", f"{base},{pool}", "--out", out / "tests")
    run("run", *common, "--agent", out / "model.calibrated.evm",
        "--features", out / "feats" / "base.json",
        "--features", out / "feats" / "novel.json",
        "--tests", out / "tests" / "streams", "--out", out / "records")
    run("report", *common, "--records", out / "records",
        "--streams", out / "tests" / "streams",
        "--manifest", base, "--manifest", pool,
        "--measures", out / "measures" / "base.jsonl",
        "--measures", out / "measures" / "novel.jsonl",
        "--graph", out / "graph.json", "--out", out / "report")
    run("plot", *common, "--series", out / "report" / "fp_series.csv",
        "--out", out / "plot.svg")


def tree_bytes(base: Path) -> dict:
    return {
        str(p.relative_to(base)): p.read_bytes()
        for p in sorted(base.rglob("*"))
        if p.is_file()
    }


def main():
    root = Path(tempfile.mkdtemp(prefix="pipeline-demo-"))
    build_corpus(root)
    (root / "recipe.json").write_text(json.dumps(RECIPE))
    (root / "settings.json").write_text(json.dumps(SETTINGS))

    out = root / "a"
    pipeline(root, out)

    summary = json.loads((out / "report" / "summary.json").read_text())
    print()
    print(f"workspace: {root}")
    print(f"scored {summary['n_tests']} streams, {summary['n_records']} records")
    for test in summary["tests"]:
        print(f"  {test['id']}: introduction {test['introduction_index']}, "
              f"detection {test['detection_position']}, "
              f"false positives {test['false_positives']}")
    print("per-type report rows:", ", ".join(sorted(summary["by_type"])))

    print()
    print("rerunning the whole pipeline into a second directory...")
    second = root / "b"
    pipeline(root, second)
    first_tree = tree_bytes(out)
    second_tree = tree_bytes(second)
    identical = first_tree == second_tree
    print(f"{len(first_tree)} artifact files; reruns byte-identical: {identical}")
    if not identical:
        sys.exit("determinism violated")


if __name__ == "__main__":
    main()
