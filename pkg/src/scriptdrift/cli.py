"""Command line front end.

One executable, twelve subcommands, wired in pipeline order: measure ->
graph / distances -> inject -> featurize -> train -> calibrate -> gen-tests
-> run -> report -> plot, plus selfcheck. Every subcommand honors --seed and
--config, and reruns with the same inputs produce byte-identical outputs.
Exit codes: 0 success, 1 runtime failure, 2 usage.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import multiprocessing
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import augment as augment_mod
from . import config as config_mod
from . import corpus
from . import evm as evm_mod
from . import features as features_mod
from . import metrics as metrics_mod
from . import ontology
from . import runner as runner_mod
from . import style_metrics
from . import testgen as testgen_mod

__all__ = ["main", "build_parser"]

log = logging.getLogger("scriptdrift")

_ERRORS = (ValueError, OSError)


def _module_of(exc: Exception) -> str:
    mod = type(exc).__module__
    return mod.rsplit(".", 1)[-1] if mod else "scriptdrift"


def _pmap(fn, tasks, jobs: int):
    """Ordered map over independent tasks, optionally across processes."""
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with multiprocessing.Pool(processes=min(jobs, len(tasks))) as pool:
        return pool.map(fn, tasks)


def _write_run_log(out_dir, cfg: config_mod.Config) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"tool": f"scriptdrift {__version__}", "config": cfg.effective()}
    (out_dir / "run-config.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load_measures(paths) -> dict:
    """JSONL measurement rows ({id, <six measures>}) -> id: StyleVector."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    styles = {}
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            for ln, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                rid = row.pop("id")
                if rid in styles:
                    raise corpus.ManifestError(f"{path}:{ln}: duplicate measure id {rid!r}")
                styles[rid] = style_metrics.StyleVector.from_dict(row)
    return styles


def _styles_for(manifest: corpus.Manifest, styles: dict) -> list:
    out = []
    for rec in manifest:
        if rec.id not in styles:
            raise corpus.ManifestError(f"no measurements for sample {rec.id!r}")
        out.append(styles[rec.id])
    return out


def _measure_worker(task):
    path, rid = task
    return rid, style_metrics.style_vector(corpus.load_image(path))


def _feature_worker(task):
    path, rid, extractor = task
    return rid, features_mod.extract(corpus.load_image(path), extractor).values


# ---------------------------------------------------------------- measure

def cmd_measure(args, cfg: config_mod.Config, jobs: int) -> int:
    manifest = corpus.load_manifest(args.manifest)
    tasks = [(str(manifest.image_path(rec)), rec.id) for rec in manifest]
    rows = _pmap(_measure_worker, tasks, jobs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for rid, vec in rows:
            fh.write(json.dumps({"id": rid, **vec.to_dict()}))
            fh.write("\n")
    log.info("measured %d samples -> %s", len(rows), out)
    return 0


# ------------------------------------------------------------------ graph

def cmd_graph(args, cfg: config_mod.Config, jobs: int) -> int:
    manifest = corpus.load_manifest(args.manifest, check_images=False)
    styles = _styles_for(manifest, _load_measures(args.measures))
    scheme = ontology.fit_bins(styles, counts=cfg.section("binning"))
    graph = ontology.build_graph([(rec.id, rec.writer) for rec in manifest], styles, scheme)
    score, mismatches = ontology.consistency(graph)
    payload = {
        "format": "scriptdrift-graph",
        "version": 1,
        "scheme": scheme.to_dict(),
        "nodes": graph.nodes(),
        "edges": graph.edges(),
        "consistency": score,
        "mismatches": mismatches,
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info("graph: %d nodes, %d edges, consistency %.4f", len(graph.nodes()), len(graph.edges()), score)
    return 0


# -------------------------------------------------------------- distances

def cmd_distances(args, cfg: config_mod.Config, jobs: int) -> int:
    manifest = corpus.load_manifest(args.manifest, check_images=False)
    styles = _load_measures(args.measures)
    by_writer: dict = {}
    for rec in manifest:
        if rec.writer == corpus.UNKNOWN_WRITER:
            continue
        if rec.id in styles:
            by_writer.setdefault(rec.writer, []).append(styles[rec.id])
    matrix = ontology.writer_distances(by_writer)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["writer"] + matrix.writers) + "\n")
        for i, writer in enumerate(matrix.writers):
            cells = [repr(float(v)) for v in matrix.distances[i]]
            fh.write(",".join([writer] + cells) + "\n")
    log.info("distances: %d writers -> %s", len(matrix.writers), out)
    return 0


# ----------------------------------------------------------------- inject

def _load_assets(root) -> dict:
    assets = {}
    root = Path(root)
    for group in ("background", "pen"):
        folder = root / group
        if not folder.is_dir():
            continue
        for path in sorted(folder.glob("*.png")):
            asset_id = f"{group}/{path.stem}"
            assets[asset_id] = augment_mod.BackgroundAsset(asset_id, corpus.load_image(path))
    return assets


def cmd_inject(args, cfg: config_mod.Config, jobs: int) -> int:
    known = args.known_writers.split(",") if args.known_writers else None
    base = corpus.load_manifest(args.base, known_writers=known)
    recipe = json.loads(Path(args.recipe).read_text(encoding="utf-8"))
    assets = _load_assets(args.assets) if args.assets else None
    types = recipe.get("types", recipe)
    styles = None
    if any(t in types for t in ("Writer", "Letter/Style")):
        by_writer: dict = {}
        for rec in base:
            if rec.writer in base.known_writers:
                img = corpus.load_image(rec, root=base.root)
                by_writer.setdefault(rec.writer, []).append(style_metrics.style_vector(img))
        styles = by_writer
    out = Path(args.out)
    manifest, _ = augment_mod.build_novel_pool(
        base,
        recipe,
        seed=cfg.seed,
        assets=assets,
        out_dir=out,
        known_writer_styles=styles,
    )
    corpus.write_manifest(manifest, out / "manifest.jsonl")
    _write_run_log(out, cfg)
    log.info("inject: %d novel samples -> %s", len(manifest), out)
    return 0


# --------------------------------------------------------------- featurize

def cmd_featurize(args, cfg: config_mod.Config, jobs: int) -> int:
    manifest = corpus.load_manifest(args.manifest)
    extractor = args.extractor or cfg.section("features")["extractor"]
    tasks = [(str(manifest.image_path(rec)), rec.id, extractor) for rec in manifest]
    rows = _pmap(_feature_worker, tasks, jobs)
    ids = [rid for rid, _ in rows]
    matrix = np.vstack([vec for _, vec in rows]) if rows else np.zeros((0, features_mod.extractor_dimension(extractor)))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    features_mod.save_features(out, ids, matrix, extractor)
    log.info("featurize: %d x %d (%s) -> %s", len(ids), matrix.shape[1] if len(ids) else 0, extractor, out)
    return 0


def _load_feature_map(paths):
    """Merge one or more feature files into (id -> vector, extractor)."""
    merged: dict = {}
    extractor = None
    for path in paths:
        ids, matrix, ext = features_mod.load_features(path)
        if extractor is None:
            extractor = ext
        elif ext != extractor:
            raise features_mod.FeatureError(
                f"{path}: extractor {ext!r} clashes with {extractor!r}"
            )
        for rid, row in zip(ids, matrix):
            if rid in merged:
                raise features_mod.FeatureError(f"{path}: duplicate feature id {rid!r}")
            merged[rid] = row
    return merged, extractor


# ------------------------------------------------------------------ train

def cmd_train(args, cfg: config_mod.Config, jobs: int) -> int:
    feats, extractor = _load_feature_map(args.features)
    manifest = corpus.load_manifest(args.labels, check_images=False)
    by_class: dict = {}
    for rec in manifest:
        if rec.id not in feats:
            continue
        if rec.writer == corpus.UNKNOWN_WRITER:
            raise corpus.ManifestError(
                f"training sample {rec.id!r} has no writer identity"
            )
        by_class.setdefault(rec.writer, []).append(feats[rec.id])
    by_class = {w: np.vstack(rows) for w, rows in by_class.items()}
    hyper = evm_mod.EvmHyperparams(**cfg.section("evm"))
    model = evm_mod.fit(by_class, hyper, extractor_id=extractor)
    evm_mod.save_model(model, args.out)
    anchors = sum(c.anchors.shape[0] for c in model.classes)
    log.info("train: %d classes, %d anchors -> %s", len(model.classes), anchors, args.out)
    return 0


# -------------------------------------------------------------- calibrate

def cmd_calibrate(args, cfg: config_mod.Config, jobs: int) -> int:
    model = evm_mod.load_model(args.model)
    feats, extractor = _load_feature_map(args.features)
    if extractor != model.extractor_id:
        raise evm_mod.EvmError(
            f"features extracted with {extractor!r}, model wants {model.extractor_id!r}"
        )
    labels = set(model.labels)
    known_ids, novel_ids = [], []
    for path in args.labels:
        manifest = corpus.load_manifest(path, check_images=False)
        for rec in manifest:
            if rec.id not in feats:
                continue
            if rec.novelty_type != "None" or rec.writer not in labels:
                novel_ids.append(rec.id)
            else:
                known_ids.append(rec.id)
    if not known_ids or not novel_ids:
        raise evm_mod.EvmError(
            f"calibration needs both known and novel samples "
            f"(got {len(known_ids)} known, {len(novel_ids)} novel)"
        )
    def k_m(ids):
        x = np.vstack([feats[i] for i in ids])
        return evm_mod.class_scores(model, x).max(axis=1)
    result = evm_mod.calibrate_threshold(k_m(known_ids), k_m(novel_ids))
    calibrated = dataclasses.replace(model, novelty_threshold=result.threshold)
    evm_mod.save_model(calibrated, args.out)
    log.info(
        "calibrate: threshold %.6f (fpr %.4f, fnr %.4f, eer %.4f) -> %s",
        result.threshold, result.fpr, result.fnr, result.eer, args.out,
    )
    return 0


# -------------------------------------------------------------- gen-tests

def cmd_gen_tests(args, cfg: config_mod.Config, jobs: int) -> int:
    section = cfg.section("testgen")
    jitter = section.pop("jitter")
    max_reorders = section.pop("max_reorders")
    specs = testgen_mod.enumerate_specs(section, master_seed=cfg.seed)
    out = Path(args.out)
    spec_dir = out / "specs"
    spec_dir.mkdir(parents=True, exist_ok=True)
    for spec in specs:
        payload = {"spec": spec.to_dict(), "orderings": max_reorders + 1}
        (spec_dir / f"{spec.name()}.json").write_text(
            json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8"
        )
    n_streams = 0
    if args.pools:
        nn_path, nv_path = args.pools.split(",")
        non_novel = corpus.load_manifest(nn_path, check_images=False)
        novel = corpus.load_manifest(nv_path, check_images=False)
        stream_dir = out / "streams"
        stream_dir.mkdir(parents=True, exist_ok=True)
        todo = specs[: args.limit] if args.limit else specs
        for spec in todo:
            stream = testgen_mod.generate(spec, non_novel, novel, jitter=jitter)
            testgen_mod.save_stream(stream, stream_dir / f"{spec.name()}.json")
            n_streams += 1
            for k in range(1, max_reorders + 1):
                shuffled = testgen_mod.reorder(stream, k, max_reorders=max_reorders)
                testgen_mod.save_stream(shuffled, stream_dir / f"{shuffled.spec.name()}.json")
                n_streams += 1
    _write_run_log(out, cfg)
    log.info("gen-tests: %d specs, %d streams -> %s", len(specs), n_streams, out)
    return 0


# -------------------------------------------------------------------- run

def cmd_run(args, cfg: config_mod.Config, jobs: int) -> int:
    model = evm_mod.load_model(args.agent)
    feats, extractor = _load_feature_map(args.features)
    if extractor != model.extractor_id:
        raise evm_mod.EvmError(
            f"features extracted with {extractor!r}, model wants {model.extractor_id!r}"
        )
    transcripts = None
    if args.predictions:
        transcripts = runner_mod.ingest_external_predictions(args.predictions)
    alphabet = None
    if args.manifest:
        alphabet = corpus.load_manifest(args.manifest, check_images=False).alphabet
    agent = runner_mod.AgentBundle(
        model, feats, transcripts=transcripts, alphabet=alphabet
    )
    section = cfg.section("runner")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stream_files = sorted(
        p for p in Path(args.tests).glob("*.json")
        if not p.name.endswith(".oracle.json") and p.name != "run-config.json"
    )
    if not stream_files:
        raise runner_mod.RunnerError(f"no stream files under {args.tests}")
    failures = []
    for path in stream_files:
        try:
            stream = testgen_mod.load_stream(path, with_oracle=False)
            result = runner_mod.run_test(agent, stream, **section)
            runner_mod.save_records(result, out / f"{path.stem}.records.jsonl")
        except _ERRORS as exc:
            failures.append((path.name, exc))
            log.error("run: %s failed: %s: %s", path.name, _module_of(exc), exc)
    _write_run_log(out, cfg)
    log.info("run: %d tests, %d failed -> %s", len(stream_files), len(failures), out)
    if failures:
        print(f"scriptdrift run: {len(failures)} of {len(stream_files)} tests failed", file=sys.stderr)
        return 1
    return 0


# ----------------------------------------------------------------- report

def _fmt(value) -> str:
    return "" if value is None else f"{value:.4f}"


def _write_table(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def cmd_report(args, cfg: config_mod.Config, jobs: int) -> int:
    by_id: dict = {}
    known_writers: set = set()
    for path in args.manifest:
        manifest = corpus.load_manifest(path, check_images=False)
        known_writers |= set(manifest.known_writers)
        for rec in manifest:
            if rec.id in by_id:
                raise corpus.ManifestError(f"{path}: duplicate sample id {rec.id!r}")
            by_id[rec.id] = rec
    styles = _load_measures(args.measures) if args.measures else None

    record_files = sorted(Path(args.records).glob("*.records.jsonl"))
    if not record_files:
        raise runner_mod.RunnerError(f"no record files under {args.records}")
    streams_dir = Path(args.streams)

    rows = []
    tests = []
    window = cfg.section("report")["window"]
    windowed = {"styles": [], "types": [], "subtypes": []}
    for path in record_files:
        header, records = runner_mod.load_records(path)
        spec = testgen_mod.TestSpec.from_dict(header["spec"])
        labels = set(header["labels"])
        stream_path = streams_dir / f"{spec.name()}.json"
        stream = testgen_mod.load_stream(stream_path, with_oracle=True)
        if stream.is_novel is None:
            raise testgen_mod.TestgenError(f"{stream_path}: no oracle file; cannot score")
        if len(records) != len(stream.sample_ids):
            raise runner_mod.RunnerError(f"{path}: record count disagrees with stream")
        fp = 0
        for rec, truth_novel in zip(records, stream.is_novel):
            sample = by_id.get(rec.id)
            if sample is None:
                raise corpus.ManifestError(f"{path}: sample {rec.id!r} not in any manifest")
            if rec.decision and not truth_novel:
                fp += 1
            rows.append(
                {
                    "decision": rec.decision,
                    "is_novel": bool(truth_novel),
                    "novelty_type": sample.novelty_type,
                    "ranking_truth": sample.writer if sample.writer in labels else "novel",
                    "ranked": rec.top,
                    "truth_transcript": sample.transcript if rec.transcript is not None else None,
                    "predicted_transcript": rec.transcript,
                }
            )
        proportion = sum(stream.is_novel) / len(stream.is_novel)
        detection = header.get("detection_position")
        tests.append(
            {
                "id": spec.name(),
                "proportion": proportion,
                "false_positives": fp,
                "introduction_index": stream.introduction_index,
                "detection_position": detection,
                "detection_delay": (
                    None if detection is None else detection - stream.introduction_index
                ),
            }
        )
        for rec, truth_novel in zip(records[-window:], stream.is_novel[-window:]):
            sample = by_id[rec.id]
            if styles is not None and rec.id in styles:
                windowed["styles"].append(styles[rec.id])
                windowed["types"].append(sample.novelty_type)
                windowed["subtypes"].append(sample.novelty_subtype)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    norm = cfg.section("report")["nmi_normalization"]
    top_k = cfg.section("runner")["top_k"]

    def table_for(groups: dict) -> dict:
        table = {}
        for name, group_rows in groups.items():
            if group_rows:
                table[name] = metrics_mod.summarize_group(
                    group_rows, top_k=top_k, nmi_normalization=norm
                )
        return table

    by_type = table_for(
        {t: [r for r in rows if r["novelty_type"] == t] for t in corpus.NOVELTY_TYPES}
    )
    by_novelty = table_for(
        {
            "Novel": [r for r in rows if r["is_novel"]],
            "Non-Novel": [r for r in rows if not r["is_novel"]],
        }
    )
    columns = list(metrics_mod.REPORT_COLUMNS)
    _write_table(
        out / "by_type.csv",
        ["Novelty Type"] + columns,
        [[t] + [_fmt(by_type[t][c]) for c in columns] for t in by_type],
    )
    _write_table(
        out / "by_novelty.csv",
        ["Samples"] + columns,
        [[t] + [_fmt(by_novelty[t][c]) for c in columns] for t in by_novelty],
    )
    _write_table(
        out / "fp_series.csv",
        ["test", "proportion", "false_positives"],
        [[t["id"], repr(t["proportion"]), str(t["false_positives"])] for t in tests],
    )

    characterization = None
    if styles is not None and windowed["styles"]:
        if args.graph:
            payload = json.loads(Path(args.graph).read_text(encoding="utf-8"))
            scheme = ontology.BinningScheme.from_dict(payload["scheme"])
        else:
            scheme = ontology.fit_bins(windowed["styles"], counts=cfg.section("binning"))
        table = metrics_mod.characterize(
            windowed["styles"],
            windowed["types"],
            windowed["subtypes"],
            scheme,
            seed=cfg.seed,
            window=None,
        )
        groups = list(metrics_mod.CLUSTER_GROUPS)
        _write_table(
            out / "characterization.csv",
            ["Novelty"] + groups,
            [
                [row_name]
                + [
                    _fmt(table[row_name][g].purity) if g in table[row_name] else ""
                    for g in groups
                ]
                for row_name in metrics_mod.ROW_ORDER
                if row_name in table
            ],
        )
        characterization = {
            row_name: {
                g: dataclasses.asdict(cell) for g, cell in table[row_name].items()
            }
            for row_name in table
        }

    summary = {
        "n_tests": len(tests),
        "n_records": len(rows),
        "by_type": by_type,
        "by_novelty": by_novelty,
        "tests": tests,
    }
    if characterization is not None:
        summary["characterization"] = characterization
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_run_log(out, cfg)
    log.info("report: %d tests, %d records -> %s", len(tests), len(rows), out)
    return 0


# ------------------------------------------------------------------- plot

def _svg_fp_plot(points: list) -> str:
    """False positives vs. novelty proportion as a standalone SVG line chart."""
    width, height = 640, 400
    mleft, mright, mtop, mbottom = 60, 20, 20, 50
    xs = [p for p, _ in points]
    ys = [f for _, f in points]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = 0.0, max(max(ys), 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0

    def sx(v):
        return mleft + (v - x_lo) / (x_hi - x_lo) * (width - mleft - mright)

    def sy(v):
        return height - mbottom - (v - y_lo) / (y_hi - y_lo) * (height - mtop - mbottom)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{mleft}" y1="{height - mbottom}" x2="{width - mright}" '
        f'y2="{height - mbottom}" stroke="black"/>',
        f'<line x1="{mleft}" y1="{mtop}" x2="{mleft}" y2="{height - mbottom}" stroke="black"/>',
    ]
    for value in sorted(set(xs)):
        x = sx(value)
        parts.append(f'<line x1="{x:.2f}" y1="{height - mbottom}" x2="{x:.2f}" y2="{height - mbottom + 5}" stroke="black"/>')
        parts.append(
            f'<text x="{x:.2f}" y="{height - mbottom + 20}" font-size="12" '
            f'text-anchor="middle">{value:g}</text>'
        )
    n_ticks = 5
    for i in range(n_ticks + 1):
        value = y_lo + (y_hi - y_lo) * i / n_ticks
        y = sy(value)
        parts.append(f'<line x1="{mleft - 5}" y1="{y:.2f}" x2="{mleft}" y2="{y:.2f}" stroke="black"/>')
        parts.append(
            f'<text x="{mleft - 10}" y="{y + 4:.2f}" font-size="12" '
            f'text-anchor="end">{value:.1f}</text>'
        )
    path = " ".join(
        f"{'M' if i == 0 else 'L'} {sx(p):.2f} {sy(f):.2f}" for i, (p, f) in enumerate(points)
    )
    parts.append(f'<path d="{path}" fill="none" stroke="#1f6feb" stroke-width="2"/>')
    for p, f in points:
        parts.append(f'<circle cx="{sx(p):.2f}" cy="{sy(f):.2f}" r="3" fill="#1f6feb"/>')
    parts.append(
        f'<text x="{(mleft + width - mright) / 2}" y="{height - 10}" font-size="13" '
        f'text-anchor="middle">proportion of novel samples</text>'
    )
    parts.append(
        f'<text x="15" y="{(mtop + height - mbottom) / 2}" font-size="13" '
        f'text-anchor="middle" transform="rotate(-90 15 {(mtop + height - mbottom) / 2})">'
        "false positives</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_plot(args, cfg: config_mod.Config, jobs: int) -> int:
    sums: dict = {}
    with open(args.series, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header != ["test", "proportion", "false_positives"]:
            raise metrics_mod.MetricsError(f"{args.series}: not a false-positive series")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            _, proportion, fp = line.split(",")
            bucket = sums.setdefault(float(proportion), [0.0, 0])
            bucket[0] += float(fp)
            bucket[1] += 1
    if not sums:
        raise metrics_mod.MetricsError(f"{args.series}: empty series")
    points = [(p, total / n) for p, (total, n) in sorted(sums.items())]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(_svg_fp_plot(points), encoding="utf-8")
    log.info("plot: %d points -> %s", len(points), out)
    return 0


# -------------------------------------------------------------- selfcheck

def cmd_selfcheck(args, cfg: config_mod.Config, jobs: int) -> int:
    from . import selfcheck as selfcheck_mod

    results = selfcheck_mod.run_all(only=args.only or None)
    for res in results:
        print(f"{'PASS' if res.passed else 'FAIL'} {res.name}: {res.detail}")
    passed = sum(1 for r in results if r.passed)
    print(f"{passed}/{len(results)} checks passed")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = [dataclasses.asdict(r) for r in results]
        (out / "selfcheck.json").write_text(
            json.dumps(payload, indent=2) + "\n", encoding="utf-8"
        )
    return 0 if passed == len(results) else 1


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="JSON settings file")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--jobs", type=int, help="worker processes (default: logical cores)")
    common.add_argument("--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(
        prog="scriptdrift",
        description="Open-world handwriting-line analysis toolchain.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=(
            f"scriptdrift {__version__} "
            f"(model format {evm_mod.MODEL_FORMAT} v{evm_mod.MODEL_FORMAT_VERSION})"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("measure", parents=[common], help="style measurements per line image")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_measure)

    p = sub.add_parser("graph", parents=[common], help="writer / style-bin knowledge graph")
    p.add_argument("--manifest", required=True)
    p.add_argument("--measures", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_graph)

    p = sub.add_parser("distances", parents=[common], help="writer-to-writer style distances")
    p.add_argument("--manifest", required=True)
    p.add_argument("--measures", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_distances)

    p = sub.add_parser("inject", parents=[common], help="mint novelty pools from a base corpus")
    p.add_argument("--base", required=True)
    p.add_argument("--recipe", required=True)
    p.add_argument("--assets", help="directory with background/ and pen/ textures")
    p.add_argument("--known-writers", help="comma list; remaining writers become donors")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_inject)

    p = sub.add_parser("featurize", parents=[common], help="extract appearance descriptors")
    p.add_argument("--manifest", required=True)
    p.add_argument("--extractor", choices=sorted(features_mod.EXTRACTORS))
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_featurize)

    p = sub.add_parser("train", parents=[common], help="fit the open-set writer model")
    p.add_argument("--features", required=True, action="append")
    p.add_argument("--labels", required=True, help="manifest supplying writer labels")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("calibrate", parents=[common], help="set the novelty threshold at the EER point")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True, action="append")
    p.add_argument("--labels", required=True, action="append")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("gen-tests", parents=[common], help="enumerate factorial test streams")
    p.add_argument("--pools", help="NONNOVEL,NOVEL manifest paths; omit to write specs only")
    p.add_argument("--limit", type=int, help="materialize at most N specs as streams")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_tests)

    p = sub.add_parser("run", parents=[common], help="stream tests through an agent")
    p.add_argument("--agent", required=True, help="calibrated model file")
    p.add_argument("--features", required=True, action="append")
    p.add_argument("--tests", required=True, help="directory of stream files")
    p.add_argument("--predictions", help="external transcript predictions (JSONL)")
    p.add_argument("--manifest", help="manifest supplying the known alphabet")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("report", parents=[common], help="score run records against oracles")
    p.add_argument("--records", required=True)
    p.add_argument("--streams", required=True, help="directory holding streams + oracle files")
    p.add_argument("--manifest", required=True, action="append")
    p.add_argument("--measures", action="append", help="measurement files for characterization")
    p.add_argument("--graph", help="reuse a graph file's binning scheme")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("plot", parents=[common], help="false positives vs. novelty proportion (SVG)")
    p.add_argument("--series", required=True, help="fp_series.csv from report")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_plot)

    p = sub.add_parser("selfcheck", parents=[common], help="run the synthetic acceptance suite")
    p.add_argument("--only", action="append", help="run just the named checks")
    p.add_argument("--out", help="also write selfcheck.json here")
    p.set_defaults(fn=cmd_selfcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        overrides = {"seed": args.seed} if args.seed is not None else None
        cfg = config_mod.load_config(args.config, overrides=overrides)
    except _ERRORS as exc:
        print(f"scriptdrift {_module_of(exc)}: {exc}", file=sys.stderr)
        return 1
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    log.info("effective config: %s", json.dumps(cfg.effective(), sort_keys=True))
    try:
        return args.fn(args, cfg, jobs)
    except _ERRORS as exc:
        print(f"scriptdrift {_module_of(exc)}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
