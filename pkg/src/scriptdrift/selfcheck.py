"""Synthetic acceptance suite.

Every check generates its own data, runs one release-gate property at its
stated tolerance and budget, and reports a single deterministic pass/fail
line. The CLI `selfcheck` subcommand and the acceptance tests both call
into this module, so there is exactly one definition of "does the build
hold".
"""

from __future__ import annotations

import hashlib
import json
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import augment as augment_mod
from . import corpus
from . import evm as evm_mod
from . import features as features_mod
from . import metrics as metrics_mod
from . import ontology
from . import runner as runner_mod
from . import style_metrics
from . import synth
from . import testgen as testgen_mod
from .seeding import derive_rng

__all__ = ["SelfcheckError", "CheckResult", "ALL_CHECKS", "run_all"]

SEED = 7


class SelfcheckError(ValueError):
    pass


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _result(name: str, start: float, budget, passed: bool, detail: str) -> CheckResult:
    elapsed = time.perf_counter() - start
    if budget is not None and elapsed > budget:
        return CheckResult(name, False, f"{detail}; exceeded {budget:.0f} s budget")
    return CheckResult(name, passed, detail)


# ------------------------------------------------------- 1: metric oracles

def _partitions(n: int):
    """All set partitions of range(n) as restricted-growth label tuples."""
    def grow(prefix, used):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for v in range(used + 1):
            yield from grow(prefix + [v], max(used, v + 1))
    yield from grow([], 0)


def _oracle_nmi(a, b, normalization="geometric") -> float:
    n = len(a)
    table: dict = {}
    for x, y in zip(a, b):
        table[(x, y)] = table.get((x, y), 0) + 1
    ca: dict = {}
    cb: dict = {}
    for x in a:
        ca[x] = ca.get(x, 0) + 1
    for y in b:
        cb[y] = cb.get(y, 0) + 1
    ha = -sum((c / n) * math.log(c / n) for c in ca.values())
    hb = -sum((c / n) * math.log(c / n) for c in cb.values())
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    info = sum(
        (c / n) * math.log((c / n) / ((ca[x] / n) * (cb[y] / n)))
        for (x, y), c in table.items()
    )
    denom = {
        "geometric": math.sqrt(ha * hb),
        "arithmetic": 0.5 * (ha + hb),
        "min": min(ha, hb),
        "max": max(ha, hb),
    }[normalization]
    return info / denom


def _oracle_purity(clusters, truth) -> float:
    groups: dict = {}
    for c, t in zip(clusters, truth):
        groups.setdefault(c, []).append(t)
    total = 0
    for members in groups.values():
        total += max(members.count(t) for t in set(members))
    return total / len(clusters)


def _oracle_levenshtein(a: str, b: str) -> int:
    rows = len(a) + 1
    cols = len(b) + 1
    dp = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        dp[i][0] = i
    for j in range(cols):
        dp[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            dp[i][j] = min(
                dp[i - 1][j] + 1,
                dp[i][j - 1] + 1,
                dp[i - 1][j - 1] + (a[i - 1] != b[j - 1]),
            )
    return dp[-1][-1]


def check_metric_oracles() -> CheckResult:
    start = time.perf_counter()
    pairs = 0
    for n in range(1, 7):
        parts = list(_partitions(n))
        for a in parts:
            for b in parts:
                pairs += 1
                got = metrics_mod.nmi(a, b)
                want = _oracle_nmi(a, b)
                if abs(got - want) > 1e-12:
                    return _result(
                        "metric-oracles", start, 10.0, False,
                        f"nmi mismatch on {a} vs {b}: {got} != {want}",
                    )
                got_p = metrics_mod.purity(a, b)
                want_p = _oracle_purity(a, b)
                if abs(got_p - want_p) > 1e-12:
                    return _result(
                        "metric-oracles", start, 10.0, False,
                        f"purity mismatch on {a} vs {b}: {got_p} != {want_p}",
                    )
                if n <= 4:
                    for norm in ("arithmetic", "min", "max"):
                        got_n = metrics_mod.nmi(a, b, normalization=norm)
                        want_n = _oracle_nmi(a, b, normalization=norm)
                        if abs(got_n - want_n) > 1e-12:
                            return _result(
                                "metric-oracles", start, 10.0, False,
                                f"nmi[{norm}] mismatch on {a} vs {b}",
                            )
    rng = derive_rng(SEED, "edit-distance")
    alphabet = "abcde"
    for _ in range(1000):
        la, lb = int(rng.integers(0, 13)), int(rng.integers(0, 13))
        a = "".join(alphabet[i] for i in rng.integers(0, len(alphabet), la))
        b = "".join(alphabet[i] for i in rng.integers(0, len(alphabet), lb))
        if metrics_mod.levenshtein(a, b) != _oracle_levenshtein(a, b):
            return _result(
                "metric-oracles", start, 10.0, False,
                f"levenshtein mismatch on {a!r} vs {b!r}",
            )
        want_acc = (
            1.0 if not a and not b
            else 1.0 - _oracle_levenshtein(a, b) / max(la, lb)
        )
        if metrics_mod.char_accuracy(a, b) != want_acc:
            return _result(
                "metric-oracles", start, 10.0, False,
                f"char_accuracy mismatch on {a!r} vs {b!r}",
            )
    return _result(
        "metric-oracles", start, 10.0, True,
        f"{pairs} partition pairs and 1000 string pairs match the oracles",
    )


# ------------------------------------------------------- 2: purity formula

def check_purity_formula() -> CheckResult:
    start = time.perf_counter()
    clusters = ["c1", "c1", "c1", "c2", "c2", "c2"]
    truth = ["a", "a", "b", "b", "b", "a"]
    value = metrics_mod.purity(clusters, truth)
    passed = abs(value - 2.0 / 3.0) <= 1e-9
    return _result(
        "purity-formula", start, None, passed,
        f"clusters (a,a,b),(b,b,a) -> {value:.4f}",
    )


# ------------------------------------------------- 3: style metric recovery

def check_style_recovery() -> CheckResult:
    start = time.perf_counter()
    recovered = 0
    for angle in style_metrics.SLANT_ANGLES:
        image = synth.render_line(
            words=(3, 4, 3), bar_width=3, letter_gap=5, word_gap=18,
            height=64, margin=70, ink=40, slant_deg=float(angle),
        )
        got = style_metrics.slant_angle(style_metrics.foreground_mask(image))
        if got == angle:
            recovered += 1
        else:
            return _result(
                "style-recovery", start, 30.0, False,
                f"slant {angle} came back as {got}",
            )

    image = np.full((40, 200), 255, dtype=np.uint8)
    image[10:20, 20:70] = 30
    image[10:20, 70:120] = 50
    pp = style_metrics.pen_pressure(image)
    if pp != 40.0:
        return _result("style-recovery", start, 30.0, False, f"pen_pressure {pp} != 40.0")
    image2 = np.full((30, 120), 255, dtype=np.uint8)
    image2[5:18, 10:90] = 77
    pp2 = style_metrics.pen_pressure(image2)
    if pp2 != 77.0:
        return _result("style-recovery", start, 30.0, False, f"pen_pressure {pp2} != 77.0")

    flat = np.full((16, 16), 200, dtype=np.uint8)
    two = np.zeros((16, 16), dtype=np.uint8)
    two[:, 8:] = 200
    all256 = np.arange(256, dtype=np.uint8).reshape(16, 16)
    entropies = tuple(
        style_metrics.region_entropy(img, np.zeros_like(img, dtype=bool), region="background")
        for img in (flat, two, all256)
    )
    if entropies != (0.0, 1.0, 8.0):
        return _result(
            "style-recovery", start, 30.0, False,
            f"boundary entropies {entropies} != (0.0, 1.0, 8.0)",
        )
    return _result(
        "style-recovery", start, 30.0, True,
        f"{recovered}/11 slants recovered; pressure and entropy exact",
    )


# ----------------------------------------- 4: background compositing contract

def check_compositing_invariance() -> CheckResult:
    start = time.perf_counter()
    rng = derive_rng(SEED, "compositing")
    texture = rng.integers(170, 251, size=(90, 320)).astype(np.uint8)
    assets = {"background/t0": augment_mod.BackgroundAsset("background/t0", texture)}
    transform = augment_mod.background_texture("background/t0")
    exact = 0
    for i in range(50):
        words = tuple(int(rng.integers(2, 6)) for _ in range(int(rng.integers(2, 4))))
        image = synth.render_line(
            words=words,
            bar_width=int(rng.integers(2, 5)),
            letter_gap=int(rng.integers(3, 7)),
            word_gap=int(rng.integers(12, 26)),
            height=64,
            margin=10,
            ink=int(rng.integers(20, 90)),
        )
        before = style_metrics.pen_pressure(image)
        swapped = augment_mod.apply(image, transform, rng=rng, assets=assets)
        after = style_metrics.pen_pressure(swapped)
        if before == after:
            exact += 1
        else:
            return _result(
                "compositing-invariance", start, None, False,
                f"sample {i}: pen_pressure moved {before} -> {after}",
            )
    return _result(
        "compositing-invariance", start, None, True,
        f"{exact}/50 samples keep pen_pressure bit-exact under background swap",
    )


# --------------------------------------------------- 5: open-set benchmark

def _pentagon_split(seed: int):
    points, labels = synth.pentagon_blobs(200, sigma=0.1, radius=5.0, seed=seed)
    by_class: dict = {}
    for row, label in zip(points, labels):
        by_class.setdefault(label, []).append(row)
    train = {}
    test_x, test_y = [], []
    for label, rows in by_class.items():
        rows = np.asarray(rows)
        train[label] = rows[:150]
        test_x.append(rows[150:])
        test_y.extend([label] * (len(rows) - 150))
    return train, np.vstack(test_x), test_y


def check_evm_benchmark() -> CheckResult:
    start = time.perf_counter()
    for s in range(20):
        rng = derive_rng(SEED, "weibull", s)
        sample = rng.weibull(2.0, size=1000)
        shape, scale = evm_mod.weibull_mle(sample)
        if abs(shape - 2.0) > 0.1 or abs(scale - 1.0) > 0.05:
            return _result(
                "evm-benchmark", start, 60.0, False,
                f"weibull fit {s}: shape {shape:.3f}, scale {scale:.3f} out of tolerance",
            )

    train, test_x, test_y = _pentagon_split(SEED)
    hyper = evm_mod.EvmHyperparams(distance="euclidean")
    model = evm_mod.fit(train, hyper, extractor_id="raw")
    scores = evm_mod.class_scores(model, test_x)
    top1 = np.mean([model.labels[i] == t for i, t in zip(scores.argmax(axis=1), test_y)])
    if top1 < 0.99:
        return _result(
            "evm-benchmark", start, 60.0, False, f"closed-set top-1 {top1:.4f} < 0.99"
        )
    novel = synth.center_blob(200, sigma=0.1, seed=SEED)
    known_km = scores.max(axis=1)
    novel_km = evm_mod.class_scores(model, novel).max(axis=1)
    calibration = evm_mod.calibrate_threshold(known_km, novel_km)
    delta = calibration.threshold
    hits = int(np.sum(known_km >= delta)) + int(np.sum(novel_km < delta))
    detection = hits / (known_km.size + novel_km.size)
    passed = detection >= 0.95
    return _result(
        "evm-benchmark", start, 60.0, passed,
        f"top-1 {top1:.4f}, open-set detection {detection:.4f} at delta {delta:.4f}, "
        f"20 Weibull fits in tolerance",
    )


# ------------------------------------------------ 6: probability contract

def check_probability_contract() -> CheckResult:
    start = time.perf_counter()
    points, labels = synth.pentagon_blobs(100, sigma=0.1, radius=5.0, seed=SEED + 1)
    by_class: dict = {}
    for row, label in zip(points, labels):
        by_class.setdefault(label, []).append(row)
    by_class = {k: np.asarray(v) for k, v in by_class.items()}
    model = evm_mod.fit(by_class, evm_mod.EvmHyperparams(distance="euclidean"), "raw")

    rng = derive_rng(SEED, "fuzz")
    queries = np.vstack(
        [
            rng.uniform(-8.0, 8.0, size=(8000, 2)),
            rng.normal(0.0, 0.1, size=(1000, 2)) + np.array([0.0, 5.0]),
            rng.uniform(-8.0, 8.0, size=(1000, 2)) * 100.0,
        ]
    )
    scores = evm_mod.class_scores(model, queries)
    probs = evm_mod.predict(model, queries)
    sums = probs.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > 1e-9:
        return _result(
            "probability-contract", start, None, False,
            f"sum deviates by {np.max(np.abs(sums - 1.0)):.2e}",
        )
    if probs.min() < 0.0 or probs.max() > 1.0:
        return _result(
            "probability-contract", start, None, False,
            f"entries outside [0,1]: min {probs.min()}, max {probs.max()}",
        )
    known_argmax = probs[:, :-1].argmax(axis=1)
    score_argmax = scores.argmax(axis=1)
    if not np.array_equal(known_argmax, score_argmax):
        bad = int(np.sum(known_argmax != score_argmax))
        return _result(
            "probability-contract", start, None, False,
            f"known argmax disagrees with raw scores on {bad} of 10000 points",
        )
    return _result(
        "probability-contract", start, None, True,
        "10000 fuzzed vectors: sums within 1e-9, entries in [0,1], argmax preserved",
    )


# ------------------------------------------------- 7: test stream generator

def _pool_manifests():
    non_novel = [
        corpus.LineRecord(
            id=f"nn-{i:05d}", image="x.png", writer=f"w{i % 4}", transcript="ab",
        )
        for i in range(1100)
    ]
    novel = []
    for t in ("Writer", "Letter/Style", "Background"):
        for d in ("Easy", "Medium", "Hard"):
            slug = t.lower().replace("/", "-")
            for i in range(450):
                novel.append(
                    corpus.LineRecord(
                        id=f"nv-{slug}-{d.lower()}-{i:05d}",
                        image="x.png",
                        writer="wx",
                        transcript="ab",
                        novelty_type=t,
                        novelty_subtype="synthetic",
                        difficulty=d,
                    )
                )
    return (
        corpus.make_manifest(non_novel, known_writers=["w0", "w1", "w2", "w3"]),
        corpus.make_manifest(novel, known_writers=["w0", "w1", "w2", "w3"]),
    )


def check_testgen_factorial() -> CheckResult:
    start = time.perf_counter()
    specs = testgen_mod.enumerate_specs(master_seed=SEED)
    if len(specs) != 3888:
        return _result(
            "testgen-factorial", start, 60.0, False,
            f"default grid enumerates {len(specs)} specs, want 3888",
        )
    non_novel, novel = _pool_manifests()
    rng = derive_rng(SEED, "spec-sample")
    chosen = rng.choice(len(specs), size=200, replace=False)
    for idx in chosen:
        spec = specs[int(idx)]
        stream = testgen_mod.generate(spec, non_novel, novel)
        intro = stream.introduction_index
        if any(stream.is_novel[:intro]):
            return _result(
                "testgen-factorial", start, 60.0, False,
                f"{spec.name()}: novel sample before introduction index {intro}",
            )
        window = len(stream) - intro
        want = round(spec.novelty_density * window)
        got = sum(stream.is_novel)
        if got != want:
            return _result(
                "testgen-factorial", start, 60.0, False,
                f"{spec.name()}: {got} novel samples, want {want}",
            )
        k = int(rng.integers(1, 10))
        shuffled = testgen_mod.reorder(stream, k)
        if sorted(shuffled.sample_ids) != sorted(stream.sample_ids):
            return _result(
                "testgen-factorial", start, 60.0, False,
                f"{spec.name()}: reorder {k} changed the sample multiset",
            )
        if shuffled.is_novel != stream.is_novel:
            return _result(
                "testgen-factorial", start, 60.0, False,
                f"{spec.name()}: reorder {k} moved the novelty mask",
            )

    window, n_novel = 400, 120
    means = {}
    for dist in testgen_mod.DISTRIBUTIONS:
        acc = []
        for s in range(100):
            slots = testgen_mod._place_slots(
                derive_rng(SEED, "beta", dist, s), dist, n_novel, window
            )
            acc.extend(p / (window - 1) for p in slots)
        means[dist] = float(np.mean(acc))
    ordered = (
        means["Low"] - means["Flat"] >= 0.05
        and means["Low"] - means["Mid"] >= 0.05
        and means["Flat"] - means["High"] >= 0.05
        and means["Mid"] - means["High"] >= 0.05
        and abs(means["Flat"] - means["Mid"]) < 0.05
    )
    if not ordered:
        return _result(
            "testgen-factorial", start, 60.0, False,
            "positional means out of order: "
            + ", ".join(f"{k} {v:.3f}" for k, v in sorted(means.items())),
        )
    return _result(
        "testgen-factorial", start, 60.0, True,
        f"3888 specs; 200 streams hold density/order/multiset; placement means "
        f"High {means['High']:.3f} < Mid {means['Mid']:.3f} ~ Flat {means['Flat']:.3f} "
        f"< Low {means['Low']:.3f}",
    )


# --------------------------------------------------- 8: change detection

def _scripted_run(scores: np.ndarray, threshold: float = 0.75):
    ids = [f"s{i:05d}" for i in range(scores.size)]
    probs = {
        sid: [float((1.0 - v) / 2.0), float((1.0 - v) / 2.0), float(v)]
        for sid, v in zip(ids, scores)
    }
    agent = runner_mod.ScriptedAgent(probs, ["w0", "w1"], threshold)
    spec = testgen_mod.TestSpec(
        introduction_point=0.5, novelty_density=0.5, novelty_type="Writer",
        difficulty="Easy", distribution="Flat", length=scores.size, seed=0,
    )
    stream = testgen_mod.TestStream(spec=spec, sample_ids=ids)
    return runner_mod.run_test(agent, stream)


def check_change_detection() -> CheckResult:
    start = time.perf_counter()
    length = 512
    intro = length // 2
    good = 0
    for t in range(200):
        rng = derive_rng(SEED, "detect", t)
        scores = np.clip(
            np.concatenate(
                [
                    rng.normal(0.2, 0.05, size=intro),
                    rng.normal(0.8, 0.05, size=length - intro),
                ]
            ),
            0.0,
            1.0,
        )
        result = _scripted_run(scores)
        det = result.detection_position
        if det is not None and intro <= det <= intro + 16:
            good += 1
    if good < 190:
        return _result(
            "change-detection", start, 60.0, False,
            f"only {good}/200 runs detected within 16 samples with no early alarm",
        )

    densities = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
    fp_length = 2048
    fp_intro = fp_length // 2
    window = fp_length - fp_intro
    mean_fp = []
    for d in densities:
        counts = []
        for r in range(16):
            rng = derive_rng(SEED, "fp-trend", str(d), r)
            n_novel = round(d * window)
            novel_slots = rng.permutation(window)[:n_novel]
            mask = np.zeros(fp_length, dtype=bool)
            mask[fp_intro + novel_slots] = True
            scores = np.where(
                mask,
                rng.normal(0.8, 0.05, size=fp_length),
                rng.normal(0.2, 0.05, size=fp_length),
            )
            scores = np.clip(scores, 0.0, 1.0)
            result = _scripted_run(scores)
            fp = sum(
                1 for rec, is_novel in zip(result.records, mask) if rec.decision and not is_novel
            )
            counts.append(fp)
        mean_fp.append(float(np.mean(counts)))
    ranks_x = np.argsort(np.argsort(densities)).astype(float)
    ranks_y = np.argsort(np.argsort(mean_fp)).astype(float)
    rho = metrics_mod.pearson(ranks_x, ranks_y)
    passed = rho < -0.8
    return _result(
        "change-detection", start, 60.0, passed,
        f"{good}/200 detections within 16 samples; false positives "
        f"{[round(v, 1) for v in mean_fp]} over proportions {densities}, "
        f"Spearman {rho:.2f}",
    )


# ----------------------------------------------------- 9: characterization

def check_characterization() -> CheckResult:
    start = time.perf_counter()
    rng = derive_rng(SEED, "characterize")
    slants = (-30.0, -10.0, 10.0, 30.0)
    spacings = (10.0, 20.0, 30.0)
    sizes = (8.0, 16.0, 24.0)
    vectors, types, subtypes = [], [], []
    for i in range(60):
        mode = i % 3
        vectors.append(
            style_metrics.StyleVector(
                pen_pressure=(40.0, 120.0, 200.0)[mode] + float(rng.normal(0.0, 2.0)),
                slant_angle=slants[i % 4],
                word_spacing=spacings[i % 3],
                character_size=sizes[i % 3],
                background_entropy=1.0,
                pen_entropy=2.0,
            )
        )
        types.append("Writer")
        subtypes.append(f"mode-{mode}")
    scheme = ontology.fit_bins(vectors)
    table = metrics_mod.characterize(vectors, types, subtypes, scheme, seed=SEED, window=None)
    pp = table["Style"]["PP"]
    if pp.purity < 0.95:
        return _result(
            "characterization", start, None, False,
            f"pen-pressure purity {pp.purity:.4f} < 0.95 over three separated modes",
        )

    line = synth.render_line()
    constant = style_metrics.style_vector(line)
    flat_table = metrics_mod.characterize(
        [constant] * 32, ["None"] * 32, [""] * 32, scheme, seed=SEED, window=None
    )
    nc = flat_table["No Novelty"]["NC"]
    if nc.k_effective != 1 or nc.purity != 1.0:
        return _result(
            "characterization", start, None, False,
            f"all-non-novel window: k_effective {nc.k_effective}, purity {nc.purity}",
        )
    return _result(
        "characterization", start, None, True,
        f"PP purity {pp.purity:.4f} over 3 modes; constant window collapses to one cluster",
    )


# ------------------------------------------------- 10: transform involutions

def _oracle_morph(mask: np.ndarray, radius: int, dilating: bool) -> np.ndarray:
    offsets = [
        (di, dj)
        for di in range(-radius, radius + 1)
        for dj in range(-radius, radius + 1)
        if abs(di) + abs(dj) <= radius
    ]
    h, w = mask.shape
    padded = np.zeros((h + 2 * radius, w + 2 * radius), dtype=bool)
    padded[radius : radius + h, radius : radius + w] = mask
    out = np.zeros((h, w), dtype=bool) if dilating else np.ones((h, w), dtype=bool)
    for di, dj in offsets:
        view = padded[radius + di : radius + di + h, radius + dj : radius + dj + w]
        if dilating:
            out |= view
        else:
            out &= view
    return out


def check_involutions() -> CheckResult:
    start = time.perf_counter()
    rng = derive_rng(SEED, "involutions")
    h_ref = augment_mod.reflect_horizontal()
    v_ref = augment_mod.reflect_vertical()
    both = augment_mod.compose([h_ref, v_ref])
    inv = augment_mod.invert_color()
    for i in range(100):
        shape = (int(rng.integers(24, 65)), int(rng.integers(40, 161)))
        image = rng.integers(0, 256, size=shape).astype(np.uint8)
        for transform in (h_ref, v_ref, both, inv):
            twice = augment_mod.apply(augment_mod.apply(image, transform), transform)
            if not np.array_equal(twice, image):
                return _result(
                    "involutions", start, None, False,
                    f"image {i}: {transform.label} applied twice is not the identity",
                )
    for case in range(500):
        mask = rng.uniform(size=(32, 32)) < rng.uniform(0.2, 0.8)
        radius = int(rng.integers(1, 4))
        got_d = augment_mod.dilate_mask(mask, radius)
        got_e = augment_mod.erode_mask(mask, radius)
        if not np.array_equal(got_d, _oracle_morph(mask, radius, dilating=True)):
            return _result(
                "involutions", start, None, False,
                f"case {case}: dilation disagrees with the structuring-element oracle",
            )
        if not np.array_equal(got_e, _oracle_morph(mask, radius, dilating=False)):
            return _result(
                "involutions", start, None, False,
                f"case {case}: erosion disagrees with the structuring-element oracle",
            )
    return _result(
        "involutions", start, None, True,
        "100 images: reflect/invert are involutions; 500 masks match the morphology oracle",
    )


# ------------------------------------------------ 11: determinism and io

def _demo_recipe(path: Path) -> None:
    recipe = {
        "Background": {
            "count": 12,
            "subtypes": [
                {
                    "name": "paper swap",
                    "transforms": [augment_mod.background_texture("background/t0").to_dict()],
                }
            ],
        }
    }
    path.write_text(json.dumps(recipe, indent=2) + "\n", encoding="utf-8")


def _build_demo_corpus(root: Path) -> None:
    img_dir = root / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    rng = derive_rng(SEED, "demo-corpus")
    profiles = [
        ("w0", 30, -15.0, 14, 20),
        ("w1", 50, 0.0, 20, 28),
        ("w2", 70, 15.0, 26, 36),
        ("w3", 90, 30.0, 32, 44),
    ]
    texts = ["ab cd", "cd ab", "ba dc", "abcd", "dd ac", "ca bd"]
    records = []
    for writer, ink, slant, gap, bar_height in profiles:
        for i in range(12):
            words = tuple(int(rng.integers(2, 6)) for _ in range(3))
            image = synth.render_line(
                words=words, bar_height=bar_height, word_gap=gap, ink=ink,
                slant_deg=slant, height=64, margin=70,
            )
            rec_id = f"{writer}-{i:03d}"
            corpus.save_image(image, img_dir / f"{rec_id}.png")
            records.append(
                corpus.LineRecord(
                    id=rec_id,
                    image=f"images/{rec_id}.png",
                    writer=writer,
                    transcript=texts[i % len(texts)],
                )
            )
    manifest = corpus.make_manifest(records, root=root)
    corpus.write_manifest(manifest, root / "corpus.jsonl")
    assets = root / "assets" / "background"
    assets.mkdir(parents=True, exist_ok=True)
    texture = derive_rng(SEED, "demo-texture").integers(170, 251, size=(100, 400))
    corpus.save_image(texture.astype(np.uint8), assets / "t0.png")
    _demo_recipe(root / "recipe.json")
    tiny = {
        "schema_version": 1,
        "seed": SEED,
        "testgen": {
            "introduction_points": [0.6],
            "densities": [0.15],
            "novelty_types": ["Background"],
            "difficulties": ["Easy"],
            "distributions": ["Flat"],
            "lengths": [48],
            "max_reorders": 1,
        },
    }
    (root / "tiny-config.json").write_text(json.dumps(tiny, indent=2) + "\n", encoding="utf-8")


def _run_pipeline(root: Path) -> None:
    from . import cli

    base = ["--seed", str(SEED), "--jobs", "1"]
    corpus_manifest = str(root / "corpus.jsonl")
    novel_manifest = str(root / "novel" / "manifest.jsonl")
    steps = [
        ["measure", "--manifest", corpus_manifest, "--out", str(root / "measures.jsonl")],
        ["graph", "--manifest", corpus_manifest, "--measures", str(root / "measures.jsonl"),
         "--out", str(root / "graph.json")],
        ["distances", "--manifest", corpus_manifest, "--measures", str(root / "measures.jsonl"),
         "--out", str(root / "distances.csv")],
        ["inject", "--base", corpus_manifest, "--recipe", str(root / "recipe.json"),
         "--assets", str(root / "assets"), "--out", str(root / "novel")],
        ["measure", "--manifest", novel_manifest, "--out", str(root / "novel-measures.jsonl")],
        ["featurize", "--manifest", corpus_manifest, "--out", str(root / "feats.json")],
        ["featurize", "--manifest", novel_manifest, "--out", str(root / "novel-feats.json")],
        ["train", "--features", str(root / "feats.json"), "--labels", corpus_manifest,
         "--out", str(root / "model.evm")],
        ["calibrate", "--model", str(root / "model.evm"),
         "--features", str(root / "feats.json"), "--features", str(root / "novel-feats.json"),
         "--labels", corpus_manifest, "--labels", novel_manifest,
         "--out", str(root / "calibrated.evm")],
        ["gen-tests", "--config", str(root / "tiny-config.json"),
         "--pools", f"{corpus_manifest},{novel_manifest}", "--out", str(root / "tests")],
        ["run", "--agent", str(root / "calibrated.evm"),
         "--features", str(root / "feats.json"), "--features", str(root / "novel-feats.json"),
         "--tests", str(root / "tests" / "streams"), "--manifest", corpus_manifest,
         "--out", str(root / "records")],
        ["report", "--records", str(root / "records"), "--streams", str(root / "tests" / "streams"),
         "--manifest", corpus_manifest, "--manifest", novel_manifest,
         "--measures", str(root / "measures.jsonl"), "--measures", str(root / "novel-measures.jsonl"),
         "--graph", str(root / "graph.json"), "--out", str(root / "report")],
        ["plot", "--series", str(root / "report" / "fp_series.csv"),
         "--out", str(root / "report" / "fp.svg")],
    ]
    for step in steps:
        rc = cli.main(step + base)
        if rc != 0:
            raise RuntimeError(f"pipeline step {step[0]} exited {rc}")


def _tree_hashes(root: Path) -> dict:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


def check_determinism() -> CheckResult:
    start = time.perf_counter()

    records = [
        corpus.LineRecord(id=f"r{i}", image=f"img{i}.png", writer=f"w{i % 2}", transcript="ab cd")
        for i in range(6)
    ]
    manifest = corpus.make_manifest(records)
    with tempfile.TemporaryDirectory(prefix="scriptdrift-io-") as tmp:
        tmp_path = Path(tmp)
        corpus.write_manifest(manifest, tmp_path / "m.jsonl")
        loaded = corpus.load_manifest(tmp_path / "m.jsonl", check_images=False)
        if list(loaded.records) != records:
            return _result("determinism", start, None, False, "manifest round-trip drifted")

        rng = derive_rng(SEED, "feature-io")
        matrix = rng.normal(size=(5, 36))
        features_mod.save_features(tmp_path / "f.json", [f"r{i}" for i in range(5)], matrix, "mean-hog")
        ids, loaded_matrix, extractor = features_mod.load_features(tmp_path / "f.json")
        if not (np.array_equal(loaded_matrix, matrix) and extractor == "mean-hog"):
            return _result("determinism", start, None, False, "feature file round-trip drifted")

        points, labels = synth.pentagon_blobs(50, sigma=0.1, radius=5.0, seed=SEED + 2)
        by_class: dict = {}
        for row, label in zip(points, labels):
            by_class.setdefault(label, []).append(row)
        model = evm_mod.fit(
            {k: np.asarray(v) for k, v in by_class.items()},
            evm_mod.EvmHyperparams(distance="euclidean"),
            "raw",
        )
        evm_mod.save_model(model, tmp_path / "m.evm")
        loaded_model = evm_mod.load_model(tmp_path / "m.evm")
        probe = derive_rng(SEED, "probe").uniform(-6, 6, size=(50, 2))
        if not np.array_equal(
            evm_mod.predict(model, probe), evm_mod.predict(loaded_model, probe)
        ):
            return _result("determinism", start, None, False, "model round-trip changed predictions")

    hashes = []
    for run in range(2):
        with tempfile.TemporaryDirectory(prefix=f"scriptdrift-pipe{run}-") as tmp:
            root = Path(tmp)
            _build_demo_corpus(root)
            _run_pipeline(root)
            expected = [
                "report/by_type.csv", "report/by_novelty.csv", "report/fp_series.csv",
                "report/summary.json", "report/fp.svg", "graph.json", "distances.csv",
            ]
            missing = [name for name in expected if not (root / name).is_file()]
            if missing:
                return _result(
                    "determinism", start, None, False,
                    f"pipeline left no {missing[0]}",
                )
            hashes.append(_tree_hashes(root))
    if set(hashes[0]) != set(hashes[1]):
        only = sorted(set(hashes[0]) ^ set(hashes[1]))
        return _result(
            "determinism", start, None, False,
            f"reruns produced different file sets, e.g. {only[0]}",
        )
    diff = sorted(name for name in hashes[0] if hashes[0][name] != hashes[1][name])
    if diff:
        return _result(
            "determinism", start, None, False,
            f"{len(diff)} files changed between identical reruns, e.g. {diff[0]}",
        )
    return _result(
        "determinism", start, None, True,
        f"round-trips exact; {len(hashes[0])} pipeline files byte-identical across reruns",
    )


ALL_CHECKS = (
    ("metric-oracles", check_metric_oracles),
    ("purity-formula", check_purity_formula),
    ("style-recovery", check_style_recovery),
    ("compositing-invariance", check_compositing_invariance),
    ("evm-benchmark", check_evm_benchmark),
    ("probability-contract", check_probability_contract),
    ("testgen-factorial", check_testgen_factorial),
    ("change-detection", check_change_detection),
    ("characterization", check_characterization),
    ("involutions", check_involutions),
    ("determinism", check_determinism),
)


def run_all(only=None) -> list:
    names = {name for name, _ in ALL_CHECKS}
    if only:
        unknown = sorted(set(only) - names)
        if unknown:
            raise SelfcheckError(f"unknown checks: {', '.join(unknown)}")
    results = []
    for name, fn in ALL_CHECKS:
        if only and name not in only:
            continue
        results.append(fn())
    return results
