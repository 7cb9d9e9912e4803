"""Evaluation metrics against brute-force oracles and hand-worked cases."""

import itertools
import math

import numpy as np
import pytest
from scipy import stats

from scriptdrift import metrics
from scriptdrift.ontology import fit_bins
from scriptdrift.seeding import derive_rng
from scriptdrift.style_metrics import StyleVector


def partitions(n):
    """Restricted-growth enumeration of all set partitions of range(n)."""
    def grow(prefix, used):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for v in range(used + 1):
            yield from grow(prefix + [v], max(used, v + 1))
    yield from grow([], 0)


def oracle_nmi(a, b, normalization):
    n = len(a)
    joint, ca, cb = {}, {}, {}
    for x, y in zip(a, b):
        joint[(x, y)] = joint.get((x, y), 0) + 1
        ca[x] = ca.get(x, 0) + 1
        cb[y] = cb.get(y, 0) + 1
    ha = -sum(c / n * math.log(c / n) for c in ca.values())
    hb = -sum(c / n * math.log(c / n) for c in cb.values())
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    info = sum(
        c / n * math.log((c / n) / ((ca[x] / n) * (cb[y] / n)))
        for (x, y), c in joint.items()
    )
    denom = {
        "geometric": math.sqrt(ha * hb),
        "arithmetic": (ha + hb) / 2,
        "min": min(ha, hb),
        "max": max(ha, hb),
    }[normalization]
    return info / denom


@pytest.mark.parametrize("normalization", ["geometric", "arithmetic", "min", "max"])
def test_nmi_matches_contingency_oracle_exhaustively(normalization):
    for n in range(1, 5):
        parts = list(partitions(n))
        for a, b in itertools.product(parts, parts):
            got = metrics.nmi(a, b, normalization=normalization)
            want = oracle_nmi(a, b, normalization)
            assert abs(got - want) <= 1e-12, (a, b)


def test_nmi_agrees_with_sklearn_convention_on_random_labelings():
    # scipy has no nmi; use its entropy pieces as an independent cross-check.
    rng = derive_rng(31, "nmi-random")
    for _ in range(200):
        n = int(rng.integers(2, 40))
        a = tuple(int(v) for v in rng.integers(0, 5, size=n))
        b = tuple(int(v) for v in rng.integers(0, 5, size=n))
        got = metrics.nmi(a, b)
        want = oracle_nmi(a, b, "geometric")
        assert abs(got - want) <= 1e-12


def test_nmi_identical_partition_is_one():
    a = (0, 0, 1, 1, 2)
    relabeled = ("x", "x", "y", "y", "z")
    assert metrics.nmi(a, relabeled) == pytest.approx(1.0, abs=1e-12)


def test_nmi_degenerate_conventions():
    assert metrics.nmi((0, 0, 0), ("a", "a", "a")) == 1.0
    assert metrics.nmi((0, 0, 0), ("a", "b", "a")) == 0.0
    assert metrics.nmi((0, 1, 0), ("a", "a", "a")) == 0.0


def test_nmi_normalization_ordering():
    rng = derive_rng(31, "nmi-order")
    for _ in range(100):
        n = int(rng.integers(4, 30))
        a = tuple(int(v) for v in rng.integers(0, 4, size=n))
        b = tuple(int(v) for v in rng.integers(0, 3, size=n))
        by = {
            norm: metrics.nmi(a, b, normalization=norm)
            for norm in ("geometric", "arithmetic", "min", "max")
        }
        assert by["min"] >= by["geometric"] - 1e-12
        assert by["geometric"] >= by["arithmetic"] - 1e-12
        assert by["arithmetic"] >= by["max"] - 1e-12


def test_nmi_rejects_unknown_normalization_and_length_mismatch():
    with pytest.raises(ValueError):
        metrics.nmi((0, 1), (0, 1), normalization="harmonic")
    with pytest.raises(ValueError):
        metrics.nmi((0, 1), (0, 1, 2))


def test_purity_worked_example():
    clusters = ["c1"] * 3 + ["c2"] * 3
    truth = ["a", "a", "b", "b", "b", "a"]
    assert metrics.purity(clusters, truth) == pytest.approx(2 / 3, abs=1e-9)


def test_purity_matches_oracle_on_all_small_partitions():
    for n in range(1, 6):
        parts = list(partitions(n))
        for a, b in itertools.product(parts, parts):
            groups = {}
            for c, t in zip(a, b):
                groups.setdefault(c, []).append(t)
            want = sum(max(m.count(t) for t in set(m)) for m in groups.values()) / n
            assert abs(metrics.purity(a, b) - want) <= 1e-12


def test_purity_bounds():
    rng = derive_rng(31, "purity-bounds")
    for _ in range(200):
        n = int(rng.integers(1, 30))
        a = tuple(int(v) for v in rng.integers(0, 5, size=n))
        b = tuple(int(v) for v in rng.integers(0, 5, size=n))
        p = metrics.purity(a, b)
        assert 0.0 < p <= 1.0
        assert metrics.purity(a, a) == 1.0


def oracle_levenshtein(a, b):
    dp = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        dp[i][0] = i
    for j in range(len(b) + 1):
        dp[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            dp[i][j] = min(
                dp[i - 1][j] + 1,
                dp[i][j - 1] + 1,
                dp[i - 1][j - 1] + (a[i - 1] != b[j - 1]),
            )
    return dp[-1][-1]


def test_levenshtein_known_pairs():
    assert metrics.levenshtein("kitten", "sitting") == 3
    assert metrics.levenshtein("", "") == 0
    assert metrics.levenshtein("abc", "") == 3
    assert metrics.levenshtein("abc", "abc") == 0


def test_levenshtein_fuzz_against_full_matrix():
    rng = derive_rng(31, "lev")
    letters = "abcde"
    for _ in range(1000):
        a = "".join(letters[i] for i in rng.integers(0, 5, int(rng.integers(0, 13))))
        b = "".join(letters[i] for i in rng.integers(0, 5, int(rng.integers(0, 13))))
        assert metrics.levenshtein(a, b) == oracle_levenshtein(a, b)


def test_char_accuracy_conventions():
    assert metrics.char_accuracy("", "") == 1.0
    assert metrics.char_accuracy("abc", "abc") == 1.0
    assert metrics.char_accuracy("abc", "") == 0.0
    assert metrics.char_accuracy("abcd", "abcx") == pytest.approx(0.75)


def test_word_accuracy_token_level():
    assert metrics.word_accuracy("the cat sat", "the cat sat") == 1.0
    assert metrics.word_accuracy("the cat sat", "the dog sat") == pytest.approx(2 / 3)
    assert metrics.word_accuracy("", "") == 1.0


def test_topk_accuracy_with_novel_slot():
    rankings = [["w0", "w1", "w2"], ["novel", "w0", "w1"], ["w2", "w1", "w0"]]
    truths = ["w1", "novel", "w9"]
    assert metrics.topk_accuracy(rankings, truths, k=3) == pytest.approx(2 / 3)
    assert metrics.topk_accuracy(rankings, truths, k=1) == pytest.approx(1 / 3)


def test_pearson_exact_and_degenerate():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert metrics.pearson(x, 2 * x + 1) == pytest.approx(1.0)
    assert metrics.pearson(x, -x) == pytest.approx(-1.0)
    with pytest.raises(metrics.MetricsError):
        metrics.pearson(x, np.ones(4))


def test_pearson_matches_scipy():
    rng = derive_rng(31, "pearson")
    for _ in range(100):
        n = int(rng.integers(3, 40))
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        assert metrics.pearson(x, y) == pytest.approx(stats.pearsonr(x, y)[0], abs=1e-12)


def test_spearman_via_ranks_matches_scipy():
    # The runner's false-positive trend check ranks by hand and feeds pearson;
    # that construction must agree with the library definition.
    rng = derive_rng(31, "spearman")
    for _ in range(100):
        n = int(rng.integers(4, 25))
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        rx = np.argsort(np.argsort(x)).astype(float)
        ry = np.argsort(np.argsort(y)).astype(float)
        want = stats.spearmanr(x, y).statistic
        assert metrics.pearson(rx, ry) == pytest.approx(want, abs=1e-9)


def test_kmeans_recovers_separated_blobs():
    rng = derive_rng(31, "blobs")
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    x = np.vstack([rng.normal(c, 0.3, size=(40, 2)) for c in centers])
    truth = np.repeat([0, 1, 2], 40)
    assign, cents, inertia, k_eff = metrics.kmeans(x, 3, seed=5)
    assert k_eff == 3
    assert metrics.purity(assign.tolist(), truth.tolist()) == 1.0
    assert inertia < 120 * 0.3**2 * 2 * 3


def test_kmeans_is_deterministic_per_seed():
    rng = derive_rng(31, "kdet")
    x = rng.normal(size=(60, 4))
    a1 = metrics.kmeans(x, 4, seed=9)
    a2 = metrics.kmeans(x, 4, seed=9)
    assert np.array_equal(a1[0], a2[0])
    assert np.array_equal(a1[1], a2[1])
    assert a1[2] == a2[2]


def test_kmeans_constant_data_collapses_to_one_cluster():
    x = np.ones((25, 3)) * 7.5
    assign, centers, inertia, k_eff = metrics.kmeans(x, 3, seed=0)
    assert k_eff == 1
    assert inertia == 0.0
    assert np.all(assign == assign[0])


def test_kmeans_duplicate_heavy_data_drops_empty_clusters():
    x = np.vstack([np.zeros((30, 2)), np.ones((2, 2))])
    assign, centers, inertia, k_eff = metrics.kmeans(x, 5, seed=1)
    assert k_eff <= 2
    assert len(centers) == k_eff


def test_kmeans_never_beats_oracle_on_tiny_instance():
    # With k=n, every point is its own center and inertia is exactly 0.
    rng = derive_rng(31, "kself")
    x = rng.normal(size=(6, 2))
    _, _, inertia, k_eff = metrics.kmeans(x, 6, seed=3)
    assert inertia == pytest.approx(0.0, abs=1e-18)
    assert k_eff == 6


def _style_population(seed):
    rng = derive_rng(seed, "pop")
    vecs, types, subs = [], [], []
    slants = (-30.0, -10.0, 10.0, 30.0)
    for i in range(48):
        mode = i % 3
        vecs.append(
            StyleVector(
                pen_pressure=(40.0, 120.0, 200.0)[mode] + float(rng.normal(0, 1.5)),
                slant_angle=slants[i % 4],
                word_spacing=(10.0, 20.0, 30.0)[i % 3],
                character_size=(8.0, 16.0, 24.0)[i % 3],
                background_entropy=1.0,
                pen_entropy=2.0,
            )
        )
        types.append("Writer" if i % 2 == 0 else "Background")
        subs.append(f"sub{mode}")
    return vecs, types, subs


def test_characterize_row_and_column_structure():
    vecs, types, subs = _style_population(11)
    scheme = fit_bins(vecs)
    table = metrics.characterize(vecs, types, subs, scheme, seed=3, window=None)
    assert set(table) <= set(metrics.ROW_ORDER)
    assert "Style" in table and "Background" in table
    for row in table.values():
        assert set(row) == set(metrics.CLUSTER_GROUPS)
        for cell in row.values():
            assert 0.0 < cell.purity <= 1.0
            assert cell.k_effective >= 1
            assert cell.n > 0


def test_characterize_window_takes_trailing_samples():
    vecs, types, subs = _style_population(12)
    # Make the head of the sequence poisonous: a distinct type that must not
    # appear when only the trailing window is characterized.
    head = [vecs[0]] * 8
    table = metrics.characterize(
        head + vecs, ["Pen"] * 8 + types, ["x"] * 8 + subs, fit_bins(vecs),
        seed=3, window=len(vecs),
    )
    assert "Pen" not in table


def test_characterize_category_to_row_mapping():
    assert metrics.CATEGORY_ROW["Writer"] == "Style"
    assert metrics.CATEGORY_ROW["Letter/Style"] == "Style"
    assert metrics.CATEGORY_ROW["None"] == "No Novelty"
    assert tuple(metrics.ROW_ORDER) == ("Style", "Background", "Pen", "No Novelty")


def test_summarize_group_exact_values_and_column_order():
    rows = [
        {
            "decision": True, "is_novel": True,
            "ranking_truth": "novel", "ranked": ["novel", "w0", "w1"],
            "truth_transcript": "ab", "predicted_transcript": "ab",
        },
        {
            "decision": False, "is_novel": False,
            "ranking_truth": "w0", "ranked": ["w0", "w1", "novel"],
            "truth_transcript": "cd", "predicted_transcript": "cc",
        },
        {
            "decision": True, "is_novel": False,
            "ranking_truth": "w1", "ranked": ["w0", "novel", "w2"],
            "truth_transcript": None, "predicted_transcript": None,
        },
    ]
    out = metrics.summarize_group(rows)
    assert list(out) == list(metrics.REPORT_COLUMNS)
    assert out["Novelty Detection Acc."] == pytest.approx(2 / 3)
    assert out["Mean Char. Acc."] == pytest.approx((1.0 + 0.5) / 2)
    assert out["Writer ID Acc."] == pytest.approx(2 / 3)


def test_summarize_group_without_transcripts_reports_none():
    rows = [
        {
            "decision": False, "is_novel": False,
            "ranking_truth": "w0", "ranked": ["w0"],
            "truth_transcript": None, "predicted_transcript": None,
        }
    ]
    out = metrics.summarize_group(rows)
    assert out["Mean Char. Acc."] is None
    assert out["Novelty Detection Acc."] == 1.0
