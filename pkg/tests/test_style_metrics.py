"""Style measurements on constructed images where the answer is computable
by hand (or by a brute-force oracle)."""

import math

import numpy as np
import pytest

from scriptdrift import style_metrics as sm
from scriptdrift import synth
from scriptdrift.seeding import derive_rng


def oracle_otsu(image):
    flat = image.ravel()
    n = flat.size
    best_t, best_v = 0, -1.0
    for t in range(256):
        low = flat[flat <= t]
        high = flat[flat > t]
        if low.size == 0 or high.size == 0:
            continue
        w0 = low.size / n
        w1 = high.size / n
        v = w0 * w1 * (low.mean() - high.mean()) ** 2
        if v > best_v + 1e-12:
            best_v, best_t = v, t
    return best_t


def test_otsu_matches_brute_force_on_random_images():
    rng = derive_rng(41, "otsu")
    for _ in range(200):
        shape = (int(rng.integers(4, 24)), int(rng.integers(4, 24)))
        if rng.uniform() < 0.5:
            image = rng.integers(0, 256, size=shape).astype(np.uint8)
        else:
            # Bimodal: the regime the measure actually faces.
            ink = rng.integers(10, 90)
            paper = rng.integers(150, 250)
            image = np.where(
                rng.uniform(size=shape) < 0.3, ink, paper
            ).astype(np.uint8)
        assert sm.otsu_threshold(image) == oracle_otsu(image)


def test_otsu_separates_clean_bimodal_image():
    image = np.full((20, 50), 230, dtype=np.uint8)
    image[5:15, 10:40] = 40
    t = sm.otsu_threshold(image)
    assert 40 <= t < 230
    mask = sm.foreground_mask(image)
    assert mask.sum() == 10 * 30
    assert mask[6, 11] and not mask[0, 0]


def test_otsu_constant_images_degrade_predictably():
    assert sm.otsu_threshold(np.zeros((8, 8), dtype=np.uint8)) == 0
    assert sm.foreground_mask(np.zeros((8, 8), dtype=np.uint8)).all()
    assert sm.otsu_threshold(np.full((8, 8), 255, dtype=np.uint8)) == 0
    assert not sm.foreground_mask(np.full((8, 8), 255, dtype=np.uint8)).any()


def test_pen_pressure_is_exact_foreground_mean():
    image = np.full((40, 200), 255, dtype=np.uint8)
    image[10:20, 20:70] = 30
    image[10:20, 70:120] = 50
    assert sm.pen_pressure(image) == 40.0


def test_pen_pressure_requires_ink():
    with pytest.raises(sm.NoInkError):
        sm.pen_pressure(np.full((10, 10), 255, dtype=np.uint8))


def test_pen_pressure_ignores_background_changes():
    rng = derive_rng(41, "pp-bg")
    image = np.full((30, 100), 240, dtype=np.uint8)
    image[10:20, 10:90] = 35
    base = sm.pen_pressure(image)
    noisy = image.copy()
    bg = noisy > 100
    noisy[bg] = rng.integers(150, 256, size=int(bg.sum()))
    assert sm.pen_pressure(noisy) == base == 35.0


def test_shear_row_shifts_antisymmetric_and_anchored():
    for angle in sm.SLANT_ANGLES:
        shifts = sm.shear_row_shifts(float(angle), 64)
        assert shifts[-1] == 0
        assert np.array_equal(sm.shear_row_shifts(float(-angle), 64), -shifts)
    assert np.array_equal(sm.shear_row_shifts(0.0, 64), np.zeros(64, dtype=int))


def test_slant_angle_recovers_rendered_shear():
    for angle in (-45, -15, 0, 20, 45):
        image = synth.render_line(
            words=(4, 3), bar_width=3, letter_gap=5, word_gap=18,
            height=64, margin=70, ink=40, slant_deg=float(angle),
        )
        assert sm.slant_angle(sm.foreground_mask(image)) == angle


def test_slant_angle_returns_candidate_set_member():
    rng = derive_rng(41, "slant-member")
    for _ in range(20):
        mask = rng.uniform(size=(32, 80)) < 0.2
        if not mask.any():
            mask[5, 5] = True
        assert sm.slant_angle(mask) in sm.SLANT_ANGLES


def test_character_size_hand_case():
    # Nine ink-bearing columns with counts [5]*5 + [1] + [5]*3 and one empty
    # column. The 30% nearest-rank cut over sorted [1,5,...] is 5, so the
    # count-1 column and the empty column are both spaces; written columns
    # all carry 5.
    mask = np.zeros((8, 10), dtype=bool)
    for col in range(5):
        mask[0:5, col] = True
    mask[0:1, 5] = True
    for col in range(7, 10):
        mask[0:5, col] = True
    assert sm.character_size(mask) == 5.0


def test_word_spacing_hand_case():
    mask = np.zeros((10, 15), dtype=bool)
    mask[2:8, 0:5] = True
    mask[2:8, 10:15] = True
    # One interior gap of width 5 >= max(0.5 * 6, 3).
    assert sm.word_spacing(mask) == 5.0


def test_word_spacing_ignores_letter_gaps():
    mask = np.zeros((10, 12), dtype=bool)
    mask[2:8, 0:4] = True
    mask[2:8, 6:10] = True
    # Gap of 2 < 3px floor: letter spacing, not a word gap.
    assert sm.word_spacing(mask) == 0.0


def test_spacing_measures_reject_blank_masks():
    with pytest.raises(sm.NoInkError):
        sm.character_size(np.zeros((5, 5), dtype=bool))
    with pytest.raises(sm.NoInkError):
        sm.word_spacing(np.zeros((5, 5), dtype=bool))


def test_region_entropy_boundary_values():
    flat = np.full((16, 16), 200, dtype=np.uint8)
    two = np.zeros((16, 16), dtype=np.uint8)
    two[:, 8:] = 200
    all256 = np.arange(256, dtype=np.uint8).reshape(16, 16)
    none = np.zeros((16, 16), dtype=bool)
    assert sm.region_entropy(flat, none, region="background") == 0.0
    assert sm.region_entropy(two, none, region="background") == 1.0
    assert sm.region_entropy(all256, none, region="background") == 8.0


def test_region_entropy_never_returns_negative_zero():
    value = sm.region_entropy(
        np.full((4, 4), 9, dtype=np.uint8), np.zeros((4, 4), dtype=bool)
    )
    assert value == 0.0
    assert math.copysign(1.0, value) == 1.0


def test_region_entropy_foreground_background_split():
    image = np.full((10, 10), 220, dtype=np.uint8)
    image[0:5] = 30
    mask = np.zeros((10, 10), dtype=bool)
    mask[0:5] = True
    assert sm.region_entropy(image, mask, region="foreground") == 0.0
    assert sm.region_entropy(image, mask, region="background") == 0.0
    with pytest.raises(ValueError):
        sm.region_entropy(image, mask, region="margins")
    with pytest.raises(ValueError):
        sm.region_entropy(image, np.ones((10, 10), dtype=bool), region="background")


def test_style_vector_field_names_and_round_trip():
    image = synth.render_line()
    vec = sm.style_vector(image)
    payload = vec.to_dict()
    assert tuple(payload) == sm.MEASUREMENT_NAMES
    assert sm.StyleVector.from_dict(payload) == vec
    binned = vec.as_array()
    assert binned.shape == (len(sm.STYLE_ATTRIBUTES),)
    assert binned[0] == vec.pen_pressure
    full = vec.as_array(names=sm.MEASUREMENT_NAMES)
    assert full.shape == (6,)
    assert full[-1] == vec.pen_entropy


def test_style_vector_rejects_blank_page():
    with pytest.raises(sm.NoInkError):
        sm.style_vector(np.full((20, 60), 255, dtype=np.uint8))


def test_render_line_basic_contract():
    image = synth.render_line(ink=55, background=250)
    assert image.dtype == np.uint8
    assert (image == 55).any() and (image == 250).any()
    assert set(np.unique(image)) == {55, 250}


def test_render_line_rejects_overflowing_shear():
    with pytest.raises(ValueError):
        synth.render_line(height=64, margin=8, slant_deg=45.0)
