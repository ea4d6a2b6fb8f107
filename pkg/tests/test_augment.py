from collections import Counter
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from sada.augment import (
    CATALOG,
    GEOMETRIC,
    AugDraw,
    AugOp,
    MagnitudeSpec,
    apply_op,
    draw_for_sample,
    draw_rng,
    flip_crop,
    magnitude_of,
    sample_op,
)
from sada.errors import DimensionError

from conftest import structured_image

# ops whose strength-0 output must match the input bit for bit
BIT_EXACT_AT_ZERO = (AugOp.IDENTITY, AugOp.ROTATE, AugOp.SHEAR_X, AugOp.SHEAR_Y,
                     AugOp.TRANSLATE_X, AugOp.TRANSLATE_Y, AugOp.POSTERIZE, AugOp.SOLARIZE)


def test_catalog_has_fourteen_ops():
    assert len(CATALOG) == 14
    assert len(set(CATALOG)) == 14


def test_singleton_space():
    rng = np.random.default_rng(0)
    assert {sample_op(rng, (AugOp.IDENTITY,)) for _ in range(50)} == {AugOp.IDENTITY}


def test_sample_op_deterministic():
    a = [sample_op(np.random.default_rng(7)) for _ in range(3)]
    r1, r2 = np.random.default_rng(7), np.random.default_rng(7)
    assert [sample_op(r1) for _ in range(100)] == [sample_op(r2) for _ in range(100)]
    assert len(set(a)) == 1


def test_sample_op_uniform():
    rng = np.random.default_rng(2024)
    counts = Counter(sample_op(rng) for _ in range(14_000))
    assert set(counts) == set(CATALOG)
    assert all(800 <= c <= 1200 for c in counts.values()), counts


def test_magnitude_endpoints():
    spec = MagnitudeSpec()
    for op in CATALOG:
        r = spec.ranges[op]
        expected = int(r.neutral) if op is AugOp.POSTERIZE else r.neutral
        assert magnitude_of(op, 0.0, spec) == expected
    assert magnitude_of(AugOp.ROTATE, 1.0, spec) == 30.0
    assert magnitude_of(AugOp.TRANSLATE_X, 0.5, spec) == pytest.approx(0.15)
    assert magnitude_of(AugOp.POSTERIZE, 1.0, spec) == 4
    assert magnitude_of(AugOp.SOLARIZE, 1.0, spec) == 0.0


def test_magnitude_respects_cap():
    spec = MagnitudeSpec(m_max=0.5)
    assert magnitude_of(AugOp.ROTATE, 1.0, spec) == pytest.approx(15.0)


def test_translate_half_strength_moves_015_width():
    w = 20
    img = structured_image(8, w, 1)
    out = apply_op(img, AugDraw(AugOp.TRANSLATE_X, 0.5, 1), MagnitudeSpec())
    shift = round(0.15 * w)
    assert np.array_equal(out[:, shift:], img[:, :-shift])
    assert np.all(out[:, :shift] == 128)


def test_identity_any_strength(rng):
    img = rng.integers(0, 256, size=(10, 9, 3), dtype=np.uint8)
    for s in (0.0, 0.3, 1.0):
        assert np.array_equal(apply_op(img, AugDraw(AugOp.IDENTITY, s)), img)


@pytest.mark.parametrize("op", CATALOG)
def test_strength_zero_is_neutral(op, rng):
    img = rng.integers(0, 256, size=(11, 13, 3), dtype=np.uint8)
    out = apply_op(img, AugDraw(op, 0.0, -1, seed=5))
    diff = np.abs(out.astype(int) - img.astype(int)).max()
    if op in BIT_EXACT_AT_ZERO:
        assert diff == 0
    else:
        assert diff <= 1


def test_rotate_zero_exact():
    img = structured_image()
    assert np.array_equal(apply_op(img, AugDraw(AugOp.ROTATE, 0.0, 1)), img)


def test_posterize_eight_bits_exact(rng):
    img = rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
    # strengths below 1/8 round to the full 8 bits
    draw = AugDraw(AugOp.POSTERIZE, 0.1)
    assert magnitude_of(AugOp.POSTERIZE, 0.1) == 8
    assert np.array_equal(apply_op(img, draw), img)


def test_posterize_four_bits(rng):
    img = rng.integers(0, 256, size=(6, 6, 1), dtype=np.uint8)
    out = apply_op(img, AugDraw(AugOp.POSTERIZE, 1.0))
    assert np.array_equal(out, img & 0xF0)


def test_solarize_threshold_zero_inverts(rng):
    img = rng.integers(0, 256, size=(7, 5, 3), dtype=np.uint8)
    out = apply_op(img, AugDraw(AugOp.SOLARIZE, 1.0))
    assert np.array_equal(out, 255 - img)


def test_brightness_sign():
    img = np.full((4, 4, 1), 100, dtype=np.uint8)
    up = apply_op(img, AugDraw(AugOp.BRIGHTNESS, 1.0, 1))
    down = apply_op(img, AugDraw(AugOp.BRIGHTNESS, 1.0, -1))
    assert np.all(up == 190) and np.all(down == 10)


def test_contrast_blends_toward_gray_mean():
    img = np.array([[[0], [200]]], dtype=np.uint8)
    out = apply_op(img, AugDraw(AugOp.CONTRAST, 1.0, -1))
    # factor 0.1 toward mean 100
    assert out[..., 0].tolist() == [[90, 110]]


def test_color_single_channel_is_noop(rng):
    img = rng.integers(0, 256, size=(5, 5, 1), dtype=np.uint8)
    assert np.array_equal(apply_op(img, AugDraw(AugOp.COLOR, 1.0, 1)), img)


def test_gated_ops_fire_with_strength_probability():
    img = structured_image(8, 8, 1) // 2
    fired = 0
    for seed in range(2000):
        out = apply_op(img, AugDraw(AugOp.AUTO_CONTRAST, 0.3, 1, seed))
        fired += not np.array_equal(out, img)
    assert 0.25 < fired / 2000 < 0.35
    full = apply_op(img, AugDraw(AugOp.AUTO_CONTRAST, 1.0, 1, 0))
    assert full.min() == 0 and full.max() == 255


def test_equalize_spreads_histogram():
    img = (structured_image(16, 16, 1) // 4).astype(np.uint8)
    out = apply_op(img, AugDraw(AugOp.EQUALIZE, 1.0, 1, 0))
    assert out.max() > img.max()


@pytest.mark.parametrize("op", GEOMETRIC)
def test_geometric_disturbance_monotone(op):
    img = structured_image()
    prev = -1.0
    for s in (0.0, 0.25, 0.5, 0.75, 1.0):
        for sign in (1, -1):
            out = apply_op(img, AugDraw(op, s, sign))
            mad = np.abs(out.astype(int) - img.astype(int)).mean()
            if sign == 1:
                assert mad >= prev
                cur = mad
        prev = cur


@pytest.mark.parametrize("op", CATALOG)
@pytest.mark.parametrize("channels", [1, 3])
def test_shape_and_range(op, channels, rng):
    img = rng.integers(0, 256, size=(9, 14, channels), dtype=np.uint8)
    for s in (0.0, 0.4, 1.0):
        for sign in (1, -1):
            out = apply_op(img, AugDraw(op, s, sign, 3))
            assert out.shape == img.shape and out.dtype == np.uint8


def test_input_not_mutated(rng):
    img = rng.integers(0, 256, size=(9, 9, 3), dtype=np.uint8)
    before = img.copy()
    for op in CATALOG:
        apply_op(img, AugDraw(op, 1.0, -1, 1))
    assert np.array_equal(img, before)


def test_purity_across_threads(rng):
    img = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    draws = [draw_for_sample(i, 3, 0.7, 99) for i in range(60)]
    serial = [apply_op(img, d) for d in draws]
    with ThreadPoolExecutor(4) as pool:
        parallel = list(pool.map(lambda d: apply_op(img, d), draws))
    assert all(np.array_equal(a, b) for a, b in zip(serial, parallel))


def test_zero_sized_image():
    with pytest.raises(DimensionError):
        apply_op(np.zeros((0, 4, 1), dtype=np.uint8), AugDraw(AugOp.ROTATE, 0.5))
    with pytest.raises(DimensionError):
        apply_op(np.zeros((4, 4, 2), dtype=np.uint8), AugDraw(AugOp.ROTATE, 0.5))


def test_draw_for_sample_deterministic_and_passthrough():
    assert draw_for_sample(4, 2, 0.37, 11) == draw_for_sample(4, 2, 0.37, 11)
    assert draw_for_sample(4, 2, 0.37, 11).strength == 0.37
    ops = {draw_for_sample(4, e, 0.5, 11).op for e in range(40)}
    assert len(ops) > 1


def test_draw_respects_restricted_space():
    spec = MagnitudeSpec(ops=(AugOp.ROTATE, AugOp.BRIGHTNESS))
    assert {draw_for_sample(i, 0, 0.5, 1, spec).op for i in range(50)} == set(spec.ops)


def test_draw_validation():
    with pytest.raises(ValueError):
        AugDraw(AugOp.ROTATE, 1.5)
    with pytest.raises(ValueError):
        AugDraw(AugOp.ROTATE, 0.5, sign=0)


def test_flip_crop_shape_and_determinism():
    img = structured_image(12, 12, 3)
    a = flip_crop(img, draw_rng(1, 2, 3, 2))
    b = flip_crop(img, draw_rng(1, 2, 3, 2))
    assert a.shape == img.shape and np.array_equal(a, b)
