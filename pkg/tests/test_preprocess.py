import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from hsvseg.datamodel import Frame
from hsvseg.preprocess import (ReferenceFrame, binarize_mask, subtract_reference,
                               to_grayscale)


def test_to_grayscale_single_channel_passthrough():
    raw = np.array([[0, 128, 255]], dtype=np.uint8)
    frame = to_grayscale(raw)
    assert np.allclose(frame.pixels, [[0.0, 128 / 255, 1.0]])


def test_to_grayscale_constant_rgb_keeps_value():
    raw = np.full((2, 2, 3), 100, dtype=np.uint8)
    frame = to_grayscale(raw)
    assert np.allclose(frame.pixels, 100 / 255, atol=1e-6)


def test_to_grayscale_red_weight():
    # 8-bit pure red: luminance weight 0.299
    raw = np.zeros((1, 1, 3), dtype=np.uint8)
    raw[0, 0, 0] = 255
    frame = to_grayscale(raw)
    assert frame.pixels[0, 0] == pytest.approx(0.299, abs=1e-7)


def test_to_grayscale_sixteen_bit_scaling():
    raw = np.array([[0, 65535]], dtype=np.uint16)
    assert np.allclose(to_grayscale(raw).pixels, [[0.0, 1.0]])


def test_to_grayscale_rejects_bad_channel_count():
    with pytest.raises(ValueError):
        to_grayscale(np.zeros((4, 4, 2)))
    with pytest.raises(ValueError):
        to_grayscale(np.zeros((4, 4, 4)))


def test_subtract_reference_equal_inputs_give_zero():
    frame = Frame(np.full((3, 3), 0.4))
    ref = ReferenceFrame(np.full((3, 3), 0.4))
    assert not subtract_reference(frame, ref).pixels.any()


def test_subtract_reference_stretch_hand_case():
    # frame = ref + 0.2 everywhere except one pixel at +0.4
    ref = ReferenceFrame(np.full((2, 2), 0.1, dtype=np.float32))
    pixels = np.full((2, 2), 0.3, dtype=np.float32)
    pixels[1, 1] = 0.5
    out = subtract_reference(Frame(pixels), ref)
    expected = np.zeros((2, 2), dtype=np.float32)
    expected[1, 1] = 1.0
    assert np.array_equal(out.pixels, expected)


def test_subtract_reference_zero_reference_is_minmax_stretch():
    pixels = np.array([[0.2, 0.4], [0.6, 0.8]], dtype=np.float64)
    out = subtract_reference(Frame(pixels), ReferenceFrame(np.zeros((2, 2))))
    stretched = (pixels - 0.2) / 0.6
    assert np.allclose(out.pixels, stretched, atol=1e-7)


def test_subtract_reference_dimension_mismatch():
    with pytest.raises(ValueError):
        subtract_reference(Frame(np.zeros((2, 2))), ReferenceFrame(np.zeros((3, 3))))


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, (4, 5), elements=st.floats(0, 1)),
       hnp.arrays(np.float64, (4, 5), elements=st.floats(0, 1)))
def test_subtract_reference_output_in_unit_interval(frame_px, ref_px):
    out = subtract_reference(Frame(frame_px), ReferenceFrame(ref_px))
    assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.int64, (4, 4), elements=st.integers(20, 44)),
       st.integers(0, 16))
def test_subtract_reference_shift_invariant_when_not_clipping(frame_64ths, shift_64ths):
    # dyadic values keep the float arithmetic exact; frame >= reference
    # everywhere, so clipping never fires
    frame_px = frame_64ths / 64.0
    shift = shift_64ths / 64.0
    ref = np.full((4, 4), 0.25)
    base = subtract_reference(Frame(frame_px), ReferenceFrame(ref))
    shifted = subtract_reference(Frame(frame_px + shift), ReferenceFrame(ref + shift))
    assert np.array_equal(base.pixels, shifted.pixels)


def test_binarize_examples():
    assert not binarize_mask(np.zeros((3, 3))).labels.any()
    assert binarize_mask(np.full((3, 3), 255)).labels.all()
    out = binarize_mask(np.array([[0, 1, 127, 255]]))
    assert out.labels.tolist() == [[0, 1, 1, 1]]


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.int32, (5, 5), elements=st.integers(-5, 255)))
def test_binarize_is_idempotent(raw):
    once = binarize_mask(raw)
    twice = binarize_mask(once.labels)
    assert np.array_equal(once.labels, twice.labels)
