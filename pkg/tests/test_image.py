import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pda.image import (
    AugmentSpec,
    Image,
    Patch,
    Rect,
    apply_augmentation,
    extract_patch,
    hflip,
    replace_region,
    resize_bilinear,
    rotate,
    vflip,
    zoom_crop,
)

small_grids = st.integers(min_value=1, max_value=8)


@st.composite
def images(draw, channels=st.sampled_from([1, 3])):
    h = draw(small_grids)
    w = draw(small_grids)
    c = draw(channels)
    flat = draw(
        st.lists(
            st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
            min_size=h * w * c,
            max_size=h * w * c,
        )
    )
    return Image(np.array(flat).reshape(h, w, c))


class TestImageType:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Image(np.array([[1.5]]))
        with pytest.raises(ValueError):
            Image(np.array([[-0.1]]))

    def test_rejects_bad_channel_count(self):
        with pytest.raises(ValueError):
            Image(np.zeros((2, 2, 2)))

    def test_gray_promotes_to_rgb(self):
        img = Image(np.array([[0.25]]))
        assert img.to_rgb().pixels.shape == (1, 1, 3)
        assert np.all(img.to_rgb().pixels == 0.25)


class TestResize:
    def test_identity_dimensions(self, rng):
        img = Image(rng.random((5, 7, 3)))
        out = resize_bilinear(img, 7, 5)
        assert np.array_equal(out.pixels, img.pixels)

    def test_constant_stays_constant(self):
        img = Image(np.full((3, 4, 1), 0.37))
        out = resize_bilinear(img, 9, 6)
        assert np.allclose(out.pixels, 0.37)

    def test_midpoint_under_corner_alignment(self):
        img = Image(np.array([[0.0, 1.0]]))
        out = resize_bilinear(img, 3, 1)
        assert np.allclose(out.pixels.reshape(-1), [0.0, 0.5, 1.0])

    @given(images(), small_grids, small_grids)
    @settings(max_examples=40, deadline=None)
    def test_output_within_input_range(self, img, out_w, out_h):
        out = resize_bilinear(img, out_w, out_h)
        assert out.pixels.min() >= img.pixels.min() - 1e-12
        assert out.pixels.max() <= img.pixels.max() + 1e-12


class TestRotateAndFlips:
    def test_rotate_zero_is_identity(self, rng):
        img = Image(rng.random((6, 5, 3)))
        assert np.array_equal(rotate(img, 0.0).pixels, img.pixels)

    def test_hflip_is_involution(self, rng):
        img = Image(rng.random((4, 6, 1)))
        assert hflip(hflip(img)) == img

    def test_vflip_is_involution(self, rng):
        img = Image(rng.random((4, 6, 3)))
        assert vflip(vflip(img)) == img

    def test_rotate_border_uses_edge_values(self):
        # A constant image stays constant under any rotation because the
        # border fill replicates edge pixels.
        img = Image(np.full((5, 5, 1), 0.6))
        out = rotate(img, 33.0)
        assert np.allclose(out.pixels, 0.6)

    @given(images(), st.booleans(), st.booleans(), st.integers(0, 2**31))
    @settings(max_examples=40, deadline=None)
    def test_flip_only_augmentation_preserves_multiset(self, img, use_h, use_v, seed):
        spec = AugmentSpec(hflip=use_h, vflip=use_v)
        out = apply_augmentation(img, spec, seed)
        assert np.array_equal(np.sort(out.pixels, axis=None), np.sort(img.pixels, axis=None))


class TestZoomCrop:
    def test_ratio_point_eight_on_square(self):
        # 100x100 -> centered 80x80 region, resized back to 100x100.
        rng = np.random.default_rng(0)
        img = Image(rng.random((100, 100, 1)))
        out = zoom_crop(img, 0.8)
        expected = resize_bilinear(Image(img.pixels[10:90, 10:90]), 100, 100)
        assert out.pixels.shape == (100, 100, 1)
        assert np.array_equal(out.pixels, expected.pixels)

    def test_ratio_one_is_identity(self, rng):
        img = Image(rng.random((7, 7, 1)))
        assert zoom_crop(img, 1.0) == img

    def test_bad_ratio_rejected(self, rng):
        img = Image(rng.random((4, 4, 1)))
        for ratio in (0.0, -0.5, 1.5):
            with pytest.raises(ValueError):
                zoom_crop(img, ratio)


class TestAugmentationDeterminism:
    def test_same_seed_same_output(self, rng):
        img = Image(rng.random((12, 12, 3)))
        spec = AugmentSpec.full()
        assert apply_augmentation(img, spec, 99) == apply_augmentation(img, spec, 99)

    def test_different_seeds_usually_differ(self, rng):
        img = Image(rng.random((12, 12, 3)))
        spec = AugmentSpec.full()
        outs = [apply_augmentation(img, spec, s).pixels for s in range(4)]
        assert any(not np.array_equal(outs[0], o) for o in outs[1:])


class TestExtractPatch:
    def test_full_image_rect(self, rng):
        img = Image(rng.random((4, 4, 3)))
        patch = extract_patch(img, Rect(0, 0, 4, 4))
        assert np.array_equal(patch.values, img.flat())
        assert patch.to_image() == img

    def test_single_pixel_corner(self):
        img = Image(np.arange(12).reshape(2, 2, 3) / 12.0)
        patch = extract_patch(img, Rect(0, 0, 1, 1))
        assert np.array_equal(patch.values, img.pixels[0, 0])

    def test_inner_window_of_numbered_grid(self):
        # 3x3 pixels numbered 1..9 (scaled); 2x2 window at (1,1) reads 5,6,8,9.
        img = Image(np.arange(1, 10).reshape(3, 3, 1) / 9.0)
        patch = extract_patch(img, Rect(1, 1, 2, 2))
        assert np.allclose(patch.values * 9.0, [5, 6, 8, 9])

    def test_out_of_bounds_rejected(self, rng):
        img = Image(rng.random((3, 3, 1)))
        with pytest.raises(ValueError):
            extract_patch(img, Rect(2, 2, 2, 2))

    def test_non_square_rejected(self, rng):
        img = Image(rng.random((3, 3, 1)))
        with pytest.raises(ValueError):
            extract_patch(img, Rect(0, 0, 2, 1))


class TestReplaceRegion:
    def test_roundtrip_with_extract(self, rng):
        img = Image(rng.random((5, 5, 1)))
        rect = Rect(1, 2, 3, 3)
        patch = extract_patch(img, rect)
        assert replace_region(img, rect, patch.values) == img

    def test_patch_length_validation(self):
        with pytest.raises(ValueError):
            Patch(edge=2, channels=1, values=np.zeros(3))
