import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from oracles import lbp_uniform_oracle, lbp_vq_cell_oracle
from texdesc.dataset import ImagePlane, ImageRgb
from texdesc.descriptors import (DescriptorSet, build_lm_bank, build_mr8_bank, dense_sift, extract,
                                 filter_responses, lbp_uniform, lbp_vq_descriptors, needs_rgb,
                                 raw_patches, read_descriptors, single_kernel_bank,
                                 write_descriptors)
from texdesc.errors import FormatError


def _smooth_image(rng, size=64, sigma=2.0):
    img = gaussian_filter(rng.random((size, size)), sigma)
    img = (img - img.min()) / (img.max() - img.min())
    return img


class TestDenseSift:
    def test_constant_image_gives_zero_descriptors(self):
        ds = dense_sift(ImagePlane(np.full((64, 64), 0.4)))
        assert len(ds) > 0 and ds.dim == 128
        assert np.all(ds.descriptors == 0.0)

    def test_vertical_edge_uses_horizontal_gradient_bins(self):
        img = np.full((64, 64), 0.2)
        img[:, 32:] = 0.8
        ds = dense_sift(ImagePlane(img), n_scales=1)
        energy = ds.descriptors.reshape(len(ds), 16, 8)
        straddling = np.abs(ds.locations[:, 0] - 31.5) < 12
        assert straddling.any()
        assert np.all(energy[straddling][:, :, 0].sum(axis=1) > 0)
        # gradient points along +x: no energy outside the 0-radian bin
        np.testing.assert_array_equal(energy[straddling][:, :, 1:], 0.0)

    def test_window_count_single_scale(self):
        ds = dense_sift(ImagePlane(np.random.default_rng(0).random((64, 64))), step=2,
                        bin_size=6, n_scales=1)
        positions = [x for x in range(0, 64, 2) if x + 24 <= 64]
        assert len(ds) == len(positions) ** 2

    def test_brightness_shift_invariance(self, rng):
        img = 0.6 * _smooth_image(rng)
        a = dense_sift(ImagePlane(img)).descriptors
        b = dense_sift(ImagePlane(img + 0.3)).descriptors
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_norms_are_zero_or_one(self, rng):
        img = _smooth_image(rng)
        img[:30, :30] = 0.5
        norms = np.linalg.norm(dense_sift(ImagePlane(img)).descriptors, axis=1)
        assert np.all((norms == 0) | (np.abs(norms - 1) < 1e-6))

    def test_too_small_is_flagged(self):
        ds = dense_sift(ImagePlane(np.zeros((10, 10))))
        assert len(ds) == 0 and "too_small" in ds.flags

    def test_scales_and_locations(self, rng):
        ds = dense_sift(ImagePlane(_smooth_image(rng)), n_scales=4)
        np.testing.assert_allclose(np.unique(ds.locations[:, 2]), 2.0 ** (np.arange(4) / 3))
        assert ds.locations[:, :2].min() >= 0 and ds.locations[:, :2].max() <= 63

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            dense_sift(ImagePlane(np.zeros((32, 32))), step=0)


class TestFilterBanks:
    def test_bank_sizes(self):
        lm = build_lm_bank()
        mr8 = build_mr8_bank()
        assert len(lm) == 48 and lm.response_dim == 48
        assert mr8.response_dim == 8 and len(mr8) == 38

    def test_zero_mean_kernels_ignore_constants(self):
        img = ImagePlane(np.full((60, 60), 0.7))
        for bank in (build_lm_bank(), build_mr8_bank()):
            resp = filter_responses(img, bank, step=7)
            assert "degenerate" in resp.flags
            zero = np.array([all(bank.zero_mean[m] for m in g) for g in bank.groups])
            np.testing.assert_allclose(resp.descriptors[:, zero], 0.0, atol=1e-12)

    def test_mr8_constant_only_gaussian_channel(self):
        resp = filter_responses(ImagePlane(np.full((60, 60), 0.7)), build_mr8_bank(), step=5)
        np.testing.assert_allclose(resp.descriptors[:, 6], 0.7, atol=1e-9)
        np.testing.assert_allclose(np.delete(resp.descriptors, 6, axis=1), 0.0, atol=1e-12)

    def test_impulse_response_is_flipped_kernel(self, rng):
        kernel = rng.normal(size=(5, 5))
        kernel -= kernel.mean()
        img = np.zeros((15, 15))
        img[7, 7] = 1.0
        resp = filter_responses(ImagePlane(img), single_kernel_bank(kernel))
        plane = resp.descriptors[:, 0].reshape(15, 15)
        # standardization scales the impulse by 1/std and the zero-mean
        # kernel cancels the constant background
        np.testing.assert_allclose(plane[5:10, 5:10] * img.std(), kernel[::-1, ::-1],
                                   atol=1e-12)

    def test_dimension_contract(self, rng):
        img = ImagePlane(_smooth_image(rng, 56))
        assert extract(img, "lm", step=8).dim == 48
        assert extract(img, "mr8", step=8).dim == 8

    def test_brightness_shift_invariance(self, rng):
        img = 0.5 * _smooth_image(rng, 56)
        bank = build_mr8_bank()
        a = filter_responses(ImagePlane(img), bank, step=4).descriptors
        b = filter_responses(ImagePlane(img + 0.4), bank, step=4).descriptors
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_mr8_rotation_by_orientation_multiple(self, rng):
        # a quarter turn is three 30-degree increments and maps the sampling grid onto itself
        img = _smooth_image(rng, 64)
        bank = build_mr8_bank()
        a = filter_responses(ImagePlane(img), bank).descriptors.reshape(64, 64, 8)
        b = filter_responses(ImagePlane(np.rot90(img)), bank).descriptors.reshape(64, 64, 8)
        np.testing.assert_allclose(np.rot90(a), b, atol=1e-9)

    def test_image_smaller_than_kernels(self):
        with pytest.raises(ValueError):
            filter_responses(ImagePlane(np.zeros((20, 20))), build_mr8_bank())


class TestRawPatches:
    def test_constant_image(self):
        ds = raw_patches(ImagePlane(np.full((6, 6), 0.3)), size=3)
        assert len(ds) == 16
        np.testing.assert_array_equal(ds.descriptors, 0.0)

    def test_hand_computed_patch(self):
        ds = raw_patches(ImagePlane(np.arange(9).reshape(3, 3) / 8.0), size=3)
        want = (np.arange(9) - 4.0) / np.sqrt(60.0)
        np.testing.assert_allclose(ds.descriptors, [want], atol=1e-12)

    def test_dimensions(self, rng):
        assert raw_patches(ImagePlane(rng.random((10, 10))), size=7).dim == 49
        rgb = raw_patches(ImageRgb(rng.random((10, 10, 3))), size=3)
        assert rgb.dim == 27 and rgb.kind == "patch3rgb"

    def test_bad_size(self, rng):
        with pytest.raises(ValueError):
            raw_patches(ImagePlane(rng.random((10, 10))), size=5)


class TestLbp:
    def test_constant_image_one_hot(self):
        h = lbp_uniform(ImagePlane(np.full((12, 12), 0.5)), radii=(1,)).bins
        # every neighbour ties with the centre: all bits set, bin p = 8
        np.testing.assert_array_equal(h, np.eye(10)[8])

    def test_histogram_length(self, rng):
        h = lbp_uniform(ImagePlane(rng.random((12, 12))), radii=[1, 2, 3])
        assert h.bins.shape == (30,)
        assert h.bins.sum() == pytest.approx(1.0)

    def test_bright_centre_pixel_matches_enumeration(self):
        img = np.zeros((5, 5))
        img[2, 2] = 1.0
        for radii in ((1,), (2,), (1, 2)):
            np.testing.assert_allclose(lbp_uniform(ImagePlane(img), radii=radii).bins,
                                       lbp_uniform_oracle(img, radii), atol=1e-15)

    def test_random_images_match_enumeration(self, rng):
        for _ in range(5):
            img = rng.integers(0, 3, (11, 9)) / 2.0
            np.testing.assert_allclose(lbp_uniform(ImagePlane(img)).bins,
                                       lbp_uniform_oracle(img), atol=1e-15)

    def test_power_of_two_scaling_invariance(self, rng):
        img = rng.random((14, 14))
        a = lbp_uniform(ImagePlane(img)).bins
        np.testing.assert_array_equal(a, lbp_uniform(ImagePlane(img * 0.25)).bins)

    def test_vq_shapes(self, rng):
        ds = lbp_vq_descriptors(ImagePlane(rng.random((16, 16))))
        assert ds.descriptors.shape == (4, 59)
        np.testing.assert_allclose(ds.descriptors.sum(axis=1), 1.0)

    def test_vq_constant_cells_identical_one_hot(self):
        ds = lbp_vq_descriptors(ImagePlane(np.full((16, 24), 0.3)))
        assert len(ds) == 6
        assert np.all(ds.descriptors.max(axis=1) == 1.0)
        assert np.all(ds.descriptors == ds.descriptors[0])

    def test_vq_checkerboard_matches_enumeration(self):
        yy, xx = np.mgrid[0:8, 0:8]
        board = ((yy + xx) % 2).astype(float)
        ds = lbp_vq_descriptors(ImagePlane(board))
        np.testing.assert_allclose(ds.descriptors, lbp_vq_cell_oracle(board), atol=1e-15)


class TestDescriptorSet:
    def test_file_round_trip(self, tmp_path, rng):
        ds = DescriptorSet(rng.random((7, 5)), rng.random((7, 3)), "patch3", {"x"})
        write_descriptors(ds, tmp_path / "d.desc")
        back = read_descriptors(tmp_path / "d.desc")
        assert back.kind == "patch3" and back.descriptors.shape == (7, 5)
        np.testing.assert_allclose(back.descriptors, ds.descriptors, rtol=1e-7)
        np.testing.assert_allclose(back.locations, ds.locations, rtol=1e-7)

    def test_truncated_file(self, tmp_path, rng):
        write_descriptors(DescriptorSet(rng.random((3, 2)), np.zeros((3, 3)), "k"),
                          tmp_path / "d.desc")
        data = (tmp_path / "d.desc").read_bytes()
        (tmp_path / "d.desc").write_bytes(data[:-4])
        with pytest.raises(FormatError):
            read_descriptors(tmp_path / "d.desc")

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            DescriptorSet(np.array([[np.inf]]), np.zeros((1, 3)), "k")

    def test_extract_dispatch(self, rng):
        img = ImagePlane(rng.random((24, 24)))
        assert extract(img, "patch7", step=3).kind == "patch7"
        assert extract(img, "lbpvq").dim == 59
        assert needs_rgb("patch3rgb") and not needs_rgb("sift")
        with pytest.raises(ValueError):
            extract(img, "hog")
