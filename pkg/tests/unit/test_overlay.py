"""
Tests for saliency overlays and mismatch-map export.
"""

import numpy as np
import pytest
from PIL import Image

from src.core.volume_io import case_from_arrays, read_volume_bundle
from src.interpret.overlay import (
    MISMATCH_NAME,
    SALIENCY_NAME,
    blend_overlay,
    default_slice,
    export_mismatch_map,
    export_overlay,
    mismatch_map,
    normalize_slice,
)
from src.models.network import build_network
from src.utils.errors import ConfigError, MissingSequence, ShapeError


@pytest.fixture
def saliency():
    values = np.zeros((16, 16, 16), dtype=np.float32)
    values[6:10, 6:10, 6:10] = 1.0
    return values


class TestBlend:
    """Test suite for normalize_slice and blend_overlay."""

    def test_constant_slice(self):
        """Test a constant slice normalizes to zeros."""
        assert not normalize_slice(np.full((4, 4), 3.0)).any()

    def test_zero_alpha_is_grayscale(self):
        """Test alpha 0 renders the anatomy alone."""
        anatomy = np.random.default_rng(0).normal(size=(8, 8))

        rgb = blend_overlay(anatomy, np.ones((8, 8)), alpha=0.0)

        assert rgb.dtype == np.uint8 and rgb.shape == (8, 8, 3)
        assert (rgb[..., 0] == rgb[..., 1]).all() and (rgb[..., 1] == rgb[..., 2]).all()

    def test_zero_saliency_is_grayscale(self):
        """Test zero saliency leaves every pixel gray at any alpha."""
        anatomy = np.linspace(0, 1, 64).reshape(8, 8)

        rgb = blend_overlay(anatomy, np.zeros((8, 8)), alpha=1.0)

        assert (rgb[..., 0] == rgb[..., 2]).all()

    def test_full_saliency_takes_colormap(self):
        """Test saliency 1 with alpha 1 shows the colormap's top color."""
        rgb = blend_overlay(np.zeros((2, 2)), np.ones((2, 2)), alpha=1.0, colormap="gray")

        assert (rgb == 255).all()


class TestExportOverlay:
    """Test suite for export_overlay."""

    def test_png_and_bundle(self, random_case, saliency, tmp_path):
        """Test the PNG has the slice size and the saliency bundle reloads."""
        out = export_overlay(saliency, random_case, "FLAIR", 8, tmp_path / "case" / "overlay.png")

        with Image.open(out) as image:
            assert image.size == (16, 16)
            assert image.mode == "RGB"
        volume = read_volume_bundle(tmp_path / "case" / SALIENCY_NAME, SALIENCY_NAME)
        np.testing.assert_array_equal(volume.voxels, saliency)

    def test_default_slice_follows_tumor(self, random_case, saliency):
        """Test the default slice is the first with the most tumor voxels."""
        assert default_slice(random_case, saliency) == 5

    def test_default_slice_without_mask(self, random_case, saliency):
        """Test an unmasked case falls back to the most salient slice."""
        bare = case_from_arrays("bare", random_case.stack(), idh_label=1)

        assert default_slice(bare, saliency) == 6

    def test_slice_out_of_range(self, random_case, saliency, tmp_path):
        """Test a slice index past the depth raises IndexError."""
        with pytest.raises(IndexError):
            export_overlay(saliency, random_case, "T1", 16, tmp_path / "o.png")

    def test_saliency_shape_mismatch(self, random_case, tmp_path):
        """Test saliency of another shape raises ShapeError."""
        with pytest.raises(ShapeError):
            export_overlay(np.zeros((8, 8, 8)), random_case, "T1", 0, tmp_path / "o.png")

    def test_unknown_sequence(self, random_case, saliency, tmp_path):
        """Test a sequence outside the four raises MissingSequence."""
        with pytest.raises(MissingSequence):
            export_overlay(saliency, random_case, "DWI", 0, tmp_path / "o.png")


class TestMismatchMap:
    """Test suite for mismatch_map and export_mismatch_map."""

    def test_map_on_input_grid(self, tiny_arch, random_case, tmp_path):
        """Test the attention map is upsampled to the case grid and written."""
        model = build_network(tiny_arch, seed=0).train()

        attention = mismatch_map(model, random_case)
        path = export_mismatch_map(model, random_case, tmp_path)

        assert attention.shape == (16, 16, 16)
        assert np.isfinite(attention).all()
        assert model.training
        assert path.exists()
        reloaded = read_volume_bundle(tmp_path / MISMATCH_NAME, MISMATCH_NAME)
        np.testing.assert_allclose(reloaded.voxels, attention, atol=1e-6)

    def test_needs_cmd_stream(self, tiny_arch, random_case):
        """Test a TAFE-only network has no mismatch map."""
        model = build_network(tiny_arch.model_copy(update={"cmd_on": False}))

        with pytest.raises(ConfigError):
            mismatch_map(model, random_case)
