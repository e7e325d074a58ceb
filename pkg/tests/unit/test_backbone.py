"""
Tests for the encoder-decoder backbone.

Shape contracts are checked on the attention kind and the conv-residual
fallback; gradients are checked against central finite differences in
float64 on the 16^3, C=4 configuration.
"""

import pytest
import torch

from src.models.backbone import Backbone, FeaturePyramid, tumor_probability
from src.models.config import BackboneConfig
from src.training.losses import dice_loss
from src.utils.errors import ShapeError


def _pyramid_shapes(pyramid: FeaturePyramid):
    return [tuple(x.shape) for x in pyramid.stages]


class TestEncode:
    """Test suite for Backbone.encode."""

    def test_toy_pyramid_shapes(self, toy_backbone_config):
        """Test the C=8, 32^3 pyramid halves extents and doubles widths."""
        backbone = Backbone(toy_backbone_config).eval()

        with torch.no_grad():
            pyramid = backbone.encode(torch.randn(1, 4, 32, 32, 32))

        assert _pyramid_shapes(pyramid) == [
            (1, 8, 16, 16, 16),
            (1, 16, 8, 8, 8),
            (1, 32, 4, 4, 4),
            (1, 64, 2, 2, 2),
        ]

    @pytest.mark.parametrize(
        "embed_dim,heads,input_size",
        [
            (4, (1, 1, 2, 4), (16, 16, 16)),
            (8, (1, 2, 2, 4), (32, 16, 16)),
            (6, (1, 2, 3, 6), (16, 32, 16)),
        ],
    )
    @pytest.mark.parametrize("block_kind", ["shifted-window-attention", "conv-residual"])
    def test_shape_law(self, embed_dim, heads, input_size, block_kind):
        """Test the pyramid shape law holds for each config and block kind."""
        cfg = BackboneConfig(
            embed_dim=embed_dim, num_heads=heads, input_size=input_size, block_kind=block_kind
        )
        backbone = Backbone(cfg).eval()

        with torch.no_grad():
            pyramid, seg = backbone(torch.randn(2, 4, *input_size))

        expected = [(2, w) + s for w, s in zip(cfg.stage_channels, cfg.stage_sizes)]
        assert _pyramid_shapes(pyramid) == expected
        assert tuple(seg.logits.shape) == (2, 4) + input_size

    def test_zero_input_is_finite(self, tiny_backbone_config):
        """Test an all-zero batch gives finite features and logits."""
        backbone = Backbone(tiny_backbone_config).eval()

        with torch.no_grad():
            pyramid, seg = backbone(torch.zeros(1, 4, 16, 16, 16))

        assert all(torch.isfinite(x).all() for x in pyramid.stages)
        assert torch.isfinite(seg.logits).all()

    def test_large_input_is_finite(self, tiny_backbone_config):
        """Test inputs up to |v| = 10 stay finite."""
        backbone = Backbone(tiny_backbone_config).eval()
        x = torch.empty(2, 4, 16, 16, 16).uniform_(-10.0, 10.0)

        with torch.no_grad():
            pyramid, seg = backbone(x)

        assert torch.isfinite(pyramid[3]).all()
        assert torch.isfinite(seg.logits).all()

    def test_distinct_inputs_give_distinct_features(self, tiny_backbone_config):
        """Test the deepest stage is not a constant map."""
        backbone = Backbone(tiny_backbone_config).eval()

        with torch.no_grad():
            a = backbone.encode(torch.randn(1, 4, 16, 16, 16))[3]
            b = backbone.encode(torch.randn(1, 4, 16, 16, 16))[3]

        assert not torch.allclose(a, b)

    def test_deterministic(self, tiny_backbone_config):
        """Test two passes with the same parameters agree exactly."""
        backbone = Backbone(tiny_backbone_config).eval()
        x = torch.randn(1, 4, 16, 16, 16)

        with torch.no_grad():
            first = backbone.encode(x)[3]
            second = backbone.encode(x)[3]

        assert torch.equal(first, second)

    def test_wrong_dims_raise(self, tiny_backbone_config):
        """Test a batch that does not match input_size raises ShapeError."""
        backbone = Backbone(tiny_backbone_config)

        with pytest.raises(ShapeError):
            backbone.encode(torch.zeros(1, 4, 16, 16, 8))
        with pytest.raises(ShapeError):
            backbone.encode(torch.zeros(1, 3, 16, 16, 16))

    def test_indivisible_input_size_rejected(self):
        """Test input extents must be multiples of 16."""
        with pytest.raises(ValueError):
            BackboneConfig(input_size=(24, 32, 32))


class TestDecodeSegment:
    """Test suite for Backbone.decode_segment."""

    def test_full_resolution_logits(self, toy_backbone_config):
        """Test S has 4 channels at the input resolution."""
        backbone = Backbone(toy_backbone_config).eval()
        x = torch.randn(2, 4, 32, 32, 32)

        with torch.no_grad():
            seg = backbone.decode_segment(backbone.encode(x), x)

        assert tuple(seg.logits.shape) == (2, 4, 32, 32, 32)
        assert tuple(seg.tumor_prob.shape) == (2, 1, 32, 32, 32)

    def test_tumor_prob_complements_background(self, tiny_backbone_config):
        """Test tumor_prob lies in [0, 1] and sums to 1 with the background softmax."""
        backbone = Backbone(tiny_backbone_config).eval()

        with torch.no_grad():
            _, seg = backbone(torch.randn(1, 4, 16, 16, 16))

        background = torch.softmax(seg.logits, dim=1)[:, 0:1]
        assert seg.tumor_prob.min() >= 0.0 and seg.tumor_prob.max() <= 1.0
        torch.testing.assert_close(seg.tumor_prob + background, torch.ones_like(background))

    def test_tumor_probability_of_confident_background(self):
        """Test a strongly background logit gives near-zero tumor probability."""
        logits = torch.zeros(1, 4, 2, 2, 2)
        logits[:, 0] = 50.0

        assert tumor_probability(logits).max() < 1e-12

    def test_mismatched_pyramid_raises(self, tiny_backbone_config, toy_backbone_config):
        """Test a pyramid from another config raises ShapeError."""
        tiny = Backbone(tiny_backbone_config).eval()
        toy = Backbone(toy_backbone_config).eval()
        x = torch.randn(1, 4, 16, 16, 16)

        with torch.no_grad():
            pyramid = toy.encode(torch.randn(1, 4, 32, 32, 32))
            with pytest.raises(ShapeError):
                tiny.decode_segment(pyramid, x)
            with pytest.raises(ShapeError):
                tiny.decode_segment(FeaturePyramid(tiny.encode(x).stages[:3]), x)


class TestGradients:
    """Finite-difference checks of the backbone gradients in float64."""

    @pytest.mark.parametrize("block_kind", ["shifted-window-attention", "conv-residual"])
    def test_dice_gradient_matches_finite_differences(
        self, tiny_backbone_config, block_kind, gradcheck
    ):
        """Test the Dice gradient of every parameter tensor against central differences."""
        cfg = tiny_backbone_config.model_copy(update={"block_kind": block_kind})
        backbone = Backbone(cfg).double().eval()
        x = torch.randn(1, 4, 16, 16, 16, dtype=torch.float64)
        mask = torch.zeros(1, 16, 16, 16, dtype=torch.long)
        mask[:, 5:11, 5:11, 5:11] = 1
        mask[:, 7:9, 7:9, 7:9] = 2

        def loss_fn():
            _, seg = backbone(x)
            return dice_loss(seg.logits, mask)

        checked = gradcheck(loss_fn, backbone.named_parameters())

        assert checked > 10
