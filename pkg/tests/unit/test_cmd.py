"""
Tests for the cross-modality differential stream.
"""

import pytest
import torch
import torch.nn as nn

from src.core.phantom import PhantomSpec, generate_phantom
from src.models.cmd import (
    ChannelAttention,
    CmdStream,
    SpatialAttention,
    apply_mismatch,
    differential,
    soft_gate,
)
from src.models.config import CmdConfig
from src.utils.errors import ConfigError, ShapeError


def _zero_(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        nn.init.zeros_(p)
    return module


class TestSoftGate:
    """Test suite for soft_gate."""

    def test_certain_tumor_is_identity(self):
        """Test tumor_prob of 1 leaves the volume unchanged."""
        v = torch.randn(1, 1, 4, 4, 4)

        torch.testing.assert_close(soft_gate(v, torch.ones_like(v), 0.1), v)

    def test_floor_applies_outside_tumor(self):
        """Test tumor_prob of 0 with floor 0.1 scales by 0.1."""
        v = torch.randn(1, 1, 4, 4, 4)

        torch.testing.assert_close(soft_gate(v, torch.zeros_like(v), 0.1), 0.1 * v)

    def test_high_floor_dominates(self):
        """Test a floor near 1 gives nearly the input for any probability."""
        v = torch.randn(1, 1, 4, 4, 4)
        prob = torch.rand(1, 1, 4, 4, 4)

        gated = soft_gate(v, prob, 0.999)

        assert torch.all((gated - v).abs() <= 1e-3 * v.abs() + 1e-7)

    def test_shape_mismatch(self):
        """Test mismatched spatial shapes raise ShapeError."""
        with pytest.raises(ShapeError):
            soft_gate(torch.zeros(1, 1, 4, 4, 4), torch.zeros(1, 1, 4, 4, 2), 0.1)


class TestDifferential:
    """Test suite for differential."""

    def test_equal_features_give_zero(self):
        """Test F_T2 = F_FLAIR gives zeros."""
        f = torch.randn(1, 4, 2, 2, 2)

        assert torch.equal(differential(f, f, 2.0), torch.zeros_like(f))

    def test_direct_value(self):
        """Test gamma 2 with a pointwise difference of 0.5 gives 1.0."""
        a = torch.full((1, 1, 2, 2, 2), 1.5)
        b = torch.full((1, 1, 2, 2, 2), 1.0)

        torch.testing.assert_close(differential(a, b, 2.0), torch.ones_like(a))

    def test_antisymmetric(self):
        """Test swapping the streams negates the result."""
        a, b = torch.randn(1, 4, 2, 2, 2), torch.randn(1, 4, 2, 2, 2)

        torch.testing.assert_close(differential(a, b, 3.0), -differential(b, a, 3.0))

    def test_scales_with_gamma(self):
        """Test multiplying gamma by k multiplies F_diff by k."""
        a, b = torch.randn(1, 4, 2, 2, 2), torch.randn(1, 4, 2, 2, 2)

        torch.testing.assert_close(differential(a, b, 6.0), 3.0 * differential(a, b, 2.0))

    @pytest.mark.parametrize("gamma", [1.0, 0.5])
    def test_gamma_must_exceed_one(self, gamma):
        """Test gamma <= 1 raises ConfigError."""
        f = torch.zeros(1, 1, 2, 2, 2)

        with pytest.raises(ConfigError):
            differential(f, f, gamma)

    def test_shape_mismatch(self):
        """Test differing feature shapes raise ShapeError."""
        with pytest.raises(ShapeError):
            differential(torch.zeros(1, 2, 2, 2, 2), torch.zeros(1, 3, 2, 2, 2), 2.0)


class TestAttention:
    """Test suite for channel and spatial attention."""

    def test_zero_channel_mlp_gives_half(self):
        """Test a zero-initialized MLP gives CA = 0.5 everywhere."""
        ca = _zero_(ChannelAttention(8, 2))

        out = ca(torch.randn(2, 8, 4, 4, 4))

        torch.testing.assert_close(out, torch.full((2, 8), 0.5))

    def test_constant_map_doubles_mlp(self):
        """Test GAP equals GMP on constant maps, so CA = sigmoid(2 MLP(c))."""
        ca = ChannelAttention(8, 2)
        values = torch.randn(1, 8)
        x = values[:, :, None, None, None].expand(1, 8, 3, 3, 3)

        expected = torch.sigmoid(2 * ca.mlp(values))

        torch.testing.assert_close(ca(x), expected)

    def test_channel_range(self):
        """Test CA lies strictly inside (0, 1)."""
        out = ChannelAttention(8, 4)(torch.randn(2, 8, 4, 4, 4))

        assert torch.all((out > 0) & (out < 1))

    def test_zero_spatial_convs_give_half(self):
        """Test zero-initialized convs give SA = 0.5 everywhere."""
        sa = _zero_(SpatialAttention(7))

        out = sa(torch.randn(2, 8, 4, 4, 4))

        torch.testing.assert_close(out, torch.full((2, 1, 4, 4, 4), 0.5))

    def test_constant_input_constant_map(self):
        """Test a spatially constant F_diff gives a spatially constant SA."""
        sa = SpatialAttention(7)
        x = torch.randn(1, 8)[:, :, None, None, None].expand(1, 8, 5, 5, 5).contiguous()

        out = sa(x)

        torch.testing.assert_close(out, out.flatten()[0].expand_as(out))

    def test_spatial_layers(self):
        """Test SA is a replicate-padded 2->2 conv, ReLU, then a 1x1 conv to one map."""
        sa = SpatialAttention(7)
        x = torch.randn(2, 8, 4, 4, 4)

        pooled = torch.cat([x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)
        expected = torch.sigmoid(sa.project(torch.relu(sa.conv(pooled))))

        assert (sa.conv.in_channels, sa.conv.out_channels) == (2, 2)
        assert sa.conv.kernel_size == (7, 7, 7)
        assert sa.conv.padding_mode == "replicate"
        assert (sa.project.out_channels, sa.project.kernel_size) == (1, (1, 1, 1))
        torch.testing.assert_close(sa(x), expected)

    def test_spatial_shape_and_range(self):
        """Test SA is (B, 1, s, s, s) with values in (0, 1)."""
        out = SpatialAttention(3)(torch.randn(2, 8, 4, 4, 4))

        assert tuple(out.shape) == (2, 1, 4, 4, 4)
        assert torch.all((out > 0) & (out < 1))


class TestApplyMismatch:
    """Test suite for the residual re-weighting."""

    def test_zero_attention_is_identity(self):
        """Test A = 0 leaves both streams unchanged."""
        f_t2, f_flair = torch.randn(1, 4, 2, 2, 2), torch.randn(1, 4, 2, 2, 2)

        out_t2, out_flair, a = apply_mismatch(
            f_t2, f_flair, torch.zeros(1, 4), torch.rand(1, 1, 2, 2, 2)
        )

        assert torch.equal(out_t2, f_t2)
        assert torch.equal(out_flair, f_flair)
        assert not a.any()

    def test_unit_attention_doubles(self):
        """Test A = 1 gives F' = 2F."""
        f_t2, f_flair = torch.randn(1, 4, 2, 2, 2), torch.randn(1, 4, 2, 2, 2)

        out_t2, out_flair, _ = apply_mismatch(
            f_t2, f_flair, torch.ones(1, 4), torch.ones(1, 1, 2, 2, 2)
        )

        torch.testing.assert_close(out_t2, 2 * f_t2)
        torch.testing.assert_close(out_flair, 2 * f_flair)

    def test_zero_features_stay_zero(self):
        """Test F = 0 gives F' = 0 for any attention."""
        zeros = torch.zeros(1, 4, 2, 2, 2)

        out_t2, _, _ = apply_mismatch(zeros, zeros, torch.rand(1, 4), torch.rand(1, 1, 2, 2, 2))

        assert not out_t2.any()


class TestCmdStream:
    """Test suite for the full CMD stream."""

    def test_feature_shapes(self):
        """Test features sit at quarter resolution with attention in (0, 1)."""
        stream = CmdStream(CmdConfig(conv_channels=8, reduction=2)).eval()
        volumes = torch.randn(2, 4, 16, 16, 16)

        with torch.no_grad():
            feats = stream.features(volumes, torch.rand(2, 1, 16, 16, 16))

        assert tuple(feats.f_t2.shape) == (2, 8, 4, 4, 4)
        assert tuple(feats.ca.shape) == (2, 8)
        assert tuple(feats.sa.shape) == (2, 1, 4, 4, 4)
        assert tuple(feats.a_mismatch.shape) == (2, 8, 4, 4, 4)
        assert torch.all((feats.a_mismatch > 0) & (feats.a_mismatch < 1))

    def test_output_shape(self):
        """Test C_CMD is (B, 2) at n_cls=2."""
        stream = CmdStream(CmdConfig(conv_channels=4, reduction=2)).eval()

        with torch.no_grad():
            logits = stream(torch.randn(3, 4, 16, 16, 16), torch.rand(3, 1, 16, 16, 16))

        assert tuple(logits.shape) == (3, 2)

    def test_zero_head_gives_zero_logits(self):
        """Test a zero classifier head gives zero logits."""
        stream = CmdStream(CmdConfig(conv_channels=4, reduction=2))
        _zero_(stream.head)

        logits = stream.classify(torch.randn(2, 4, 4, 4, 4), torch.randn(2, 4, 4, 4, 4))

        assert torch.equal(logits, torch.zeros(2, 2))

    def test_stream_order_matters(self):
        """Test swapping the T2 and FLAIR streams changes the logits."""
        stream = CmdStream(CmdConfig(conv_channels=4, reduction=2)).eval()
        a, b = torch.randn(1, 4, 4, 4, 4), torch.randn(1, 4, 4, 4, 4)

        with torch.no_grad():
            assert not torch.allclose(stream.classify(a, b), stream.classify(b, a))

    def test_width_mismatch(self):
        """Test features of the wrong channel count raise ShapeError."""
        stream = CmdStream(CmdConfig(conv_channels=4, reduction=2))

        with pytest.raises(ShapeError):
            stream.classify(torch.randn(1, 8, 4, 4, 4), torch.randn(1, 8, 4, 4, 4))

    def test_shared_convolutions(self):
        """Test identical T2 and FLAIR inputs give identical features."""
        stream = CmdStream(CmdConfig(conv_channels=4, reduction=2)).eval()
        volumes = torch.randn(1, 4, 16, 16, 16)
        volumes[:, 3] = volumes[:, 2]

        with torch.no_grad():
            feats = stream.features(volumes, torch.rand(1, 1, 16, 16, 16))

        assert torch.equal(feats.f_t2, feats.f_flair)
        assert not feats.f_diff.any()

    def test_gradient_matches_finite_differences(self, gradcheck):
        """Test end-to-end CMD gradients in float64."""
        stream = CmdStream(CmdConfig(conv_channels=4, reduction=2, head_hidden=8))
        stream = stream.double().eval()
        volumes = torch.randn(2, 4, 16, 16, 16, dtype=torch.float64)
        prob = torch.rand(2, 1, 16, 16, 16, dtype=torch.float64)
        y = torch.tensor([0, 1])

        def loss_fn():
            return nn.functional.cross_entropy(stream(volumes, prob), y)

        assert gradcheck(loss_fn, stream.named_parameters()) > 8

    def test_mismatch_signal_detection(self):
        """Test |F_diff| inside the tumor is larger for mismatch phantoms."""
        cfg = CmdConfig(conv_channels=8, reduction=2)
        means = {True: [], False: []}
        for seed in range(10):
            torch.manual_seed(seed)
            stream = CmdStream(cfg).eval()
            for mismatch in (True, False):
                case = generate_phantom(
                    PhantomSpec(
                        dims=(32, 32, 32),
                        tumor_center=(15.5, 15.5, 15.5),
                        tumor_radii=(8.0, 8.0, 8.0),
                        mismatch=mismatch,
                        mismatch_contrast=1.0,
                        noise_sigma=0.0,
                        seed=seed,
                    )
                )
                tumor = torch.from_numpy(case.mask_array() > 0)
                prob = tumor.to(torch.float32)[None, None]
                with torch.no_grad():
                    feats = stream.features(torch.from_numpy(case.stack()[None]), prob)
                inside = tumor[::4, ::4, ::4]
                means[mismatch].append(float(feats.f_diff.abs()[0][:, inside].mean()))

        assert sum(means[True]) / 10 > sum(means[False]) / 10
