"""
Tests for dual-stream fusion and the joint training objective.
"""

import math

import pytest
import torch
import torch.nn as nn

from src.models.config import FusionConfig
from src.models.fusion import FusionHead, fuse
from src.training.config import LossConfig
from src.training.losses import ce_loss, dice_criterion, dice_loss, one_hot_mask, total_loss
from src.utils.errors import InvalidLabel, InvalidMask, ShapeError


class TestFuse:
    """Test suite for FusionHead."""

    def test_fused_width(self):
        """Test the fused input width is 2 * n_cls."""
        head = FusionHead(2, FusionConfig(hidden=4))

        assert head.mlp[0].in_features == 4
        assert tuple(fuse(torch.randn(3, 2), torch.randn(3, 2), head).shape) == (3, 2)

    def test_identity_like_parameters(self):
        """Test weights selecting the first half reproduce C_TAFE."""
        head = FusionHead(2, FusionConfig(hidden=4))
        with torch.no_grad():
            head.mlp[0].weight.copy_(
                torch.tensor(
                    [[1.0, 0, 0, 0], [0, 1.0, 0, 0], [-1.0, 0, 0, 0], [0, -1.0, 0, 0]]
                )
            )
            head.mlp[0].bias.zero_()
            head.mlp[2].weight.copy_(torch.tensor([[1.0, 0, -1.0, 0], [0, 1.0, 0, -1.0]]))
            head.mlp[2].bias.zero_()
        c_tafe, c_cmd = torch.randn(5, 2), torch.randn(5, 2)

        torch.testing.assert_close(fuse(c_tafe, c_cmd, head), c_tafe)

    def test_zero_parameters(self):
        """Test a zero MLP gives zero logits."""
        head = FusionHead(2, FusionConfig())
        for p in head.parameters():
            nn.init.zeros_(p)

        assert torch.equal(head(torch.randn(2, 2), torch.randn(2, 2)), torch.zeros(2, 2))

    def test_shape_errors(self):
        """Test wrong widths or batch sizes raise ShapeError."""
        head = FusionHead(2, FusionConfig())

        with pytest.raises(ShapeError):
            head(torch.randn(2, 3), torch.randn(2, 2))
        with pytest.raises(ShapeError):
            head(torch.randn(2, 2), torch.randn(3, 2))


class TestDiceLoss:
    """Test suite for the soft Dice loss."""

    def _mask(self):
        mask = torch.zeros(1, 4, 4, 4, dtype=torch.long)
        mask[:, 1:3, 1:3, 1:3] = 1
        mask[:, 0, 0, 0] = 2
        mask[:, 3, 3, 3] = 3
        return mask

    def test_perfect_prediction(self):
        """Test probabilities equal to the one-hot target give a loss near 0."""
        mask = self._mask()
        onehot = one_hot_mask(mask).double()

        assert dice_criterion(softmax=False)(onehot, onehot) < 1e-12
        assert dice_loss(100.0 * onehot, mask) < 1e-6

    def test_disjoint_prediction(self):
        """Test disjoint p and g give 1 - eps / (sum p + sum g + eps)."""
        g = torch.zeros(1, 1, 4, 1, 1)
        g[0, 0, :2] = 1.0
        p = 1.0 - g

        loss = dice_criterion(eps=1e-5, softmax=False)(p, g)

        assert float(loss) == pytest.approx(1 - 1e-5 / (4 + 1e-5), abs=1e-7)

    def test_half_overlap(self):
        """Test 2 predicted, 2 target, 1 shared voxel gives Dice 0.5."""
        p = torch.tensor([1.0, 1.0, 0.0]).reshape(1, 1, 3)
        g = torch.tensor([0.0, 1.0, 1.0]).reshape(1, 1, 3)

        loss = float(dice_criterion(eps=1e-5, softmax=False)(p, g))

        assert loss == pytest.approx(0.5, abs=1e-5)

    def test_matches_explicit_formula(self):
        """Test dice_loss equals the per-channel formula averaged with background included."""
        torch.manual_seed(0)
        logits = torch.randn(2, 4, 4, 4, 4, dtype=torch.float64)
        mask = self._mask().repeat(2, 1, 1, 1)
        eps = 1e-5
        p = torch.softmax(logits, dim=1)
        g = one_hot_mask(mask).double()
        intersection = (p * g).sum(dim=(2, 3, 4))
        denominator = p.sum(dim=(2, 3, 4)) + g.sum(dim=(2, 3, 4))
        expected = (1 - (2 * intersection + eps) / (denominator + eps)).mean()

        torch.testing.assert_close(dice_loss(logits, mask, eps), expected)

    def test_range(self):
        """Test the loss lies in [0, 1] for random logits."""
        loss = dice_loss(torch.randn(2, 4, 4, 4, 4), self._mask().repeat(2, 1, 1, 1))

        assert 0.0 <= float(loss) <= 1.0

    def test_voxel_permutation_invariant(self):
        """Test a paired permutation of logits and mask leaves the loss unchanged."""
        logits = torch.randn(1, 4, 64)
        mask = self._mask().reshape(1, 64)
        perm = torch.randperm(64)

        torch.testing.assert_close(
            dice_loss(logits[:, :, perm], mask[:, perm]), dice_loss(logits, mask)
        )

    def test_out_of_range_label(self):
        """Test a mask label of 4 raises InvalidMask."""
        mask = self._mask()
        mask[0, 0, 0, 1] = 4

        with pytest.raises(InvalidMask):
            dice_loss(torch.randn(1, 4, 4, 4, 4), mask)


class TestCeLoss:
    """Test suite for the weighted cross-entropy."""

    def test_uniform_logits(self):
        """Test uniform logits over two classes give ln 2."""
        loss = ce_loss(torch.zeros(3, 2), torch.tensor([0, 1, 1]))

        assert float(loss) == pytest.approx(math.log(2), abs=1e-6)

    def test_large_margin(self):
        """Test a margin of 20 on the true class gives a loss below 1e-8."""
        logits = torch.tensor([[20.0, 0.0]], dtype=torch.float64)

        assert float(ce_loss(logits, torch.tensor([0]))) < 1e-8

    def test_class_weights(self):
        """Test weights (1, 3) triple the loss of a class-1 sample."""
        logits = torch.tensor([[0.3, -0.2]])
        y = torch.tensor([1])

        weighted = ce_loss(logits, y, [1.0, 3.0])

        torch.testing.assert_close(weighted, 3 * ce_loss(logits, y))

    def test_sigmoid_mode(self):
        """Test a single logit of 0 gives ln 2."""
        assert float(ce_loss(torch.zeros(2, 1), torch.tensor([0, 1]))) == pytest.approx(
            math.log(2), abs=1e-6
        )

    def test_invalid_label(self):
        """Test a label of 2 raises InvalidLabel."""
        with pytest.raises(InvalidLabel):
            ce_loss(torch.zeros(1, 2), torch.tensor([2]))


class TestTotalLoss:
    """Test suite for the joint objective."""

    def _inputs(self, dtype=torch.float32):
        seg = torch.randn(2, 4, 4, 4, 4, dtype=dtype, requires_grad=True)
        mask = torch.randint(0, 4, (2, 4, 4, 4))
        cls = torch.randn(2, 2, dtype=dtype, requires_grad=True)
        y = torch.tensor([0, 1])
        return seg, mask, cls, y

    def test_combination(self, mocker):
        """Test (alpha, beta) = (0.5, 1.0) with L_seg 0.4 and L_cla 0.6 gives 0.8."""
        mocker.patch("src.training.losses.dice_loss", return_value=torch.tensor(0.4))
        mocker.patch("src.training.losses.ce_loss", return_value=torch.tensor(0.6))
        seg, mask, cls, y = self._inputs()

        terms = total_loss(seg, mask, cls, y, LossConfig(alpha=0.5, beta=1.0))

        assert float(terms.total) == pytest.approx(0.8)
        assert terms.as_floats()[1:] == pytest.approx((0.4, 0.6))

    def test_alpha_zero(self):
        """Test alpha 0 leaves beta * L_cla."""
        seg, mask, cls, y = self._inputs()

        terms = total_loss(seg, mask, cls, y, LossConfig(alpha=0.0, beta=2.0))

        torch.testing.assert_close(terms.total, 2.0 * terms.cla)

    def test_beta_zero(self):
        """Test beta 0 leaves alpha * L_seg."""
        seg, mask, cls, y = self._inputs()

        terms = total_loss(seg, mask, cls, y, LossConfig(alpha=0.7, beta=0.0))

        torch.testing.assert_close(terms.total, 0.7 * terms.seg)

    def test_supervision_off_or_no_mask(self):
        """Test switching segmentation supervision off, or a missing mask, drops L_seg."""
        seg, mask, cls, y = self._inputs()
        cfg = LossConfig(alpha=0.5, beta=1.0)

        off = total_loss(seg, mask, cls, y, cfg, seg_supervision_on=False)
        unmasked = total_loss(seg, None, cls, y, cfg)

        torch.testing.assert_close(off.total, off.cla)
        assert float(unmasked.seg) == 0.0
        torch.testing.assert_close(unmasked.total, unmasked.cla)

    def test_homogeneous(self):
        """Test scaling alpha and beta by k scales the loss by k."""
        seg, mask, cls, y = self._inputs()

        base = total_loss(seg, mask, cls, y, LossConfig(alpha=0.5, beta=1.0)).total
        scaled = total_loss(seg, mask, cls, y, LossConfig(alpha=1.5, beta=3.0)).total

        torch.testing.assert_close(scaled, 3.0 * base)

    def test_gradient_is_weighted_sum(self):
        """Test grad L_total = alpha grad L_seg + beta grad L_cla."""
        seg, mask, cls, y = self._inputs(torch.float64)
        cfg = LossConfig(alpha=0.5, beta=1.5)

        terms = total_loss(seg, mask, cls, y, cfg)
        g_total = torch.autograd.grad(terms.total, [seg, cls], retain_graph=True)
        g_seg = torch.autograd.grad(terms.seg, seg, retain_graph=True)[0]
        g_cla = torch.autograd.grad(terms.cla, cls)[0]

        torch.testing.assert_close(g_total[0], 0.5 * g_seg)
        torch.testing.assert_close(g_total[1], 1.5 * g_cla)

    def test_weights_must_not_both_vanish(self):
        """Test alpha + beta = 0 is rejected."""
        with pytest.raises(ValueError):
            LossConfig(alpha=0.0, beta=0.0)
