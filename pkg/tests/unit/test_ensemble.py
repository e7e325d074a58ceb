"""
Tests for checkpoint ensembles.
"""

import numpy as np
import pytest

from src.models.checkpoint import save_checkpoint
from src.models.network import build_network
from src.training.ensemble import predict_ensemble
from src.training.trainer import predict_cases
from src.utils.errors import CheckpointMismatch, MissingLabel


@pytest.fixture
def members(tiny_arch, tmp_path):
    """Two differently seeded networks and their checkpoint paths."""
    models, paths = [], []
    for seed in (0, 1):
        model = build_network(tiny_arch, seed=seed)
        models.append(model)
        paths.append(save_checkpoint(model, tmp_path / f"m{seed}.safetensors", tiny_arch))
    return models, paths


class TestEnsemble:
    """Test suite for predict_ensemble."""

    def test_mean_of_members(self, members, mutant_case, wildtype_case):
        """Test the ensemble averages the member probabilities."""
        models, paths = members
        cases = [mutant_case, wildtype_case]

        ensemble = predict_ensemble(paths, cases)
        expected = np.mean([predict_cases(m, cases) for m in models], axis=0)

        assert ensemble.members.shape == (2, 2, 2)
        assert ensemble.case_ids == ["mutant", "wildtype"]
        np.testing.assert_allclose(ensemble.mean, expected, atol=1e-6)
        np.testing.assert_allclose(ensemble.mean.sum(axis=1), 1.0, atol=1e-6)

    def test_single_member(self, members, mutant_case):
        """Test one checkpoint reproduces its own predictions."""
        models, paths = members

        ensemble = predict_ensemble(paths[:1], [mutant_case])

        np.testing.assert_allclose(
            ensemble.mean, predict_cases(models[0], [mutant_case]), atol=1e-6
        )

    def test_no_checkpoints(self, mutant_case):
        """Test an empty checkpoint list raises CheckpointMismatch."""
        with pytest.raises(CheckpointMismatch):
            predict_ensemble([], [mutant_case])

    def test_mixed_architectures(self, members, tiny_arch, mutant_case, tmp_path):
        """Test members of another architecture are rejected."""
        _, paths = members
        tafe_only = tiny_arch.model_copy(update={"cmd_on": False})
        other = save_checkpoint(
            build_network(tafe_only), tmp_path / "other.safetensors", tafe_only
        )

        with pytest.raises(CheckpointMismatch):
            predict_ensemble([paths[0], other], [mutant_case])

    def test_scored(self, members, mutant_case, wildtype_case):
        """Test scoring needs labels and keeps case ids."""
        _, paths = members
        ensemble = predict_ensemble(paths, [mutant_case, wildtype_case])

        scored = ensemble.scored([1, 0])

        assert scored.case_ids == ["mutant", "wildtype"]
        np.testing.assert_allclose(scored.scores, ensemble.positive)
        with pytest.raises(MissingLabel):
            ensemble.scored([1, None])
