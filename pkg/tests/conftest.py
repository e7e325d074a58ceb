"""
Configuration module for pytest.

This module contains fixtures shared by the unit and integration tests: tiny
network configs, phantom cases and small on-disk phantom datasets.
"""

import numpy as np
import pytest
import torch

from src.config import RunConfig, parse_config
from src.core.config import PhantomDatasetConfig
from src.core.phantom import PhantomSpec, generate_dataset, generate_phantom
from src.core.volume_io import Case, case_from_arrays
from src.models.config import ArchitectureConfig, BackboneConfig, CmdConfig

TINY_OVERRIDES = [
    "backbone.embed_dim=4",
    "backbone.num_heads=[1, 1, 2, 4]",
    "backbone.input_size=[16, 16, 16]",
    "cmd.conv_channels=4",
    "cmd.reduction=2",
    "tafe.head_hidden=8",
    "cmd.head_hidden=8",
    "fusion.hidden=4",
    "data.phantom.dims=[16, 16, 16]",
    "data.phantom.radius_range=[3.0, 4.0]",
    "data.phantom.rim_thickness_range=[1.0, 1.5]",
    "train.max_epochs=2",
    "train.folds=2",
    "train.batch_size=2",
    "occlusion.mask_size=8",
]


@pytest.fixture(autouse=True)
def _seed_torch():
    """Every test starts from the same torch RNG state."""
    torch.manual_seed(0)
    yield


@pytest.fixture
def tiny_backbone_config():
    """16^3 input, C=4 backbone."""
    return BackboneConfig(embed_dim=4, num_heads=(1, 1, 2, 4), input_size=(16, 16, 16))


@pytest.fixture
def toy_backbone_config():
    """32^3 input, C=8 backbone."""
    return BackboneConfig(
        embed_dim=8,
        depths=(1, 1, 1, 1),
        num_heads=(1, 2, 2, 4),
        window_size=4,
        input_size=(32, 32, 32),
    )


@pytest.fixture
def tiny_arch(tiny_backbone_config):
    return ArchitectureConfig(
        backbone=tiny_backbone_config,
        cmd=CmdConfig(conv_channels=4, reduction=2, head_hidden=8),
    )


@pytest.fixture
def tiny_run_config() -> RunConfig:
    """Run config with 16^3 volumes, two folds and two epochs."""
    return parse_config(None, TINY_OVERRIDES)


@pytest.fixture
def mismatch_spec():
    return PhantomSpec(
        dims=(16, 16, 16),
        tumor_center=(7.5, 7.5, 7.5),
        tumor_radii=(4.0, 4.0, 4.0),
        mismatch=True,
        mismatch_contrast=1.0,
        noise_sigma=0.0,
        seed=3,
        case_id="mutant",
    )


@pytest.fixture
def mutant_case(mismatch_spec) -> Case:
    return generate_phantom(mismatch_spec)


@pytest.fixture
def wildtype_case(mismatch_spec) -> Case:
    spec = PhantomSpec(**{**mismatch_spec.__dict__, "mismatch": False, "case_id": "wildtype"})
    return generate_phantom(spec)


@pytest.fixture
def random_case() -> Case:
    """A labeled 16^3 case with random intensities and a central cubic tumor."""
    rng = np.random.default_rng(5)
    stacked = rng.normal(size=(4, 16, 16, 16)).astype(np.float32)
    mask = np.zeros((16, 16, 16), dtype=np.uint8)
    mask[5:11, 5:11, 5:11] = 1
    mask[7:9, 7:9, 7:9] = 2
    return case_from_arrays("random", stacked, mask, idh_label=1)


@pytest.fixture
def phantom_dataset_config() -> PhantomDatasetConfig:
    return PhantomDatasetConfig(
        n_cases=8,
        mutant_fraction=0.5,
        dims=(16, 16, 16),
        radius_range=(3.0, 4.0),
        rim_thickness_range=(1.0, 1.5),
        master_seed=11,
    )


@pytest.fixture
def phantom_manifest(tmp_path, phantom_dataset_config):
    """An 8-case (4 mutant) phantom dataset written under tmp_path."""
    return generate_dataset(phantom_dataset_config, tmp_path / "phantoms")


def _directional_derivatives(loss_fn, params, eps=1e-6, seed=0):
    """
    Analytic and central-difference derivatives of loss_fn along two unit
    directions per parameter tensor: its normalized gradient and a seeded
    random direction, so coordinates the gradient misses are still checked.

    Returns:
        List of (name, analytic, numeric) triples, two per checked tensor
    """
    generator = torch.Generator().manual_seed(seed)
    results = []
    loss = loss_fn()
    grads = torch.autograd.grad(loss, [p for _, p in params], allow_unused=True)
    for (name, p), g in zip(params, grads):
        if g is None:
            g = torch.zeros_like(p)
        norm = g.norm()
        if norm < 1e-12:
            continue
        random = torch.randn(p.shape, generator=generator, dtype=p.dtype).to(p.device)
        for direction in (g / norm, random / random.norm()):
            with torch.no_grad():
                p.add_(eps * direction)
                plus = float(loss_fn())
                p.sub_(2 * eps * direction)
                minus = float(loss_fn())
                p.add_(eps * direction)
            analytic = float((g * direction).sum())
            results.append((name, analytic, (plus - minus) / (2 * eps)))
    return results


@pytest.fixture
def gradcheck():
    """
    Assert analytic gradients match central finite differences (64-bit) along
    the gradient and a random direction of every parameter tensor.

    Returns the number of parameter tensors checked.
    """

    def _check(loss_fn, named_params, rtol=1e-3):
        params = [(n, p) for n, p in named_params if p.requires_grad]
        checked = _directional_derivatives(loss_fn, params)
        assert checked, "no parameter received a gradient"
        for name, analytic, numeric in checked:
            scale = max(abs(analytic), abs(numeric))
            assert abs(analytic - numeric) <= rtol * scale + 1e-7, (
                f"{name}: analytic {analytic:.6g} vs numeric {numeric:.6g}"
            )
        return len({name for name, _, _ in checked})

    return _check
