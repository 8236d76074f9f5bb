"""
Fixtures compartidas: modelos diminutos, calendarios cortos y clips sintéticos
"""

import os

import pytest
import torch

from src.dataset import ClipSpec, make_clip
from src.diffusion import make_schedule
from src.models import BackboneConfig, EFNetConfig, init_model


def pytest_collection_modifyitems(config, items):
    if os.environ.get("INBETWEEN_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="defina INBETWEEN_RUN_SLOW=1 para correr las pruebas lentas")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def tiny_backbone():
    """N=2, D=16, H=W=8, p=4, F=5 (f=3 latentes)."""
    return BackboneConfig(N=2, D=16, heads=2, patch_size=4, frames=3, channels=6, height=8, width=8)


@pytest.fixture
def tiny_efnet():
    return EFNetConfig(M=2)


@pytest.fixture
def ft_model(tiny_backbone):
    return init_model(tiny_backbone, seed=11)


@pytest.fixture
def efvi_model(tiny_backbone, tiny_efnet):
    return init_model(tiny_backbone, seed=11, efnet_config=tiny_efnet)


@pytest.fixture
def short_schedule():
    return make_schedule(T=50)


def tiny_clip_spec(**overrides) -> ClipSpec:
    values = dict(
        shape_kind="square", size_px=2, start_pos=(0.25, 0.3), end_pos=(0.75, 0.7),
        trajectory="linear", color=(0.9, 0.6, 0.3), background=0.1, frames=5, height=8, width=8,
    )
    values.update(overrides)
    return ClipSpec(**values)


@pytest.fixture
def tiny_clips():
    """Lote (4, 5, 3, 8, 8) de clips deterministas."""
    specs = [
        tiny_clip_spec(),
        tiny_clip_spec(trajectory="arc", shape_kind="circle"),
        tiny_clip_spec(start_pos=(0.7, 0.2), end_pos=(0.3, 0.8), color=(0.2, 0.9, 0.5)),
        tiny_clip_spec(trajectory="bounce", start_pos=(0.3, 0.5), end_pos=(0.6, 0.5)),
    ]
    return torch.stack([make_clip(spec).data for spec in specs])


def random_video(frames: int = 5, height: int = 8, width: int = 8, seed: int = 0) -> torch.Tensor:
    generator = torch.Generator().manual_seed(seed)
    return torch.rand((frames, 3, height, width), generator=generator)
