"""
Denoiser DiT en miniatura y EF-Net
"""

from .backbone import (
    BackboneConfig,
    DenoiserModel,
    denoise_predict,
    init_model,
    inject_boundary,
    patchify,
    unpatchify,
)
from .efnet import (
    EFNetConfig,
    EFNetModel,
    block_step,
    efnet_forward,
    embed_end_frame,
    fuse_noised_latent,
    temporal_coefficients,
    temporal_expand,
)

__all__ = [
    'BackboneConfig',
    'DenoiserModel',
    'denoise_predict',
    'init_model',
    'inject_boundary',
    'patchify',
    'unpatchify',
    'EFNetConfig',
    'EFNetModel',
    'block_step',
    'efnet_forward',
    'embed_end_frame',
    'fuse_noised_latent',
    'temporal_coefficients',
    'temporal_expand',
]
