#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
EF-Net: inyección reforzada del cuadro final.

Codifica solo c_e, lo expande en características por cuadro mediante
coeficientes temporales por token y un producto exterior, lo fusiona con el
latente ruidoso z_t y produce M características que se suman a la salida de los
primeros M bloques del denoiser.
"""

import logging
import math
from typing import List, Optional

import torch
import torch.nn as nn
from einops import rearrange
from pydantic import BaseModel, ConfigDict, Field

from ..codec import encode_frame
from ..errors import LabValidationError
from .backbone import BackboneConfig, DenoiserModel, patchify
from .blocks import DiTBlock, init_dit_weights

logger = logging.getLogger(__name__)


class EFNetConfig(BaseModel):
    """Profundidad, variantes de ablación y escala de inferencia de EF-Net."""

    model_config = ConfigDict(extra="forbid")

    M: int = Field(4, ge=1)
    D: Optional[int] = None
    L: Optional[int] = None
    f: Optional[int] = None
    ablate_zt: bool = False
    use_temporal_embedding: bool = False
    scale_w: float = 1.0
    hidden_mult: int = Field(2, ge=1)

    def check_against(self, backbone: BackboneConfig):
        """Validar contra la geometría del backbone; D, L y f vacíos se toman de él."""
        if self.M > backbone.N:
            raise LabValidationError(f"M={self.M} no puede superar N={backbone.N}")
        for name, value, expected in (
            ("D", self.D, backbone.D),
            ("L", self.L, backbone.tokens_per_frame),
            ("f", self.f, backbone.frames),
        ):
            if value is not None and value != expected:
                raise LabValidationError(f"EFNetConfig.{name}={value} no coincide con el backbone ({expected})")
        if not math.isfinite(self.scale_w):
            raise LabValidationError(f"scale_w debe ser finito, recibido {self.scale_w}")


def _fusion_mlp(in_features: int, hidden: int, out_features: int) -> nn.Sequential:
    mlp = nn.Sequential(
        nn.Linear(in_features, hidden),
        nn.GELU(approximate="tanh"),
        nn.Linear(hidden, out_features),
    )
    nn.init.zeros_(mlp[-1].weight)
    nn.init.zeros_(mlp[-1].bias)
    return mlp


class EFNetModel(nn.Module):
    """Bloques B_j, proyecciones P_j, MLPs de fusión y embeddings temporales E_j opcionales."""

    def __init__(self, config: EFNetConfig, backbone: BackboneConfig):
        super().__init__()
        self.config = config
        self.patch_size = backbone.patch_size
        D, f = backbone.D, backbone.frames
        fusion_in = D if config.ablate_zt else 2 * D

        self.end_embed = nn.Linear(backbone.patch_values, D)
        self.blocks = nn.ModuleList([DiTBlock(D, backbone.heads, backbone.mlp_ratio) for _ in range(config.M)])
        self.coef_proj = nn.ModuleList([nn.Linear(D, f) for _ in range(config.M)])
        init_dit_weights(self)

        self.fusion = nn.ModuleList([_fusion_mlp(fusion_in, config.hidden_mult * D, D) for _ in range(config.M)])
        if config.use_temporal_embedding:
            self.temporal_embed = nn.Parameter(torch.zeros(config.M, f, D))
            nn.init.normal_(self.temporal_embed, std=0.02)
        else:
            self.temporal_embed = None

    def forward(self, c_e: torch.Tensor, zt_tokens: Optional[torch.Tensor],
                scale_w: Optional[float] = None) -> List[torch.Tensor]:
        """
        Args:
            c_e: Cuadro final (B, 3, H, W)
            zt_tokens: Patchify embebido de z_t (B, f·L, D); ignorado con ablate_zt
            scale_w: Multiplicador de inferencia; por defecto config.scale_w

        Returns:
            Lista de M características (B, f·L, D)
        """
        scale_w = self.config.scale_w if scale_w is None else scale_w
        features = []
        hidden = embed_end_frame(c_e, self)
        for j in range(self.config.M):
            hidden = block_step(hidden, self.blocks[j])
            embedding = self.temporal_embed[j] if self.temporal_embed is not None else None
            expanded = temporal_expand(hidden, self.coef_proj[j], embedding)
            fused = fuse_noised_latent(expanded, zt_tokens, self.fusion[j], self.config.ablate_zt)
            features.append(fused * scale_w)
        return features


def embed_end_frame(c_e: torch.Tensor, model: EFNetModel) -> torch.Tensor:
    """F_0: latente causal de un cuadro, patchify y proyección a D. Forma (B, L, D)."""
    latent = encode_frame(c_e).to(model.end_embed.weight.dtype).unsqueeze(-4)
    return patchify(latent, model.patch_size, model.end_embed)


def block_step(previous: torch.Tensor, block: DiTBlock) -> torch.Tensor:
    """F_j = B_j(F_{j-1})."""
    return block(previous)


def temporal_coefficients(features: torch.Tensor, projection: nn.Module) -> torch.Tensor:
    """P_j(F_j): coeficientes temporales por token, forma (..., L, f)."""
    return projection(features)


def temporal_expand(features: torch.Tensor, projection: nn.Module,
                    temporal_embedding: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    Producto exterior P_j(F_j) × F_j reordenado cuadro-mayor.

    El token (l, k) de salida vale c[l, k] · F_j[l]; el bloque del cuadro k contiene
    los L tokens, alineado con el orden de tokens del backbone.

    Returns:
        Tensor (..., f·L, D)
    """
    coefficients = temporal_coefficients(features, projection)
    expanded = torch.einsum("...lk,...ld->...kld", coefficients, features)
    if temporal_embedding is not None:
        expanded = expanded + temporal_embedding[:, None, :]
    return rearrange(expanded, "... k l d -> ... (k l) d")


def fuse_noised_latent(expanded: torch.Tensor, zt_tokens: Optional[torch.Tensor], mlp: nn.Module,
                       ablate_zt: bool = False) -> torch.Tensor:
    """F̄_j = MLP(Concat(F̂_j, Patchify(z_t))); con ablate_zt solo MLP(F̂_j)."""
    if ablate_zt:
        return mlp(expanded)
    if zt_tokens is None or zt_tokens.shape[:-1] != expanded.shape[:-1]:
        got = None if zt_tokens is None else tuple(zt_tokens.shape)
        raise LabValidationError(f"Tokens de z_t {got} no coinciden con F̂_j {tuple(expanded.shape)}")
    return mlp(torch.cat([expanded, zt_tokens], dim=-1))


def efnet_forward(model: DenoiserModel, c_e: torch.Tensor, z_t: torch.Tensor,
                  scale_w: Optional[float] = None) -> List[torch.Tensor]:
    """
    EF-Net(c_e) dentro del proceso de denoising.

    Args:
        model: Denoiser con EF-Net propia
        c_e: Cuadro final (B, 3, H, W)
        z_t: Latente ruidoso (B, f, c', H, W)
        scale_w: Escala de inferencia de las características; None usa la configurada
    """
    if model.efnet is None:
        raise LabValidationError("El modelo no tiene EF-Net")
    zt_tokens = None if model.efnet.config.ablate_zt else model.embed_noised_latent(z_t)
    return model.efnet(c_e, zt_tokens, scale_w)
