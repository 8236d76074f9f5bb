#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Denoiser DiT en miniatura sobre tokens latentes.

Incluye la inyección de cuadros frontera J (relleno temporal con ceros +
concatenación de canales) y los ganchos aditivos por bloque para EF-Net.
Disposición de canales fija: [z_t | ranura inicial | ranura final].
"""

import logging
from typing import List, Literal, Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..codec import encode_frame
from ..errors import LabValidationError
from .blocks import DiTBlock, FinalLayer, TimestepEmbedder, init_dit_weights

logger = logging.getLogger(__name__)

CONDITION_SLOTS = 2


class BackboneConfig(BaseModel):
    """Geometría latente y dimensiones del denoiser."""

    model_config = ConfigDict(extra="forbid")

    N: int = Field(8, ge=1)
    D: int = Field(128, ge=2)
    heads: int = Field(4, ge=1)
    patch_size: int = Field(4, ge=1)
    frames: int = Field(5, ge=1)
    channels: int = Field(6, ge=1)
    height: int = Field(32, ge=1)
    width: int = Field(32, ge=1)
    mlp_ratio: float = Field(4.0, gt=0)
    frequency_embedding_size: int = Field(64, ge=2)
    prediction_target: Literal["epsilon"] = "epsilon"

    @model_validator(mode="after")
    def _check_geometry(self) -> "BackboneConfig":
        if self.D % self.heads != 0:
            raise ValueError(f"D={self.D} debe ser divisible por heads={self.heads}")
        if self.height % self.patch_size or self.width % self.patch_size:
            raise ValueError(
                f"height={self.height} y width={self.width} deben ser divisibles por patch_size={self.patch_size}"
            )
        return self

    @property
    def tokens_per_frame(self) -> int:
        return (self.height // self.patch_size) * (self.width // self.patch_size)

    @property
    def sequence_length(self) -> int:
        return self.frames * self.tokens_per_frame

    @property
    def patch_values(self) -> int:
        """Valores por parche de una sola ranura: c'·p²."""
        return self.channels * self.patch_size ** 2


def patchify(latent: torch.Tensor, p: int, projection: Optional[nn.Module] = None) -> torch.Tensor:
    """
    Parches p×p no solapados por cuadro latente, aplanados en orden (canal, fila, columna).

    Args:
        latent: Tensor (..., f, c, H, W)
        p: Lado del parche en píxeles
        projection: Proyección lineal a D; None deja los valores crudos

    Returns:
        Tokens (..., f·L_s, c·p²) o (..., f·L_s, D), en orden cuadro-mayor
    """
    height, width = latent.shape[-2:]
    if height % p or width % p:
        raise LabValidationError(f"Geometría {height}×{width} no divisible por p={p}")
    tokens = rearrange(latent, "... f c (h p1) (w p2) -> ... (f h w) (c p1 p2)", p1=p, p2=p)
    return projection(tokens) if projection is not None else tokens


def unpatchify(tokens: torch.Tensor, frames: int, channels: int, height: int, width: int, p: int,
               head: Optional[nn.Module] = None) -> torch.Tensor:
    """Inversa exacta de la disposición espacial de patchify."""
    if head is not None:
        tokens = head(tokens)
    expected = frames * (height // p) * (width // p)
    if tokens.shape[-2] != expected or tokens.shape[-1] != channels * p * p:
        raise LabValidationError(
            f"Tokens {tuple(tokens.shape[-2:])} no coinciden con ({expected}, {channels * p * p})"
        )
    return rearrange(
        tokens, "... (f h w) (c p1 p2) -> ... f c (h p1) (w p2)",
        f=frames, h=height // p, w=width // p, p1=p, p2=p,
    )


def _condition_slot(z_t: torch.Tensor, frame: Optional[torch.Tensor], at_end: bool) -> torch.Tensor:
    if frame is None:
        return torch.zeros_like(z_t)
    encoded = encode_frame(frame).to(z_t.dtype).unsqueeze(-4)
    if encoded.shape[-3:] != z_t.shape[-3:] or encoded.shape[:-4] != z_t.shape[:-4]:
        raise LabValidationError(
            f"Cuadro frontera {tuple(frame.shape)} no coincide con el latente {tuple(z_t.shape)}"
        )
    padding = torch.zeros_like(z_t[..., 1:, :, :, :])
    parts = [padding, encoded] if at_end else [encoded, padding]
    return torch.cat(parts, dim=-4)


def inject_boundary(z_t: torch.Tensor, c_s: Optional[torch.Tensor] = None,
                    c_e: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    J(·): concatenar z_t con las ranuras de condición inicial y final.

    Args:
        z_t: Latente ruidoso (..., f, c', H, W)
        c_s: Cuadro inicial en píxeles (..., 3, H, W) o None
        c_e: Cuadro final en píxeles (..., 3, H, W) o None

    Returns:
        Latente (..., f, 3c', H, W); la ranura inicial solo es no nula en el cuadro 1,
        la final solo en el cuadro f
    """
    start_slot = _condition_slot(z_t, c_s, at_end=False)
    end_slot = _condition_slot(z_t, c_e, at_end=True)
    return torch.cat([z_t, start_slot, end_slot], dim=-3)


class DenoiserModel(nn.Module):
    """
    D_θ: embedding de parches, N bloques DiT y cabeza de salida que predice ε.

    Con efnet_config se construye además la EF-Net propia del modelo.
    """

    def __init__(self, config: BackboneConfig, efnet_config=None):
        super().__init__()
        self.config = config
        c = config
        self.x_embed = nn.Linear((1 + CONDITION_SLOTS) * c.patch_values, c.D)
        self.temporal_pos = nn.Parameter(torch.zeros(c.frames, c.D))
        self.spatial_pos = nn.Parameter(torch.zeros(c.tokens_per_frame, c.D))
        self.t_embedder = TimestepEmbedder(c.D, c.frequency_embedding_size)
        self.blocks = nn.ModuleList([DiTBlock(c.D, c.heads, c.mlp_ratio) for _ in range(c.N)])
        self.final_layer = FinalLayer(c.D, c.patch_values)
        self.initialize_weights()

        self.efnet = None
        self.efnet_config = None
        if efnet_config is not None:
            self.attach_efnet(efnet_config)

    def initialize_weights(self):
        init_dit_weights(self)
        nn.init.normal_(self.temporal_pos, std=0.02)
        nn.init.normal_(self.spatial_pos, std=0.02)
        nn.init.normal_(self.t_embedder.mlp[0].weight, std=0.02)
        nn.init.normal_(self.t_embedder.mlp[2].weight, std=0.02)

    def attach_efnet(self, efnet_config):
        from .efnet import EFNetModel

        efnet_config.check_against(self.config)
        self.efnet_config = efnet_config
        self.efnet = EFNetModel(efnet_config, self.config)

    @property
    def injection_depth(self) -> Optional[int]:
        return self.efnet_config.M if self.efnet_config is not None else None

    def position_embedding(self) -> torch.Tensor:
        pos = self.temporal_pos[:, None, :] + self.spatial_pos[None, :, :]
        return rearrange(pos, "f l d -> (f l) d")

    def embed_noised_latent(self, z_t: torch.Tensor) -> torch.Tensor:
        """Patchify de z_t con el embedding del backbone restringido a la ranura z_t."""
        width = self.config.patch_values
        tokens = patchify(z_t, self.config.patch_size)
        return F.linear(tokens, self.x_embed.weight[:, :width], self.x_embed.bias)

    def _check_features(self, features: Sequence[torch.Tensor], batch: int):
        depth = self.injection_depth
        if depth is not None and len(features) != depth:
            raise LabValidationError(f"Se esperaban {depth} características EF-Net, recibidas {len(features)}")
        if not 1 <= len(features) <= self.config.N:
            raise LabValidationError(f"Número de características fuera de [1, N]: {len(features)}")
        expected = (batch, self.config.sequence_length, self.config.D)
        for j, feat in enumerate(features):
            if tuple(feat.shape) != expected:
                raise LabValidationError(f"Característica {j + 1} con forma {tuple(feat.shape)}, esperada {expected}")

    def forward(self, z_in: torch.Tensor, t: torch.Tensor,
                efnet_features: Optional[List[torch.Tensor]] = None) -> torch.Tensor:
        """
        Args:
            z_in: Salida de inject_boundary (B, f, 3c', H, W)
            t: Timesteps (B,)
            efnet_features: M tensores (B, f·L_s, D) sumados tras los primeros M bloques

        Returns:
            ε̂ con forma (B, f, c', H, W)
        """
        c = self.config
        expected = (c.frames, (1 + CONDITION_SLOTS) * c.channels, c.height, c.width)
        if tuple(z_in.shape[1:]) != expected:
            raise LabValidationError(f"z_in con forma {tuple(z_in.shape)}, esperada (B, {expected})")
        if efnet_features is not None:
            self._check_features(efnet_features, z_in.shape[0])

        x = patchify(z_in, c.patch_size, self.x_embed) + self.position_embedding()
        emb = self.t_embedder(t)
        for j, block in enumerate(self.blocks):
            x = block(x, emb)
            if efnet_features is not None and j < len(efnet_features):
                x = x + efnet_features[j]
        return unpatchify(self.final_layer(x, emb), c.frames, c.channels, c.height, c.width, c.patch_size)


def denoise_predict(model: DenoiserModel, z_in: torch.Tensor, t: torch.Tensor,
                    efnet_features: Optional[List[torch.Tensor]] = None) -> torch.Tensor:
    """Predicción ε̂ = D_θ(z_in; t) con inyección aditiva opcional de EF-Net."""
    return model(z_in, t, efnet_features)


def init_model(config: BackboneConfig, seed: int, efnet_config=None) -> DenoiserModel:
    """
    Inicialización determinista.

    El backbone depende solo de seed, así que los modelos FT y EF-VI creados con la
    misma semilla comparten pesos de backbone bit a bit.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = DenoiserModel(config)
        if efnet_config is not None:
            torch.manual_seed(seed + 1_000_003)
            model.attach_efnet(efnet_config)

    n_params = sum(p.numel() for p in model.parameters())
    logger.info(f"Modelo inicializado (seed={seed}, EF-Net={'sí' if efnet_config else 'no'}): {n_params:,} parámetros")
    return model
