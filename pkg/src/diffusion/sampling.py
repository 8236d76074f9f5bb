#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Paso de muestreo C y los regímenes de generación.

- I2V: solo cuadro inicial (ranura final en cero)
- FT: cuadros inicial y final por la misma inyección J
- EFVI: FT más las características de EF-Net
- BD: rama directa condicionada al inicio y rama invertida condicionada al
  final, fusionadas en cada paso
"""

import logging
import math
from typing import List, Literal, Optional

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field

from ..codec import CausalHaarCodec, flip_frames
from ..dataset.video import Video
from ..errors import LabValidationError
from ..models.backbone import DenoiserModel, inject_boundary
from ..models.efnet import efnet_forward
from .schedule import NoiseSchedule

logger = logging.getLogger(__name__)

Regime = Literal["I2V", "FT", "EFVI", "BD"]


class SamplerConfig(BaseModel):
    """Pasos de inferencia, régimen, estocasticidad y fusión BD."""

    model_config = ConfigDict(extra="forbid")

    steps: int = Field(50, ge=1)
    regime: Regime = "FT"
    eta: float = Field(0.0, ge=0.0, le=1.0)
    fuse_kind: Literal["uniform", "linear_ramp"] = "linear_ramp"
    fuse_lambda: float = Field(0.5, ge=0.0, le=1.0)
    scale_w: Optional[float] = None
    seed: int = 0


def timestep_sequence(T: int, steps: int) -> List[int]:
    """Subsecuencia uniforme de [T, 1] con paso final a 0; devuelve steps+1 valores."""
    if not 1 <= steps <= T:
        raise LabValidationError(f"steps debe estar en [1, {T}], recibido {steps}")
    ts = np.floor(np.linspace(T, 1, steps) + 0.5).astype(int).tolist()
    return ts + [0]


def predict_clean(z_t: torch.Tensor, eps_hat: torch.Tensor, t: int, schedule: NoiseSchedule) -> torch.Tensor:
    """ẑ_0 = (z_t − σ_t ε̂)/α_t."""
    alpha = schedule.alpha(t)
    if alpha == 0:
        raise LabValidationError(f"α_{t} = 0: no se puede invertir el ruido")
    return (z_t - schedule.sigma(t) * eps_hat) / alpha


def sample_step(z_t: torch.Tensor, eps_hat: torch.Tensor, t: int, t_next: int, schedule: NoiseSchedule,
                eta: float = 0.0, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """
    Un paso de denoising determinista/estocástico.

    z_{t_next} = α_{t_next} ẑ_0 + sqrt(σ_{t_next}² − τ²) ε̂ + τ ξ
    """
    if not t > t_next >= 0:
        raise LabValidationError(f"Se requiere t > t_next >= 0, recibido t={t}, t_next={t_next}")

    z0 = predict_clean(z_t, eps_hat, t, schedule)
    alpha_next, sigma_next = schedule.alpha(t_next), schedule.sigma(t_next)
    sigma_t = schedule.sigma(t)

    tau = 0.0
    if eta > 0 and sigma_t > 0 and alpha_next > 0:
        ratio = schedule.alpha(t) / alpha_next
        tau = eta * (sigma_next / sigma_t) * math.sqrt(max(0.0, 1.0 - ratio * ratio))

    z_next = alpha_next * z0 + math.sqrt(max(sigma_next ** 2 - tau ** 2, 0.0)) * eps_hat
    if tau > 0:
        noise = torch.randn(z_t.shape, generator=generator, dtype=z_t.dtype).to(z_t.device)
        z_next = z_next + tau * noise
    return z_next


def _model_dtype(model: DenoiserModel) -> torch.dtype:
    return next(model.parameters()).dtype


def _model_device(model: DenoiserModel) -> torch.device:
    return next(model.parameters()).device


def _predict_eps(model: DenoiserModel, z_t: torch.Tensor, t: int, c_s: Optional[torch.Tensor],
                 c_e: Optional[torch.Tensor], regime: str, scale_w: Optional[float]) -> torch.Tensor:
    t_batch = torch.full((z_t.shape[0],), t, dtype=torch.long, device=z_t.device)
    if regime == "I2V":
        return model(inject_boundary(z_t, c_s, None), t_batch)
    if regime == "FT":
        return model(inject_boundary(z_t, c_s, c_e), t_batch)
    if regime == "EFVI":
        features = efnet_forward(model, c_e, z_t, scale_w)
        return model(inject_boundary(z_t, c_s, c_e), t_batch, features)
    raise LabValidationError(f"Régimen no soportado por sample: {regime}")


def _initial_noise(model: DenoiserModel, batch: int, generator: torch.Generator) -> torch.Tensor:
    c = model.config
    shape = (batch, c.frames, c.channels, c.height, c.width)
    return torch.randn(shape, generator=generator, dtype=_model_dtype(model)).to(_model_device(model))


def _check_regime(model: DenoiserModel, regime: str):
    if regime == "EFVI" and model.efnet is None:
        raise LabValidationError("El régimen EFVI requiere un modelo con EF-Net")


def sample_latent(model: DenoiserModel, c_s: torch.Tensor, c_e: torch.Tensor, config: SamplerConfig,
                  schedule: NoiseSchedule) -> torch.Tensor:
    """
    Muestreo unidireccional (I2V, FT, EFVI) en espacio latente.

    Args:
        c_s, c_e: Cuadros frontera (B, 3, H, W)

    Returns:
        z_0 con forma (B, f, c', H, W)
    """
    _check_regime(model, config.regime)
    dtype = _model_dtype(model)
    c_s, c_e = c_s.to(_model_device(model), dtype), c_e.to(_model_device(model), dtype)
    generator = torch.Generator().manual_seed(config.seed)
    z = _initial_noise(model, c_s.shape[0], generator)
    ts = timestep_sequence(schedule.T, config.steps)

    model.eval()
    with torch.no_grad():
        for t, t_next in zip(ts[:-1], ts[1:]):
            eps_hat = _predict_eps(model, z, t, c_s, c_e, config.regime, config.scale_w)
            z = sample_step(z, eps_hat, t, t_next, schedule, config.eta, generator)
    return z


def fuse_weights(frames: int, kind: str, fuse_lambda: float = 0.5) -> torch.Tensor:
    """λ por cuadro latente, forma (f, 1, 1, 1): uniforme o rampa λ_k = (k−1)/(f−1)."""
    if kind == "uniform":
        weights = torch.full((frames,), float(fuse_lambda), dtype=torch.float64)
    elif kind == "linear_ramp":
        weights = torch.linspace(0.0, 1.0, frames, dtype=torch.float64) if frames > 1 else torch.zeros(1, dtype=torch.float64)
    else:
        raise LabValidationError(f"Fusión desconocida: {kind}")
    return weights.view(frames, 1, 1, 1)


def fuse(z_start: torch.Tensor, z_end: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """Fuse(z^s, z^e) = (1 − λ) z^s + λ z^e."""
    weights = weights.to(z_start.device, z_start.dtype)
    return (1 - weights) * z_start + weights * z_end


def sample_bidirectional_latent(model: DenoiserModel, c_s: torch.Tensor, c_e: torch.Tensor,
                                config: SamplerConfig, schedule: NoiseSchedule) -> torch.Tensor:
    """
    Muestreo bidireccional en espacio latente.

    La rama invertida coloca c_e en la ranura inicial de Flip(z_t): el cuadro final
    es el primero del video invertido. EF-Net no se usa.
    """
    dtype = _model_dtype(model)
    c_s, c_e = c_s.to(_model_device(model), dtype), c_e.to(_model_device(model), dtype)
    generator = torch.Generator().manual_seed(config.seed)
    z = _initial_noise(model, c_s.shape[0], generator)
    weights = fuse_weights(model.config.frames, config.fuse_kind, config.fuse_lambda)
    ts = timestep_sequence(schedule.T, config.steps)

    model.eval()
    with torch.no_grad():
        for t, t_next in zip(ts[:-1], ts[1:]):
            eps_start = _predict_eps(model, z, t, c_s, None, "I2V", None)
            z_start = sample_step(z, eps_start, t, t_next, schedule, config.eta, generator)

            z_flipped = flip_frames(z)
            eps_end = _predict_eps(model, z_flipped, t, c_e, None, "I2V", None)
            z_end = flip_frames(sample_step(z_flipped, eps_end, t, t_next, schedule, config.eta, generator))

            z = fuse(z_start, z_end, weights)
    return z


def decode_to_video(z0: torch.Tensor, c_s: torch.Tensor, c_e: torch.Tensor) -> torch.Tensor:
    """Decodificar con el codec causal, recortar a [0,1] y sobrescribir los cuadros frontera."""
    x = CausalHaarCodec().decode(z0).float().clamp(0.0, 1.0)
    x[:, 0] = c_s.float()
    x[:, -1] = c_e.float()
    return x


def sample_videos(model: DenoiserModel, c_s: torch.Tensor, c_e: torch.Tensor, config: SamplerConfig,
                  schedule: NoiseSchedule) -> torch.Tensor:
    """Generar un lote (B, F, 3, H, W) con el régimen configurado, BD incluido."""
    if config.regime == "BD":
        z0 = sample_bidirectional_latent(model, c_s, c_e, config, schedule)
    else:
        z0 = sample_latent(model, c_s, c_e, config, schedule)
    return decode_to_video(z0, c_s, c_e)


def sample(model: DenoiserModel, c_s: torch.Tensor, c_e: torch.Tensor, config: SamplerConfig,
           schedule: NoiseSchedule) -> Video:
    """
    Generar un video para un par de cuadros frontera (3, H, W).

    Los cuadros 1 y F de la salida son exactamente c_s y c_e.
    """
    if config.regime == "BD":
        raise LabValidationError("Use sample_bidirectional para el régimen BD")
    return Video(data=sample_videos(model, c_s[None], c_e[None], config, schedule)[0])


def sample_bidirectional(model: DenoiserModel, c_s: torch.Tensor, c_e: torch.Tensor, config: SamplerConfig,
                         schedule: NoiseSchedule) -> Video:
    """Muestreo BD de un par de cuadros frontera (3, H, W)."""
    z0 = sample_bidirectional_latent(model, c_s[None], c_e[None], config, schedule)
    return Video(data=decode_to_video(z0, c_s[None], c_e[None])[0])
