#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Calendario de ruido que preserva varianza: α_t² + σ_t² = 1
"""

import logging
import math
from dataclasses import dataclass
from typing import Literal, Union

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field

from ..errors import LabValidationError

logger = logging.getLogger(__name__)

# Ángulo máximo del calendario coseno: deja α_T pequeño pero distinto de cero
_MAX_ANGLE = 0.9999 * math.pi / 2
_COSINE_OFFSET = 0.008


class ScheduleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    T: int = Field(1000, ge=2)
    kind: Literal["cosine", "linear"] = "cosine"


@dataclass
class NoiseSchedule:
    """Pares (α_t, σ_t) para t = 0..T, en float64."""

    T: int
    alphas: torch.Tensor
    sigmas: torch.Tensor
    kind: str = "cosine"

    def __post_init__(self):
        if self.alphas.shape != (self.T + 1,) or self.sigmas.shape != (self.T + 1,):
            raise LabValidationError(f"El calendario requiere T+1={self.T + 1} valores de α y σ")
        self.alphas = self.alphas.double()
        self.sigmas = self.sigmas.double()

    def alpha(self, t: int) -> float:
        return float(self.alphas[t])

    def sigma(self, t: int) -> float:
        return float(self.sigmas[t])


def make_schedule(T: int = 1000, kind: str = "cosine") -> NoiseSchedule:
    """
    Construir el calendario.

    - cosine: α_t = cos(θ_t)/cos(θ_0), θ_t creciente hasta casi π/2
    - linear: β lineal de 1e-4 a 0.02, α_t = sqrt(∏(1-β))
    """
    if T < 2:
        raise LabValidationError(f"T debe ser >= 2, recibido {T}")

    steps = np.arange(T + 1, dtype=np.float64)
    if kind == "cosine":
        theta = (steps / T + _COSINE_OFFSET) / (1 + _COSINE_OFFSET) * _MAX_ANGLE
        alphas = np.cos(theta) / np.cos(theta[0])
    elif kind == "linear":
        betas = np.linspace(1e-4, 0.02, T, dtype=np.float64)
        alphas = np.sqrt(np.concatenate([[1.0], np.cumprod(1.0 - betas)]))
    else:
        raise LabValidationError(f"Tipo de calendario desconocido: {kind}")

    alphas[0] = 1.0
    sigmas = np.sqrt(np.clip(1.0 - alphas ** 2, 0.0, None))
    schedule = NoiseSchedule(T=T, alphas=torch.from_numpy(alphas), sigmas=torch.from_numpy(sigmas), kind=kind)
    logger.debug(f"Calendario {kind}: T={T}, α_1={alphas[1]:.6f}, α_T={alphas[-1]:.3e}")
    return schedule


def add_noise(z: torch.Tensor, t: Union[int, torch.Tensor], eps: torch.Tensor,
              schedule: NoiseSchedule) -> torch.Tensor:
    """
    z_t = α_t z + σ_t ε.

    Args:
        z: Latente limpio (B, ...) o sin lote
        t: Timestep entero o tensor (B,) de timesteps
        eps: Ruido con la forma de z
    """
    if z.shape != eps.shape:
        raise LabValidationError(f"Formas distintas: z {tuple(z.shape)} vs ε {tuple(eps.shape)}")

    t = torch.as_tensor(t)
    if t.min() < 0 or t.max() > schedule.T:
        raise LabValidationError(f"Timestep fuera de [0, {schedule.T}]")

    alpha = schedule.alphas[t.cpu()].to(z.device, z.dtype)
    sigma = schedule.sigmas[t.cpu()].to(z.device, z.dtype)
    if t.ndim == 1:
        view = (-1,) + (1,) * (z.ndim - 1)
        alpha, sigma = alpha.view(view), sigma.view(view)
    return alpha * z + sigma * eps
