#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Entrenamiento por predicción de ruido para los regímenes FT y EFVI.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import pandas as pd
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field

from ..codec import CausalHaarCodec
from ..errors import DivergenceError, LabValidationError
from ..models.backbone import DenoiserModel, inject_boundary
from ..models.efnet import efnet_forward
from .schedule import NoiseSchedule, add_noise

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    """Hiperparámetros del optimizador y del bucle de entrenamiento."""

    model_config = ConfigDict(extra="forbid")

    regime: Literal["FT", "EFVI"] = "FT"
    batch_size: int = Field(8, ge=1)
    iterations: int = Field(2000, ge=0)
    lr: float = Field(2e-4, ge=0.0)
    lr_min: float = Field(2e-5, ge=0.0)
    betas: Tuple[float, float] = (0.9, 0.999)
    weight_decay: float = Field(0.01, ge=0.0)
    condition_dropout: float = Field(0.1, ge=0.0, lt=1.0)
    grad_clip: float = Field(1.0, ge=0.0)
    seed: int = 0
    log_every: int = Field(50, ge=1)
    checkpoint_every: int = Field(0, ge=0)


@dataclass
class TrainResult:
    model: DenoiserModel
    losses: List[float] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)

    @property
    def final_loss(self) -> Optional[float]:
        return self.losses[-1] if self.losses else None


def _drop_condition(frame: torch.Tensor, p: float, generator: Optional[torch.Generator]) -> torch.Tensor:
    keep = (torch.rand(frame.shape[0], generator=generator) >= p).to(frame.device, frame.dtype)
    return frame * keep.view(-1, 1, 1, 1)


def training_loss(model: DenoiserModel, clips: torch.Tensor, t: torch.Tensor, eps: torch.Tensor,
                  regime: str, schedule: NoiseSchedule, condition_dropout: float = 0.0,
                  generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """
    ‖ε − D_θ(J(z_t, c_s, c_e); t [, EF-Net(c_e)])‖² promediado.

    Args:
        clips: Videos (B, F, 3, H, W)
        t: Timesteps (B,) en [1, T]
        eps: Ruido (B, f, c', H, W)
        condition_dropout: Probabilidad de anular c_s y c_e por muestra; el cuadro
            anulado también se anula en la entrada de EF-Net
    """
    if regime not in ("FT", "EFVI"):
        raise LabValidationError(f"Régimen de entrenamiento desconocido: {regime}")
    if regime == "EFVI" and model.efnet is None:
        raise LabValidationError("La pérdida EFVI requiere un modelo con EF-Net")

    param = next(model.parameters())
    dtype, device = param.dtype, param.device
    clips = clips.to(device, dtype)
    t = t.to(device)
    eps = eps.to(device, dtype)
    z = CausalHaarCodec().encode(clips).to(dtype)
    if z.shape != eps.shape:
        raise LabValidationError(f"ε con forma {tuple(eps.shape)}, esperada {tuple(z.shape)}")

    c_s, c_e = clips[:, 0], clips[:, -1]
    if condition_dropout > 0:
        c_s = _drop_condition(c_s, condition_dropout, generator)
        c_e = _drop_condition(c_e, condition_dropout, generator)

    z_t = add_noise(z, t, eps, schedule)
    features = efnet_forward(model, c_e, z_t) if regime == "EFVI" else None
    eps_hat = model(inject_boundary(z_t, c_s, c_e), t, features)
    return F.mse_loss(eps_hat, eps)


def _weights_finite(model: DenoiserModel) -> bool:
    return all(torch.isfinite(p).all() for p in model.parameters())


def train(model: DenoiserModel, clips: torch.Tensor, config: TrainConfig, schedule: NoiseSchedule,
          checkpoint_dir: Optional[Path] = None, loss_trace_path: Optional[Path] = None) -> TrainResult:
    """
    Entrenar con AdamW y decaimiento coseno de la tasa de aprendizaje.

    Args:
        clips: Conjunto de entrenamiento (n, F, 3, H, W)
        checkpoint_dir: Destino de checkpoints intermedios (checkpoint_every > 0)
        loss_trace_path: CSV opcional con (iteration, loss, lr)

    Raises:
        DivergenceError: pérdida o pesos no finitos
    """
    if clips.ndim != 5 or clips.shape[0] == 0:
        raise LabValidationError(f"Se esperaban clips (n, F, 3, H, W), recibido {tuple(clips.shape)}")

    from ..harness.checkpoint import save_checkpoint

    generator = torch.Generator().manual_seed(config.seed)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.lr, betas=config.betas, weight_decay=config.weight_decay
    )
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=max(config.iterations, 1), eta_min=min(config.lr_min, config.lr)
    )

    c = model.config
    dtype = next(model.parameters()).dtype
    latent_shape = (config.batch_size, c.frames, c.channels, c.height, c.width)
    result = TrainResult(model=model)
    trace = []

    logger.info(f"🚀 Entrenando {config.regime}: {config.iterations} iteraciones, lote {config.batch_size}, "
                f"{clips.shape[0]} clips")
    model.train()
    for iteration in range(config.iterations):
        idx = torch.randint(0, clips.shape[0], (config.batch_size,), generator=generator)
        t = torch.randint(1, schedule.T + 1, (config.batch_size,), generator=generator)
        eps = torch.randn(latent_shape, generator=generator, dtype=dtype)

        loss = training_loss(model, clips[idx], t, eps, config.regime, schedule,
                             config.condition_dropout, generator)
        if not math.isfinite(loss.item()):
            raise DivergenceError(iteration, loss.item())

        optimizer.zero_grad()
        loss.backward()
        if config.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
        lr = optimizer.param_groups[0]["lr"]
        optimizer.step()
        scheduler.step()

        result.losses.append(loss.item())
        trace.append({"iteration": iteration + 1, "loss": loss.item(), "lr": lr})

        if (iteration + 1) % config.log_every == 0 or iteration + 1 == config.iterations:
            logger.info(f"  iter {iteration + 1}/{config.iterations}: loss={loss.item():.5f} lr={lr:.2e}")
        if checkpoint_dir is not None and config.checkpoint_every and (iteration + 1) % config.checkpoint_every == 0:
            result.checkpoints.append(save_checkpoint(model, Path(checkpoint_dir) / f"iter_{iteration + 1:06d}"))

    if not _weights_finite(model):
        raise DivergenceError(config.iterations, float("nan"))

    if loss_trace_path is not None and trace:
        pd.DataFrame(trace).to_csv(loss_trace_path, index=False)

    logger.info(f"✅ Entrenamiento completado: loss final={result.final_loss}")
    return result
