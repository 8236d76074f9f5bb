#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Codecs latentes deterministas y exactamente invertibles.

- causal: transformada de Haar por pares, causal en el tiempo. El primer cuadro
  se comprime solo (avg = x_1, diff = 0) y cada cuadro latente k >= 2 combina los
  cuadros 2k-2 y 2k-1.
- spatial_only: identidad por cuadro.

La aritmética se hace en float64 para que los clips float32 vuelvan bit a bit.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Literal, Optional, TypeVar, Union

import torch
from pydantic import BaseModel

from .dataset.video import Video
from .errors import LabValidationError

logger = logging.getLogger(__name__)

CodecMode = Literal["causal", "spatial_only"]


@dataclass
class Latent:
    """Clip latente f×c'×H×W junto con el codec que lo produjo."""

    data: torch.Tensor
    mode: CodecMode = "causal"

    def __post_init__(self):
        if self.data.ndim != 4:
            raise LabValidationError(f"Latent debe ser f×c'×H×W, recibido {tuple(self.data.shape)}")
        if self.mode not in CODECS:
            raise LabValidationError(f"Modo de codec desconocido: {self.mode}")
        CODECS[self.mode].check_latent(self.data)

    @property
    def frames(self) -> int:
        return self.data.shape[0]


class BaseCodec(ABC):
    """Codec sobre tensores con ejes (..., F, C, H, W)."""

    @abstractmethod
    def encode(self, x: torch.Tensor) -> torch.Tensor:
        pass

    @abstractmethod
    def decode(self, z: torch.Tensor) -> torch.Tensor:
        pass

    @abstractmethod
    def check_latent(self, z: torch.Tensor):
        pass

    @staticmethod
    def latent_frames(frames: int) -> int:
        return frames

    @staticmethod
    def latent_channels(channels: int) -> int:
        return channels


class CausalHaarCodec(BaseCodec):
    """Compresión temporal causal ×2 con canales [promedio | diferencia]."""

    @staticmethod
    def latent_frames(frames: int) -> int:
        return 1 + (frames - 1) // 2

    @staticmethod
    def latent_channels(channels: int) -> int:
        return 2 * channels

    def encode(self, x):
        frames = x.shape[-4]
        if frames % 2 == 0:
            raise LabValidationError(f"El codec causal requiere F impar, recibido F={frames}")
        x = x.double()
        first = x[..., 0:1, :, :, :]
        z_first = torch.cat([first, torch.zeros_like(first)], dim=-3)
        earlier = x[..., 1::2, :, :, :]
        later = x[..., 2::2, :, :, :]
        z_pairs = torch.cat([(earlier + later) / 2, (later - earlier) / 2], dim=-3)
        return torch.cat([z_first, z_pairs], dim=-4)

    def decode(self, z):
        self.check_latent(z)
        z = z.double()
        channels = z.shape[-3] // 2
        avg, diff = z[..., :channels, :, :], z[..., channels:, :, :]
        # El canal diff del primer cuadro latente se ignora
        first = avg[..., 0:1, :, :, :]
        earlier = avg[..., 1:, :, :, :] - diff[..., 1:, :, :, :]
        later = avg[..., 1:, :, :, :] + diff[..., 1:, :, :, :]
        pairs = torch.stack([earlier, later], dim=-4)
        pairs = pairs.reshape(*pairs.shape[:-5], -1, *pairs.shape[-3:])
        return torch.cat([first, pairs], dim=-4)

    def check_latent(self, z):
        if z.shape[-3] % 2 != 0:
            raise LabValidationError(f"Latente causal requiere c' par, recibido c'={z.shape[-3]}")


class SpatialCodec(BaseCodec):
    """Identidad por cuadro: conmuta con la inversión temporal."""

    def encode(self, x):
        return x.double()

    def decode(self, z):
        return z.double()

    def check_latent(self, z):
        pass


CODECS = {
    "causal": CausalHaarCodec(),
    "spatial_only": SpatialCodec(),
}


def get_codec(mode: str) -> BaseCodec:
    if mode not in CODECS:
        raise LabValidationError(f"Modo de codec desconocido: {mode}")
    return CODECS[mode]


def encode(video: Video, mode: CodecMode = "causal") -> Latent:
    """z = E(x)."""
    return Latent(data=get_codec(mode).encode(video.data), mode=mode)


def decode(latent: Latent, dtype: Optional[torch.dtype] = torch.float32) -> Video:
    """x = D(z); acepta latentes fuera del espacio de representación (p. ej. invertidos)."""
    x = get_codec(latent.mode).decode(latent.data)
    return Video(data=x.to(dtype) if dtype is not None else x)


def encode_frame(frame: torch.Tensor) -> torch.Tensor:
    """
    Latente causal de un solo cuadro: avg = cuadro, diff = 0.

    Args:
        frame: Tensor (..., C, H, W)

    Returns:
        Tensor (..., 2C, H, W) con el dtype de la entrada
    """
    return torch.cat([frame, torch.zeros_like(frame)], dim=-3)


def flip_frames(t: torch.Tensor, frame_dim: int = -4) -> torch.Tensor:
    """Invertir el eje de cuadros de un tensor."""
    return t.flip(frame_dim)


T = TypeVar("T", Video, Latent)


def flip(t: T) -> T:
    """Flip(·): inversión temporal sobre el eje de cuadros."""
    if isinstance(t, Video):
        return Video(data=t.data.flip(0), fps=t.fps)
    if isinstance(t, Latent):
        return Latent(data=t.data.flip(0), mode=t.mode)
    raise LabValidationError(f"flip no soporta {type(t).__name__}")


class ProbeReport(BaseModel):
    """Cantidades de la sonda de conmutatividad Flip/E."""

    commutator_norm: float
    roundtrip_mse: float
    flipdecode_mse: float
    mode: CodecMode


def _mse(a: torch.Tensor, b: torch.Tensor) -> float:
    return float(((a.double() - b.double()) ** 2).mean())


def flip_probe(video: Union[Video, torch.Tensor], mode: CodecMode = "causal") -> ProbeReport:
    """
    Medir cuánto se aleja Flip(E(x)) del espacio de representación del codec.

    - commutator_norm: ||Flip(E(x)) - E(Flip(x))|| cuadrático medio
    - roundtrip_mse: ||x - D(E(x))||²/n
    - flipdecode_mse: ||Flip(x) - D(Flip(E(x)))||²/n
    """
    if isinstance(video, torch.Tensor):
        video = Video(data=video)

    z = encode(video, mode)
    z_of_flipped = encode(flip(video), mode)
    x_hat = decode(z, dtype=None)
    x_flip_hat = decode(flip(z), dtype=None)

    report = ProbeReport(
        commutator_norm=_mse(flip(z).data, z_of_flipped.data),
        roundtrip_mse=_mse(video.data, x_hat.data),
        flipdecode_mse=_mse(flip(video).data, x_flip_hat.data),
        mode=mode,
    )
    logger.debug(f"Sonda flip ({mode}): {report.model_dump()}")
    return report
