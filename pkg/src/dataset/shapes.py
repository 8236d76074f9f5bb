#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Generador determinista de clips sintéticos con figuras en movimiento.

Cada figura se rasteriza con supermuestreo 4× para obtener antialiasing; los
cuadros 1 y F colocan la figura exactamente en start_pos y end_pos.
"""

import logging
from abc import ABC, abstractmethod
from typing import Literal, Tuple

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..errors import LabValidationError
from .video import Video

logger = logging.getLogger(__name__)

SUPERSAMPLING = 4


class BaseShape(ABC):
    """Clase base para todas las figuras rasterizables."""

    def __init__(self, size_px: int):
        self.radius = size_px / 2.0

    @abstractmethod
    def contains(self, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
        """Máscara booleana de puntos (en píxeles, relativos al centro) dentro de la figura."""

    def half_extent(self) -> Tuple[float, float]:
        """Media anchura y media altura en píxeles."""
        return self.radius, self.radius


class CircleShape(BaseShape):
    def contains(self, dx, dy):
        return dx * dx + dy * dy <= self.radius * self.radius


class SquareShape(BaseShape):
    def contains(self, dx, dy):
        return (np.abs(dx) <= self.radius) & (np.abs(dy) <= self.radius)


class BarShape(BaseShape):
    """Barra horizontal: ancho size_px, alto un tercio."""

    def contains(self, dx, dy):
        return (np.abs(dx) <= self.radius) & (np.abs(dy) <= self.half_extent()[1])

    def half_extent(self):
        return self.radius, max(self.radius / 3.0, 0.5)


SHAPES = {
    "circle": CircleShape,
    "square": SquareShape,
    "bar": BarShape,
}


def get_shape(kind: str, size_px: int) -> BaseShape:
    return SHAPES[kind](size_px)


class ClipSpec(BaseModel):
    """Especificación completa de un clip sintético."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    shape_kind: Literal["circle", "square", "bar"] = "circle"
    size_px: int = Field(6, ge=1)
    start_pos: Tuple[float, float] = (0.2, 0.5)
    end_pos: Tuple[float, float] = (0.8, 0.5)
    trajectory: Literal["linear", "arc", "bounce"] = "linear"
    color: Tuple[float, float, float] = (0.9, 0.8, 0.2)
    background: float = Field(0.1, ge=0.0, le=1.0)
    frames: int = 9
    height: int = Field(32, ge=1)
    width: int = Field(32, ge=1)
    rng_seed: int = 0
    arc_height: float = Field(0.15, ge=-0.5, le=0.5)
    texture_amplitude: float = Field(0.0, ge=0.0, le=0.5)
    fps: int = Field(8, ge=1)

    @field_validator("frames")
    @classmethod
    def _frames_odd(cls, value: int) -> int:
        if value < 3 or value % 2 == 0:
            raise ValueError(f"frames debe ser un entero impar >= 3, recibido {value}")
        return value

    @field_validator("start_pos", "end_pos")
    @classmethod
    def _position_in_unit_square(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if not all(0.0 <= v <= 1.0 for v in value):
            raise ValueError(f"la posición debe estar en [0,1]², recibido {value}")
        return value

    @field_validator("color")
    @classmethod
    def _color_in_range(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if not all(0.0 <= v <= 1.0 for v in value):
            raise ValueError(f"color debe estar en [0,1]³, recibido {value}")
        return value

    @model_validator(mode="after")
    def _bounce_inside_walls(self) -> "ClipSpec":
        if self.trajectory == "bounce":
            (lo_x, hi_x), (lo_y, hi_y) = bounce_walls(self)
            for name in ("start_pos", "end_pos"):
                x, y = getattr(self, name)
                if not (lo_x <= x <= hi_x and lo_y <= y <= hi_y):
                    raise ValueError(f"{name}={getattr(self, name)} queda fuera de las paredes de rebote")
        return self


def bounce_walls(spec: ClipSpec) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    """Caja (en coordenadas fraccionarias) donde la figura queda completamente visible."""
    half_w, half_h = get_shape(spec.shape_kind, spec.size_px).half_extent()
    lo_x, lo_y = half_w / spec.width, half_h / spec.height
    return (lo_x, 1.0 - lo_x), (lo_y, 1.0 - lo_y)


def _fold(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Plegar una coordenada desplegada dentro de [lo, hi] reflejando en las paredes."""
    span = hi - lo
    if span <= 0:
        return np.full_like(x, lo)
    y = np.mod(x - lo, 2.0 * span)
    y = np.where(y > span, 2.0 * span - y, y)
    return lo + y


def trajectory_positions(spec: ClipSpec) -> np.ndarray:
    """Posiciones fraccionarias (x, y) del centro de la figura por cuadro, forma F×2."""
    start = np.asarray(spec.start_pos, dtype=np.float64)
    end = np.asarray(spec.end_pos, dtype=np.float64)
    u = (np.arange(spec.frames, dtype=np.float64) / (spec.frames - 1))[:, None]

    if spec.trajectory == "linear":
        positions = start + u * (end - start)
    elif spec.trajectory == "arc":
        delta = end - start
        norm = np.hypot(*delta)
        normal = np.array([-delta[1], delta[0]]) / norm if norm > 0 else np.array([0.0, -1.0])
        positions = (1.0 - u) * start + u * end + normal * spec.arc_height * 4.0 * u * (1.0 - u)
    else:
        # Un rebote en la pared derecha: destino desplegado reflejado
        (lo_x, hi_x), _ = bounce_walls(spec)
        unfolded_end = np.array([2.0 * hi_x - end[0], end[1]])
        positions = (1.0 - u) * start + u * unfolded_end
        positions[:, 0] = _fold(positions[:, 0], lo_x, hi_x)

    positions[0] = start
    positions[-1] = end
    return positions


def _background(spec: ClipSpec) -> np.ndarray:
    background = np.full((spec.height, spec.width), spec.background, dtype=np.float64)
    if spec.texture_amplitude > 0:
        rng = np.random.default_rng(spec.rng_seed)
        background = background + spec.texture_amplitude * (rng.random((spec.height, spec.width)) - 0.5)
    return background


def coverage(spec: ClipSpec, position) -> np.ndarray:
    """Fracción de cada píxel cubierta por la figura centrada en position, forma H×W."""
    shape = get_shape(spec.shape_kind, spec.size_px)
    s = SUPERSAMPLING
    xs = (np.arange(spec.width * s, dtype=np.float64) + 0.5) / s
    ys = (np.arange(spec.height * s, dtype=np.float64) + 0.5) / s
    cx, cy = position[0] * spec.width, position[1] * spec.height
    mask = shape.contains(xs[None, :] - cx, ys[:, None] - cy).astype(np.float64)
    return mask.reshape(spec.height, s, spec.width, s).mean(axis=(1, 3))


def render_frame(spec: ClipSpec, position) -> torch.Tensor:
    """Rasterizar un cuadro 3×H×W con la figura en position."""
    alpha = coverage(spec, position)
    background = _background(spec)
    color = np.asarray(spec.color, dtype=np.float64)[:, None, None]
    frame = background[None] * (1.0 - alpha[None]) + color * alpha[None]
    return torch.from_numpy(np.clip(frame, 0.0, 1.0).astype(np.float32))


def make_clip(spec: ClipSpec) -> Video:
    """Generar el clip completo; función pura de spec."""
    positions = trajectory_positions(spec)
    frames = torch.stack([render_frame(spec, p) for p in positions])
    logger.debug(f"Clip {spec.shape_kind}/{spec.trajectory} generado: {tuple(frames.shape)}")
    return Video(data=frames, fps=spec.fps)


def shape_centroid(frame: torch.Tensor, spec: ClipSpec) -> Tuple[float, float]:
    """
    Centroide (x, y) en píxeles de la figura, recuperado de un cuadro renderizado.

    Usa el canal con mayor contraste figura/fondo; con textura de fondo es aproximado.
    """
    frame = frame.detach().cpu().numpy().astype(np.float64)
    contrast = np.asarray(spec.color) - spec.background
    channel = int(np.argmax(np.abs(contrast)))
    alpha = (frame[channel] - spec.background) / contrast[channel]
    alpha = np.clip(alpha, 0.0, 1.0)
    total = alpha.sum()
    if total <= 0:
        raise LabValidationError("La figura no es visible en el cuadro")
    xs = np.arange(spec.width) + 0.5
    ys = np.arange(spec.height) + 0.5
    return float((alpha * xs[None, :]).sum() / total), float((alpha * ys[:, None]).sum() / total)
