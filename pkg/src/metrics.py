#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Métricas de restricción de cuadros frontera.

Curvas de distancia de cada cuadro intermedio a los cuadros inicial y final,
resúmenes de desviación/asimetría frente a la verdad de terreno y la
agregación ponderada de puntuaciones normalizadas.
"""

import logging
import math
from typing import List, Literal, Sequence, Union

import numpy as np
import pandas as pd
import torch
from pydantic import BaseModel, ConfigDict, model_validator

from .dataset.video import Video
from .errors import LabValidationError

logger = logging.getLogger(__name__)

DistanceKind = Literal["mse", "mae"]


class BoundaryCurves(BaseModel):
    """d_start[i], d_end[i] para los cuadros intermedios 2..F−1."""

    model_config = ConfigDict(extra="forbid")

    d_start: List[float]
    d_end: List[float]
    distance_kind: DistanceKind = "mse"

    @model_validator(mode="after")
    def _check(self) -> "BoundaryCurves":
        if len(self.d_start) != len(self.d_end):
            raise ValueError("d_start y d_end deben tener la misma longitud")
        if any(v < 0 for v in self.d_start + self.d_end):
            raise ValueError("Las distancias deben ser no negativas")
        return self

    def __len__(self) -> int:
        return len(self.d_start)

    @property
    def frame_indices(self) -> List[int]:
        return list(range(2, len(self.d_start) + 2))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"frame_index": self.frame_indices, "d_start": self.d_start, "d_end": self.d_end})


class CurveSummary(BaseModel):
    model_config = ConfigDict(extra="forbid")

    deviation_start: float
    deviation_end: float
    asymmetry: float
    total_deviation: float


class ScoreAggregation(BaseModel):
    """Puntuaciones s_j, pesos w_j y extremos de normalización por dimensión."""

    model_config = ConfigDict(extra="forbid")

    scores: List[float]
    weights: List[float]
    s_min: List[float]
    s_max: List[float]

    @model_validator(mode="after")
    def _check(self) -> "ScoreAggregation":
        n = len(self.scores)
        if n == 0 or any(len(v) != n for v in (self.weights, self.s_min, self.s_max)):
            raise ValueError("scores, weights, s_min y s_max deben tener la misma longitud no nula")
        if not all(math.isfinite(v) for v in self.scores + self.weights + self.s_min + self.s_max):
            raise ValueError("Todos los valores de la agregación deben ser finitos")
        for j, (lo, hi) in enumerate(zip(self.s_min, self.s_max)):
            if lo == hi:
                raise ValueError(f"Dimensión {j}: s_min = s_max = {lo}")
        return self


def _frames(video: Union[Video, torch.Tensor]) -> torch.Tensor:
    return video.data if isinstance(video, Video) else video


def frame_distance(a: torch.Tensor, b: torch.Tensor, kind: DistanceKind = "mse") -> float:
    """Distancia en píxeles (sustituto de una distancia perceptual)."""
    if a.shape != b.shape:
        raise LabValidationError(f"Formas distintas: {tuple(a.shape)} vs {tuple(b.shape)}")
    diff = a.double() - b.double()
    if kind == "mse":
        return float((diff * diff).mean())
    if kind == "mae":
        return float(diff.abs().mean())
    raise LabValidationError(f"Distancia desconocida: {kind}")


def boundary_curves(video: Union[Video, torch.Tensor], kind: DistanceKind = "mse") -> BoundaryCurves:
    frames = _frames(video)
    if frames.shape[0] < 3:
        raise LabValidationError(f"Se requieren al menos 3 cuadros, recibido {frames.shape[0]}")
    first, last = frames[0], frames[-1]
    middle = frames[1:-1]
    return BoundaryCurves(
        d_start=[frame_distance(x, first, kind) for x in middle],
        d_end=[frame_distance(x, last, kind) for x in middle],
        distance_kind=kind,
    )


def curve_summary(gen: BoundaryCurves, gt: BoundaryCurves) -> CurveSummary:
    """Desviación media absoluta frente a las curvas de verdad de terreno y asimetría Σd_end − Σd_start."""
    if len(gen) != len(gt) or gen.distance_kind != gt.distance_kind:
        raise LabValidationError(
            f"Curvas incompatibles: {len(gen)}/{gen.distance_kind} vs {len(gt)}/{gt.distance_kind}"
        )
    if len(gen) == 0:
        raise LabValidationError("Curvas vacías")
    deviation_start = float(np.mean(np.abs(np.subtract(gen.d_start, gt.d_start))))
    deviation_end = float(np.mean(np.abs(np.subtract(gen.d_end, gt.d_end))))
    return CurveSummary(
        deviation_start=deviation_start,
        deviation_end=deviation_end,
        asymmetry=float(np.sum(gen.d_end) - np.sum(gen.d_start)),
        total_deviation=deviation_start + deviation_end,
    )


def mean_summary(summaries: Sequence[CurveSummary]) -> CurveSummary:
    if not summaries:
        raise LabValidationError("Sin resúmenes que promediar")
    frame = pd.DataFrame([s.model_dump() for s in summaries])
    return CurveSummary(**{k: float(v) for k, v in frame.mean().items()})


def mean_curves(curves: Sequence[BoundaryCurves]) -> BoundaryCurves:
    """Media aritmética por índice de cuadro, sin normalizar por clip."""
    if not curves:
        raise LabValidationError("Sin curvas que promediar")
    kinds = {c.distance_kind for c in curves}
    lengths = {len(c) for c in curves}
    if len(kinds) != 1 or len(lengths) != 1:
        raise LabValidationError(f"Curvas heterogéneas: tipos {kinds}, longitudes {lengths}")
    return BoundaryCurves(
        d_start=np.mean([c.d_start for c in curves], axis=0).tolist(),
        d_end=np.mean([c.d_end for c in curves], axis=0).tolist(),
        distance_kind=kinds.pop(),
    )


def resample_frames(video: Union[Video, torch.Tensor], count: int) -> torch.Tensor:
    """Extraer count cuadros uniformemente espaciados, incluyendo el primero y el último."""
    frames = _frames(video)
    if not 2 <= count <= frames.shape[0]:
        raise LabValidationError(f"count debe estar en [2, {frames.shape[0]}], recibido {count}")
    idx = np.floor(np.linspace(0, frames.shape[0] - 1, count) + 0.5).astype(int)
    return frames[torch.from_numpy(idx)]


def aggregate_score(agg: ScoreAggregation) -> float:
    """s_f = Σ w_j · (s_j − s_j^max)/(s_j^min − s_j^max)."""
    return float(sum(
        w * (s - hi) / (lo - hi)
        for s, w, lo, hi in zip(agg.scores, agg.weights, agg.s_min, agg.s_max)
    ))


def regime_scores(summaries: dict, weights: Sequence[float] = (0.5, 0.5)) -> dict:
    """
    Puntuación agregada por régimen sobre (total_deviation, |asymmetry|).

    Los extremos se toman entre regímenes; una dimensión degenerada (mismo valor
    en todos) se omite con advertencia. Devuelve {} si no queda ninguna.
    """
    names = sorted(summaries)
    if not names:
        return {}
    dims = [
        [summaries[n].total_deviation for n in names],
        [abs(summaries[n].asymmetry) for n in names],
    ]
    kept = [(values, w) for values, w in zip(dims, weights) if min(values) != max(values)]
    if len(kept) < len(dims):
        logger.warning("⚠️ Dimensión de puntuación degenerada entre regímenes; se omite")
    if not kept:
        return {}

    scores = {}
    for i, name in enumerate(names):
        agg = ScoreAggregation(
            scores=[values[i] for values, _ in kept],
            weights=[w for _, w in kept],
            s_min=[min(values) for values, _ in kept],
            s_max=[max(values) for values, _ in kept],
        )
        scores[name] = aggregate_score(agg)
    return scores
