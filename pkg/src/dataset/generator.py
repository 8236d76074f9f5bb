#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Generación del dataset sintético y manifiesto en disco
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field

from ..errors import LabValidationError
from .shapes import ClipSpec, get_shape, make_clip
from .video import file_checksum, load_clip, save_clip

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class DatasetConfig(BaseModel):
    """Rangos de la distribución de clips y partición train/heldout."""

    model_config = ConfigDict(extra="forbid")

    count: int = Field(544, ge=2)
    train_fraction: float = Field(0.9412, gt=0.0, lt=1.0)
    frames: int = 9
    height: int = 32
    width: int = 32
    shape_kinds: List[Literal["circle", "square", "bar"]] = ["circle", "square", "bar"]
    trajectories: List[Literal["linear", "arc", "bounce"]] = ["linear", "arc", "bounce"]
    size_range: Tuple[int, int] = (4, 10)
    background_range: Tuple[float, float] = (0.0, 0.3)
    color_range: Tuple[float, float] = (0.45, 1.0)
    arc_height_range: Tuple[float, float] = (-0.2, 0.2)
    texture_amplitude: float = Field(0.0, ge=0.0, le=0.5)
    fps: int = 8
    seed: int = 7
    workers: int = Field(1, ge=1)


class ManifestEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: str
    spec: ClipSpec
    checksum: str
    split: Literal["train", "heldout"]


class DatasetManifest(BaseModel):
    """Entradas de clips, particiones y semilla global."""

    model_config = ConfigDict(extra="forbid")

    seed: int
    entries: List[ManifestEntry]

    def split(self, name: str) -> List[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def save(self, out_dir: Union[str, Path]) -> Path:
        path = Path(out_dir) / MANIFEST_NAME
        path.write_text(json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, out_dir: Union[str, Path]) -> "DatasetManifest":
        with open(Path(out_dir) / MANIFEST_NAME, "r", encoding="utf-8") as f:
            return cls.model_validate(json.load(f))


def sample_clip_specs(config: DatasetConfig) -> List[ClipSpec]:
    """Muestrear las especificaciones de todos los clips con un solo generador sembrado."""
    rng = np.random.default_rng(config.seed)
    specs = []

    for _ in range(config.count):
        kind = str(rng.choice(config.shape_kinds))
        size = int(rng.integers(config.size_range[0], config.size_range[1] + 1))
        half_w, half_h = get_shape(kind, size).half_extent()
        margin_x, margin_y = half_w / config.width, half_h / config.height

        def _position():
            return (
                float(rng.uniform(margin_x, 1.0 - margin_x)),
                float(rng.uniform(margin_y, 1.0 - margin_y)),
            )

        specs.append(ClipSpec(
            shape_kind=kind,
            size_px=size,
            start_pos=_position(),
            end_pos=_position(),
            trajectory=str(rng.choice(config.trajectories)),
            color=tuple(float(c) for c in rng.uniform(*config.color_range, size=3)),
            background=float(rng.uniform(*config.background_range)),
            frames=config.frames,
            height=config.height,
            width=config.width,
            rng_seed=int(rng.integers(0, 2**31 - 1)),
            arc_height=float(rng.uniform(*config.arc_height_range)),
            texture_amplitude=config.texture_amplitude,
            fps=config.fps,
        ))

    return specs


def make_dataset(config: DatasetConfig, out_dir: Union[str, Path], seed: Optional[int] = None) -> DatasetManifest:
    """
    Escribir los clips y el manifiesto.

    Args:
        config: Configuración del dataset
        out_dir: Directorio de salida
        seed: Semilla que reemplaza config.seed si se indica

    Returns:
        Manifiesto escrito en out_dir/manifest.json
    """
    if seed is not None:
        config = config.model_copy(update={"seed": seed})

    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise LabValidationError(f"No se puede crear el directorio {out_dir}: {e}") from e
    if not os.access(out_dir, os.W_OK):
        raise LabValidationError(f"Directorio no escribible: {out_dir}")

    logger.info(f"🎬 Generando {config.count} clips en {out_dir} (seed={config.seed})")
    specs = sample_clip_specs(config)
    n_train = int(round(config.count * config.train_fraction))
    n_train = min(max(n_train, 1), config.count - 1)

    def _write(item):
        index, spec = item
        name = f"clip_{index:05d}.clip"
        checksum = save_clip(make_clip(spec), out_dir / name)
        return ManifestEntry(
            path=name,
            spec=spec,
            checksum=checksum,
            split="train" if index < n_train else "heldout",
        )

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        entries = list(pool.map(_write, enumerate(specs)))

    manifest = DatasetManifest(seed=config.seed, entries=entries)
    manifest.save(out_dir)
    logger.info(f"✅ Dataset listo: {n_train} train + {config.count - n_train} heldout")
    return manifest


def load_split(data_dir: Union[str, Path], split: str) -> Tuple[torch.Tensor, List[ManifestEntry]]:
    """
    Cargar todos los clips de una partición verificando checksums.

    Returns:
        Tensor (n, F, 3, H, W) y las entradas del manifiesto en el mismo orden
    """
    data_dir = Path(data_dir)
    manifest = load_manifest(data_dir)
    entries = manifest.split(split)
    if not entries:
        raise LabValidationError(f"La partición '{split}' está vacía en {data_dir}")
    clips = [load_clip(data_dir / e.path, checksum=e.checksum).data for e in entries]
    return torch.stack(clips), entries


def verify_manifest(data_dir: Union[str, Path]) -> bool:
    """Verificar que los checksums del manifiesto coinciden con los archivos."""
    data_dir = Path(data_dir)
    manifest = load_manifest(data_dir)
    for entry in manifest.entries:
        if file_checksum(data_dir / entry.path) != entry.checksum:
            logger.error(f"❌ Checksum no coincide: {entry.path}")
            return False
    return True


def load_manifest(data_dir: Union[str, Path]) -> DatasetManifest:
    path = Path(data_dir) / MANIFEST_NAME
    if not path.exists():
        raise LabValidationError(f"No existe el manifiesto {path}")
    return DatasetManifest.load(data_dir)
