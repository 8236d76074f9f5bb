#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Checkpoints: directorio con manifest.json y weights.bin (float32 little-endian).

El manifiesto lista nombre, forma y offset de cada parámetro junto con las
configuraciones del modelo; la carga valida el blob contra el manifiesto.
"""

import json
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from ..errors import CheckpointError
from ..models.backbone import BackboneConfig, DenoiserModel, init_model
from ..models.efnet import EFNetConfig

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
WEIGHTS_NAME = "weights.bin"
FORMAT_VERSION = 1


def save_checkpoint(model: DenoiserModel, path: Union[str, Path]) -> Path:
    """Guardar todos los parámetros del modelo; devuelve el directorio escrito."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    entries = []
    chunks = []
    offset = 0
    for name, tensor in model.state_dict().items():
        data = tensor.detach().cpu().numpy().astype("<f4")
        entries.append({"name": name, "shape": list(data.shape), "dtype": "f32", "offset": offset})
        chunks.append(data.tobytes())
        offset += data.nbytes

    manifest = {
        "format_version": FORMAT_VERSION,
        "backbone": model.config.model_dump(),
        "efnet": model.efnet_config.model_dump() if model.efnet_config is not None else None,
        "parameters": entries,
        "total_bytes": offset,
    }
    (path / WEIGHTS_NAME).write_bytes(b"".join(chunks))
    with open(path / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)

    logger.info(f"💾 Checkpoint guardado: {path} ({len(entries)} tensores, {offset:,} bytes)")
    return path


def read_manifest(path: Union[str, Path]) -> dict:
    manifest_path = Path(path) / MANIFEST_NAME
    if not manifest_path.exists():
        raise CheckpointError(f"No existe {manifest_path}")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"Manifiesto malformado en {manifest_path}: {e}") from e


def load_checkpoint(path: Union[str, Path], model: Optional[DenoiserModel] = None) -> DenoiserModel:
    """
    Cargar un checkpoint.

    Sin model se construye uno con las configuraciones del manifiesto. Si el modelo
    destino tiene EF-Net y el checkpoint no (checkpoint FT), la EF-Net conserva su
    inicialización en cero y se emite una advertencia.

    Raises:
        CheckpointError: blob de longitud distinta a la del manifiesto, nombres
            desconocidos, parámetros faltantes del backbone o formas distintas
    """
    path = Path(path)
    manifest = read_manifest(path)
    blob = (path / WEIGHTS_NAME).read_bytes() if (path / WEIGHTS_NAME).exists() else b""

    entries = manifest.get("parameters", [])
    expected_bytes = sum(4 * int(np.prod(e["shape"], dtype=np.int64)) for e in entries)
    if len(blob) != manifest.get("total_bytes") or len(blob) != expected_bytes:
        raise CheckpointError(
            f"blob length mismatch: {len(blob)} bytes, manifiesto declara {manifest.get('total_bytes')}"
        )

    if model is None:
        efnet = manifest.get("efnet")
        model = init_model(
            BackboneConfig(**manifest["backbone"]),
            seed=0,
            efnet_config=EFNetConfig(**efnet) if efnet is not None else None,
        )

    state = model.state_dict()
    unknown = [e["name"] for e in entries if e["name"] not in state]
    if unknown:
        raise CheckpointError(f"Parámetros desconocidos en el checkpoint: {unknown[:5]}")

    saved = {e["name"] for e in entries}
    missing = [name for name in state if name not in saved]
    missing_backbone = [name for name in missing if not name.startswith("efnet.")]
    if missing_backbone:
        raise CheckpointError(f"Faltan parámetros del backbone: {missing_backbone[:5]}")
    if missing:
        logger.warning(f"⚠️ Checkpoint sin EF-Net: {len(missing)} tensores EF-Net conservan su inicialización")

    for entry in entries:
        target = state[entry["name"]]
        if list(target.shape) != entry["shape"]:
            raise CheckpointError(
                f"Forma distinta para {entry['name']}: {entry['shape']} vs {list(target.shape)}"
            )
        count = int(np.prod(entry["shape"], dtype=np.int64))
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=entry["offset"]).reshape(entry["shape"])
        state[entry["name"]] = torch.from_numpy(values.copy()).to(target.device, target.dtype)

    model.load_state_dict(state)
    logger.info(f"Checkpoint cargado: {path}")
    return model
