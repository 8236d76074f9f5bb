#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tipo Video y formato de archivo de clip.

Formato: una línea de cabecera JSON terminada en salto de línea seguida del
tensor float32 little-endian crudo en orden F, C, H, W.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from ..errors import ClipFormatError, LabValidationError

logger = logging.getLogger(__name__)

HEADER_FIELDS = ("F", "C", "H", "W", "dtype", "byte_order")


@dataclass
class Video:
    """Clip en espacio de píxeles, data con forma F×C×H×W."""

    data: torch.Tensor
    fps: int = 8

    def __post_init__(self):
        if self.data.ndim != 4:
            raise LabValidationError(f"Video debe ser F×C×H×W, recibido {tuple(self.data.shape)}")
        if self.data.shape[1] != 3:
            raise LabValidationError(f"Video requiere C=3, recibido C={self.data.shape[1]}")
        if self.data.shape[0] % 2 == 0:
            raise LabValidationError(f"Video requiere F impar, recibido F={self.data.shape[0]}")
        if not torch.isfinite(self.data).all():
            raise LabValidationError("Video contiene valores no finitos")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    @property
    def start_frame(self) -> torch.Tensor:
        return self.data[0]

    @property
    def end_frame(self) -> torch.Tensor:
        return self.data[-1]


def file_checksum(path: Union[str, Path]) -> str:
    """SHA256 del contenido completo del archivo."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_clip(video: Video, path: Union[str, Path]) -> str:
    """
    Guardar un clip en el formato de archivo.

    Returns:
        Checksum del archivo escrito
    """
    path = Path(path)
    payload = video.data.detach().cpu().numpy().astype("<f4").tobytes()
    frames, channels, height, width = video.data.shape
    header = {
        "F": frames,
        "C": channels,
        "H": height,
        "W": width,
        "dtype": "f32",
        "byte_order": "little",
        "fps": video.fps,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + payload)
    return file_checksum(path)


def _parse_header(raw: bytes) -> dict:
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ClipFormatError(f"malformed header: {e}") from e

    if not isinstance(header, dict) or any(k not in header for k in HEADER_FIELDS):
        raise ClipFormatError(f"malformed header: se esperaban los campos {HEADER_FIELDS}")
    if header["dtype"] != "f32" or header["byte_order"] != "little":
        raise ClipFormatError(
            f"malformed header: dtype={header['dtype']} byte_order={header['byte_order']} no soportados"
        )
    for key in ("F", "C", "H", "W"):
        if not isinstance(header[key], int) or header[key] < 1:
            raise ClipFormatError(f"malformed header: {key}={header[key]!r}")
    if header["F"] % 2 == 0:
        raise LabValidationError(f"F debe ser impar, la cabecera declara F={header['F']}")
    if header["C"] != 3:
        raise LabValidationError(f"C debe ser 3, la cabecera declara C={header['C']}")
    return header


def load_clip(path: Union[str, Path], checksum: Optional[str] = None) -> Video:
    """
    Cargar un clip desde disco.

    Args:
        path: Ruta al archivo de clip
        checksum: SHA256 esperado del archivo (tomado del manifiesto), opcional

    Returns:
        Video con los datos exactos que se guardaron
    """
    path = Path(path)
    raw = path.read_bytes()

    if checksum is not None and hashlib.sha256(raw).hexdigest() != checksum:
        raise ClipFormatError(f"checksum mismatch: {path}")

    newline = raw.find(b"\n")
    if newline < 0:
        raise ClipFormatError(f"malformed header: falta el salto de línea en {path}")

    header = _parse_header(raw[:newline])
    payload = raw[newline + 1:]
    expected = header["F"] * header["C"] * header["H"] * header["W"] * 4
    if len(payload) != expected:
        raise ClipFormatError(f"payload length mismatch: {len(payload)} bytes, esperados {expected}")

    digest = header.get("payload_sha256")
    if digest is not None and hashlib.sha256(payload).hexdigest() != digest:
        raise ClipFormatError(f"checksum mismatch: payload de {path}")

    array = np.frombuffer(payload, dtype="<f4").reshape(header["F"], header["C"], header["H"], header["W"])
    data = torch.from_numpy(array.astype(np.float32))
    return Video(data=data, fps=int(header.get("fps", 8)))
