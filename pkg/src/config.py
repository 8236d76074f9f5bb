#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Configuración del experimento.

YAML (o JSON) con expansión de variables ${VAR} / ${VAR:-default} y
validación estricta: los campos desconocidos son errores.
"""

import logging
import os
import re
from pathlib import Path
from typing import Any, List, Literal, Optional, Tuple, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .codec import CausalHaarCodec
from .dataset.generator import DatasetConfig
from .diffusion.sampling import SamplerConfig
from .diffusion.schedule import ScheduleConfig
from .diffusion.training import TrainConfig
from .errors import LabValidationError
from .models.backbone import BackboneConfig
from .models.efnet import EFNetConfig

logger = logging.getLogger(__name__)

_ENV_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)(?::-([^}]*))?\}")


class TrainSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    ft: TrainConfig = Field(default_factory=lambda: TrainConfig(regime="FT"))
    efvi: TrainConfig = Field(default_factory=lambda: TrainConfig(regime="EFVI"))

    @model_validator(mode="after")
    def _check_regimes(self) -> "TrainSection":
        if self.ft.regime != "FT" or self.efvi.regime != "EFVI":
            raise ValueError("train.ft debe usar regime FT y train.efvi regime EFVI")
        return self


class EvaluationConfig(BaseModel):
    """Protocolo de evaluación sobre los pares de validación."""

    model_config = ConfigDict(extra="forbid")

    heldout: int = Field(32, ge=1)
    sample_seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    distance_kind: Literal["mse", "mae"] = "mse"
    scale_sweep: List[float] = Field(default_factory=lambda: [0.5, 1.0, 1.5, 2.0])
    ablations: List[Literal["EFVI_wo_zt", "EFVI_w_ej"]] = Field(default_factory=list)
    both_fusions: bool = True
    score_weights: Tuple[float, float] = (0.5, 0.5)
    workers: int = Field(1, ge=1)


class LoggingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    file: Optional[str] = "logs/lab.log"


class PathsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    output_dir: str = "runs/default"
    data_dir: Optional[str] = None
    logs: str = "logs"


class ExperimentConfig(BaseModel):
    """Documento completo de configuración; cada campo tiene valor por defecto."""

    model_config = ConfigDict(extra="forbid")

    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    efnet: EFNetConfig = Field(default_factory=EFNetConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    train: TrainSection = Field(default_factory=TrainSection)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)
    master_seed: int = 20240917
    device: str = "cpu"

    @model_validator(mode="after")
    def _check_geometry(self) -> "ExperimentConfig":
        codec = CausalHaarCodec()
        expected = (
            codec.latent_frames(self.dataset.frames),
            codec.latent_channels(3),
            self.dataset.height,
            self.dataset.width,
        )
        got = (self.backbone.frames, self.backbone.channels, self.backbone.height, self.backbone.width)
        if got != expected:
            raise ValueError(f"Geometría del backbone (f, c', H, W)={got} no coincide con el dataset {expected}")
        try:
            self.efnet.check_against(self.backbone)
        except LabValidationError as e:
            raise ValueError(str(e)) from e
        return self

    @property
    def output_dir(self) -> Path:
        return Path(self.paths.output_dir)

    @property
    def data_dir(self) -> Path:
        return Path(self.paths.data_dir) if self.paths.data_dir else self.output_dir / "data"


def expand_env_vars(value: Any) -> Any:
    """Expandir ${VAR} y ${VAR:-default} recursivamente en cadenas del documento."""
    if isinstance(value, dict):
        return {k: expand_env_vars(v) for k, v in value.items()}
    if isinstance(value, list):
        return [expand_env_vars(v) for v in value]
    if isinstance(value, str):
        def _replace(match):
            name, default = match.group(1), match.group(2)
            if name in os.environ:
                return os.environ[name]
            return default if default is not None else match.group(0)
        return _ENV_PATTERN.sub(_replace, value)
    return value


def load_config(path: Optional[Union[str, Path]] = None) -> ExperimentConfig:
    """
    Cargar y validar la configuración.

    Sin path se usan todos los valores por defecto. Carga .env si existe.

    Raises:
        LabValidationError: archivo inexistente o documento que no es un mapeo
        pydantic.ValidationError: campos desconocidos o valores inválidos
    """
    load_dotenv()
    if path is None:
        return ExperimentConfig()

    path = Path(path)
    if not path.exists():
        raise LabValidationError(f"No existe el archivo de configuración: {path}")

    with open(path, "r", encoding="utf-8") as f:
        document = yaml.safe_load(f)
    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise LabValidationError(f"La configuración debe ser un mapeo, recibido {type(document).__name__}")

    config = ExperimentConfig.model_validate(expand_env_vars(document))
    logger.debug(f"Configuración cargada de {path}")
    return config
