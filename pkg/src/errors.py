#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Errores del laboratorio de inbetweening
"""


class LabError(Exception):
    """Error base del laboratorio."""


class LabValidationError(LabError, ValueError):
    """Entrada, geometría o configuración inválida (código de salida 1)."""


class ClipFormatError(LabError):
    """Archivo de clip malformado o corrupto."""


class CheckpointError(LabError):
    """Checkpoint inconsistente: manifiesto y blob no coinciden o nombres desconocidos."""


class DivergenceError(LabError):
    """La pérdida dejó de ser finita durante el entrenamiento."""

    def __init__(self, iteration: int, loss: float):
        super().__init__(f"Pérdida no finita ({loss}) en la iteración {iteration}")
        self.iteration = iteration
        self.loss = loss


class StageError(LabError):
    """Falla de una etapa del experimento."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"Etapa '{stage}' falló: {cause}")
        self.stage = stage
        self.cause = cause
