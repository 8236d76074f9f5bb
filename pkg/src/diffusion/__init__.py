"""
Calendario de ruido, muestreo por regímenes y entrenamiento
"""

from .schedule import NoiseSchedule, ScheduleConfig, add_noise, make_schedule
from .sampling import (
    SamplerConfig,
    decode_to_video,
    fuse,
    fuse_weights,
    predict_clean,
    sample,
    sample_bidirectional,
    sample_bidirectional_latent,
    sample_latent,
    sample_step,
    sample_videos,
    timestep_sequence,
)
from .training import TrainConfig, TrainResult, train, training_loss

__all__ = [
    "NoiseSchedule",
    "ScheduleConfig",
    "add_noise",
    "make_schedule",
    "SamplerConfig",
    "decode_to_video",
    "fuse",
    "fuse_weights",
    "predict_clean",
    "sample",
    "sample_bidirectional",
    "sample_bidirectional_latent",
    "sample_latent",
    "sample_step",
    "sample_videos",
    "timestep_sequence",
    "TrainConfig",
    "TrainResult",
    "train",
    "training_loss",
]
