#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Orquestador del experimento comparativo.

Etapas: dataset → init → entrenamiento por régimen → muestreo de todos los
regímenes sobre los pares de validación → curvas → reporte y datos de gráficas.
Toda la aleatoriedad sale de la semilla maestra por subflujos con nombre.
"""

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd
import torch
from pydantic import BaseModel, ConfigDict

from ..config import ExperimentConfig
from ..dataset.generator import ManifestEntry, load_split, make_dataset
from ..diffusion.sampling import SamplerConfig, sample_videos
from ..diffusion.schedule import NoiseSchedule, make_schedule
from ..diffusion.training import TrainConfig, train
from ..errors import StageError
from ..metrics import (
    BoundaryCurves,
    CurveSummary,
    boundary_curves,
    curve_summary,
    mean_curves,
    mean_summary,
    regime_scores,
)
from ..models.backbone import DenoiserModel, init_model
from .checkpoint import save_checkpoint

logger = logging.getLogger(__name__)

FAILED_MARKER = "FAILED"
REPORT_NAME = "report.json"
TIMINGS_NAME = "timings.json"


def derive_seed(master_seed: int, name: str) -> int:
    """Subflujo determinista con nombre a partir de la semilla maestra."""
    digest = hashlib.sha256(f"{master_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % (2 ** 63)


class ClipRow(BaseModel):
    """Resumen de un clip de validación en un régimen, promediado sobre las semillas de muestreo."""

    model_config = ConfigDict(extra="forbid")

    regime: str
    clip: str
    checksum: str
    seeds: List[int]
    deviation_start: float
    deviation_end: float
    asymmetry: float
    total_deviation: float


class ComparisonReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    master_seed: int
    seeds: Dict[str, int]
    distance_kind: str
    regimes: Dict[str, CurveSummary]
    scores: Dict[str, float]
    rows: List[ClipRow]
    gt_curves: BoundaryCurves
    regime_curves: Dict[str, BoundaryCurves]
    config: dict


@dataclass
class RegimePlan:
    """Régimen evaluado: qué modelo usa y con qué configuración de muestreo."""

    name: str
    model_key: str
    sampler: SamplerConfig


class ExperimentRunner:
    """Ejecuta el protocolo completo y persiste los artefactos en output_dir."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.output_dir = config.output_dir
        self.master_seed = config.master_seed
        self.schedule: Optional[NoiseSchedule] = None
        self.models: Dict[str, DenoiserModel] = {}
        self.timings: Dict[str, dict] = {"train": {}, "sample": {}}
        self.seeds = {
            "dataset": derive_seed(self.master_seed, "dataset"),
            "init": derive_seed(self.master_seed, "init"),
        }

    @contextmanager
    def stage(self, name: str):
        """Envolver una etapa: en caso de falla escribe FAILED y lanza StageError."""
        logger.info(f"🚀 Etapa '{name}'")
        try:
            yield
        except Exception as e:
            marker = self.output_dir / FAILED_MARKER
            marker.parent.mkdir(parents=True, exist_ok=True)
            marker.write_text(f"stage: {name}\nerror: {type(e).__name__}: {e}\n", encoding="utf-8")
            logger.error(f"❌ Etapa '{name}' falló: {e}")
            raise StageError(name, e) from e
        logger.info(f"✅ Etapa '{name}' completada")

    def run(self) -> ComparisonReport:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        stale = self.output_dir / FAILED_MARKER
        if stale.exists():
            stale.unlink()

        with self.stage("dataset"):
            train_clips, heldout_clips, heldout_entries = self.prepare_data()
        with self.stage("init"):
            self.schedule = make_schedule(self.config.schedule.T, self.config.schedule.kind)
            self.init_models()
        for key in list(self.models):
            with self.stage(f"train_{key}"):
                self.train_model(key, train_clips)
        with self.stage("sample"):
            generated = self.sample_all(heldout_clips)
        with self.stage("evaluate"):
            report = self.evaluate(generated, heldout_clips, heldout_entries)
        with self.stage("report"):
            self.write_report(report)
            emit_plot_data(report, self.output_dir / "plots")
        return report

    # ---- Etapas ----

    def prepare_data(self):
        data_dir = self.config.data_dir
        if not (data_dir / "manifest.json").exists():
            make_dataset(self.config.dataset, data_dir, seed=self.seeds["dataset"])
        else:
            logger.info(f"Usando dataset existente en {data_dir}")

        train_clips, _ = load_split(data_dir, "train")
        heldout_clips, heldout_entries = load_split(data_dir, "heldout")
        n = self.config.evaluation.heldout
        if n > len(heldout_entries):
            logger.warning(f"⚠️ Se pidieron {n} pares de validación, hay {len(heldout_entries)}")
        return train_clips, heldout_clips[:n], heldout_entries[:n]

    def init_models(self):
        backbone, efnet = self.config.backbone, self.config.efnet
        seed = self.seeds["init"]
        device = torch.device(self.config.device)
        self.models = {
            "ft": init_model(backbone, seed),
            "efvi": init_model(backbone, seed, efnet),
        }
        for ablation in self.config.evaluation.ablations:
            variant = efnet.model_copy(update={
                "ablate_zt": ablation == "EFVI_wo_zt",
                "use_temporal_embedding": ablation == "EFVI_w_ej",
            })
            self.models[ablation] = init_model(backbone, seed, variant)
        for model in self.models.values():
            model.to(device)

    def _train_config(self, key: str) -> TrainConfig:
        base = self.config.train.ft if key == "ft" else self.config.train.efvi
        seed = derive_seed(self.master_seed, f"train:{base.seed}")
        self.seeds[f"train:{key}"] = seed
        return base.model_copy(update={"seed": seed})

    def train_model(self, key: str, clips: torch.Tensor):
        config = self._train_config(key)
        losses_dir = self.output_dir / "losses"
        losses_dir.mkdir(parents=True, exist_ok=True)
        checkpoint_dir = self.output_dir / "checkpoints" / key

        started = time.perf_counter()
        train(self.models[key], clips, config, self.schedule,
              checkpoint_dir=checkpoint_dir, loss_trace_path=losses_dir / f"{key}.csv")
        self.timings["train"][key] = time.perf_counter() - started
        save_checkpoint(self.models[key], checkpoint_dir / "final")

    def regime_plans(self) -> List[RegimePlan]:
        base = self.config.sampler
        evaluation = self.config.evaluation
        plans = [
            RegimePlan("I2V", "ft", base.model_copy(update={"regime": "I2V"})),
            RegimePlan("FT", "ft", base.model_copy(update={"regime": "FT"})),
            RegimePlan("BD", "ft", base.model_copy(update={"regime": "BD"})),
        ]
        if evaluation.both_fusions:
            other = "uniform" if base.fuse_kind == "linear_ramp" else "linear_ramp"
            plans.append(RegimePlan(f"BD_{other}", "ft", base.model_copy(update={"regime": "BD", "fuse_kind": other})))
        plans.append(RegimePlan("EFVI", "efvi", base.model_copy(update={"regime": "EFVI"})))
        for w in evaluation.scale_sweep:
            plans.append(RegimePlan(f"EFVI@{w:g}", "efvi", base.model_copy(update={"regime": "EFVI", "scale_w": w})))
        for ablation in evaluation.ablations:
            plans.append(RegimePlan(ablation, ablation, base.model_copy(update={"regime": "EFVI"})))
        return plans

    def sample_all(self, heldout: torch.Tensor) -> Dict[str, Dict[int, torch.Tensor]]:
        """
        Muestrear todos los regímenes sobre todos los pares de validación.

        Para cada semilla de muestreo el ruido inicial es común a todos los regímenes.

        Returns:
            {régimen: {semilla: videos (n, F, 3, H, W)}}
        """
        c_s, c_e = heldout[:, 0], heldout[:, -1]
        tasks = []
        for plan in self.regime_plans():
            for sample_seed in self.config.evaluation.sample_seeds:
                seed = derive_seed(self.master_seed, f"sample:{sample_seed}")
                self.seeds[f"sample:{sample_seed}"] = seed
                tasks.append((plan, sample_seed, plan.sampler.model_copy(update={"seed": seed})))

        def _run(task):
            plan, sample_seed, sampler = task
            started = time.perf_counter()
            videos = sample_videos(self.models[plan.model_key], c_s, c_e, sampler, self.schedule).cpu()
            return plan.name, sample_seed, videos, time.perf_counter() - started

        generated: Dict[str, Dict[int, torch.Tensor]] = {}
        elapsed: Dict[str, float] = {}
        with ThreadPoolExecutor(max_workers=self.config.evaluation.workers) as pool:
            for name, sample_seed, videos, seconds in pool.map(_run, tasks):
                generated.setdefault(name, {})[sample_seed] = videos
                elapsed[name] = elapsed.get(name, 0.0) + seconds
                logger.info(f"  {name} seed={sample_seed}: {videos.shape[0]} clips en {seconds:.1f}s")

        n_clips = heldout.shape[0] * len(self.config.evaluation.sample_seeds)
        self.timings["sample"] = {
            name: {"total_seconds": total, "seconds_per_clip": total / n_clips} for name, total in elapsed.items()
        }
        return generated

    def evaluate(self, generated: Dict[str, Dict[int, torch.Tensor]], heldout: torch.Tensor,
                 entries: List[ManifestEntry]) -> ComparisonReport:
        kind = self.config.evaluation.distance_kind
        gt = [boundary_curves(clip, kind) for clip in heldout]
        curves_dir = self.output_dir / "curves"
        curves_dir.mkdir(parents=True, exist_ok=True)

        rows: List[ClipRow] = []
        summaries: Dict[str, CurveSummary] = {}
        regime_curves: Dict[str, BoundaryCurves] = {}
        for name, by_seed in generated.items():
            regime_rows, all_curves, records = [], [], []
            for i, entry in enumerate(entries):
                per_seed = []
                for sample_seed, videos in by_seed.items():
                    curves = boundary_curves(videos[i], kind)
                    all_curves.append(curves)
                    per_seed.append(curve_summary(curves, gt[i]))
                    frame = curves.to_frame()
                    frame.insert(0, "seed", sample_seed)
                    frame.insert(0, "checksum", entry.checksum)
                    frame.insert(0, "clip", entry.path)
                    records.append(frame)
                clip_summary = mean_summary(per_seed)
                regime_rows.append(ClipRow(
                    regime=name, clip=entry.path, checksum=entry.checksum,
                    seeds=sorted(by_seed), **clip_summary.model_dump(),
                ))
            pd.concat(records, ignore_index=True).to_csv(curves_dir / f"{name}.csv", index=False)
            summaries[name] = mean_summary([
                CurveSummary(**r.model_dump(include=set(CurveSummary.model_fields))) for r in regime_rows
            ])
            regime_curves[name] = mean_curves(all_curves)
            rows.extend(regime_rows)
            logger.info(f"  {name}: total_deviation={summaries[name].total_deviation:.6f} "
                        f"asymmetry={summaries[name].asymmetry:+.6f}")

        return ComparisonReport(
            master_seed=self.master_seed,
            seeds=dict(sorted(self.seeds.items())),
            distance_kind=kind,
            regimes=summaries,
            scores=regime_scores(summaries, self.config.evaluation.score_weights),
            rows=rows,
            gt_curves=mean_curves(gt),
            regime_curves=regime_curves,
            config=self.config.model_dump(mode="json"),
        )

    def write_report(self, report: ComparisonReport):
        report_path = self.output_dir / REPORT_NAME
        report_path.write_text(
            json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        (self.output_dir / TIMINGS_NAME).write_text(
            json.dumps(self.timings, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        logger.info(f"💾 Reporte escrito: {report_path}")


def run_experiment(config: ExperimentConfig) -> ComparisonReport:
    """Ejecutar el experimento completo; determinista dada la semilla maestra."""
    return ExperimentRunner(config).run()


def emit_plot_data(report: ComparisonReport, out_dir: Union[str, Path]) -> List[Path]:
    """
    Un CSV por régimen con las curvas medias y las de verdad de terreno, más index.json.

    Returns:
        Rutas escritas, index.json al final
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gt = report.gt_curves
    written = []
    index = {"distance_kind": report.distance_kind, "frame_indices": gt.frame_indices, "regimes": {}}

    for name in sorted(report.regime_curves):
        curves = report.regime_curves[name]
        frame = curves.to_frame()
        frame["gt_d_start"] = gt.d_start
        frame["gt_d_end"] = gt.d_end
        path = out_dir / f"{name}.csv"
        frame.to_csv(path, index=False)
        index["regimes"][name] = path.name
        written.append(path)

    index_path = out_dir / "index.json"
    index_path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(index_path)
    logger.info(f"💾 Datos de gráficas: {len(written) - 1} regímenes en {out_dir}")
    return written
