#!/usr/bin/env python3
"""
CLI del laboratorio: python -m src.harness <comando>

Códigos de salida: 0 éxito, 1 error de validación, 2 falla en ejecución.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import torch
from pydantic import ValidationError

from ..codec import flip_probe
from ..config import ExperimentConfig, load_config
from ..dataset.generator import load_split, make_dataset
from ..dataset.video import Video, load_clip, save_clip
from ..diffusion.sampling import sample, sample_bidirectional
from ..diffusion.schedule import make_schedule
from ..diffusion.training import train
from ..errors import LabValidationError, StageError
from ..metrics import boundary_curves, curve_summary
from ..models.backbone import init_model
from .checkpoint import load_checkpoint, save_checkpoint
from .experiment import derive_seed, run_experiment

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

logger = logging.getLogger("src.harness")


def setup_logging(level: str = "INFO", log_file: Optional[str] = None,
                  fmt: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"):
    handlers = [logging.StreamHandler()]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=getattr(logging, level.upper()), format=fmt, handlers=handlers)


def print_results(results: dict):
    print(json.dumps(results, indent=2, sort_keys=True, default=str))


def build_parser() -> argparse.ArgumentParser:
    # opciones comunes, válidas antes o después del subcomando
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="Archivo de configuración YAML/JSON")
    common.add_argument("--log-level", default=argparse.SUPPRESS, choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(description="Laboratorio de inbetweening con restricción del cuadro final",
                                     parents=[common])
    subparsers = parser.add_subparsers(dest="command", help="Comandos disponibles")

    gen_parser = subparsers.add_parser("gen-data", parents=[common], help="🎬 Generar el dataset sintético")
    gen_parser.add_argument("--out", default=None, help="Directorio del dataset")
    gen_parser.add_argument("--seed", type=int, default=None, help="Semilla del dataset")

    train_parser = subparsers.add_parser("train", parents=[common], help="Entrenar un régimen")
    train_parser.add_argument("--regime", required=True, choices=["ft", "efvi"])
    train_parser.add_argument("--data", default=None, help="Directorio del dataset")
    train_parser.add_argument("--out", required=True, help="Directorio del checkpoint final")
    train_parser.add_argument("--iterations", type=int, default=None)
    train_parser.add_argument("--init-from", default=None, help="Checkpoint inicial (p. ej. FT para EF-VI)")

    sample_parser = subparsers.add_parser("sample", parents=[common], help="Generar un video entre dos cuadros")
    sample_parser.add_argument("--regime", required=True, choices=["i2v", "ft", "bd", "efvi"])
    sample_parser.add_argument("--checkpoint", required=True)
    sample_parser.add_argument("--clip", required=True, help="Clip del que se toman los cuadros 1 y F")
    sample_parser.add_argument("--out", required=True, help="Clip generado")
    sample_parser.add_argument("--seed", type=int, default=None)
    sample_parser.add_argument("--steps", type=int, default=None)
    sample_parser.add_argument("--scale-w", type=float, default=None)

    probe_parser = subparsers.add_parser("probe-flip", parents=[common], help="Sonda de conmutatividad Flip/codec")
    probe_parser.add_argument("--clip", required=True)
    probe_parser.add_argument("--mode", default="causal", choices=["causal", "spatial_only"])
    probe_parser.add_argument("--report", default=None, help="JSON de salida con el reporte")

    curves_parser = subparsers.add_parser("curves", parents=[common], help="Curvas de distancia a los cuadros frontera")
    curves_parser.add_argument("--video", required=True)
    curves_parser.add_argument("--ref-start", default=None, help="Clip cuyo primer cuadro reemplaza la referencia inicial")
    curves_parser.add_argument("--ref-end", default=None, help="Clip cuyo último cuadro reemplaza la referencia final")
    curves_parser.add_argument("--kind", default=None, choices=["mse", "mae"])
    curves_parser.add_argument("--out", required=True, help="CSV de salida")

    eval_parser = subparsers.add_parser("eval", parents=[common], help="Comparar un clip generado con su verdad de terreno")
    eval_parser.add_argument("--video", required=True)
    eval_parser.add_argument("--reference", required=True)
    eval_parser.add_argument("--kind", default=None, choices=["mse", "mae"])
    eval_parser.add_argument("--out", default=None, help="JSON de salida")

    subparsers.add_parser("run-experiment", parents=[common], help="🚀 Protocolo completo de comparación")
    return parser


def cmd_gen_data(args, config: ExperimentConfig) -> dict:
    out = Path(args.out) if args.out else config.data_dir
    seed = args.seed if args.seed is not None else derive_seed(config.master_seed, "dataset")
    manifest = make_dataset(config.dataset, out, seed=seed)
    return {"data_dir": str(out), "seed": seed, "train": len(manifest.split("train")),
            "heldout": len(manifest.split("heldout"))}


def cmd_train(args, config: ExperimentConfig) -> dict:
    regime = args.regime.upper()
    data_dir = Path(args.data) if args.data else config.data_dir
    clips, _ = load_split(data_dir, "train")

    base = config.train.ft if regime == "FT" else config.train.efvi
    update = {"seed": derive_seed(config.master_seed, f"train:{base.seed}")}
    if args.iterations is not None:
        update["iterations"] = args.iterations
    train_config = base.model_copy(update=update)

    efnet = config.efnet if regime == "EFVI" else None
    model = init_model(config.backbone, derive_seed(config.master_seed, "init"), efnet)
    if args.init_from:
        load_checkpoint(args.init_from, model)
    model.to(torch.device(config.device))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    schedule = make_schedule(config.schedule.T, config.schedule.kind)
    result = train(model, clips, train_config, schedule, checkpoint_dir=out / "periodic",
                   loss_trace_path=out / "losses.csv")
    save_checkpoint(model, out)
    return {"regime": regime, "checkpoint": str(out), "final_loss": result.final_loss}


def cmd_sample(args, config: ExperimentConfig) -> dict:
    regime = args.regime.upper()
    model = load_checkpoint(args.checkpoint)
    model.to(torch.device(config.device))
    clip = load_clip(args.clip)

    update = {"regime": regime}
    for key, value in (("seed", args.seed), ("steps", args.steps), ("scale_w", args.scale_w)):
        if value is not None:
            update[key] = value
    sampler = config.sampler.model_copy(update=update)
    schedule = make_schedule(config.schedule.T, config.schedule.kind)

    generate = sample_bidirectional if regime == "BD" else sample
    video = generate(model, clip.start_frame, clip.end_frame, sampler, schedule)
    video.fps = clip.fps
    checksum = save_clip(video, args.out)
    return {"regime": regime, "out": args.out, "checksum": checksum, "seed": sampler.seed}


def cmd_probe_flip(args, config: ExperimentConfig) -> dict:
    report = flip_probe(load_clip(args.clip), args.mode).model_dump()
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        logger.info(f"💾 Reporte Flip/codec: {args.report}")
    return report


def cmd_curves(args, config: ExperimentConfig) -> dict:
    data = load_clip(args.video).data.clone()
    if args.ref_start:
        data[0] = load_clip(args.ref_start).start_frame
    if args.ref_end:
        data[-1] = load_clip(args.ref_end).end_frame
    curves = boundary_curves(Video(data=data), args.kind or config.evaluation.distance_kind)
    curves.to_frame().to_csv(args.out, index=False)
    return {"out": args.out, "frames": len(curves)}


def cmd_eval(args, config: ExperimentConfig) -> dict:
    kind = args.kind or config.evaluation.distance_kind
    summary = curve_summary(
        boundary_curves(load_clip(args.video), kind),
        boundary_curves(load_clip(args.reference), kind),
    )
    if args.out:
        Path(args.out).write_text(json.dumps(summary.model_dump(), indent=2, sort_keys=True) + "\n")
    return summary.model_dump()


def cmd_run_experiment(args, config: ExperimentConfig) -> dict:
    report = run_experiment(config)
    return {
        "output_dir": str(config.output_dir),
        "regimes": {name: s.total_deviation for name, s in report.regimes.items()},
        "scores": report.scores,
    }


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "sample": cmd_sample,
    "probe-flip": cmd_probe_flip,
    "curves": cmd_curves,
    "eval": cmd_eval,
    "run-experiment": cmd_run_experiment,
}


def _is_validation(error: Exception) -> bool:
    if isinstance(error, StageError):
        error = error.cause
    return isinstance(error, (LabValidationError, ValidationError))


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # --help sale con 0; cualquier error de uso es de validación
        return EXIT_OK if e.code in (0, None) else EXIT_VALIDATION
    if args.command is None:
        parser.print_help()
        return EXIT_VALIDATION

    log_level = getattr(args, "log_level", None)

    try:
        config = load_config(getattr(args, "config", None))
    except Exception as e:
        setup_logging(log_level or "INFO")
        logger.error(f"❌ Configuración inválida: {e}")
        return EXIT_VALIDATION if _is_validation(e) else EXIT_RUNTIME

    setup_logging(log_level or config.logging.level, config.logging.file, config.logging.format)

    try:
        results = COMMANDS[args.command](args, config)
        print_results(results)
        return EXIT_OK
    except Exception as e:
        logger.error(f"❌ Error en '{args.command}': {e}")
        return EXIT_VALIDATION if _is_validation(e) else EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
