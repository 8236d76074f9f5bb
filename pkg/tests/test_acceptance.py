"""
Reproducción a escala de escritorio del orden entre regímenes.

Entrena FT y EF-VI con la configuración por defecto (decenas de minutos en CPU);
solo corre con INBETWEEN_RUN_SLOW=1.
"""

from pathlib import Path

import pandas as pd
import pytest

from src.config import load_config
from src.harness.experiment import run_experiment

REPO_ROOT = Path(__file__).resolve().parent.parent

# Techo del cociente media(últimas 100) / media(primeras 100) de la pérdida FT
# en 2000 iteraciones; valor conservador, ajustar con la primera corrida lenta.
LOSS_RATIO_CEILING = 0.95
LOSS_WINDOW = 100


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    config = load_config(REPO_ROOT / "config.yaml")
    out = tmp_path_factory.mktemp("default_run")
    config = config.model_copy(update={
        "paths": config.paths.model_copy(update={"output_dir": str(out)}),
        "logging": config.logging.model_copy(update={"file": None}),
    })
    return out, run_experiment(config)


@pytest.fixture(scope="module")
def default_report(default_run):
    return default_run[1]


@pytest.mark.slow
def test_end_frame_net_beats_finetuning_beats_bidirectional(default_report):
    regimes = default_report.regimes
    assert regimes["EFVI"].total_deviation < regimes["FT"].total_deviation
    assert regimes["BD"].total_deviation > regimes["FT"].total_deviation


@pytest.mark.slow
def test_unit_scale_is_best_among_sweep(default_report):
    deviations = {w: default_report.regimes[f"EFVI@{w:g}"].total_deviation for w in (0.5, 1.0, 2.0)}
    assert min(deviations, key=deviations.get) == 1.0


@pytest.mark.slow
def test_report_covers_protocol(default_report):
    assert len(default_report.gt_curves) == 7
    assert len({r.clip for r in default_report.rows if r.regime == "FT"}) == 32
    assert all(r.seeds == [0, 1, 2] for r in default_report.rows)


@pytest.mark.slow
def test_finetuning_loss_decreases(default_run):
    out, _ = default_run
    trace = pd.read_csv(out / "losses" / "ft.csv")
    assert len(trace) == 2000

    initial = trace["loss"].head(LOSS_WINDOW).mean()
    final = trace["loss"].tail(LOSS_WINDOW).mean()
    assert final < initial
    assert final / initial < LOSS_RATIO_CEILING, f"pérdida {initial:.4f} -> {final:.4f}"
