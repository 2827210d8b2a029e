"""Experiment orchestration: sweeps, the ablation grid, plots and the CLI."""
from sevae.harness.config import (DEFAULT_FLAGS, FLAG_NAMES, AblationSpec, ExperimentConfig,
                                  MetricSpec, ModelSpec, config_from_dict, load_config)
from sevae.harness.plots import emit_plots
from sevae.harness.runs import (AblationCell, AblationDelta, ablation_cells, ablation_deltas,
                                prepare_data, read_rows, run_ablation, run_seed, run_sweep,
                                subsample)

__all__ = [
    "DEFAULT_FLAGS", "FLAG_NAMES", "AblationSpec", "ExperimentConfig", "MetricSpec", "ModelSpec",
    "config_from_dict", "load_config", "emit_plots", "AblationCell", "AblationDelta",
    "ablation_cells", "ablation_deltas", "prepare_data", "read_rows", "run_ablation", "run_seed",
    "run_sweep", "subsample",
]
