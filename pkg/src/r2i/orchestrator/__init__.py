"""Training loop, evaluation, sweeps and run configuration."""

from .checkpoint import CHECKPOINT_FORMAT, CHECKPOINT_VERSION, CheckpointMismatch, load_checkpoint, save_checkpoint
from .config import PRESETS, SCHEMA_VERSION, SEED_STREAMS, RunConfig, load_config, split_seeds
from .metrics import TIMING_KEYS, MetricsWriter, read_metrics, without_timing
from .sweep import CSV_COLUMNS, SweepGrid, aggregate, load_grid, plot_csv, run_sweep
from .trainer import EvalResult, Trainer, TrainingAborted, build_agent, evaluate, evaluate_agent, train
