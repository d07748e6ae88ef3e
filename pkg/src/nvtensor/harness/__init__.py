from .config import ConfigError, EngineBlock, ExperimentConfig, ModelBlock, QFIBlock, validate
from .csvio import NonFiniteError, read_series, write_series
from .experiments import EXPERIMENTS, NEEDS_ED, ErrorMetrics, RunRecord, error_metrics, run_experiment
