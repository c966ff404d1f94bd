"""Goal-oriented sampling and hybrid generative/LZMA compression of KPI telemetry."""

from .config import ExperimentConfig
from .estimator import GenZipCompressor, GoalOrientedGenZip
from .model import GenZipModel, ModelConfig
from .tasks import TaskSpec, default_tasks

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig", "GenZipCompressor", "GenZipModel", "GoalOrientedGenZip",
    "ModelConfig", "TaskSpec", "default_tasks", "__version__",
]
