from .base import Writer
from .checkpoint import read_checkpoint, write_checkpoint
from .metrics import MetricsWriter, read_metrics, render_summary, write_convergence_csv
from .prepared import PreparedData, read_prepared, write_prepared

__all__ = [
    "MetricsWriter",
    "PreparedData",
    "Writer",
    "read_checkpoint",
    "read_metrics",
    "read_prepared",
    "render_summary",
    "write_checkpoint",
    "write_convergence_csv",
    "write_prepared",
]
