from .metrics import RunMetrics, coupling_score, report, summarize
from .run import SimResult, run_workload
from .workload import Workload, WorkloadError, load_workload, workload_from_dict

__all__ = [
    "RunMetrics", "SimResult", "Workload", "WorkloadError", "coupling_score",
    "load_workload", "report", "run_workload", "summarize",
    "workload_from_dict",
]
