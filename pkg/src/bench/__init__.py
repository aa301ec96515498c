# Pacote de benchmarks
from .interfaces import IWorkload, WorkloadSpec, WorkReport, World, WORKLOAD_KINDS
from .base_workload import BaseWorkload
from .histogram import HistogramWorkload, histogram
from .transpose import TransposeWorkload, sparse_transpose
from .triangle import TriangleWorkload, triangle_count
from .sssp import SsspWorkload, sssp
from .synthetic import SyntheticWorkload, synthetic
from .registry import WORKLOADS, get_workload
