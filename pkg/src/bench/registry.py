"""
Registro das cargas de trabalho disponíveis
"""
from typing import Dict, Type

from src.utils.errors import ConfigurationError
from .base_workload import BaseWorkload
from .histogram import HistogramWorkload
from .sssp import SsspWorkload
from .synthetic import SyntheticWorkload
from .transpose import TransposeWorkload
from .triangle import TriangleWorkload

WORKLOADS: Dict[str, Type[BaseWorkload]] = {
    'histogram': HistogramWorkload,
    'transpose': TransposeWorkload,
    'tricount': TriangleWorkload,
    'sssp': SsspWorkload,
    'synthetic': SyntheticWorkload,
}


def get_workload(kind: str) -> BaseWorkload:
    """Cria a carga pelo nome"""
    try:
        return WORKLOADS[kind]()
    except KeyError:
        raise ConfigurationError(f"Carga desconhecida: {kind} (opções: {', '.join(WORKLOADS)})") from None
