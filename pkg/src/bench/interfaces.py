"""
Interfaces para o layer de benchmarks seguindo princípios SOLID
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

from src.utils.errors import ConfigurationError
from src.wire.codec import HEADER_SIZE

WORKLOAD_KINDS = ('histogram', 'transpose', 'tricount', 'sssp', 'synthetic')


@dataclass
class WorkloadSpec:
    """Carga de trabalho: tipo, tamanho, semente e parâmetros específicos"""
    kind: str = 'histogram'
    scale: int = 4096
    seed: int = 42
    mc_target: float = 0.0
    params: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> 'WorkloadSpec':
        values = dict(values or {})
        spec = cls(
            kind=str(values.get('kind', cls.kind)),
            scale=int(values.get('scale', cls.scale)),
            seed=int(values.get('seed', cls.seed)),
            mc_target=float(values.get('mc_target', cls.mc_target)),
            params=dict(values.get('params') or {}),
        )
        spec.validate()
        return spec

    def validate(self) -> None:
        if self.kind not in WORKLOAD_KINDS:
            raise ConfigurationError(f"Carga desconhecida: {self.kind} (opções: {', '.join(WORKLOAD_KINDS)})")
        if self.scale <= 0:
            raise ConfigurationError("scale deve ser > 0")
        if self.mc_target < 0:
            raise ConfigurationError("mc_target deve ser >= 0")

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'scale': self.scale, 'seed': self.seed,
                'mc_target': self.mc_target, 'params': dict(self.params)}


@dataclass(frozen=True)
class World:
    """Posição do rank e particionamento em blocos contíguos"""
    rank: int
    world_size: int

    @staticmethod
    def block(n: int, world_size: int) -> int:
        return max(1, -(-n // world_size))

    def block_range(self, n: int) -> Tuple[int, int]:
        block = self.block(n, self.world_size)
        lo = min(n, self.rank * block)
        return lo, min(n, lo + block)

    def owner(self, index: int, n: int) -> int:
        return index // self.block(n, self.world_size)


@dataclass
class WorkReport:
    """Resultado de um rank: contadores exatos e saída parcial"""
    result_digest: str = ""
    local_bytes: int = 0
    sent_bytes: int = 0
    sent_msgs: int = 0
    recv_msgs: int = 0
    wall_time: float = 0.0
    output: Any = None
    runtime_stats: Dict[str, Any] = field(default_factory=dict)

    @property
    def routed_bytes(self) -> int:
        return self.sent_bytes + HEADER_SIZE * self.sent_msgs

    @property
    def mc_ratio(self) -> float:
        routed = self.routed_bytes
        return self.local_bytes / routed if routed else 0.0


class IWorkload(ABC):
    """Interface para cargas de trabalho distribuídas (Single Responsibility)"""

    name: str

    @abstractmethod
    def run_rank(self, spec: WorkloadSpec, handle, world: World) -> WorkReport:
        """Executa a parte de um rank até a quiescência (inclui finalize)"""
        pass

    @abstractmethod
    def merge(self, outputs: List[Any], spec: WorkloadSpec, world_size: int) -> Any:
        """Combina as saídas parciais em um resultado global"""
        pass

    @abstractmethod
    def oracle(self, spec: WorkloadSpec, world_size: int) -> Any:
        """Calcula serialmente o resultado esperado"""
        pass

    @abstractmethod
    def digest(self, result: Any) -> str:
        """Checksum da forma canônica do resultado"""
        pass
