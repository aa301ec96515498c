"""
Histograma distribuído: atualizações aleatórias enviadas ao dono do bucket
"""
import struct
from typing import Any, List

import numpy as np

from src.runtime.handle import Handle
from .base_workload import BaseWorkload, RankState
from .interfaces import WorkloadSpec, WorkReport, World

UPDATE = struct.Struct('<Q')


def table_size(spec: WorkloadSpec) -> int:
    return spec.scale * int(spec.params.get('table_factor', 1))


def update_stream(spec: WorkloadSpec, rank: int) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, rank])
    return rng.integers(0, table_size(spec), size=spec.scale, dtype=np.uint64)


class HistogramState(RankState):

    def __init__(self, lo: int, hi: int):
        super().__init__()
        self.lo = lo
        self.counts = np.zeros(hi - lo, dtype=np.int64)


class HistogramWorkload(BaseWorkload):
    """Tabela de scale·table_factor buckets particionada em blocos"""

    name = "histogram"

    def _setup(self, spec: WorkloadSpec, world: World) -> HistogramState:
        lo, hi = world.block_range(table_size(spec))
        return HistogramState(lo, hi)

    def _send_phase(self, spec, handle, world, state, on_message) -> None:
        n = table_size(spec)
        block = World.block(n, world.world_size)
        indices = update_stream(spec, world.rank)
        owners = (indices // np.uint64(block)).astype(np.int64)
        payload = indices.astype('<u8').tobytes()
        for i, dst in enumerate(owners.tolist()):
            self.send(handle, dst, payload[8 * i:8 * i + 8], on_message)
        # Leitura do fluxo de índices
        state.local_bytes += indices.nbytes

    def _on_message(self, message: bytes, state: HistogramState, handle: Handle, world: World) -> None:
        (index,) = UPDATE.unpack(message)
        state.counts[index - state.lo] += 1
        # Leitura e escrita do contador
        state.local_bytes += 2 * state.counts.itemsize

    def _collect(self, state: HistogramState) -> Any:
        return state.counts

    def merge(self, outputs: List[Any], spec: WorkloadSpec, world_size: int) -> np.ndarray:
        return np.concatenate([np.asarray(o, dtype=np.int64) for o in outputs]) if outputs else np.zeros(0, np.int64)

    def oracle(self, spec: WorkloadSpec, world_size: int) -> np.ndarray:
        n = table_size(spec)
        counts = np.zeros(n, dtype=np.int64)
        for rank in range(world_size):
            counts += np.bincount(update_stream(spec, rank).astype(np.int64), minlength=n)
        return counts

    def digest(self, result: Any) -> str:
        return self.hash_bytes(np.asarray(result, dtype='<i8'))


def histogram(spec: WorkloadSpec, handle: Handle) -> WorkReport:
    return HistogramWorkload().run_rank(spec, handle, World(handle.my_rank, handle.world_size))
