"""
Carga sintética com razão M:C controlada: rajadas de envios pequenos
intercaladas com passagens de streaming sobre um buffer maior que a cache
"""
import struct
from functools import lru_cache
from typing import Any, List, Tuple

import numpy as np

from src.runtime.handle import Handle
from src.wire.codec import HEADER_SIZE
from .base_workload import BaseWorkload, RankState
from .interfaces import WorkloadSpec, WorkReport, World

PREFIX = struct.Struct('<II')
DEFAULT_PAYLOAD_SIZE = 24
DEFAULT_BURST = 64
DEFAULT_CACHE_BYTES = 32 * 1024 * 1024


@lru_cache(maxsize=2)
def stream_buffer(nbytes: int) -> np.ndarray:
    """Buffer somente leitura compartilhado pelos ranks do processo"""
    buffer = np.ones(max(1, nbytes // 8), dtype=np.float64)
    buffer.setflags(write=False)
    return buffer


def buffer_bytes(spec: WorkloadSpec) -> int:
    cache = int(spec.params.get('cache_bytes', DEFAULT_CACHE_BYTES))
    return int(spec.params.get('buffer_bytes', 4 * cache))


def rank_messages(spec: WorkloadSpec, world: World) -> Tuple[np.ndarray, List[bytes]]:
    """Destinos e payloads determinísticos de um rank"""
    size = max(PREFIX.size, int(spec.params.get('payload_size', DEFAULT_PAYLOAD_SIZE)))
    rng = np.random.default_rng([spec.seed, world.rank])
    destinations = rng.integers(0, world.world_size, size=spec.scale, dtype=np.int64)
    filler = rng.bytes(spec.scale * (size - PREFIX.size))
    width = size - PREFIX.size
    payloads = [PREFIX.pack(world.rank, seq) + filler[seq * width:(seq + 1) * width]
                for seq in range(spec.scale)]
    return destinations, payloads


class SyntheticState(RankState):

    def __init__(self, buffer: np.ndarray):
        super().__init__()
        self.buffer = buffer
        # Próxima posição da passagem de streaming; percorre o buffer inteiro antes de repetir
        self.cursor = 0
        self.checksum = 0.0
        self.received: List[bytes] = []


class SyntheticWorkload(BaseWorkload):
    """local_bytes ≈ mc_target × bytes roteados; mc_target = 0 é comunicação pura"""

    name = "synthetic"

    def _setup(self, spec: WorkloadSpec, world: World) -> SyntheticState:
        buffer = stream_buffer(buffer_bytes(spec)) if spec.mc_target > 0 else np.zeros(0)
        return SyntheticState(buffer)

    def _stream(self, state: SyntheticState, nbytes: int) -> None:
        buffer = state.buffer
        size = len(buffer)
        while nbytes > 0:
            count = min(size - state.cursor, max(1, nbytes // buffer.itemsize))
            chunk = buffer[state.cursor:state.cursor + count]
            state.checksum += float(chunk.sum())
            state.local_bytes += chunk.nbytes
            nbytes -= chunk.nbytes
            state.cursor = (state.cursor + count) % size

    def _send_phase(self, spec, handle, world, state, on_message) -> None:
        destinations, payloads = rank_messages(spec, world)
        burst = max(1, int(spec.params.get('burst', DEFAULT_BURST)))
        routed = 0
        for start in range(0, len(payloads), burst):
            for index in range(start, min(start + burst, len(payloads))):
                payload = payloads[index]
                self.send(handle, int(destinations[index]), payload, on_message)
                routed += HEADER_SIZE + len(payload)
            if spec.mc_target > 0:
                self._stream(state, int(spec.mc_target * routed) - state.local_bytes)

    def _on_message(self, message: bytes, state: SyntheticState, handle: Handle, world: World) -> None:
        state.received.append(bytes(message))

    def _collect(self, state: SyntheticState) -> List[bytes]:
        return sorted(state.received)

    def merge(self, outputs: List[Any], spec: WorkloadSpec, world_size: int) -> List[List[bytes]]:
        return [sorted(o) for o in outputs]

    def oracle(self, spec: WorkloadSpec, world_size: int) -> List[List[bytes]]:
        inbox: List[List[bytes]] = [[] for _ in range(world_size)]
        for rank in range(world_size):
            destinations, payloads = rank_messages(spec, World(rank, world_size))
            for dst, payload in zip(destinations.tolist(), payloads):
                inbox[dst].append(payload)
        return [sorted(box) for box in inbox]

    def digest(self, result: Any) -> str:
        # Aceita a saída de um rank (lista de payloads) ou o resultado global
        if result and isinstance(result[0], list):
            return self.hash_bytes(*(PREFIX.pack(len(box), 0) + b''.join(box) for box in result))
        return self.hash_bytes(b''.join(result))


def synthetic(spec: WorkloadSpec, handle: Handle) -> WorkReport:
    return SyntheticWorkload().run_rank(spec, handle, World(handle.my_rank, handle.world_size))
