"""
SSSP assíncrono por correção de rótulos; termina pela quiescência de finalize
"""
import struct
from typing import Any, List

import numpy as np

from src.runtime.handle import Handle
from .base_workload import BaseWorkload, RankState
from .graphs import build_graph, dijkstra_distances
from .interfaces import WorkloadSpec, WorkReport, World

RELAX = struct.Struct('<II')
UNREACHED = -1
SOURCE = 0


class SsspState(RankState):

    def __init__(self, lo: int, hi: int, block: int, targets: List[np.ndarray], weights: List[np.ndarray]):
        super().__init__()
        self.lo = lo
        self.block = block
        self.dist = np.full(hi - lo, UNREACHED, dtype=np.int32)
        # Vizinhos (u32) e pesos (u8) dos vértices do rank
        self.targets = targets
        self.weights = weights
        self.improvements = 0


class SsspWorkload(BaseWorkload):
    """Pesos inteiros 1–10, fonte no vértice 0"""

    name = "sssp"

    def _setup(self, spec: WorkloadSpec, world: World) -> SsspState:
        graph = build_graph(spec, weighted=True)
        lo, hi = world.block_range(spec.scale)
        targets, weights = [], []
        for v in range(lo, hi):
            edges = sorted((int(x), int(data['weight'])) for x, data in graph.adj[v].items())
            targets.append(np.array([x for x, _ in edges], dtype=np.uint32))
            weights.append(np.array([w for _, w in edges], dtype=np.uint8))
        return SsspState(lo, hi, World.block(spec.scale, world.world_size), targets, weights)

    def _send_phase(self, spec, handle, world, state, on_message) -> None:
        if state.lo <= SOURCE < state.lo + len(state.dist):
            self._improve(SOURCE, 0, state, handle)

    def _improve(self, vertex: int, distance: int, state: SsspState, handle: Handle) -> None:
        local = vertex - state.lo
        state.dist[local] = distance
        state.local_bytes += state.dist.itemsize
        state.improvements += 1
        targets, weights = state.targets[local], state.weights[local]
        state.local_bytes += targets.nbytes + weights.nbytes
        for neighbor, weight in zip(targets.tolist(), weights.tolist()):
            self.send_reactive(handle, neighbor // state.block, RELAX.pack(neighbor, distance + weight))

    def _on_message(self, message: bytes, state: SsspState, handle: Handle, world: World) -> None:
        vertex, distance = RELAX.unpack(message)
        current = int(state.dist[vertex - state.lo])
        state.local_bytes += state.dist.itemsize
        if current == UNREACHED or distance < current:
            self._improve(vertex, distance, state, handle)

    def _collect(self, state: SsspState) -> np.ndarray:
        return state.dist.astype(np.int64)

    def merge(self, outputs: List[Any], spec: WorkloadSpec, world_size: int) -> np.ndarray:
        return np.concatenate([np.asarray(o, dtype=np.int64) for o in outputs])

    def oracle(self, spec: WorkloadSpec, world_size: int) -> np.ndarray:
        return dijkstra_distances(build_graph(spec, weighted=True), SOURCE)

    def digest(self, result: Any) -> str:
        return self.hash_bytes(np.asarray(result, dtype='<i8'))


def sssp(spec: WorkloadSpec, handle: Handle) -> WorkReport:
    return SsspWorkload().run_rank(spec, handle, World(handle.my_rank, handle.world_size))
