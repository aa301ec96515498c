"""
Contagem de triângulos por consultas de cunha ao dono da adjacência
"""
import struct
from typing import Any, List

import networkx as nx
import numpy as np

from src.runtime.handle import Handle
from .base_workload import BaseWorkload, RankState
from .graphs import adjacency_bitset, brute_force_triangles, build_graph, sorted_adjacency
from .interfaces import WorkloadSpec, WorkReport, World

QUERY = struct.Struct('<II')
# Acima disto o oráculo usa nx.triangles no lugar da força bruta
BRUTE_FORCE_LIMIT = 200


class TriangleState(RankState):

    def __init__(self, graph: nx.Graph, lo: int, hi: int):
        super().__init__()
        self.graph = graph
        self.lo = lo
        self.neighbors = sorted_adjacency(graph, dtype=np.uint32)
        # Uma linha de bits por vértice local: a consulta lê um único byte
        self.bits = adjacency_bitset(graph, lo, hi)
        self.matches = 0


class TriangleWorkload(BaseWorkload):
    """Para cada aresta (u, v) com u < v e vizinho w > v de u, pergunta ao dono de v se (v, w) existe"""

    name = "tricount"

    def _setup(self, spec: WorkloadSpec, world: World) -> TriangleState:
        lo, hi = world.block_range(spec.scale)
        return TriangleState(build_graph(spec), lo, hi)

    def _send_phase(self, spec, handle, world, state, on_message) -> None:
        block = World.block(spec.scale, world.world_size)
        lo, hi = world.block_range(spec.scale)
        for u in range(lo, hi):
            adj = state.neighbors[u]
            width = adj.itemsize
            ids = adj.tolist()
            for index, v in enumerate(ids):
                state.local_bytes += width
                if v <= u:
                    continue
                for w in ids[index + 1:]:
                    self.send(handle, v // block, QUERY.pack(v, w), on_message)
                    state.local_bytes += width

    def _on_message(self, message: bytes, state: TriangleState, handle: Handle, world: World) -> None:
        v, w = QUERY.unpack(message)
        byte = int(state.bits[v - state.lo, w >> 3])
        state.local_bytes += state.bits.itemsize
        if (byte >> (7 - (w & 7))) & 1:
            state.matches += 1

    def _collect(self, state: TriangleState) -> int:
        return state.matches

    def merge(self, outputs: List[Any], spec: WorkloadSpec, world_size: int) -> int:
        return int(sum(outputs))

    def oracle(self, spec: WorkloadSpec, world_size: int) -> int:
        graph = build_graph(spec)
        if graph.number_of_nodes() <= BRUTE_FORCE_LIMIT:
            return brute_force_triangles(graph)
        return sum(nx.triangles(graph).values()) // 3

    def digest(self, result: Any) -> str:
        return self.hash_bytes(str(int(result)).encode('ascii'))


def triangle_count(spec: WorkloadSpec, handle: Handle) -> WorkReport:
    return TriangleWorkload().run_rank(spec, handle, World(handle.my_rank, handle.world_size))
