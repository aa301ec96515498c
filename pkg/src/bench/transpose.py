"""
Transposta esparsa: cada não-zero (i, j, v) vai ao dono da coluna j
"""
import struct
from typing import Any, List, Tuple

import numpy as np

from src.runtime.handle import Handle
from .base_workload import BaseWorkload, RankState
from .interfaces import WorkloadSpec, WorkReport, World

NONZERO = struct.Struct('<IId')

Triplets = Tuple[np.ndarray, np.ndarray, np.ndarray]


def matrix_dim(spec: WorkloadSpec) -> int:
    return int(spec.params.get('dim', spec.scale))


def rank_nonzeros(spec: WorkloadSpec, world: World) -> Triplets:
    """Não-zeros (linha, coluna, valor) do bloco de linhas do rank"""
    n = matrix_dim(spec)
    lo, hi = world.block_range(n)
    rng = np.random.default_rng([spec.seed, world.rank])
    if spec.params.get('pattern', 'random') == 'identity':
        rows = np.arange(lo, hi, dtype=np.int64)
        cols = rows.copy()
    elif hi > lo:
        rows = rng.integers(lo, hi, size=spec.scale, dtype=np.int64)
        cols = rng.integers(0, n, size=spec.scale, dtype=np.int64)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
    values = rng.random(len(rows))
    return rows, cols, values


def canonical(rows: np.ndarray, cols: np.ndarray, values: np.ndarray) -> Triplets:
    """Ordena por (linha, coluna, valor)"""
    order = np.lexsort((values, cols, rows))
    return rows[order], cols[order], values[order]


class TransposeState(RankState):

    def __init__(self, lo: int, hi: int):
        super().__init__()
        # Linhas [lo, hi) da transposta pertencem a este rank
        self.lo = lo
        self.hi = hi
        self.rows: List[int] = []
        self.cols: List[int] = []
        self.values: List[float] = []


def assemble_csr(rows: np.ndarray, cols: np.ndarray, values: np.ndarray,
                 lo: int, hi: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """
    Monta CSR das linhas [lo, hi) a partir de triplas em ordem de chegada.

    Passagem de contagem, soma de prefixos e dispersão. Retorna
    (indptr, indices, data, bytes tocados pelas três passagens).
    """
    local = rows - lo
    counts = np.bincount(local, minlength=hi - lo)
    touched = local.nbytes + counts.nbytes

    indptr = np.zeros(hi - lo + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    touched += counts.nbytes + indptr.nbytes

    cursor = indptr[:-1].tolist()
    slots = []
    for r in local.tolist():
        slots.append(cursor[r])
        cursor[r] += 1
    positions = np.array(slots, dtype=np.int64)
    indices = np.empty(len(cols), dtype=np.int64)
    data = np.empty(len(values), dtype=np.float64)
    indices[positions] = cols
    data[positions] = values
    # Dispersão: linha lida, cursor lido e escrito, posição gravada
    touched += local.nbytes + 3 * positions.nbytes
    # Cópia de colunas e valores para as posições
    touched += positions.nbytes + cols.nbytes + values.nbytes + indices.nbytes + data.nbytes
    return indptr, indices, data, touched


class TransposeWorkload(BaseWorkload):
    """Matriz n×n particionada por blocos de linhas (padrão: n = scale)"""

    name = "transpose"

    def _setup(self, spec: WorkloadSpec, world: World) -> TransposeState:
        return TransposeState(*world.block_range(matrix_dim(spec)))

    def _send_phase(self, spec, handle, world, state, on_message) -> None:
        n = matrix_dim(spec)
        block = World.block(n, world.world_size)
        rows, cols, values = rank_nonzeros(spec, world)
        for i, j, v in zip(rows.tolist(), cols.tolist(), values.tolist()):
            self.send(handle, j // block, NONZERO.pack(i, j, v), on_message)
        # Travessia das três colunas de triplas do bloco local
        state.local_bytes += rows.nbytes + cols.nbytes + values.nbytes

    def _on_message(self, message: bytes, state: TransposeState, handle: Handle, world: World) -> None:
        i, j, v = NONZERO.unpack(message)
        # Linha j da transposta
        state.rows.append(j)
        state.cols.append(i)
        state.values.append(v)

    def _collect(self, state: TransposeState) -> Triplets:
        indptr, indices, data, touched = assemble_csr(
            np.array(state.rows, dtype=np.int64), np.array(state.cols, dtype=np.int64),
            np.array(state.values, dtype=np.float64), state.lo, state.hi)
        state.local_bytes += touched
        rows = np.repeat(np.arange(state.lo, state.hi, dtype=np.int64), np.diff(indptr))
        return canonical(rows, indices, data)

    def merge(self, outputs: List[Any], spec: WorkloadSpec, world_size: int) -> Triplets:
        if not outputs:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, np.zeros(0)
        return canonical(*(np.concatenate([o[k] for o in outputs]) for k in range(3)))

    def oracle(self, spec: WorkloadSpec, world_size: int) -> Triplets:
        parts = [rank_nonzeros(spec, World(rank, world_size)) for rank in range(world_size)]
        rows = np.concatenate([p[0] for p in parts])
        cols = np.concatenate([p[1] for p in parts])
        values = np.concatenate([p[2] for p in parts])
        return canonical(cols, rows, values)

    def digest(self, result: Any) -> str:
        rows, cols, values = result
        return self.hash_bytes(np.asarray(rows, dtype='<i8'), np.asarray(cols, dtype='<i8'),
                               np.asarray(values, dtype='<f8'))


def sparse_transpose(spec: WorkloadSpec, handle: Handle) -> WorkReport:
    return TransposeWorkload().run_rank(spec, handle, World(handle.my_rank, handle.world_size))
