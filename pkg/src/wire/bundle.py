"""
Bundle: buffer de registros (cabeçalho + payload) concatenados sem lacunas
"""
from typing import Any, Iterator, List, Optional, Tuple

from src.utils.errors import CorruptBundleError, FramingError
from .codec import HEADER, HEADER_SIZE, CONTROL_RANK

Record = Tuple[int, int, int]


class Bundle:
    """Unidade de transporte com capacidade fixa pré-alocada"""

    __slots__ = ('data', 'tail', 'capacity', 'count', 'owner', '_view')

    def __init__(self, capacity: int, owner: Any = None):
        if capacity < HEADER_SIZE:
            raise ValueError(f"Capacidade mínima do bundle é {HEADER_SIZE} bytes")
        self.data = bytearray(capacity)
        self.tail = 0
        self.capacity = capacity
        self.count = 0
        # Marcador opaco do componente que possui o bundle
        self.owner = owner
        self._view = memoryview(self.data)

    @property
    def free(self) -> int:
        return self.capacity - self.tail

    def is_empty(self) -> bool:
        return self.tail == 0

    def fits(self, payload_size: int) -> bool:
        return HEADER_SIZE + payload_size <= self.capacity - self.tail

    def append(self, dst: int, payload) -> bool:
        """Escreve um registro no tail; False sinaliza buffer cheio"""
        size = len(payload)
        total = HEADER_SIZE + size
        if total > self.capacity - self.tail:
            return False
        tail = self.tail
        HEADER.pack_into(self.data, tail, size, dst)
        self.data[tail + HEADER_SIZE:tail + total] = payload
        self.tail = tail + total
        self.count += 1
        return True

    def append_record(self, record) -> bool:
        """Copia um registro já codificado (cabeçalho incluso)"""
        total = len(record)
        if total > self.capacity - self.tail:
            return False
        self.data[self.tail:self.tail + total] = record
        self.tail += total
        self.count += 1
        return True

    def scan(self, world_size: Optional[int] = None) -> List[Record]:
        """Valida [0, tail) e retorna (dst, início do payload, fim) de cada registro"""
        records = []
        pos = 0
        tail = self.tail
        data = self.data
        while pos < tail:
            if pos + HEADER_SIZE > tail:
                raise CorruptBundleError(f"Cabeçalho truncado no offset {pos} (tail={tail})")
            size, dst = HEADER.unpack_from(data, pos)
            start = pos + HEADER_SIZE
            end = start + size
            if end > tail:
                raise CorruptBundleError(f"Registro no offset {pos} declara {size} bytes além do tail={tail}")
            if world_size is not None and dst >= world_size and dst != CONTROL_RANK:
                raise CorruptBundleError(f"Destino {dst} fora do mundo ({world_size} ranks)")
            records.append((dst, start, end))
            pos = end
        return records

    def iterate(self) -> Iterator[Tuple[int, memoryview]]:
        """Itera (dst, payload) em ordem de inserção, sem copiar payloads"""
        pos = 0
        tail = self.tail
        while pos < tail:
            if pos + HEADER_SIZE > tail:
                raise CorruptBundleError(f"Cabeçalho truncado no offset {pos} (tail={tail})")
            size, dst = HEADER.unpack_from(self.data, pos)
            start = pos + HEADER_SIZE
            end = start + size
            if end > tail:
                raise CorruptBundleError(f"Registro no offset {pos} declara {size} bytes além do tail={tail}")
            yield dst, self._view[start:end]
            pos = end

    def payload(self, start: int, end: int) -> memoryview:
        return self._view[start:end]

    def view(self) -> memoryview:
        """Bytes válidos [0, tail)"""
        return self._view[:self.tail]

    def load(self, payload) -> None:
        """Preenche o bundle com bytes recebidos do transporte"""
        size = len(payload)
        if size > self.capacity:
            raise FramingError(f"Frame de {size} bytes excede a capacidade {self.capacity}")
        self.data[:size] = payload
        self.tail = size
        self.count = 0

    def reset(self) -> None:
        self.tail = 0
        self.count = 0

    def __repr__(self) -> str:
        return f"Bundle(tail={self.tail}, capacity={self.capacity}, count={self.count})"


def bundle_append(bundle: Bundle, dst: int, payload) -> bool:
    return bundle.append(dst, payload)


def bundle_iterate(bundle: Bundle) -> Iterator[Tuple[int, memoryview]]:
    return bundle.iterate()
