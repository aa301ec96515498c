"""
Estado de envio por thread de roteamento: pools de buffers por próximo salto e blocklist
"""
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, Optional, Tuple

from src.utils.clock import IClock, MonotonicClock
from src.utils.errors import OversizeMessageError
from src.wire.bundle import Bundle
from .agent_config import AgentConfig
from .routing_table import NextHop, RoutingTable

BlockEntry = Tuple[NextHop, int, bytes]


@dataclass
class AgentThreadStats:
    """Contadores de uma thread de roteamento"""
    thread_id: int = 0
    bundles_in: int = 0
    msgs_in: int = 0
    bytes_in: int = 0
    ingress_bundles: int = 0
    ingress_msgs: int = 0
    ingress_bytes: int = 0
    msgs_routed: int = 0
    bytes_routed: int = 0
    blocklisted: int = 0
    replayed: int = 0
    corrupt_bundles: int = 0
    oversize_dropped: int = 0
    remote_bundles_posted: int = 0
    remote_bytes_posted: int = 0
    local_bundles_posted: int = 0
    local_bytes_posted: int = 0
    msgs_delivered_local: int = 0
    timeout_flushes: int = 0
    idle_flushes: int = 0
    send_errors: int = 0


class HopBuffers:
    """Pool de bundles de um próximo salto: idle -> open -> sealed -> in-flight"""

    def __init__(self, hop: NextHop, capacity: int, count: int, owner):
        self.hop = hop
        self.capacity = capacity
        self.idle: Deque[Bundle] = deque(Bundle(capacity, owner) for _ in range(count))
        self.open: Optional[Bundle] = None
        self.opened_at = 0.0
        self.sealed: Deque[Bundle] = deque()
        self.in_flight = 0

    def has_data(self) -> bool:
        return bool(self.sealed) or (self.open is not None and self.open.tail > 0)

    def resident_bytes(self) -> int:
        total = sum(b.tail for b in self.sealed)
        if self.open is not None:
            total += self.open.tail
        return total


class ThreadSendState:
    """Buffers exclusivos de uma thread (sem locks no caminho de roteamento)"""

    def __init__(self, config: AgentConfig, table: RoutingTable,
                 clock: Optional[IClock] = None, thread_id: int = 0):
        self.config = config
        self.clock = clock or MonotonicClock()
        self.thread_id = thread_id
        self.pools: Dict[NextHop, HopBuffers] = {}
        self._pool_of: Dict[int, HopBuffers] = {}
        for hop in table.hops():
            capacity = config.local_buf_size if hop.is_local else config.remote_buf_size
            pool = HopBuffers(hop, capacity, config.bufs_per_dest, self)
            self.pools[hop] = pool
            for bundle in pool.idle:
                self._pool_of[id(bundle)] = pool
        # Blocklist FIFO por próximo salto
        self.blocklist: Dict[NextHop, Deque[BlockEntry]] = {}
        # Completions de envio coletadas por outras threads
        self.returned: Deque = deque()
        self.in_flight = 0
        self.last_activity = self.clock.now()
        self.stats = AgentThreadStats(thread_id=thread_id)

    @property
    def flush_timeout(self) -> float:
        return self.config.flush_timeout_s

    @property
    def idle_timeout(self) -> float:
        return self.config.idle_timeout_s

    def touch(self) -> None:
        self.last_activity = self.clock.now()

    def pool_of(self, bundle: Bundle) -> HopBuffers:
        return self._pool_of[id(bundle)]

    def blocklist_size(self) -> int:
        return sum(len(q) for q in self.blocklist.values())

    def blocklist_bytes(self) -> int:
        return sum(len(entry[2]) for q in self.blocklist.values() for entry in q)

    def resident_bytes(self) -> int:
        return sum(pool.resident_bytes() for pool in self.pools.values())

    def has_data(self) -> bool:
        return any(pool.has_data() for pool in self.pools.values())

    def is_drained(self) -> bool:
        return (self.in_flight == 0 and not self.returned and not self.blocklist
                and not self.has_data())


def get_buf(state: ThreadSendState, next_hop: NextHop, size: int) -> Optional[Bundle]:
    """Retorna um buffer aberto com >= size bytes livres para next_hop, ou None"""
    pool = state.pools[next_hop]
    if size > pool.capacity:
        raise OversizeMessageError(f"Registro de {size} bytes nunca cabe em buffers de {pool.capacity} bytes ({next_hop})")
    buf = pool.open
    if buf is not None:
        if size <= buf.capacity - buf.tail:
            return buf
        pool.sealed.append(buf)
        pool.open = None
    if pool.idle:
        buf = pool.idle.popleft()
        buf.reset()
        pool.open = buf
        pool.opened_at = state.clock.now()
        return buf
    return None
