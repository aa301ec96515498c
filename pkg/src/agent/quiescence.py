"""
Detecção de quiescência global por rodadas de sonda e ack entre agentes
"""
import logging
import threading
from typing import Dict, Iterable, List, Optional, Tuple

logger = logging.getLogger(__name__)

Snapshot = Tuple[bool, int, int]


class QuiescenceDetector:
    """
    Contabiliza as declarações local-done dos ranks de um nó e, no coordenador
    (menor id de nó), conduz rodadas de sonda.

    O término é decidido quando duas rodadas consecutivas encontram todos os
    nós prontos, com os mesmos totais e total enviado == total recebido.
    """

    def __init__(self, node: int, nodes: Iterable[int], local_ranks: Iterable[int],
                 interval: float):
        self.node = node
        self.nodes: List[int] = sorted(nodes)
        self.coordinator = self.nodes[0]
        self.local_ranks = sorted(local_ranks)
        self.interval = interval
        self._lock = threading.Lock()
        self._declared: Dict[int, Tuple[int, int]] = {}
        self.round = 0
        self._round_open = False
        self._acks: Dict[int, Snapshot] = {}
        self._previous: Optional[Tuple[int, int]] = None
        self._next_round_at = 0.0
        self.rounds_completed = 0
        self.terminated = False

    @property
    def is_coordinator(self) -> bool:
        return self.node == self.coordinator

    def record_local_done(self, rank: int, sent: int, recv: int) -> None:
        with self._lock:
            if rank not in self.local_ranks:
                logger.warning(f"Nó {self.node}: local-done de rank alheio {rank} ignorado")
                return
            self._declared[rank] = (sent, recv)
        logger.debug(f"Nó {self.node}: rank {rank} declarou sent={sent} recv={recv}")

    def snapshot(self) -> Snapshot:
        """(todos os ranks locais declararam, Σsent, Σrecv)"""
        with self._lock:
            ready = len(self._declared) == len(self.local_ranks)
            sent = sum(s for s, _ in self._declared.values())
            recv = sum(r for _, r in self._declared.values())
        return ready, sent, recv

    def maybe_start_round(self, now: float) -> Optional[int]:
        """No coordenador, abre uma nova rodada quando o nó está pronto"""
        if not self.is_coordinator or self.terminated:
            return None
        ready = self.snapshot()[0]
        with self._lock:
            if self._round_open or now < self._next_round_at or not ready:
                return None
            self.round += 1
            self._round_open = True
            self._acks = {}
            return self.round

    def record_ack(self, round_id: int, node: int, ready: bool, sent: int, recv: int,
                   now: float) -> bool:
        """Registra um ack; True quando o término global foi decidido"""
        with self._lock:
            if self.terminated or not self._round_open or round_id != self.round:
                return False
            self._acks[node] = (bool(ready), sent, recv)
            if len(self._acks) < len(self.nodes):
                return False

            self._round_open = False
            self._next_round_at = now + self.interval
            self.rounds_completed += 1
            all_ready = all(a[0] for a in self._acks.values())
            totals = (sum(a[1] for a in self._acks.values()), sum(a[2] for a in self._acks.values()))
            if all_ready and totals[0] == totals[1] and totals == self._previous:
                self.terminated = True
                logger.info(f"Quiescência detectada na rodada {round_id}: {totals[0]} mensagens")
                return True
            self._previous = totals if all_ready else None
            return False
