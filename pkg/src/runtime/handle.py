"""
Biblioteca de runtime: envio/recepção não bloqueantes de mensagens de tamanho
arbitrário, agregadas localmente em bundles com pipelining de buffers
"""
import logging
import time
from collections import deque
from dataclasses import asdict, dataclass, fields
from typing import Any, Callable, Deque, Dict, List, Optional, Tuple, Union

from src.utils.clock import IClock, MonotonicClock
from src.utils.errors import (
    ConfigurationError, CorruptBundleError, FramingError, LinkError, OversizeMessageError,
    QuiescenceTimeoutError
)
from src.agent.routing_table import Topology
from src.transport import connect_all
from src.transport.completion import SEND
from src.transport.interfaces import IEndpoint, ITransport, LinkConfig, agent_peer, rank_peer
from src.wire.bundle import Bundle
from src.wire.codec import CONTROL_RANK, HEADER_SIZE, OP_TERMINATE, decode_control, encode_local_done

Payload = Union[bytes, memoryview]
DeliveredEntry = Tuple[Optional[Bundle], Payload, bool]

# Espera entre iterações ociosas de finalize (s)
FINALIZE_BACKOFF = 0.0002


@dataclass
class RuntimeConfig:
    """Parâmetros da biblioteca; flush_timeout em microssegundos"""
    runtime_bufs: int = 8
    buf_size: int = 4096
    flush_timeout: float = 500
    recv_buf_size: int = 0
    finalize_deadline: float = 30.0
    poll_max: int = 64
    credits: int = 16
    connect_timeout: float = 10.0

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> 'RuntimeConfig':
        known = {f.name for f in fields(cls)}
        config = cls(**{k: v for k, v in (values or {}).items() if k in known})
        config.validate()
        return config

    def validate(self) -> None:
        if self.runtime_bufs < 2:
            raise ConfigurationError("runtime_bufs deve ser >= 2 (double buffering)")
        if self.buf_size < 2 * HEADER_SIZE:
            raise ConfigurationError(f"buf_size deve ser >= {2 * HEADER_SIZE}")
        if self.finalize_deadline <= 0:
            raise ConfigurationError("finalize_deadline deve ser positivo")

    @property
    def effective_recv_buf_size(self) -> int:
        return max(self.recv_buf_size, self.buf_size)

    @property
    def max_payload(self) -> int:
        return self.buf_size - HEADER_SIZE


@dataclass
class RuntimeStats:
    """Contadores de um Handle"""
    sent_msgs: int = 0
    sent_bytes: int = 0
    recv_msgs: int = 0
    recv_bytes: int = 0
    control_msgs: int = 0
    control_bytes: int = 0
    bundles_posted: int = 0
    bundle_bytes_posted: int = 0
    bundles_received: int = 0
    bundle_bytes_received: int = 0
    corrupt_bundles: int = 0
    misrouted_msgs: int = 0
    send_errors: int = 0

    @property
    def mean_send_transfer(self) -> float:
        return self.bundle_bytes_posted / self.bundles_posted if self.bundles_posted else 0.0

    @property
    def mean_recv_transfer(self) -> float:
        return self.bundle_bytes_received / self.bundles_received if self.bundles_received else 0.0

    @property
    def routed_bytes(self) -> int:
        """Bytes entregues ao agente: payloads + cabeçalhos + controle"""
        return self.sent_bytes + HEADER_SIZE * self.sent_msgs + self.control_bytes

    def to_dict(self) -> Dict[str, Any]:
        result = asdict(self)
        result['mean_send_transfer'] = self.mean_send_transfer
        result['mean_recv_transfer'] = self.mean_recv_transfer
        return result


class Handle:
    """
    Handle de um rank. Single-threaded: uma thread por vez o utiliza.

    Nenhuma operação bloqueia esperando progresso da rede, exceto finalize.
    """

    def __init__(self, config: RuntimeConfig, my_rank: int, world_size: int,
                 endpoint: IEndpoint, agent_id: str, clock: Optional[IClock] = None):
        config.validate()
        self.config = config
        self.my_rank = my_rank
        self.world_size = world_size
        self.endpoint = endpoint
        self.agent_id = agent_id
        self.clock = clock or MonotonicClock()
        self.logger = logging.getLogger(__name__)
        self.stats = RuntimeStats()

        self.send_pool: List[Bundle] = [Bundle(config.buf_size, owner=self) for _ in range(config.runtime_bufs)]
        self._idle: Deque[Bundle] = deque(self.send_pool)
        self._open: Optional[Bundle] = None
        self._opened_at = 0.0
        self.in_flight = 0
        self.max_in_flight = 0
        self._flush_timeout = config.flush_timeout / 1e6

        self.recv_pool: List[Bundle] = [Bundle(config.effective_recv_buf_size) for _ in range(config.runtime_bufs)]
        for bundle in self.recv_pool:
            endpoint.post_recv(bundle)
        self.delivered_queue: Deque[DeliveredEntry] = deque()
        # Bundle cujo último registro foi consumido sem cópia; repostado no próximo recv_next/poll
        self._release: Optional[Bundle] = None
        self._detached = False

        # Bundles do caminho de baixo nível (send_bundle)
        self._raw_in_flight = 0
        self._raw_returned: Deque[Bundle] = deque()

        self.terminated = False
        self._declared: Optional[Tuple[int, int]] = None
        self.closed = False

    @property
    def open_bundle(self) -> Optional[Bundle]:
        return self._open

    def _post(self, bundle: Bundle) -> None:
        self.in_flight += 1
        if self.in_flight > self.max_in_flight:
            self.max_in_flight = self.in_flight
        self.stats.bundles_posted += 1
        self.stats.bundle_bytes_posted += bundle.tail
        self.endpoint.post_send(self.agent_id, bundle)

    def _writable(self, total: int) -> Optional[Bundle]:
        buf = self._open
        if buf is not None and total > buf.capacity - buf.tail:
            self._open = None
            self._post(buf)
            buf = None
        if buf is None:
            if not self._idle:
                return None
            buf = self._idle.popleft()
            buf.reset()
            self._open = buf
            self._opened_at = self.clock.now()
        return buf

    def send(self, dst: int, payload: Payload) -> bool:
        """Agrega a mensagem; False quando todos os bundles do pool estão em voo"""
        if not 0 <= dst < self.world_size:
            raise ValueError(f"Destino {dst} fora do mundo ({self.world_size} ranks)")
        size = len(payload)
        if size > self.config.max_payload:
            raise OversizeMessageError(f"Payload de {size} bytes excede o máximo de {self.config.max_payload}")
        buf = self._writable(HEADER_SIZE + size)
        if buf is None:
            return False
        buf.append(dst, payload)
        self.stats.sent_msgs += 1
        self.stats.sent_bytes += size
        return True

    def _send_control(self, payload: bytes) -> bool:
        buf = self._writable(HEADER_SIZE + len(payload))
        if buf is None:
            return False
        buf.append(CONTROL_RANK, payload)
        self.stats.control_msgs += 1
        self.stats.control_bytes += HEADER_SIZE + len(payload)
        return True

    def send_bundle(self, bundle: Bundle) -> bool:
        """Caminho de baixo nível: posta um bundle já montado pelo chamador"""
        if bundle.tail == 0:
            return True
        if bundle.tail > self.config.buf_size:
            raise OversizeMessageError(f"Bundle de {bundle.tail} bytes excede buf_size={self.config.buf_size}")
        if self.in_flight >= self.config.runtime_bufs:
            return False
        for dst, start, end in bundle.scan(self.world_size):
            if dst == CONTROL_RANK:
                self.stats.control_msgs += 1
                self.stats.control_bytes += HEADER_SIZE + end - start
            else:
                self.stats.sent_msgs += 1
                self.stats.sent_bytes += end - start
        self._raw_in_flight += 1
        self._post(bundle)
        return True

    def returned_bundles(self) -> List[Bundle]:
        """Bundles de send_bundle cujo envio já completou"""
        result = list(self._raw_returned)
        self._raw_returned.clear()
        return result

    def flush(self) -> None:
        buf = self._open
        if buf is not None and buf.tail > 0:
            self._open = None
            self._post(buf)

    def _repost(self, bundle: Bundle) -> None:
        bundle.reset()
        self.endpoint.post_recv(bundle)

    def _release_pending(self) -> None:
        if self._release is not None:
            bundle, self._release = self._release, None
            self._repost(bundle)

    def poll(self) -> int:
        """Colhe completions; retorna o número de mensagens novas entregues"""
        self._release_pending()
        delivered = 0
        for completion in self.endpoint.poll(self.config.poll_max):
            bundle = completion.bundle
            if completion.kind == SEND:
                self.in_flight -= 1
                if not completion.ok:
                    self.stats.send_errors += 1
                    self.logger.error(f"Rank {self.my_rank}: envio de {completion.length} bytes ao agente falhou")
                if bundle.owner is self:
                    bundle.reset()
                    self._idle.append(bundle)
                else:
                    self._raw_in_flight -= 1
                    self._raw_returned.append(bundle)
            elif not completion.ok:
                self.logger.error(f"Rank {self.my_rank}: recepção de {completion.peer} falhou")
                self._repost(bundle)
            else:
                delivered += self._unpack(bundle)

        buf = self._open
        if buf is not None and buf.tail > 0 and self.clock.now() - self._opened_at >= self._flush_timeout:
            self._open = None
            self._post(buf)
        return delivered

    def _unpack(self, bundle: Bundle) -> int:
        stats = self.stats
        try:
            records = bundle.scan()
        except CorruptBundleError as e:
            stats.corrupt_bundles += 1
            self.logger.warning(f"Rank {self.my_rank}: bundle corrompido descartado: {e}")
            self._repost(bundle)
            return 0
        stats.bundles_received += 1
        stats.bundle_bytes_received += bundle.tail

        data = []
        for dst, start, end in records:
            if dst == CONTROL_RANK:
                self._on_control(bundle.payload(start, end))
            elif dst != self.my_rank:
                stats.misrouted_msgs += 1
                self.logger.warning(f"Rank {self.my_rank}: mensagem para rank {dst} descartada")
            else:
                data.append((start, end))
        if not data:
            self._repost(bundle)
            return 0

        last = len(data) - 1
        queue = self.delivered_queue
        for index, (start, end) in enumerate(data):
            stats.recv_bytes += end - start
            if self._detached:
                queue.append((None, bytes(bundle.payload(start, end)), False))
            else:
                queue.append((bundle, bundle.payload(start, end), index == last))
        stats.recv_msgs += len(data)
        if self._detached:
            self._repost(bundle)
        return len(data)

    def _on_control(self, payload: memoryview) -> None:
        try:
            fields_ = decode_control(payload)
        except FramingError as e:
            self.logger.warning(f"Rank {self.my_rank}: controle inválido: {e}")
            return
        if fields_[0] == OP_TERMINATE:
            self.terminated = True
            self.logger.debug(f"Rank {self.my_rank}: término global recebido")
        else:
            self.logger.warning(f"Rank {self.my_rank}: opcode de controle inesperado {fields_[0]:#04x}")

    def recv_next(self, copy: bool = True) -> Optional[Payload]:
        """Próxima mensagem entregue (FIFO) ou None"""
        self._release_pending()
        if not self.delivered_queue:
            return None
        bundle, payload, last = self.delivered_queue.popleft()
        if bundle is None:
            return payload
        if copy:
            payload = bytes(payload)
            if last:
                self._repost(bundle)
        elif last:
            self._release = bundle
        return payload

    def _detach_pending(self) -> None:
        """Copia as mensagens enfileiradas e devolve seus bundles ao pool de recepção"""
        self._release_pending()
        self._detached = True
        pending = list(self.delivered_queue)
        self.delivered_queue.clear()
        for bundle, payload, last in pending:
            self.delivered_queue.append((None, bytes(payload), False))
            if bundle is not None and last:
                self._repost(bundle)

    def _diagnostics(self, elapsed: float) -> Dict[str, Any]:
        return {
            'rank': self.my_rank,
            'elapsed': elapsed,
            'sent_msgs': self.stats.sent_msgs,
            'recv_msgs': self.stats.recv_msgs,
            'declared': self._declared,
            'in_flight': self.in_flight,
            'queued': len(self.delivered_queue),
            'open_bytes': self._open.tail if self._open is not None else 0,
        }

    def finalize(self, handler: Optional[Callable[[bytes], None]] = None,
                 deadline: Optional[float] = None) -> RuntimeStats:
        """
        Declara fim local e espera a quiescência global anunciada pelo agente.

        Com handler, mensagens que continuam chegando são consumidas (e podem
        gerar novos envios); a declaração local-done é refeita sempre que os
        contadores mudam.
        """
        deadline = self.config.finalize_deadline if deadline is None else deadline
        if handler is None:
            self._detach_pending()
        self.flush()
        started = time.monotonic()

        while not self.terminated:
            progressed = self.poll() > 0
            if self.stats.send_errors and not self.terminated:
                self.logger.error(f"Rank {self.my_rank}: enlace com {self.agent_id} falhou durante finalize")
                raise LinkError(f"Rank {self.my_rank}: {self.stats.send_errors} envios ao agente falharam")
            if handler is not None:
                while True:
                    message = self.recv_next(copy=True)
                    if message is None:
                        break
                    handler(message)
                    progressed = True
            self.flush()

            counts = (self.stats.sent_msgs, self.stats.recv_msgs)
            idle = handler is None or not self.delivered_queue
            if idle and counts != self._declared:
                if self._send_control(encode_local_done(self.my_rank, *counts)):
                    self._declared = counts
                    self.flush()
                    progressed = True

            elapsed = time.monotonic() - started
            if elapsed > deadline:
                diagnostics = self._diagnostics(elapsed)
                self.logger.error(f"Rank {self.my_rank}: quiescência não atingida em {deadline}s: {diagnostics}")
                raise QuiescenceTimeoutError(
                    f"Rank {self.my_rank}: quiescência não atingida em {deadline}s", diagnostics
                )
            if not progressed:
                time.sleep(FINALIZE_BACKOFF)

        self.logger.debug(f"Rank {self.my_rank} finalizado: {self.stats.sent_msgs} enviadas, "
                          f"{self.stats.recv_msgs} recebidas")
        self.close()
        return self.stats

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self.endpoint.close()


def rank_link_config(topology: Topology, my_rank: int, config: RuntimeConfig) -> LinkConfig:
    """Um processo enxerga apenas o agente do seu nó"""
    node = topology.node_of_rank(my_rank)
    return LinkConfig(rank_peer(my_rank), {agent_peer(node): topology.addresses.get(node)}, None,
                      config.connect_timeout, config.credits, config.poll_max)


def init(config: RuntimeConfig, topology: Topology, my_rank: int,
         transport: Optional[ITransport] = None, clock: Optional[IClock] = None) -> Handle:
    """Conecta o rank ao agente local e posta todo o pool de recepção"""
    config.validate()
    topology.validate()
    world_size = topology.world_size
    if not 0 <= my_rank < world_size:
        raise ConfigurationError(f"Rank {my_rank} fora do mundo ({world_size} ranks)")
    link = rank_link_config(topology, my_rank, config)
    endpoint = connect_all(link, transport)
    agent_id = next(iter(link.peers))
    return Handle(config, my_rank, world_size, endpoint, agent_id, clock)


def send(h: Handle, dst: int, payload: Payload) -> bool:
    return h.send(dst, payload)


def flush(h: Handle) -> None:
    h.flush()


def poll(h: Handle) -> int:
    return h.poll()


def recv_next(h: Handle, copy: bool = True) -> Optional[Payload]:
    return h.recv_next(copy)


def finalize(h: Handle, handler: Optional[Callable[[bytes], None]] = None,
             deadline: Optional[float] = None) -> RuntimeStats:
    return h.finalize(handler, deadline)


def send_blocking(h: Handle, dst: int, payload: Payload,
                  on_message: Optional[Callable[[bytes], None]] = None) -> None:
    """Repete send intercalando poll até o aceite (laço do chamador, não da biblioteca)"""
    while not h.send(dst, payload):
        h.poll()
        if on_message is not None:
            while True:
                message = h.recv_next(copy=True)
                if message is None:
                    break
                on_message(message)
