"""
Transporte em processo: endpoints ligados por filas entre threads
"""
import itertools
import logging
import threading
from collections import deque
from typing import Dict, Iterable, List, Optional

from src.utils.errors import ConfigurationError, StartupError
from src.wire.bundle import Bundle
from .completion import Completion, SEND, RECV, STATUS_OK, STATUS_ERROR
from .interfaces import IEndpoint, ITransport, LinkConfig


class LoopbackFabric:
    """Registro de endpoints de um "cluster simulado" em um processo"""

    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self._endpoints: Dict[str, 'LoopbackEndpoint'] = {}
        self._cond = threading.Condition()

    def register(self, endpoint: 'LoopbackEndpoint') -> None:
        with self._cond:
            if endpoint.local_id in self._endpoints:
                raise ConfigurationError(f"Endpoint duplicado no fabric: {endpoint.local_id}")
            self._endpoints[endpoint.local_id] = endpoint
            self._cond.notify_all()

    def unregister(self, endpoint: 'LoopbackEndpoint') -> None:
        with self._cond:
            if self._endpoints.get(endpoint.local_id) is endpoint:
                del self._endpoints[endpoint.local_id]

    def lookup(self, local_id: str) -> Optional['LoopbackEndpoint']:
        with self._cond:
            return self._endpoints.get(local_id)

    def wait_for(self, ids: Iterable[str], timeout: float) -> bool:
        ids = list(ids)
        with self._cond:
            return self._cond.wait_for(lambda: all(i in self._endpoints for i in ids), timeout)


class LoopbackEndpoint(IEndpoint):
    """Endpoint em processo com semântica SEND/RECV"""

    def __init__(self, local_id: str, peers: Iterable[str], fabric: LoopbackFabric):
        self.local_id = local_id
        self.peers = set(peers)
        self.fabric = fabric
        self.logger = logging.getLogger(__name__)
        self._lock = threading.Lock()
        self._posted = deque()
        # Envios retidos pelo controle de fluxo até haver recepção postada
        self._held = deque()
        self._completions = deque()
        self._tokens = itertools.count(1)
        self.closed = False

    def post_send(self, peer: str, bundle: Bundle) -> int:
        if bundle.tail <= 0:
            raise ValueError("post_send exige bundle não vazio")
        if peer != self.local_id and peer not in self.peers:
            raise ConfigurationError(f"{self.local_id}: peer não conectado: {peer}")
        token = next(self._tokens)
        target = self if peer == self.local_id else self.fabric.lookup(peer)
        if target is None:
            self._complete(Completion(SEND, peer, token, bundle.tail, STATUS_ERROR, bundle))
            return token
        target._deliver(self, token, bundle)
        return token

    def post_recv(self, bundle: Bundle) -> int:
        token = next(self._tokens)
        matched = None
        with self._lock:
            if self._held:
                matched = self._held.popleft()
                self._fill(matched[0].local_id, token, bundle, matched[2])
            else:
                self._posted.append((token, bundle))
        if matched is not None:
            sender, send_token, sent = matched
            sender._complete(Completion(SEND, self.local_id, send_token, sent.tail, STATUS_OK, sent))
        return token

    def poll(self, max_count: int = 64) -> List[Completion]:
        result = []
        with self._lock:
            while self._completions and len(result) < max_count:
                result.append(self._completions.popleft())
        return result

    def close(self) -> None:
        with self._lock:
            self.closed = True
            held = list(self._held)
            self._held.clear()
            self._posted.clear()
        self.fabric.unregister(self)
        for sender, send_token, sent in held:
            sender._complete(Completion(SEND, self.local_id, send_token, sent.tail, STATUS_ERROR, sent))
        self.logger.debug(f"Endpoint {self.local_id} encerrado")

    def pending_count(self) -> int:
        with self._lock:
            return len(self._completions)

    def _complete(self, completion: Completion) -> None:
        with self._lock:
            self._completions.append(completion)

    def _fill(self, source: str, token: int, buffer: Bundle, sent: Bundle) -> None:
        # Chamado com self._lock adquirido
        status = STATUS_OK
        if sent.tail > buffer.capacity:
            self.logger.error(f"{self.local_id}: bundle de {sent.tail} bytes excede buffer de {buffer.capacity}")
            status = STATUS_ERROR
        else:
            buffer.load(sent.view())
        self._completions.append(Completion(RECV, source, token, sent.tail, status, buffer))

    def _deliver(self, sender: 'LoopbackEndpoint', send_token: int, bundle: Bundle) -> None:
        delivered = False
        failed = False
        with self._lock:
            if self.closed:
                failed = True
            elif self._posted:
                token, buffer = self._posted.popleft()
                self._fill(sender.local_id, token, buffer, bundle)
                delivered = True
            else:
                self._held.append((sender, send_token, bundle))
        if delivered or failed:
            status = STATUS_ERROR if failed else STATUS_OK
            sender._complete(Completion(SEND, self.local_id, send_token, bundle.tail, status, bundle))


class LoopbackTransport(ITransport):
    """Fábrica de endpoints em processo sobre um fabric compartilhado"""

    def __init__(self, fabric: Optional[LoopbackFabric] = None):
        self.fabric = fabric or LoopbackFabric()
        self.logger = logging.getLogger(__name__)

    def connect_all(self, link: LinkConfig) -> LoopbackEndpoint:
        link.validate()
        endpoint = LoopbackEndpoint(link.local_id, link.peers.keys(), self.fabric)
        self.fabric.register(endpoint)
        if not self.fabric.wait_for(link.peers.keys(), link.timeout):
            self.fabric.unregister(endpoint)
            missing = [p for p in link.peers if self.fabric.lookup(p) is None]
            raise StartupError(f"{link.local_id}: peers não conectados em {link.timeout}s: {missing}")
        self.logger.debug(f"{link.local_id} conectado a {len(link.peers)} peers (loopback)")
        return endpoint
