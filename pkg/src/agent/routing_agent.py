"""
Agente de roteamento: threads que recebem bundles dos ranks locais e dos
agentes remotos, reagregam registros por próximo salto e detectam quiescência
"""
import logging
import threading
import time
from collections import deque
from dataclasses import asdict, fields
from typing import Any, Dict, List, Optional

from src.utils.clock import IClock, MonotonicClock
from src.utils.errors import FramingError
from src.transport import connect_all
from src.transport.completion import Completion, SEND
from src.transport.interfaces import (
    IEndpoint, ITransport, LinkConfig, agent_peer, is_rank_peer, rank_peer
)
from src.wire.bundle import Bundle
from src.wire.codec import (
    CONTROL_RANK, HEADER_SIZE, OP_ACK, OP_LOCAL_DONE, OP_ROUND, OP_TERMINATE,
    decode_control, encode_ack, encode_round, encode_terminate
)
from .agent_config import AgentConfig
from .quiescence import QuiescenceDetector
from .routing_kernel import complete_send, drain_returned, flush_ready, idle_flush, replay_pending, route
from .routing_table import RoutingTable, Topology, build_routing_table
from .send_state import AgentThreadStats, ThreadSendState


def agent_link_config(topology: Topology, node: int, credits: int = 16,
                      timeout: float = 10.0, poll_max: int = 64) -> LinkConfig:
    """Peers do agente: seus ranks locais e os agentes dos demais nós"""
    peers = {rank_peer(r): None for r in topology.ranks_of(node)}
    for other in topology.node_ids:
        if other != node:
            peers[agent_peer(other)] = topology.addresses.get(other)
    return LinkConfig(agent_peer(node), peers, topology.addresses.get(node),
                      timeout, credits, poll_max)


class RoutingAgent:
    """Um agente por nó; routing_threads threads compartilham o endpoint"""

    def __init__(self, config: AgentConfig, table: RoutingTable, endpoint: IEndpoint,
                 clock: Optional[IClock] = None, nodes: Optional[List[int]] = None):
        config.validate()
        self.config = config
        self.table = table
        self.endpoint = endpoint
        self.clock = clock or MonotonicClock()
        self.node = table.self_node
        self.logger = logging.getLogger(__name__)

        nodes = sorted(set(nodes if nodes is not None else table.node_of))
        self.detector = QuiescenceDetector(self.node, nodes, table.local_ranks(),
                                           config.quiescence_interval_s)
        self.states = [ThreadSendState(config, table, self.clock, i)
                       for i in range(config.routing_threads)]
        # Fila compartilhada de bundles recebidos (peer, bundle)
        self._shared = deque()
        self._lock = threading.Lock()
        self._control_inflight = 0
        self.control_sent = 0
        self._terminating = False
        self._terminated = threading.Event()
        self._stop = threading.Event()
        self._failed = False
        self.faults = 0
        self.exit_status = 0
        self.started_at: Optional[float] = None
        self.finished_at: Optional[float] = None

    def _post_receives(self) -> None:
        links = max(1, len(self.endpoint.peers))
        count = 2 * self.config.routing_threads * links
        for _ in range(count):
            self.endpoint.post_recv(Bundle(self.config.recv_buf_size, owner=self))
        self.logger.debug(f"Agente {self.node}: {count} buffers de recepção de {self.config.recv_buf_size} bytes")

    def run(self) -> int:
        """Executa até o término global (ou stop()); retorna o status de saída"""
        self.logger.info(f"Agente {self.node} iniciado: {self.config.routing_threads} threads, "
                         f"{len(self.table.local_ranks())} ranks locais")
        self.started_at = time.perf_counter()
        self._post_receives()
        threads = [threading.Thread(target=self._thread_loop, args=(state,),
                                    name=f"agent{self.node}-route{state.thread_id}", daemon=True)
                   for state in self.states]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        self.finished_at = time.perf_counter()
        if self.exit_status == 0:
            self.logger.info(f"Agente {self.node} encerrado normalmente")
        else:
            self.logger.error(f"Agente {self.node} encerrado com {self.faults} falhas de enlace")
        return self.exit_status

    def stop(self) -> None:
        self._stop.set()

    @property
    def terminated(self) -> bool:
        return self._terminated.is_set()

    def _thread_loop(self, state: ThreadSendState) -> None:
        endpoint = self.endpoint
        poll_max = self.config.poll_max
        backoff = self.config.idle_backoff
        try:
            while not self._stop.is_set():
                busy = drain_returned(state) > 0

                for completion in endpoint.poll(poll_max):
                    busy = True
                    self._dispatch(state, completion)

                try:
                    peer, bundle = self._shared.popleft()
                except IndexError:
                    pass
                else:
                    busy = True
                    self._route_incoming(state, peer, bundle)

                if state.blocklist:
                    replay_pending(state)
                if flush_ready(state, endpoint) or idle_flush(state, endpoint):
                    busy = True
                self._drive_quiescence()

                if self._can_exit(state):
                    break
                if not busy:
                    time.sleep(backoff)
        except Exception as e:
            self.logger.exception(f"Thread {state.thread_id} do agente {self.node} falhou: {e}")
            self._fault(f"exceção na thread {state.thread_id}")
            self._stop.set()

    def _can_exit(self, state: ThreadSendState) -> bool:
        if self._terminated.is_set():
            with self._lock:
                control_idle = self._control_inflight == 0
            return control_idle and not self._shared and state.is_drained()
        if self._failed and not self._shared:
            return self.clock.now() - state.last_activity >= state.idle_timeout
        return False

    def _dispatch(self, state: ThreadSendState, completion: Completion) -> None:
        bundle = completion.bundle
        if completion.kind == SEND:
            owner = bundle.owner
            if owner is self:
                with self._lock:
                    self._control_inflight -= 1
                if not completion.ok:
                    self._fault(f"controle para {completion.peer} não entregue")
            elif owner is state:
                complete_send(state, bundle, completion.ok)
            else:
                owner.returned.append(completion)
            if not completion.ok and owner is not self:
                self._fault(f"envio para {completion.peer} falhou")
            return

        if not completion.ok:
            self._fault(f"recepção de {completion.peer} falhou")
            bundle.reset()
            self.endpoint.post_recv(bundle)
            return
        self._shared.append((completion.peer, bundle))

    def _route_incoming(self, state: ThreadSendState, peer: str, bundle: Bundle) -> None:
        stats = state.stats
        if is_rank_peer(peer):
            before = stats.msgs_in
            stats.ingress_bundles += 1
            stats.ingress_bytes += bundle.tail
            route(bundle, state, self.table, self._on_control)
            stats.ingress_msgs += stats.msgs_in - before
        else:
            route(bundle, state, self.table, self._on_control)
        bundle.reset()
        self.endpoint.post_recv(bundle)

    def _on_control(self, payload: memoryview) -> None:
        try:
            fields_ = decode_control(payload)
        except FramingError as e:
            self.logger.warning(f"Agente {self.node}: registro de controle inválido: {e}")
            return
        op = fields_[0]
        if op == OP_LOCAL_DONE:
            _, rank, sent, recv = fields_
            self.detector.record_local_done(rank, sent, recv)
        elif op == OP_ROUND:
            round_id = fields_[1]
            ready, sent, recv = self.detector.snapshot()
            self._send_control(agent_peer(self.detector.coordinator),
                               encode_ack(round_id, self.node, ready, sent, recv))
        elif op == OP_ACK:
            _, round_id, node, ready, sent, recv = fields_
            if self.detector.record_ack(round_id, node, bool(ready), sent, recv, self.clock.now()):
                self._begin_termination(broadcast=True)
        elif op == OP_TERMINATE:
            self._begin_termination(broadcast=False)

    def _drive_quiescence(self) -> None:
        detector = self.detector
        if not detector.is_coordinator or self._terminating:
            return
        round_id = detector.maybe_start_round(self.clock.now())
        if round_id is None:
            return
        for node in detector.nodes:
            if node != self.node:
                self._send_control(agent_peer(node), encode_round(round_id))
        ready, sent, recv = detector.snapshot()
        if detector.record_ack(round_id, self.node, ready, sent, recv, self.clock.now()):
            self._begin_termination(broadcast=True)

    def _begin_termination(self, broadcast: bool) -> None:
        with self._lock:
            if self._terminating:
                return
            self._terminating = True
        if broadcast:
            for node in self.detector.nodes:
                if node != self.node:
                    self._send_control(agent_peer(node), encode_terminate())
        for rank in self.table.local_ranks():
            self._send_control(rank_peer(rank), encode_terminate())
        self.logger.info(f"Agente {self.node}: término global, notificando {len(self.table.local_ranks())} ranks")
        self._terminated.set()

    def _send_control(self, peer: str, payload: bytes) -> None:
        bundle = Bundle(HEADER_SIZE + len(payload), owner=self)
        bundle.append(CONTROL_RANK, payload)
        with self._lock:
            self._control_inflight += 1
            self.control_sent += 1
        self.endpoint.post_send(peer, bundle)

    def _fault(self, message: str) -> None:
        with self._lock:
            self.faults += 1
            self._failed = True
            self.exit_status = 1
        self.logger.error(f"Agente {self.node}: {message}")

    def get_stats(self) -> Dict[str, Any]:
        """Contadores agregados e por thread"""
        per_thread = [asdict(state.stats) for state in self.states]
        totals = {f.name: sum(t[f.name] for t in per_thread)
                  for f in fields(AgentThreadStats) if f.name != 'thread_id'}
        wall = 0.0
        if self.started_at is not None:
            wall = (self.finished_at or time.perf_counter()) - self.started_at
        return {
            'node': self.node,
            'threads': per_thread,
            'totals': totals,
            'control_sent': self.control_sent,
            'quiescence_rounds': self.detector.rounds_completed,
            'faults': self.faults,
            'blocklist_residual': sum(len(q) for state in self.states for q in state.blocklist.values()),
            'exit_status': self.exit_status,
            'wall_time': wall,
        }


def run_agent(config: AgentConfig, topology: Topology, node: int,
              transport: Optional[ITransport] = None, clock: Optional[IClock] = None,
              credits: int = 16, timeout: float = 10.0,
              stats_out: Optional[Dict[str, Any]] = None) -> int:
    """Conecta, executa e encerra o agente do nó; retorna o status de saída"""
    table = build_routing_table(topology, node)
    link = agent_link_config(topology, node, credits, timeout, config.poll_max)
    endpoint = connect_all(link, transport)
    agent = RoutingAgent(config, table, endpoint, clock, topology.node_ids)
    try:
        status = agent.run()
    finally:
        endpoint.close()
        if stats_out is not None:
            stats_out.update(agent.get_stats())
    return status
