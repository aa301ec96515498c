"""
Testes do runtime: agregação no Handle, contrapressão, recepção, finalize e
entrega exatamente-uma-vez com agentes reais sobre o fabric loopback
"""
import sys
import os
import threading
import time
from collections import Counter

import numpy as np
import pytest

# Adiciona o diretório src ao path
sys.path.append(os.path.join(os.path.dirname(__file__), 'src'))

from src.utils.clock import ManualClock
from src.utils.errors import ConfigurationError, LinkError, OversizeMessageError, QuiescenceTimeoutError
from src.agent.agent_config import AgentConfig
from src.agent.routing_agent import RoutingAgent, agent_link_config
from src.agent.routing_table import Topology, build_routing_table
from src.runtime.handle import RuntimeConfig, init, send_blocking
from src.transport import RECV, LinkConfig, LoopbackFabric, LoopbackTransport, SocketTransport, free_port
from src.wire.bundle import Bundle
from src.wire.codec import CONTROL_RANK, OP_LOCAL_DONE, decode_control, encode_terminate


def _connect(config: RuntimeConfig, clock=None, topology=None):
    """Handle do rank 0 ligado a um endpoint 'agent/0' controlado pelo teste"""
    transport = LoopbackTransport(LoopbackFabric())
    topology = topology or Topology.uniform(1, 2)
    holder = {}

    def connect_agent():
        holder['agent'] = transport.connect_all(LinkConfig('agent/0', {'rank/0': None}, timeout=2.0))

    thread = threading.Thread(target=connect_agent)
    thread.start()
    handle = init(config, topology, 0, transport, clock)
    thread.join()
    return holder['agent'], handle


def _drain(endpoint, kind=RECV, count=1, timeout=2.0):
    found = []
    deadline = time.monotonic() + timeout
    while len(found) < count and time.monotonic() < deadline:
        found.extend(c for c in endpoint.poll(64) if c.kind == kind)
        time.sleep(0.001)
    return found


def test_send_aggregates_until_flush():
    agent, handle = _connect(RuntimeConfig(buf_size=256))
    agent.post_recv(Bundle(256))
    for i in range(3):
        assert handle.send(1, bytes([i]) * 4)
    assert _drain(agent, timeout=0.05) == []
    handle.flush()
    received = _drain(agent)
    assert len(received) == 1
    assert [(d, bytes(p)) for d, p in received[0].bundle.iterate()] == [
        (1, b'\x00' * 4), (1, b'\x01' * 4), (1, b'\x02' * 4)]
    assert handle.stats.sent_msgs == 3 and handle.stats.bundles_posted == 1


def test_send_returns_false_when_pool_in_flight():
    agent, handle = _connect(RuntimeConfig(runtime_bufs=2, buf_size=32))
    payload = b'p' * 16
    assert handle.send(1, payload)
    assert handle.send(1, payload)
    # Os dois bundles estão em voo e o agente ainda não postou recepções
    assert handle.send(1, payload) is False
    assert handle.in_flight == 2

    for _ in range(2):
        agent.post_recv(Bundle(64))
    deadline = time.monotonic() + 2.0
    while handle.in_flight and time.monotonic() < deadline:
        handle.poll()
    assert handle.send(1, payload)


def test_send_validation():
    _, handle = _connect(RuntimeConfig(buf_size=64))
    with pytest.raises(OversizeMessageError):
        handle.send(1, b'x' * 57)
    assert handle.send(1, b'x' * 56)
    with pytest.raises(ValueError):
        handle.send(2, b'')
    with pytest.raises(ConfigurationError):
        init(RuntimeConfig(), Topology.uniform(1, 2), 5, LoopbackTransport(LoopbackFabric()))


def test_poll_flushes_after_timeout():
    clock = ManualClock()
    agent, handle = _connect(RuntimeConfig(buf_size=256, flush_timeout=500), clock)
    agent.post_recv(Bundle(256))
    handle.send(0, b'tick')
    handle.poll()
    assert handle.stats.bundles_posted == 0
    clock.advance_us(600)
    handle.poll()
    assert handle.stats.bundles_posted == 1
    assert len(_drain(agent)) == 1


def test_recv_next_fifo_and_misrouted():
    agent, handle = _connect(RuntimeConfig(buf_size=128))
    bundle = Bundle(128)
    bundle.append(0, b'one')
    bundle.append(1, b'not mine')
    bundle.append(0, b'two')
    agent.post_send('rank/0', bundle)

    deadline = time.monotonic() + 2.0
    while not handle.delivered_queue and time.monotonic() < deadline:
        handle.poll()
    first = handle.recv_next(copy=False)
    assert isinstance(first, memoryview) and bytes(first) == b'one'
    assert handle.recv_next() == b'two'
    assert handle.recv_next() is None
    assert handle.stats.misrouted_msgs == 1
    assert handle.stats.recv_msgs == 2


def test_finalize_declares_and_waits_for_terminate():
    agent, handle = _connect(RuntimeConfig(buf_size=128))
    agent.post_recv(Bundle(128))
    handle.send(0, b'before-finalize')
    outcome = {}
    collected = []

    def run_finalize():
        outcome['stats'] = handle.finalize(handler=collected.append, deadline=5.0)

    thread = threading.Thread(target=run_finalize)
    thread.start()

    records = []
    deadline = time.monotonic() + 2.0
    while not any(d == CONTROL_RANK for d, _ in records) and time.monotonic() < deadline:
        for completion in _drain(agent, timeout=0.1):
            records.extend((d, bytes(p)) for d, p in completion.bundle.iterate())
            completion.bundle.reset()
            agent.post_recv(completion.bundle)
    control = [decode_control(p) for d, p in records if d == CONTROL_RANK]
    assert control and control[0][0] == OP_LOCAL_DONE and control[0][1:] == (0, 1, 0)

    reply = Bundle(128)
    reply.append(0, b'late-message')
    reply.append(CONTROL_RANK, encode_terminate())
    agent.post_send('rank/0', reply)
    thread.join(5.0)
    assert not thread.is_alive()
    assert collected == [b'late-message']
    assert outcome['stats'].control_msgs >= 1
    assert handle.closed


def test_finalize_timeout_carries_diagnostics():
    _, handle = _connect(RuntimeConfig(buf_size=128))
    handle.send(1, b'never-terminated')
    with pytest.raises(QuiescenceTimeoutError) as info:
        handle.finalize(deadline=0.05)
    assert info.value.diagnostics['rank'] == 0
    assert info.value.diagnostics['sent_msgs'] == 1


def test_finalize_raises_on_agent_link_failure():
    agent, handle = _connect(RuntimeConfig(buf_size=128))
    agent.close()
    handle.send(1, b'orphan')
    with pytest.raises(LinkError):
        handle.finalize(deadline=2.0)
    assert handle.stats.send_errors >= 1


def test_duplicate_rank_over_sockets_is_refused():
    """Dois processos com o mesmo rank: o segundo init falha no bootstrap e depois dele"""
    address = ('127.0.0.1', free_port())
    topology = Topology.uniform(1, 2, {0: address})
    config = RuntimeConfig(buf_size=128, connect_timeout=5.0)
    holder = {}

    def connect_agent():
        holder['agent'] = SocketTransport().connect_all(agent_link_config(topology, 0, timeout=5.0))

    thread = threading.Thread(target=connect_agent)
    thread.start()
    first = init(config, topology, 0, SocketTransport())
    with pytest.raises(ConfigurationError):
        init(config, topology, 0, SocketTransport())
    second = init(config, topology, 1, SocketTransport())
    thread.join()
    agent = holder['agent']
    try:
        with pytest.raises(ConfigurationError):
            init(config, topology, 0, SocketTransport())
        assert agent.rejected == 2
    finally:
        first.close()
        second.close()
        agent.close()


def test_single_message_delivered_within_two_idle_timeouts():
    """Uma mensagem isolada chega antes de 2x idle_timeout no relógio do agente"""
    clock = ManualClock()
    topology = Topology.uniform(1, 2)
    transport = LoopbackTransport(LoopbackFabric())
    agent_config = AgentConfig(routing_threads=1, flush_timeout=5000, idle_timeout=5000,
                               remote_buf_size=512, local_buf_size=512, runtime_buf_size=512)
    holder = {}

    def connect_agent():
        holder['endpoint'] = transport.connect_all(agent_link_config(topology, 0, timeout=2.0))

    thread = threading.Thread(target=connect_agent)
    thread.start()
    sender = init(RuntimeConfig(buf_size=512), topology, 0, transport)
    receiver = init(RuntimeConfig(buf_size=512), topology, 1, transport)
    thread.join()
    endpoint = holder['endpoint']
    agent = RoutingAgent(agent_config, build_routing_table(topology, 0), endpoint, clock, topology.node_ids)
    runner = threading.Thread(target=agent.run, daemon=True)
    runner.start()

    def wait_for_message(timeout: float):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            receiver.poll()
            message = receiver.recv_next()
            if message is not None:
                return message
            time.sleep(0.002)
        return None

    try:
        assert sender.send(1, b'lonely')
        sender.flush()
        # O agente roteia e segura o registro enquanto o relógio não anda
        assert wait_for_message(0.2) is None
        step = agent_config.idle_timeout / 10
        elapsed = 0.0
        message = None
        while message is None and elapsed < 4 * agent_config.idle_timeout:
            clock.advance_us(step)
            elapsed += step
            message = wait_for_message(0.05)
        assert message == b'lonely'
        assert elapsed <= 2 * agent_config.idle_timeout
    finally:
        agent.stop()
        runner.join(5.0)
        sender.close()
        receiver.close()
        endpoint.close()


def run_cluster(nodes: int, ranks_per_node: int, threads: int, messages: int, seed: int = 7,
                bufs_per_dest: int = 4, hot_rank=None, stats=None):
    """Agentes reais + ranks em threads; retorna (enviadas, recebidas) por rank

    hot_rank concentra todo o tráfego em um único destino; stats recebe get_stats() de cada agente.
    """
    topology = Topology.uniform(nodes, ranks_per_node)
    world = topology.world_size
    transport = LoopbackTransport(LoopbackFabric())
    agent_config = AgentConfig(routing_threads=threads, bufs_per_dest=bufs_per_dest, remote_buf_size=512,
                               local_buf_size=512, runtime_buf_size=512)
    runtime_config = RuntimeConfig(runtime_bufs=4, buf_size=512, recv_buf_size=512)
    sent = {r: [] for r in range(world)}
    received = {r: [] for r in range(world)}
    statuses, errors = {}, []

    def agent_main(node):
        try:
            endpoint = transport.connect_all(agent_link_config(topology, node, timeout=5.0))
            agent = RoutingAgent(agent_config, build_routing_table(topology, node), endpoint,
                                 nodes=topology.node_ids)
            statuses[node] = agent.run()
            if stats is not None:
                stats[node] = agent.get_stats()
            endpoint.close()
        except Exception as e:
            errors.append(e)

    def rank_main(rank):
        try:
            handle = init(runtime_config, topology, rank, transport)
            rng = np.random.default_rng([seed, rank])
            targets = rng.integers(0, world, size=messages) if hot_rank is None else [hot_rank] * messages
            for seq, dst in enumerate(np.asarray(targets).tolist()):
                payload = f"{rank}:{seq}".encode()
                send_blocking(handle, dst, payload, received[rank].append)
                sent[dst].append(payload)
            handle.finalize(handler=received[rank].append, deadline=30.0)
        except Exception as e:
            errors.append(e)

    workers = [threading.Thread(target=agent_main, args=(n,), daemon=True) for n in topology.node_ids]
    workers += [threading.Thread(target=rank_main, args=(r,), daemon=True) for r in range(world)]
    for worker in workers:
        worker.start()
    for worker in workers:
        worker.join(60.0)
    assert not errors, errors
    assert all(not w.is_alive() for w in workers)
    assert all(status == 0 for status in statuses.values())
    return sent, received


def test_exactly_once_single_thread():
    sent, received = run_cluster(2, 2, threads=1, messages=2000)
    for rank in sent:
        assert Counter(received[rank]) == Counter(sent[rank])


def test_exactly_once_four_threads():
    sent, received = run_cluster(2, 2, threads=4, messages=2000)
    for rank in sent:
        assert Counter(received[rank]) == Counter(sent[rank])


def test_single_node_no_remote_traffic():
    sent, received = run_cluster(1, 3, threads=2, messages=500)
    assert sum(len(v) for v in received.values()) == 3 * 500


def test_blocklist_drains_with_single_buffer_single_thread():
    stats = {}
    sent, received = run_cluster(2, 2, threads=1, messages=2000, bufs_per_dest=1, hot_rank=3, stats=stats)
    for rank in sent:
        assert Counter(received[rank]) == Counter(sent[rank])
    assert sum(s['totals']['blocklisted'] for s in stats.values()) > 0
    assert all(s['blocklist_residual'] == 0 for s in stats.values())


def test_blocklist_drains_with_single_buffer_four_threads():
    stats = {}
    sent, received = run_cluster(2, 2, threads=4, messages=2000, bufs_per_dest=1, hot_rank=3, stats=stats)
    for rank in sent:
        assert Counter(received[rank]) == Counter(sent[rank])
    assert sum(s['totals']['blocklisted'] for s in stats.values()) > 0
    assert all(s['blocklist_residual'] == 0 for s in stats.values())


def main():
    from src.utils.testing import run_test_suite
    tests = [
        ("Agregação até o flush", test_send_aggregates_until_flush),
        ("Pool de envio em voo", test_send_returns_false_when_pool_in_flight),
        ("Validação de send/init", test_send_validation),
        ("Flush por timeout no poll", test_poll_flushes_after_timeout),
        ("recv_next FIFO e descarte", test_recv_next_fifo_and_misrouted),
        ("finalize com término", test_finalize_declares_and_waits_for_terminate),
        ("finalize com timeout", test_finalize_timeout_carries_diagnostics),
        ("finalize com enlace caído", test_finalize_raises_on_agent_link_failure),
        ("Exatamente-uma-vez (1 thread)", test_exactly_once_single_thread),
        ("Exatamente-uma-vez (4 threads)", test_exactly_once_four_threads),
        ("Nó único", test_single_node_no_remote_traffic),
        ("Rank duplicado via sockets", test_duplicate_rank_over_sockets_is_refused),
        ("Mensagem isolada em 2x idle_timeout", test_single_message_delivered_within_two_idle_timeouts),
        ("Blocklist esvazia (1 buffer, 1 thread)", test_blocklist_drains_with_single_buffer_single_thread),
        ("Blocklist esvazia (1 buffer, 4 threads)", test_blocklist_drains_with_single_buffer_four_threads),
    ]
    return run_test_suite("TESTE DO RUNTIME", tests)


if __name__ == "__main__":
    main()
