"""
Testes do transporte: loopback em processo e stream sockets com créditos
"""
import sys
import os
import socket
import threading
import time

import numpy as np
import pytest

# Adiciona o diretório src ao path
sys.path.append(os.path.join(os.path.dirname(__file__), 'src'))

from src.utils.errors import ConfigurationError, StartupError
from src.transport import (
    RECV, SEND, LinkConfig, LoopbackFabric, LoopbackTransport, SocketTransport, connect_all, free_port
)
from src.transport.socket_transport import (
    TAG_DATA, TAG_HELLO, TAG_WELCOME, WELCOME_OK, encode_frame, read_frame
)
from src.wire.bundle import Bundle


def _bundle(dst: int, payload: bytes, capacity: int = 64) -> Bundle:
    bundle = Bundle(capacity)
    bundle.append(dst, payload)
    return bundle


def _poll_until(endpoint, count: int, timeout: float = 5.0):
    completions = []
    deadline = time.monotonic() + timeout
    while len(completions) < count and time.monotonic() < deadline:
        completions.extend(endpoint.poll(64))
        if len(completions) < count:
            time.sleep(0.001)
    return completions


def _loopback_pair(timeout: float = 1.0):
    transport = LoopbackTransport(LoopbackFabric())
    endpoints = {}

    def connect(local, peer):
        endpoints[local] = connect_all(LinkConfig(local, {peer: None}, timeout=timeout), transport)

    threads = [threading.Thread(target=connect, args=('agent/0', 'rank/0')),
               threading.Thread(target=connect, args=('rank/0', 'agent/0'))]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    return endpoints['agent/0'], endpoints['rank/0']


def _socket_pair(credits: int = 2):
    address = ('127.0.0.1', free_port())
    endpoints = {}

    def connect_agent():
        endpoints['agent'] = SocketTransport().connect_all(
            LinkConfig('agent/0', {'rank/0': None}, address, timeout=5.0, credits=credits))

    thread = threading.Thread(target=connect_agent)
    thread.start()
    rank = SocketTransport().connect_all(LinkConfig('rank/0', {'agent/0': address}, timeout=5.0, credits=credits))
    thread.join()
    return endpoints['agent'], rank


def _raw_hello(address, local_id: str, timeout: float = 5.0) -> socket.socket:
    """Disca com um socket cru e completa o hello à mão"""
    deadline = time.monotonic() + timeout
    while True:
        try:
            sock = socket.create_connection(address, timeout=timeout)
            break
        except OSError:
            if time.monotonic() > deadline:
                raise
            time.sleep(0.02)
    sock.sendall(encode_frame(TAG_HELLO, local_id.encode('utf-8')))
    tag, body = read_frame(sock)
    assert tag == TAG_WELCOME and bytes(body) == WELCOME_OK
    return sock


def test_loopback_send_recv():
    agent, rank = _loopback_pair()
    agent.post_recv(Bundle(64))
    rank.post_send('agent/0', _bundle(0, b'hello'))

    received = _poll_until(agent, 1)
    assert len(received) == 1 and received[0].kind == RECV and received[0].ok
    assert received[0].peer == 'rank/0'
    assert [bytes(p) for _, p in received[0].bundle.iterate()] == [b'hello']

    sent = _poll_until(rank, 1)
    assert sent[0].kind == SEND and sent[0].ok


def test_loopback_holds_send_until_receive_posted():
    """Sem buffer de recepção o envio fica retido e completa somente depois"""
    agent, rank = _loopback_pair()
    rank.post_send('agent/0', _bundle(0, b'late'))
    assert rank.poll() == []
    assert agent.poll() == []

    agent.post_recv(Bundle(64))
    assert len(_poll_until(agent, 1)) == 1
    assert _poll_until(rank, 1)[0].ok


def test_loopback_each_completion_once():
    agent, rank = _loopback_pair()
    for _ in range(3):
        agent.post_recv(Bundle(64))
    for i in range(3):
        rank.post_send('agent/0', _bundle(0, bytes([i])))
    received = _poll_until(agent, 3)
    assert [bytes(next(c.bundle.iterate())[1]) for c in received] == [b'\x00', b'\x01', b'\x02']
    assert agent.poll() == []


def test_loopback_send_to_closed_peer_fails():
    agent, rank = _loopback_pair()
    agent.close()
    rank.post_send('agent/0', _bundle(0, b'x'))
    completion = _poll_until(rank, 1)[0]
    assert completion.kind == SEND and not completion.ok


def test_loopback_rejects_duplicate_endpoint():
    fabric = LoopbackFabric()
    transport = LoopbackTransport(fabric)
    transport.connect_all(LinkConfig('rank/0', {}, timeout=0.1))
    with pytest.raises(ConfigurationError):
        transport.connect_all(LinkConfig('rank/0', {}, timeout=0.1))


def test_loopback_startup_timeout():
    transport = LoopbackTransport(LoopbackFabric())
    with pytest.raises(StartupError):
        transport.connect_all(LinkConfig('rank/0', {'agent/0': None}, timeout=0.05))


def test_socket_startup_unreachable_peer():
    port = free_port()
    link = LinkConfig('rank/0', {'agent/0': ('127.0.0.1', port)}, timeout=0.3)
    with pytest.raises(StartupError):
        SocketTransport().connect_all(link)


def test_socket_ordered_delivery_with_credits():
    """Com 2 créditos, 6 envios só fluem à medida que o receptor posta buffers"""
    agent, rank = _socket_pair(credits=2)
    try:
        for i in range(6):
            rank.post_send('agent/0', _bundle(0, bytes([i]) * 4))
        received = []
        deadline = time.monotonic() + 5.0
        while len(received) < 6 and time.monotonic() < deadline:
            agent.post_recv(Bundle(64))
            received.extend(c for c in _poll_until(agent, 1, timeout=1.0) if c.kind == RECV)
        assert len(received) == 6
        payloads = [bytes(next(c.bundle.iterate())[1]) for c in received]
        assert payloads == [bytes([i]) * 4 for i in range(6)]
        sends = _poll_until(rank, 6)
        assert len(sends) == 6 and all(c.ok for c in sends)
    finally:
        rank.close()
        agent.close()


def test_poll_respects_max_count():
    agent, rank = _loopback_pair()
    for _ in range(5):
        agent.post_recv(Bundle(64))
    tokens = [rank.post_send('agent/0', _bundle(0, bytes([i]))) for i in range(5)]
    batches = []
    deadline = time.monotonic() + 5.0
    while sum(len(b) for b in batches) < 5 and time.monotonic() < deadline:
        batch = rank.poll(max_count=2)
        if batch:
            batches.append(batch)
    assert all(len(batch) <= 2 for batch in batches)
    assert sorted(c.buffer_id for batch in batches for c in batch) == sorted(tokens)
    assert rank.poll(max_count=2) == []
    assert len(agent.poll(max_count=2)) == 2


def test_socket_duplicate_id_refused():
    """Um segundo endpoint com o mesmo id é recusado no bootstrap e depois dele"""
    address = ('127.0.0.1', free_port())
    endpoints = {}

    def connect_agent():
        endpoints['agent'] = SocketTransport().connect_all(
            LinkConfig('agent/0', {'rank/0': None, 'rank/1': None}, address, timeout=5.0))

    thread = threading.Thread(target=connect_agent)
    thread.start()
    first = SocketTransport().connect_all(LinkConfig('rank/0', {'agent/0': address}, timeout=5.0))
    with pytest.raises(ConfigurationError):
        SocketTransport().connect_all(LinkConfig('rank/0', {'agent/0': address}, timeout=5.0))
    second = SocketTransport().connect_all(LinkConfig('rank/1', {'agent/0': address}, timeout=5.0))
    thread.join()
    agent = endpoints['agent']
    try:
        with pytest.raises(ConfigurationError):
            SocketTransport().connect_all(LinkConfig('rank/1', {'agent/0': address}, timeout=5.0))
        assert agent.rejected == 2
        # As conexões aceitas continuam funcionando
        agent.post_recv(Bundle(64))
        first.post_send('agent/0', _bundle(0, b'ok'))
        received = _poll_until(agent, 1)
        assert received[0].peer == 'rank/0' and received[0].ok
    finally:
        first.close()
        second.close()
        agent.close()


def test_socket_send_does_not_block_on_stalled_peer():
    """Um peer que não lê não trava post_send nem a recepção"""
    address = ('127.0.0.1', free_port())
    endpoints = {}

    def connect_agent():
        endpoints['agent'] = SocketTransport().connect_all(
            LinkConfig('agent/0', {'rank/0': None}, address, timeout=5.0, credits=64))

    thread = threading.Thread(target=connect_agent)
    thread.start()
    peer = _raw_hello(address, 'rank/0')
    thread.join()
    agent = endpoints['agent']
    try:
        size = 1 << 20
        started = time.monotonic()
        for i in range(32):
            bundle = Bundle(size)
            bundle.append(0, bytes([i]) * (size - 8))
            agent.post_send('rank/0', bundle)
        assert time.monotonic() - started < 1.0

        # Dados vindos do peer ainda são entregues com a escritora presa
        agent.post_recv(Bundle(64))
        peer.sendall(encode_frame(TAG_DATA, bytes(_bundle(0, b'still here').view())))
        received = [c for c in _poll_until(agent, 1) if c.kind == RECV]
        assert len(received) == 1
        assert [bytes(p) for _, p in received[0].bundle.iterate()] == [b'still here']
    finally:
        peer.close()
        agent.close()
    sends = [c for c in _poll_until(agent, 32, timeout=2.0) if c.kind == SEND]
    assert len(sends) == 32


def test_socket_credit_window_bounds_unreceived_data():
    """Sem buffers postados, no máximo `credits` frames chegam ao receptor"""
    agent, rank = _socket_pair(credits=3)
    try:
        for i in range(10):
            rank.post_send('agent/0', _bundle(0, bytes([i])))
        sent = _poll_until(rank, 3, timeout=2.0)
        time.sleep(0.2)
        sent.extend(rank.poll())
        assert len(sent) == 3
        assert len(agent._staged) == 3
        assert agent.poll() == []

        received = []
        deadline = time.monotonic() + 5.0
        while len(received) < 10 and time.monotonic() < deadline:
            agent.post_recv(Bundle(64))
            received.extend(c for c in _poll_until(agent, 1, timeout=1.0) if c.kind == RECV)
            assert len(agent._staged) <= 3
        payloads = [bytes(next(c.bundle.iterate())[1]) for c in received]
        assert payloads == [bytes([i]) for i in range(10)]
    finally:
        rank.close()
        agent.close()


def test_socket_randomized_soak():
    """100 mil registros de tamanho aleatório chegam íntegros e em ordem"""
    rng = np.random.default_rng(17)
    sizes = rng.integers(0, 65, size=100_000)
    expected = [bytes([i % 251]) * int(size) for i, size in enumerate(sizes)]
    agent, rank = _socket_pair(credits=4)
    try:
        for _ in range(8):
            agent.post_recv(Bundle(4096))
        idle = [Bundle(4096) for _ in range(int(rng.integers(2, 9)))]
        received = []
        index = 0
        current = None
        deadline = time.monotonic() + 120.0
        while len(received) < len(expected) and time.monotonic() < deadline:
            while index < len(expected) and (current is not None or idle):
                if current is None:
                    current = idle.pop()
                    current.reset()
                if current.append(0, expected[index]):
                    index += 1
                    continue
                rank.post_send('agent/0', current)
                current = None
            if index == len(expected) and current is not None:
                rank.post_send('agent/0', current)
                current = None
            for completion in rank.poll(64):
                assert completion.ok
                idle.append(completion.bundle)
            for completion in agent.poll(int(rng.integers(1, 65))):
                assert completion.kind == RECV and completion.ok
                received.extend(bytes(p) for _, p in completion.bundle.iterate())
                completion.bundle.reset()
                agent.post_recv(completion.bundle)
        assert len(received) == len(expected)
        assert received == expected
    finally:
        rank.close()
        agent.close()


def main():
    from src.utils.testing import run_test_suite
    tests = [
        ("Loopback: envio e recepção", test_loopback_send_recv),
        ("Loopback: envio retido", test_loopback_holds_send_until_receive_posted),
        ("Loopback: completions únicas", test_loopback_each_completion_once),
        ("Loopback: peer encerrado", test_loopback_send_to_closed_peer_fails),
        ("Loopback: endpoint duplicado", test_loopback_rejects_duplicate_endpoint),
        ("Loopback: timeout de bootstrap", test_loopback_startup_timeout),
        ("Socket: peer inacessível", test_socket_startup_unreachable_peer),
        ("Socket: ordem e créditos", test_socket_ordered_delivery_with_credits),
        ("Poll limitado a max_count", test_poll_respects_max_count),
        ("Socket: id duplicado recusado", test_socket_duplicate_id_refused),
        ("Socket: peer que não lê", test_socket_send_does_not_block_on_stalled_peer),
        ("Socket: janela de créditos", test_socket_credit_window_bounds_unreceived_data),
        ("Socket: soak aleatório", test_socket_randomized_soak),
    ]
    return run_test_suite("TESTE DO TRANSPORTE", tests)


if __name__ == "__main__":
    main()
