"""
Testes do agente: tabela de roteamento, kernel de roteamento, blocklist,
políticas de flush e detecção de quiescência
"""
import sys
import os
import time
from typing import List, Tuple

import pytest

# Adiciona o diretório src ao path
sys.path.append(os.path.join(os.path.dirname(__file__), 'src'))

from src.utils.clock import ManualClock
from src.utils.errors import ConfigurationError, OversizeMessageError
from src.agent.agent_config import AgentConfig
from src.agent.quiescence import QuiescenceDetector
from src.agent.routing_kernel import (
    complete_send, flush_ready, idle_flush, replay_blocklist, replay_pending, route
)
from src.agent.routing_table import LOCAL, REMOTE, NextHop, Topology, build_routing_table
from src.agent.send_state import ThreadSendState, get_buf
from src.transport.interfaces import IEndpoint
from src.wire.bundle import Bundle
from src.wire.codec import CONTROL_RANK, HEADER_SIZE, encode_local_done


class RecordingEndpoint(IEndpoint):
    """Endpoint falso que apenas registra os envios postados"""

    def __init__(self):
        self.local_id = 'agent/0'
        self.peers = set()
        self.sent: List[Tuple[str, Bundle]] = []

    def post_send(self, peer, bundle):
        self.sent.append((peer, bundle))
        return len(self.sent)

    def post_recv(self, bundle):
        return 0

    def poll(self, max_count=64):
        return []

    def close(self):
        pass


def _topology():
    # Nó 0: ranks 0,1; nó 1: ranks 2,3
    return Topology.uniform(2, 2)


def _config(**overrides) -> AgentConfig:
    values = dict(remote_buf_size=64, local_buf_size=64, bufs_per_dest=2, routing_threads=1,
                  flush_timeout=500, idle_timeout=5000)
    values.update(overrides)
    return AgentConfig(**values)


def _incoming(records, capacity=4096) -> Bundle:
    bundle = Bundle(capacity)
    for dst, payload in records:
        assert bundle.append(dst, payload)
    return bundle


def test_routing_table_total_and_local():
    table = build_routing_table(_topology(), 0)
    assert [table.lookup(r) for r in range(4)] == [
        NextHop(LOCAL, 0), NextHop(LOCAL, 1), NextHop(REMOTE, 1), NextHop(REMOTE, 1)]
    assert table.local_ranks() == [0, 1]
    assert table.remote_nodes() == [1]
    assert table.lookup(2).peer_id == 'agent/1'
    assert table.lookup(1).peer_id == 'rank/1'


def test_single_node_has_only_local_hops():
    table = build_routing_table(Topology.uniform(1, 3), 0)
    assert all(hop.is_local for hop in table.hops())


def test_topology_rejects_duplicates_and_gaps():
    with pytest.raises(ConfigurationError):
        build_routing_table({0: [0, 1], 1: [1, 2]}, 0)
    with pytest.raises(ConfigurationError):
        build_routing_table({0: [0], 1: [2]}, 0)
    with pytest.raises(ConfigurationError):
        build_routing_table(_topology(), 5)


def test_topology_from_config():
    topology = Topology.from_config({'node': {'0': '127.0.0.1:7000 | 0,1', '1': '10.0.0.2:7001 | 2'}})
    assert topology.world_size == 3
    assert topology.addresses[1] == ('10.0.0.2', 7001)
    assert topology.ranks_of(0) == [0, 1]
    with pytest.raises(ConfigurationError):
        Topology.from_config({'node': {'0': '127.0.0.1:7000'}})


def test_agent_config_validation():
    with pytest.raises(ConfigurationError):
        AgentConfig(flush_timeout=1000, idle_timeout=10).validate()
    with pytest.raises(ConfigurationError):
        AgentConfig(routing_threads=0).validate()
    config = AgentConfig.from_dict({'remote_buf_size': 8192, 'unknown': 1})
    assert config.remote_buf_size == 8192
    assert config.recv_buf_size == 8192


def test_get_buf_seals_and_opens():
    table = build_routing_table(_topology(), 0)
    state = ThreadSendState(_config(), table, ManualClock())
    hop = table.lookup(2)
    first = get_buf(state, hop, 40)
    first.append(2, b'x' * 32)
    second = get_buf(state, hop, 40)
    assert second is not first
    assert list(state.pools[hop].sealed) == [first]
    second.append(2, b'y' * 32)
    # Os dois buffers do salto estão ocupados
    assert get_buf(state, hop, 40) is None
    with pytest.raises(OversizeMessageError):
        get_buf(state, hop, 65)


def test_route_preserves_per_destination_order():
    table = build_routing_table(_topology(), 0)
    clock = ManualClock()
    state = ThreadSendState(_config(remote_buf_size=4096, local_buf_size=4096), table, clock)
    endpoint = RecordingEndpoint()
    records = [(2, b'a'), (0, b'b'), (2, b'c'), (3, b'd'), (1, b'e'), (0, b'f')]
    assert route(_incoming(records), state, table)
    assert state.stats.msgs_routed == 6
    clock.advance_us(500)
    flush_ready(state, endpoint)

    by_peer = {}
    for peer, bundle in endpoint.sent:
        by_peer.setdefault(peer, []).extend((d, bytes(p)) for d, p in bundle.iterate())
    assert by_peer['agent/1'] == [(2, b'a'), (2, b'c'), (3, b'd')]
    assert by_peer['rank/0'] == [(0, b'b'), (0, b'f')]
    assert by_peer['rank/1'] == [(1, b'e')]


def test_control_records_are_not_routed():
    table = build_routing_table(_topology(), 0)
    state = ThreadSendState(_config(), table, ManualClock())
    seen = []
    bundle = _incoming([(CONTROL_RANK, encode_local_done(0, 1, 2)), (1, b'z')])
    assert route(bundle, state, table, lambda payload: seen.append(bytes(payload)))
    assert seen == [encode_local_done(0, 1, 2)]
    assert state.stats.msgs_routed == 1


def test_oversize_record_dropped_others_routed():
    table = build_routing_table(_topology(), 0)
    state = ThreadSendState(_config(), table, ManualClock())
    bundle = _incoming([(2, b'q' * 100), (2, b'ok')])
    assert route(bundle, state, table)
    assert state.stats.oversize_dropped == 1
    assert state.stats.msgs_routed == 1


def test_blocklist_and_fifo_replay():
    """Buffers esgotados: o restante vai para a blocklist e volta em ordem"""
    table = build_routing_table(_topology(), 0)
    clock = ManualClock()
    state = ThreadSendState(_config(bufs_per_dest=1, remote_buf_size=32), table, clock)
    endpoint = RecordingEndpoint()
    # Cada registro ocupa 8 + 16 = 24 bytes: um por buffer
    payloads = [bytes([i]) * 16 for i in range(4)]
    assert route(_incoming([(2, payloads[0])]), state, table)
    assert flush_ready(state, endpoint) == 0
    clock.advance_us(600)
    assert flush_ready(state, endpoint) == 1
    assert not route(_incoming([(2, p) for p in payloads[1:]]), state, table)
    assert state.blocklist_size() == 3
    assert state.stats.blocklisted == 3

    delivered = []
    while endpoint.sent:
        _, bundle = endpoint.sent.pop(0)
        delivered.extend(bytes(p) for _, p in bundle.iterate())
        complete_send(state, bundle)
        clock.advance_us(600)
        flush_ready(state, endpoint)
    assert delivered == payloads
    assert state.blocklist_size() == 0
    assert state.stats.replayed == 3


def test_replay_returns_false_while_other_hop_blocked():
    table = build_routing_table(_topology(), 0)
    state = ThreadSendState(_config(bufs_per_dest=1, remote_buf_size=32, local_buf_size=32), table, ManualClock())
    endpoint = RecordingEndpoint()
    record = b'r' * 16
    # Ocupa os buffers dos dois saltos e bloqueia um registro de cada
    assert not route(_incoming([(2, record), (2, record)]), state, table)
    assert not route(_incoming([(0, record), (0, record)]), state, table)
    assert flush_ready(state, endpoint) == 2
    sent = dict(endpoint.sent)

    # A blocklist local esvazia, mas a remota continua: False
    assert complete_send(state, sent['rank/0']) is False
    assert table.lookup(0) not in state.blocklist
    assert complete_send(state, sent['agent/1']) is True
    assert replay_blocklist(state, table.lookup(2)) is True


def test_blocked_local_hop_replayed_without_completion():
    """Registros locais presos atrás de um salto remoto cheio saem em ordem sem esperar envio"""
    table = build_routing_table(_topology(), 0)
    clock = ManualClock()
    state = ThreadSendState(_config(bufs_per_dest=1, remote_buf_size=32, local_buf_size=32), table, clock)
    endpoint = RecordingEndpoint()
    assert route(_incoming([(2, b'r' * 16)]), state, table)
    clock.advance_us(600)
    assert flush_ready(state, endpoint) == 1

    assert not route(_incoming([(2, b's' * 16), (0, b'L1')]), state, table)
    # Salto local já tem fila: o registro novo entra atrás dela
    assert not route(_incoming([(0, b'L2')]), state, table)
    assert state.blocklist_size() == 3

    assert replay_pending(state) is False
    assert table.lookup(0) not in state.blocklist
    clock.advance_us(600)
    flush_ready(state, endpoint)
    local = [bytes(p) for peer, bundle in endpoint.sent if peer == 'rank/0' for _, p in bundle.iterate()]
    assert local == [b'L1', b'L2']


def test_flush_timeout_with_manual_clock():
    table = build_routing_table(_topology(), 0)
    clock = ManualClock()
    state = ThreadSendState(_config(remote_buf_size=4096), table, clock)
    endpoint = RecordingEndpoint()
    route(_incoming([(2, b'tiny')]), state, table)
    clock.advance_us(499)
    assert flush_ready(state, endpoint) == 0
    clock.advance_us(2)
    assert flush_ready(state, endpoint) == 1
    assert state.stats.timeout_flushes == 1
    assert state.stats.remote_bundles_posted == 1
    assert state.stats.remote_bytes_posted == HEADER_SIZE + 4


def test_idle_flush_posts_everything():
    table = build_routing_table(_topology(), 0)
    clock = ManualClock()
    config = _config(remote_buf_size=4096, local_buf_size=4096, flush_timeout=10_000, idle_timeout=10_000)
    state = ThreadSendState(config, table, clock)
    endpoint = RecordingEndpoint()
    route(_incoming([(2, b'a'), (1, b'b')]), state, table)
    assert idle_flush(state, endpoint) == 0
    clock.advance_us(10_000)
    assert idle_flush(state, endpoint) == 2
    assert state.stats.idle_flushes == 1
    assert not state.has_data()


def test_saturated_senders_fill_remote_buffers():
    table = build_routing_table(_topology(), 0)
    state = ThreadSendState(_config(remote_buf_size=4096, local_buf_size=4096, bufs_per_dest=4), table,
                            ManualClock())
    endpoint = RecordingEndpoint()
    for i in range(40):
        assert route(_incoming([(2 + j % 2, bytes([i]) * 16) for j in range(100)]), state, table)
        flush_ready(state, endpoint)
        while endpoint.sent:
            complete_send(state, endpoint.sent.pop(0)[1])
    stats = state.stats
    assert stats.remote_bundles_posted > 0
    assert stats.remote_bytes_posted / stats.remote_bundles_posted >= 2048


def test_route_linear_in_message_count():
    """Tempo de rota cresce linearmente com o número de registros (mínimo de 20 repetições)"""
    table = build_routing_table(Topology.uniform(2, 4), 0)
    config = AgentConfig(remote_buf_size=1 << 17, local_buf_size=1 << 17, bufs_per_dest=2, routing_threads=1)

    def best_time(count: int) -> float:
        bundle = _incoming([(i % 8, b'p' * 16) for i in range(count)], capacity=count * 24)
        best = float('inf')
        for _ in range(20):
            state = ThreadSendState(config, table, ManualClock())
            started = time.perf_counter()
            route(bundle, state, table)
            best = min(best, time.perf_counter() - started)
        return best

    # Dobrar os bytes roteados custa no máximo 2,5x o tempo
    assert best_time(4000) / best_time(2000) <= 2.5
    small, large = best_time(1000), best_time(4000)
    assert large / small < 4 * 2.5


def test_quiescence_two_stable_rounds():
    detector = QuiescenceDetector(0, [0, 1], [0, 1], interval=0.0)
    assert detector.maybe_start_round(0.0) is None
    detector.record_local_done(0, 5, 3)
    detector.record_local_done(1, 2, 4)
    assert detector.snapshot() == (True, 7, 7)

    round_id = detector.maybe_start_round(0.0)
    assert round_id == 1
    assert not detector.record_ack(round_id, 0, True, 7, 7, 0.0)
    assert not detector.record_ack(round_id, 1, True, 3, 3, 0.0)

    round_id = detector.maybe_start_round(0.0)
    assert not detector.record_ack(round_id, 0, True, 7, 7, 0.0)
    assert detector.record_ack(round_id, 1, True, 3, 3, 0.0)
    assert detector.terminated and detector.rounds_completed == 2


def test_quiescence_waits_for_balance_and_stability():
    detector = QuiescenceDetector(0, [0, 1], [0], interval=0.0)
    detector.record_local_done(0, 10, 10)
    # Enviados != recebidos: mensagens ainda em trânsito
    for _ in range(3):
        round_id = detector.maybe_start_round(0.0)
        detector.record_ack(round_id, 0, True, 10, 10, 0.0)
        assert not detector.record_ack(round_id, 1, True, 5, 3, 0.0)
    # Totais mudaram entre rodadas: precisa de mais uma
    round_id = detector.maybe_start_round(0.0)
    detector.record_ack(round_id, 0, True, 10, 10, 0.0)
    assert not detector.record_ack(round_id, 1, True, 5, 5, 0.0)
    round_id = detector.maybe_start_round(0.0)
    detector.record_ack(round_id, 0, True, 10, 10, 0.0)
    assert detector.record_ack(round_id, 1, True, 5, 5, 0.0)


def test_quiescence_round_interval_and_foreign_rank():
    detector = QuiescenceDetector(0, [0], [0], interval=1.0)
    detector.record_local_done(7, 1, 1)
    assert detector.snapshot() == (False, 0, 0)
    detector.record_local_done(0, 0, 0)
    round_id = detector.maybe_start_round(0.0)
    detector.record_ack(round_id, 0, True, 0, 0, 0.0)
    assert detector.maybe_start_round(0.5) is None
    assert detector.maybe_start_round(1.0) == 2


def main():
    from src.utils.testing import run_test_suite
    tests = [
        ("Tabela de roteamento", test_routing_table_total_and_local),
        ("Nó único", test_single_node_has_only_local_hops),
        ("Topologia inválida", test_topology_rejects_duplicates_and_gaps),
        ("Topologia a partir da configuração", test_topology_from_config),
        ("Validação do AgentConfig", test_agent_config_validation),
        ("get_buf", test_get_buf_seals_and_opens),
        ("Ordem por destino", test_route_preserves_per_destination_order),
        ("Registros de controle", test_control_records_are_not_routed),
        ("Registro grande demais", test_oversize_record_dropped_others_routed),
        ("Blocklist e replay FIFO", test_blocklist_and_fifo_replay),
        ("Replay com outro salto bloqueado", test_replay_returns_false_while_other_hop_blocked),
        ("Salto local preso atrás do remoto", test_blocked_local_hop_replayed_without_completion),
        ("Flush por timeout", test_flush_timeout_with_manual_clock),
        ("Flush por ociosidade", test_idle_flush_posts_everything),
        ("Buffers remotos cheios sob saturação", test_saturated_senders_fill_remote_buffers),
        ("Linearidade do kernel", test_route_linear_in_message_count),
        ("Quiescência: duas rodadas estáveis", test_quiescence_two_stable_rounds),
        ("Quiescência: balanço e estabilidade", test_quiescence_waits_for_balance_and_stability),
        ("Quiescência: intervalo de sondas", test_quiescence_round_interval_and_foreign_rank),
    ]
    return run_test_suite("TESTE DO AGENTE DE ROTEAMENTO", tests)


if __name__ == "__main__":
    main()
