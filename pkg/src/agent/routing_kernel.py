"""
Kernel de roteamento: agregação de registros em buffers por próximo salto,
blocklist de contrapressão e políticas de flush (timeout e ociosidade)
"""
import logging
from collections import deque
from typing import Callable, List, Optional

from src.utils.errors import CorruptBundleError, OversizeMessageError
from src.transport.interfaces import IEndpoint
from src.wire.bundle import Bundle, Record
from src.wire.codec import CONTROL_RANK, HEADER_SIZE
from .routing_table import RoutingTable
from .send_state import HopBuffers, ThreadSendState, get_buf

logger = logging.getLogger(__name__)

ControlHandler = Callable[[memoryview], None]


def route(bundle: Bundle, state: ThreadSendState, table: RoutingTable,
          on_control: Optional[ControlHandler] = None) -> bool:
    """
    Copia cada registro do bundle recebido para o buffer do seu próximo salto.

    Retorna False quando algum registro foi para a blocklist; o bundle
    recebido pode ser reutilizado imediatamente em qualquer caso.
    """
    stats = state.stats
    try:
        records = bundle.scan(table.world_size)
    except CorruptBundleError as e:
        stats.corrupt_bundles += 1
        logger.warning(f"Thread {state.thread_id}: bundle corrompido descartado: {e}")
        return True

    state.touch()
    stats.bundles_in += 1
    stats.msgs_in += len(records)
    stats.bytes_in += bundle.tail
    view = bundle.view()
    next_hop = table.next_hop
    blocklist = state.blocklist
    blocked = False

    for index, (dst, start, end) in enumerate(records):
        if dst == CONTROL_RANK:
            if on_control is not None:
                on_control(view[start:end])
            continue
        hop = next_hop[dst]
        total = HEADER_SIZE + end - start
        queue = blocklist.get(hop)
        if queue:
            # Registros mais antigos do salto ainda esperam: FIFO por salto
            queue.append((hop, dst, bytes(view[start - HEADER_SIZE:end])))
            stats.blocklisted += 1
            blocked = True
            continue
        try:
            buf = get_buf(state, hop, total)
        except OversizeMessageError as e:
            stats.oversize_dropped += 1
            logger.warning(f"Thread {state.thread_id}: registro descartado: {e}")
            continue
        if buf is None:
            _blocklist_remaining(state, table, view, records[index:], on_control)
            return False
        buf.append_record(view[start - HEADER_SIZE:end])
        stats.msgs_routed += 1
        stats.bytes_routed += total
    return not blocked


def _blocklist_remaining(state: ThreadSendState, table: RoutingTable, view: memoryview,
                         records: List[Record], on_control: Optional[ControlHandler]) -> None:
    # Cópias: o buffer de recepção volta ao pool logo após o roteamento
    for dst, start, end in records:
        if dst == CONTROL_RANK:
            if on_control is not None:
                on_control(view[start:end])
            continue
        hop = table.next_hop[dst]
        queue = state.blocklist.get(hop)
        if queue is None:
            queue = state.blocklist[hop] = deque()
        queue.append((hop, dst, bytes(view[start - HEADER_SIZE:end])))
        state.stats.blocklisted += 1


def replay_blocklist(state: ThreadSendState, completed_hop) -> bool:
    """
    Reprocessa em ordem FIFO a blocklist do salto cujo envio completou.

    Para na primeira falha de get_buf. Retorna True somente se a blocklist
    inteira da thread (todos os saltos) ficou vazia.
    """
    queue = state.blocklist.get(completed_hop)
    if queue:
        stats = state.stats
        pending = len(queue)
        while queue:
            hop, _dst, record = queue[0]
            try:
                buf = get_buf(state, hop, len(record))
            except OversizeMessageError as e:
                queue.popleft()
                stats.oversize_dropped += 1
                logger.warning(f"Thread {state.thread_id}: registro descartado: {e}")
                continue
            if buf is None:
                break
            buf.append_record(record)
            queue.popleft()
            stats.replayed += 1
            stats.msgs_routed += 1
            stats.bytes_routed += len(record)
        if not queue:
            del state.blocklist[completed_hop]
        if len(queue) != pending:
            state.touch()
    return not state.blocklist


def replay_pending(state: ThreadSendState) -> bool:
    """Tenta a blocklist de todo salto; cobre saltos sem envio em voo"""
    for hop in list(state.blocklist):
        replay_blocklist(state, hop)
    return not state.blocklist


def _post(state: ThreadSendState, endpoint: IEndpoint, pool: HopBuffers, bundle: Bundle) -> None:
    stats = state.stats
    bundle.owner = state
    pool.in_flight += 1
    state.in_flight += 1
    if pool.hop.is_local:
        stats.local_bundles_posted += 1
        stats.local_bytes_posted += bundle.tail
        stats.msgs_delivered_local += bundle.count
    else:
        stats.remote_bundles_posted += 1
        stats.remote_bytes_posted += bundle.tail
    endpoint.post_send(pool.hop.peer_id, bundle)


def flush_ready(state: ThreadSendState, endpoint: IEndpoint) -> int:
    """Posta buffers selados e buffers abertos há mais de flush_timeout"""
    now = state.clock.now()
    timeout = state.flush_timeout
    posted = 0
    for pool in state.pools.values():
        while pool.sealed:
            _post(state, endpoint, pool, pool.sealed.popleft())
            posted += 1
        buf = pool.open
        if buf is not None and buf.tail > 0 and now - pool.opened_at >= timeout:
            pool.open = None
            _post(state, endpoint, pool, buf)
            state.stats.timeout_flushes += 1
            posted += 1
    return posted


def idle_flush(state: ThreadSendState, endpoint: IEndpoint) -> int:
    """Posta todo buffer não vazio quando a thread está ociosa há idle_timeout"""
    if state.clock.now() - state.last_activity < state.idle_timeout:
        return 0
    posted = 0
    for pool in state.pools.values():
        while pool.sealed:
            _post(state, endpoint, pool, pool.sealed.popleft())
            posted += 1
        buf = pool.open
        if buf is not None and buf.tail > 0:
            pool.open = None
            _post(state, endpoint, pool, buf)
            posted += 1
    if posted:
        state.stats.idle_flushes += 1
    return posted


def complete_send(state: ThreadSendState, bundle: Bundle, ok: bool = True) -> bool:
    """Devolve o buffer ao estado idle e reprocessa a blocklist do seu salto"""
    pool = state.pool_of(bundle)
    pool.in_flight -= 1
    state.in_flight -= 1
    if not ok:
        state.stats.send_errors += 1
        logger.error(f"Thread {state.thread_id}: envio de {bundle.tail} bytes para {pool.hop} falhou")
    bundle.reset()
    pool.idle.append(bundle)
    return replay_blocklist(state, pool.hop)


def drain_returned(state: ThreadSendState) -> int:
    """Processa completions de envio desta thread coletadas por outras threads"""
    handled = 0
    returned = state.returned
    while True:
        try:
            completion = returned.popleft()
        except IndexError:
            return handled
        complete_send(state, completion.bundle, completion.ok)
        handled += 1
