"""
Transporte por stream sockets com framing por prefixo de tamanho e créditos

Frame: [u32 LE frame_length][u8 tag][corpo]; frame_length conta tag + corpo.
Tags: 0x01 dados (corpo = bytes do bundle), 0x02 concessão de créditos
(corpo = u16 LE), 0x03 hello (corpo = id do endpoint em UTF-8), 0x04 resposta
ao hello (corpo = u8, 0 aceito, 1 recusado).

Toda escrita em um socket conectado passa pela thread escritora da conexão;
as threads de leitura e da aplicação apenas enfileiram frames.
"""
import itertools
import logging
import socket
import struct
import threading
import time
from collections import deque
from typing import Dict, List, Optional

from src.utils.errors import ConfigurationError, FramingError, StartupError
from src.wire.bundle import Bundle
from .completion import Completion, SEND, RECV, STATUS_OK, STATUS_ERROR
from .interfaces import Address, IEndpoint, ITransport, LinkConfig

FRAME_PREFIX = struct.Struct('<IB')
CREDIT_BODY = struct.Struct('<H')

TAG_DATA = 0x01
TAG_CREDIT = 0x02
TAG_HELLO = 0x03
TAG_WELCOME = 0x04

WELCOME_OK = b'\x00'
WELCOME_REJECTED = b'\x01'

MAX_FRAME = 64 * 1024 * 1024
CLOSE_GRACE = 2.0
ACCEPT_SLICE = 0.2


def recv_exact(sock: socket.socket, size: int) -> Optional[bytearray]:
    """Lê exatamente size bytes; None em EOF"""
    buf = bytearray(size)
    view = memoryview(buf)
    got = 0
    while got < size:
        n = sock.recv_into(view[got:], size - got)
        if n == 0:
            return None
        got += n
    return buf


def read_frame(sock: socket.socket):
    """Lê um frame e retorna (tag, corpo) ou None em EOF"""
    prefix = recv_exact(sock, 4)
    if prefix is None:
        return None
    (length,) = struct.unpack('<I', prefix)
    if length < 1 or length > MAX_FRAME:
        raise FramingError(f"Frame com tamanho inválido: {length}")
    frame = recv_exact(sock, length)
    if frame is None:
        return None
    return frame[0], memoryview(frame)[1:]


def encode_frame(tag: int, body: bytes = b"") -> bytes:
    return FRAME_PREFIX.pack(len(body) + 1, tag) + bytes(body)


class _Connection:
    """Canal confiável e ordenado com um peer"""

    def __init__(self, peer_id: str, sock: socket.socket, credits: int, lock: threading.Lock):
        self.peer_id = peer_id
        self.sock = sock
        self.credits = credits
        # Envios de dados aguardando crédito: (token, bundle)
        self.pending = deque()
        # Frames prontos para a escritora: (tag, token, bundle ou contagem de créditos)
        self.outbox = deque()
        self.ready = threading.Condition(lock)
        self.alive = True
        self.reader: Optional[threading.Thread] = None
        self.writer: Optional[threading.Thread] = None


class SocketEndpoint(IEndpoint):
    """Endpoint sobre TCP com controle de fluxo por créditos"""

    def __init__(self, link: LinkConfig):
        link.validate()
        self.link = link
        self.local_id = link.local_id
        self.peers = set(link.peers)
        self.logger = logging.getLogger(__name__)
        self._lock = threading.Lock()
        self._posted = deque()
        # Dados recebidos antes de haver buffer postado (limitados pelos créditos)
        self._staged = deque()
        self._completions = deque()
        self._tokens = itertools.count(1)
        self._conns: Dict[str, _Connection] = {}
        self._listener: Optional[socket.socket] = None
        self._gatekeeper: Optional[threading.Thread] = None
        self.address: Optional[Address] = None
        self.closed = False
        self.rejected = 0
        if link.address is not None:
            self._listen(link.address)

    # ---- bootstrap ----

    def _listen(self, address: Address) -> None:
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            listener.bind(address)
        except OSError as e:
            listener.close()
            raise StartupError(f"{self.local_id}: não foi possível escutar em {address}: {e}") from e
        listener.listen(max(16, len(self.peers)))
        self._listener = listener
        self.address = listener.getsockname()
        self.logger.debug(f"{self.local_id} escutando em {self.address}")

    def _should_dial(self, peer_id: str) -> bool:
        address = self.link.peers.get(peer_id)
        if address is None:
            return False
        return self.link.address is None or peer_id < self.local_id

    def connect(self) -> 'SocketEndpoint':
        """Disca para os peers de id menor e aceita os demais (barreira)"""
        deadline = time.monotonic() + self.link.timeout
        try:
            for peer_id in sorted(self.peers):
                if self._should_dial(peer_id):
                    self._dial(peer_id, self.link.peers[peer_id], deadline)
            expected = {p for p in self.peers if not self._should_dial(p)}
            if expected:
                self._accept_all(expected, deadline)
        except Exception:
            self.close()
            raise
        if self._listener is not None:
            self._gatekeeper = threading.Thread(
                target=self._reject_late, name=f"gatekeeper-{self.local_id}", daemon=True
            )
            self._gatekeeper.start()
        self.logger.info(f"{self.local_id} conectado a {len(self.peers)} peers (socket)")
        return self

    def _dial(self, peer_id: str, address: Address, deadline: float) -> None:
        last_error = None
        while time.monotonic() < deadline:
            sock = None
            try:
                sock = socket.create_connection(address, timeout=max(0.05, deadline - time.monotonic()))
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                sock.sendall(encode_frame(TAG_HELLO, self.local_id.encode('utf-8')))
                reply = read_frame(sock)
            except (OSError, FramingError) as e:
                if sock is not None:
                    sock.close()
                last_error = e
                time.sleep(0.05)
                continue
            if reply is None or reply[0] != TAG_WELCOME:
                sock.close()
                last_error = "hello sem resposta"
                time.sleep(0.05)
                continue
            if bytes(reply[1]) != WELCOME_OK:
                sock.close()
                raise ConfigurationError(
                    f"{self.local_id}: {peer_id} recusou a conexão (id duplicado ou não esperado)")
            sock.settimeout(None)
            self._register(peer_id, sock)
            return
        raise StartupError(f"{self.local_id}: peer {peer_id} inacessível em {address}: {last_error}")

    def _read_hello(self, sock: socket.socket, timeout: float) -> Optional[str]:
        sock.settimeout(timeout)
        try:
            frame = read_frame(sock)
        except (OSError, FramingError, UnicodeDecodeError) as e:
            self.logger.warning(f"{self.local_id}: hello inválido: {e}")
            return None
        if frame is None or frame[0] != TAG_HELLO:
            return None
        try:
            return bytes(frame[1]).decode('utf-8')
        except UnicodeDecodeError:
            return None

    def _refuse(self, sock: socket.socket, peer_id: str) -> None:
        self.rejected += 1
        self.logger.warning(f"{self.local_id}: conexão inesperada de {peer_id}, recusada")
        try:
            sock.sendall(encode_frame(TAG_WELCOME, WELCOME_REJECTED))
        except OSError:
            pass
        sock.close()

    def _accept_all(self, expected: set, deadline: float) -> None:
        if self._listener is None:
            raise StartupError(f"{self.local_id}: peers {sorted(expected)} precisam discar, mas não há endereço local")
        remaining = set(expected)
        while remaining:
            timeout = deadline - time.monotonic()
            if timeout <= 0:
                raise StartupError(f"{self.local_id}: peers não conectados a tempo: {sorted(remaining)}")
            self._listener.settimeout(min(ACCEPT_SLICE, timeout))
            try:
                sock, _ = self._listener.accept()
            except socket.timeout:
                continue
            peer_id = self._read_hello(sock, max(0.05, deadline - time.monotonic()))
            if peer_id is None:
                sock.close()
                continue
            if peer_id not in remaining:
                self._refuse(sock, peer_id)
                continue
            try:
                sock.sendall(encode_frame(TAG_WELCOME, WELCOME_OK))
            except OSError as e:
                self.logger.warning(f"{self.local_id}: {peer_id} caiu durante o hello: {e}")
                sock.close()
                continue
            sock.settimeout(None)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._register(peer_id, sock)
            remaining.discard(peer_id)

    def _reject_late(self) -> None:
        """Depois do bootstrap, todo hello recebido é recusado"""
        listener = self._listener
        while not self.closed:
            try:
                listener.settimeout(ACCEPT_SLICE)
                sock, _ = listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            peer_id = self._read_hello(sock, CLOSE_GRACE)
            if peer_id is None:
                sock.close()
                continue
            self._refuse(sock, peer_id)

    def _register(self, peer_id: str, sock: socket.socket) -> None:
        conn = _Connection(peer_id, sock, self.link.credits, self._lock)
        conn.reader = threading.Thread(
            target=self._reader_loop, args=(conn,), name=f"reader-{self.local_id}-{peer_id}", daemon=True
        )
        conn.writer = threading.Thread(
            target=self._writer_loop, args=(conn,), name=f"writer-{self.local_id}-{peer_id}", daemon=True
        )
        with self._lock:
            self._conns[peer_id] = conn
        conn.writer.start()
        conn.reader.start()

    # ---- operações ----

    def post_send(self, peer: str, bundle: Bundle) -> int:
        if bundle.tail <= 0:
            raise ValueError("post_send exige bundle não vazio")
        token = next(self._tokens)
        if peer == self.local_id:
            self._on_data(peer, bytes(bundle.view()))
            self._complete(Completion(SEND, peer, token, bundle.tail, STATUS_OK, bundle))
            return token
        with self._lock:
            conn = self._conns.get(peer)
            if conn is not None and conn.alive:
                if conn.credits > 0 and not conn.pending:
                    conn.credits -= 1
                    conn.outbox.append((TAG_DATA, token, bundle))
                    conn.ready.notify()
                else:
                    conn.pending.append((token, bundle))
                return token
        self._complete(Completion(SEND, peer, token, bundle.tail, STATUS_ERROR, bundle))
        return token

    def post_recv(self, bundle: Bundle) -> int:
        token = next(self._tokens)
        source = None
        with self._lock:
            if self._staged:
                source, body = self._staged.popleft()
                self._fill(source, token, bundle, body)
                self._grant(source, 1)
            else:
                self._posted.append((token, bundle))
        return token

    def poll(self, max_count: int = 64) -> List[Completion]:
        result = []
        with self._lock:
            while self._completions and len(result) < max_count:
                result.append(self._completions.popleft())
        return result

    def close(self) -> None:
        with self._lock:
            if self.closed:
                return
            self.closed = True
            conns = list(self._conns.values())
            for conn in conns:
                conn.ready.notify_all()
        # A escritora esvazia a fila antes do half-close
        deadline = time.monotonic() + CLOSE_GRACE
        for conn in conns:
            if conn.writer is not None and conn.writer is not threading.current_thread():
                conn.writer.join(max(0.0, deadline - time.monotonic()))
        for conn in conns:
            try:
                conn.sock.shutdown(socket.SHUT_WR)
            except OSError:
                pass
        # Espera o EOF dos peers para não descartar dados ainda não lidos
        deadline = time.monotonic() + CLOSE_GRACE
        for conn in conns:
            if conn.reader is not None and conn.reader is not threading.current_thread():
                conn.reader.join(max(0.0, deadline - time.monotonic()))
        for conn in conns:
            conn.alive = False
            try:
                conn.sock.close()
            except OSError:
                pass
        if self._listener is not None:
            self._listener.close()
        if self._gatekeeper is not None and self._gatekeeper is not threading.current_thread():
            self._gatekeeper.join(CLOSE_GRACE)
        self.logger.debug(f"Endpoint {self.local_id} encerrado")

    # ---- internos ----

    def _complete(self, completion: Completion) -> None:
        with self._lock:
            self._completions.append(completion)

    def _fill(self, source: str, token: int, buffer: Bundle, body) -> None:
        # Chamado com self._lock adquirido
        status = STATUS_OK
        if len(body) > buffer.capacity:
            self.logger.error(f"{self.local_id}: frame de {len(body)} bytes excede buffer de {buffer.capacity}")
            status = STATUS_ERROR
        else:
            buffer.load(body)
        self._completions.append(Completion(RECV, source, token, len(body), status, buffer))

    def _on_data(self, source: str, body) -> None:
        with self._lock:
            if self._posted:
                token, buffer = self._posted.popleft()
                self._fill(source, token, buffer, body)
                self._grant(source, 1)
            else:
                self._staged.append((source, body))

    def _grant(self, peer: str, count: int) -> None:
        # Chamado com self._lock adquirido
        if peer == self.local_id:
            return
        conn = self._conns.get(peer)
        if conn is None or not conn.alive:
            return
        conn.outbox.append((TAG_CREDIT, None, count))
        conn.ready.notify()

    def _on_credit(self, conn: _Connection, count: int) -> None:
        with self._lock:
            conn.credits += count
            while conn.credits > 0 and conn.pending:
                conn.credits -= 1
                token, bundle = conn.pending.popleft()
                conn.outbox.append((TAG_DATA, token, bundle))
            if conn.outbox:
                conn.ready.notify()

    def _writer_loop(self, conn: _Connection) -> None:
        while True:
            with self._lock:
                while not conn.outbox and conn.alive and not self.closed:
                    conn.ready.wait()
                if not conn.outbox or not conn.alive:
                    return
                tag, token, item = conn.outbox.popleft()
            try:
                if tag == TAG_DATA:
                    view = item.view()
                    conn.sock.sendall(FRAME_PREFIX.pack(len(view) + 1, TAG_DATA))
                    conn.sock.sendall(view)
                else:
                    conn.sock.sendall(encode_frame(TAG_CREDIT, CREDIT_BODY.pack(item)))
            except OSError as e:
                self.logger.warning(f"{self.local_id}: falha de escrita para {conn.peer_id}: {e}")
                if tag == TAG_DATA:
                    self._complete(Completion(SEND, conn.peer_id, token, item.tail, STATUS_ERROR, item))
                self._mark_dead(conn)
                return
            if tag == TAG_DATA:
                self._complete(Completion(SEND, conn.peer_id, token, item.tail, STATUS_OK, item))

    def _mark_dead(self, conn: _Connection) -> None:
        with self._lock:
            conn.alive = False
            failed = list(conn.pending)
            failed.extend((token, item) for tag, token, item in conn.outbox if tag == TAG_DATA)
            conn.pending.clear()
            conn.outbox.clear()
            for token, bundle in failed:
                self._completions.append(Completion(SEND, conn.peer_id, token, bundle.tail, STATUS_ERROR, bundle))
            conn.ready.notify_all()

    def _reader_loop(self, conn: _Connection) -> None:
        try:
            while True:
                frame = read_frame(conn.sock)
                if frame is None:
                    break
                tag, body = frame
                if tag == TAG_DATA:
                    self._on_data(conn.peer_id, body)
                elif tag == TAG_CREDIT:
                    (count,) = CREDIT_BODY.unpack(body)
                    self._on_credit(conn, count)
                else:
                    raise FramingError(f"Tag de frame desconhecida: {tag:#04x}")
        except (OSError, FramingError) as e:
            if not self.closed:
                self.logger.warning(f"{self.local_id}: enlace com {conn.peer_id} falhou: {e}")
        finally:
            self._mark_dead(conn)
            self.logger.debug(f"{self.local_id}: leitor de {conn.peer_id} encerrado")


class SocketTransport(ITransport):
    """Fábrica de endpoints TCP"""

    def connect_all(self, link: LinkConfig) -> SocketEndpoint:
        return SocketEndpoint(link).connect()


def free_port(host: str = "127.0.0.1") -> int:
    """Reserva temporariamente uma porta livre do sistema"""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.bind((host, 0))
        return s.getsockname()[1]
