"""
Codificação bit-exata do cabeçalho de mensagem e dos registros de controle

Layout do cabeçalho: [u32 LE payload_size][u32 LE dst_rank], 8 bytes.
"""
import struct
from typing import Tuple

from src.utils.errors import FramingError

HEADER = struct.Struct('<II')
HEADER_SIZE = HEADER.size
MAX_U32 = 0xFFFFFFFF

# Destino sentinela dos registros de controle
CONTROL_RANK = MAX_U32

OP_LOCAL_DONE = 0x01
OP_ROUND = 0x02
OP_ACK = 0x03
OP_TERMINATE = 0x04

_LOCAL_DONE = struct.Struct('<BIQQ')
_ROUND = struct.Struct('<BI')
_ACK = struct.Struct('<BIIBQQ')
_TERMINATE = struct.Struct('<B')


def encode_header(payload_size: int, dst_rank: int) -> bytes:
    """Codifica o cabeçalho de 8 bytes"""
    return HEADER.pack(payload_size, dst_rank)


def decode_header(data) -> Tuple[int, int]:
    """Decodifica (payload_size, dst_rank) de exatamente 8 bytes"""
    if len(data) != HEADER_SIZE:
        raise FramingError(f"Cabeçalho deve ter {HEADER_SIZE} bytes, recebido {len(data)}")
    return HEADER.unpack(data)


def encode_local_done(rank: int, sent: int, received: int) -> bytes:
    return _LOCAL_DONE.pack(OP_LOCAL_DONE, rank, sent, received)


def encode_round(round_id: int) -> bytes:
    return _ROUND.pack(OP_ROUND, round_id)


def encode_ack(round_id: int, node: int, ready: bool, sent: int, received: int) -> bytes:
    return _ACK.pack(OP_ACK, round_id, node, int(ready), sent, received)


def encode_terminate() -> bytes:
    return _TERMINATE.pack(OP_TERMINATE)


def decode_control(payload) -> Tuple:
    """Decodifica um payload de controle em (opcode, campos...)"""
    if len(payload) == 0:
        raise FramingError("Registro de controle sem opcode")
    opcode = payload[0]
    layouts = {
        OP_LOCAL_DONE: _LOCAL_DONE,
        OP_ROUND: _ROUND,
        OP_ACK: _ACK,
        OP_TERMINATE: _TERMINATE,
    }
    layout = layouts.get(opcode)
    if layout is None:
        raise FramingError(f"Opcode de controle desconhecido: {opcode:#04x}")
    if len(payload) != layout.size:
        raise FramingError(f"Registro de controle {opcode:#04x} com {len(payload)} bytes (esperado {layout.size})")
    return layout.unpack(payload)
