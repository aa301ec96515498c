# Pacote de transporte (loopback em processo e stream sockets)
from typing import Optional

from .completion import Completion, SEND, RECV, STATUS_OK, STATUS_ERROR
from .interfaces import (
    IEndpoint, ITransport, LinkConfig, agent_peer, rank_peer, is_rank_peer, peer_index
)
from .loopback import LoopbackFabric, LoopbackEndpoint, LoopbackTransport
from .socket_transport import SocketEndpoint, SocketTransport, free_port


def connect_all(link: LinkConfig, transport: Optional[ITransport] = None) -> IEndpoint:
    """Conecta um endpoint a todos os peers da topologia"""
    return (transport or SocketTransport()).connect_all(link)
