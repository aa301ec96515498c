"""
Interfaces para o layer de transporte (SEND/RECV com polling de completions)
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

from src.utils.errors import ConfigurationError
from src.wire.bundle import Bundle
from .completion import Completion

Address = Tuple[str, int]

AGENT_PREFIX = "agent/"
RANK_PREFIX = "rank/"


def agent_peer(node: int) -> str:
    return f"{AGENT_PREFIX}{node}"


def rank_peer(rank: int) -> str:
    return f"{RANK_PREFIX}{rank}"


def is_rank_peer(peer_id: str) -> bool:
    return peer_id.startswith(RANK_PREFIX)


def peer_index(peer_id: str) -> int:
    """Extrai o número do nó ou rank de um id de peer"""
    return int(peer_id.rsplit('/', 1)[1])


@dataclass
class LinkConfig:
    """Descrição de topologia vista por um endpoint"""
    local_id: str
    peers: Dict[str, Optional[Address]] = field(default_factory=dict)
    address: Optional[Address] = None
    timeout: float = 10.0
    credits: int = 16
    poll_max: int = 64

    def validate(self) -> None:
        if self.local_id in self.peers:
            raise ConfigurationError(f"Endpoint {self.local_id} listado como seu próprio peer")
        if self.credits < 1:
            raise ConfigurationError("credits deve ser >= 1")
        if self.timeout <= 0:
            raise ConfigurationError("timeout deve ser positivo")


class IEndpoint(ABC):
    """Interface de endpoint assíncrono (Single Responsibility)"""

    local_id: str
    peers: Set[str]

    @abstractmethod
    def post_send(self, peer: str, bundle: Bundle) -> int:
        """Posta um envio não bloqueante; a posse do bundle passa ao transporte"""
        pass

    @abstractmethod
    def post_recv(self, bundle: Bundle) -> int:
        """Coloca um buffer no pool de recepção"""
        pass

    @abstractmethod
    def poll(self, max_count: int = 64) -> List[Completion]:
        """Retorna até max_count completions, cada uma exatamente uma vez"""
        pass

    @abstractmethod
    def close(self) -> None:
        """Encerra o endpoint"""
        pass


class ITransport(ABC):
    """Interface de fábrica de endpoints (Dependency Inversion)"""

    @abstractmethod
    def connect_all(self, link: LinkConfig) -> IEndpoint:
        """Estabelece a malha completa com os peers (semântica de barreira)"""
        pass
