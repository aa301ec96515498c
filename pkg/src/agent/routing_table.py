"""
Topologia do cluster e tabela de próximo salto pré-computada
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple, Union

from src.utils.errors import ConfigurationError
from src.transport.interfaces import Address, agent_peer, rank_peer

LOCAL = "LOCAL"
REMOTE = "REMOTE"

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NextHop:
    """Alvo de roteamento: processo local (rank) ou agente remoto (nó)"""
    kind: str
    target: int

    @property
    def is_local(self) -> bool:
        return self.kind == LOCAL

    @property
    def peer_id(self) -> str:
        return rank_peer(self.target) if self.is_local else agent_peer(self.target)

    def __str__(self) -> str:
        return f"{self.kind}({self.target})"


@dataclass
class Topology:
    """Mapeamento nó -> ranks, com endereços opcionais dos agentes"""
    nodes: Dict[int, List[int]]
    addresses: Dict[int, Address] = field(default_factory=dict)

    @property
    def world_size(self) -> int:
        return sum(len(ranks) for ranks in self.nodes.values())

    @property
    def node_ids(self) -> List[int]:
        return sorted(self.nodes)

    def ranks_of(self, node: int) -> List[int]:
        return list(self.nodes[node])

    def node_of_rank(self, rank: int) -> int:
        for node, ranks in self.nodes.items():
            if rank in ranks:
                return node
        raise ConfigurationError(f"Rank {rank} não pertence a nenhum nó")

    def validate(self) -> None:
        """Garante que os ranks 0..world_size-1 aparecem exatamente uma vez"""
        seen: Dict[int, int] = {}
        for node, ranks in self.nodes.items():
            for rank in ranks:
                if rank in seen:
                    raise ConfigurationError(f"Rank {rank} duplicado nos nós {seen[rank]} e {node}")
                seen[rank] = node
        world = len(seen)
        missing = sorted(set(range(world)) - set(seen))
        extra = sorted(r for r in seen if r < 0 or r >= world)
        if missing or extra:
            raise ConfigurationError(f"Topologia não cobre 0..{world - 1}: faltando {missing}, fora do intervalo {extra}")

    @classmethod
    def uniform(cls, nodes: int, ranks_per_node: int,
                addresses: Optional[Dict[int, Address]] = None) -> 'Topology':
        if nodes < 1 or ranks_per_node < 1:
            raise ConfigurationError("nodes e ranks_per_node devem ser >= 1")
        layout = {n: list(range(n * ranks_per_node, (n + 1) * ranks_per_node)) for n in range(nodes)}
        return cls(layout, dict(addresses or {}))

    @classmethod
    def from_config(cls, section: Mapping) -> 'Topology':
        """Lê entradas 'node.<id> = host:port | r0,r1' da seção topology"""
        entries = section.get('node', {}) if section else {}
        if not entries:
            raise ConfigurationError("Seção topology sem nós")
        nodes: Dict[int, List[int]] = {}
        addresses: Dict[int, Address] = {}
        for node_key, raw in entries.items():
            node = int(node_key)
            text = str(raw)
            address_part, _, ranks_part = text.partition('|')
            if not ranks_part:
                raise ConfigurationError(f"Nó {node} sem lista de ranks: {text!r}")
            host, _, port = address_part.strip().rpartition(':')
            if not host or not port:
                raise ConfigurationError(f"Endereço inválido para o nó {node}: {address_part!r}")
            addresses[node] = (host, int(port))
            nodes[node] = [int(r) for r in ranks_part.split(',') if r.strip()]
        topology = cls(nodes, addresses)
        topology.validate()
        return topology


@dataclass
class RoutingTable:
    """Tabela total: todo rank 0..world_size-1 tem um próximo salto"""
    next_hop: List[NextHop]
    world_size: int
    node_of: List[int]
    self_node: int

    def lookup(self, dst: int) -> NextHop:
        return self.next_hop[dst]

    def hops(self) -> List[NextHop]:
        """Próximos saltos distintos, locais primeiro"""
        unique = dict.fromkeys(self.next_hop)
        return sorted(unique, key=lambda h: (h.kind != LOCAL, h.target))

    def local_ranks(self) -> List[int]:
        return [rank for rank, node in enumerate(self.node_of) if node == self.self_node]

    def remote_nodes(self) -> List[int]:
        return sorted({node for node in self.node_of if node != self.self_node})


def build_routing_table(topology: Union[Topology, Mapping[int, List[int]]], self_node: int) -> RoutingTable:
    """Pré-computa a tabela de próximo salto do agente de self_node"""
    if not isinstance(topology, Topology):
        topology = Topology({int(k): list(v) for k, v in topology.items()})
    topology.validate()
    if self_node not in topology.nodes:
        raise ConfigurationError(f"Nó {self_node} ausente da topologia")

    world_size = topology.world_size
    node_of = [0] * world_size
    next_hop: List[NextHop] = [None] * world_size
    for node, ranks in topology.nodes.items():
        for rank in ranks:
            node_of[rank] = node
            next_hop[rank] = NextHop(LOCAL, rank) if node == self_node else NextHop(REMOTE, node)

    logger.debug(f"Tabela de roteamento do nó {self_node}: {world_size} ranks, {len(topology.nodes)} nós")
    return RoutingTable(next_hop, world_size, node_of, self_node)
