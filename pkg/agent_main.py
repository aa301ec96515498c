"""
Executável sidecar do agente de roteamento (um por nó)
Uso: python agent_main.py --config cluster.conf --node 0 [--stats agent_0.json]
"""
import argparse
import json
import logging
import os
import sys

# Adiciona o diretório src ao path
sys.path.append(os.path.join(os.path.dirname(__file__), 'src'))

from src.utils.config import setup_logging, load_config
from src.agent.agent_config import AgentConfig
from src.agent.routing_agent import run_agent
from src.agent.routing_table import Topology
from src.harness.report import convert_to_serializable
from src.transport.socket_transport import SocketTransport


def stats_path(config, node: int, override=None) -> str:
    """Destino das métricas do agente: --stats ou <harness.output_dir>/agent_<nó>_stats.json"""
    if override:
        return override
    return os.path.join(config['harness']['output_dir'], f"agent_{node}_stats.json")


def save_stats(stats, path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(convert_to_serializable(stats), f, indent=2, ensure_ascii=False)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Agente de roteamento do Buddy")
    parser.add_argument('--config', required=True, help="Arquivo com a seção topology")
    parser.add_argument('--node', type=int, required=True, help="Id do nó deste agente")
    parser.add_argument('--stats', default=None, help="Arquivo JSON com as métricas gravado ao sair")
    args = parser.parse_args(argv)

    config = load_config(args.config)
    setup_logging(config['logging']['level'], config['logging'].get('file'))
    logger = logging.getLogger('agent_main')

    topology = Topology.from_config(config.get('topology', {}))
    agent_config = AgentConfig.from_dict(config['agent'])
    transport = config['transport']
    logger.info(f"Iniciando agente do nó {args.node} ({len(topology.node_ids)} nós, "
                f"{topology.world_size} ranks)")
    stats = {}
    try:
        status = run_agent(agent_config, topology, args.node, SocketTransport(),
                           credits=int(transport['credits']), timeout=float(transport['connect_timeout']),
                           stats_out=stats)
    finally:
        # Métricas parciais também são gravadas quando o agente termina com exceção
        if stats:
            path = stats_path(config, args.node, args.stats)
            save_stats(stats, path)
            logger.info(f"Métricas do agente salvas em: {path}")
    logger.info(f"Agente do nó {args.node} encerrado com status {status}")
    return status


if __name__ == "__main__":
    sys.exit(main())
