"""
Implantações dos cenários: inline (tudo em um processo, transporte em
memória) e sidecar (agente desacoplado em processo próprio, sockets)
"""
import logging
import multiprocessing as mp
import queue as queue_module
import threading
import time
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional

from src.utils.clock import IClock
from src.utils.errors import ConfigurationError, DeploymentError
from src.agent.routing_agent import RoutingAgent, agent_link_config, run_agent
from src.agent.routing_table import Topology, build_routing_table
from src.bench.interfaces import World
from src.bench.registry import get_workload
from src.runtime.handle import init
from src.transport.loopback import LoopbackFabric, LoopbackTransport
from src.transport.socket_transport import SocketTransport, free_port
from .scenario import DeploymentOutcome, ScenarioConfig

# Tempo extra para os agentes saírem depois dos ranks
AGENT_GRACE = 5.0

logger = logging.getLogger(__name__)


class IDeployment(ABC):
    """Interface de implantação de um cenário (Dependency Inversion)"""

    @abstractmethod
    def execute(self, cfg: ScenarioConfig, workload) -> DeploymentOutcome:
        """Executa uma repetição completa e devolve relatórios e estatísticas"""
        pass


class InlineDeployment(IDeployment):
    """Sem offloading: agentes e ranks são threads do mesmo processo"""

    def __init__(self, clock: Optional[IClock] = None):
        self.clock = clock
        self.logger = logging.getLogger(__name__)

    def execute(self, cfg: ScenarioConfig, workload) -> DeploymentOutcome:
        transport = LoopbackTransport(LoopbackFabric())
        topology = cfg.topology()
        world_size = topology.world_size
        agents: Dict[int, RoutingAgent] = {}
        reports: List[Any] = [None] * world_size
        errors: List[BaseException] = []
        lock = threading.Lock()

        def agent_main(node: int) -> None:
            try:
                table = build_routing_table(topology, node)
                link = agent_link_config(topology, node, cfg.credits, cfg.connect_timeout, cfg.agent.poll_max)
                endpoint = transport.connect_all(link)
                agent = RoutingAgent(cfg.agent, table, endpoint, self.clock, topology.node_ids)
                with lock:
                    agents[node] = agent
                try:
                    agent.run()
                finally:
                    endpoint.close()
            except Exception as e:
                self.logger.error(f"Agente {node} falhou: {e}")
                errors.append(e)

        def rank_main(rank: int) -> None:
            try:
                handle = init(cfg.runtime, topology, rank, transport, self.clock)
                reports[rank] = workload.run_rank(cfg.workload, handle, World(rank, world_size))
            except Exception as e:
                self.logger.error(f"Rank {rank} falhou: {e}")
                errors.append(e)

        agent_threads = [threading.Thread(target=agent_main, args=(n,), name=f"agent-{n}", daemon=True)
                         for n in topology.node_ids]
        rank_threads = [threading.Thread(target=rank_main, args=(r,), name=f"rank-{r}", daemon=True)
                        for r in range(world_size)]
        started = time.perf_counter()
        for thread in agent_threads + rank_threads:
            thread.start()

        deadline = time.monotonic() + cfg.run_timeout
        for thread in rank_threads:
            thread.join(max(0.0, deadline - time.monotonic()))
        wall_time = time.perf_counter() - started
        stalled = [t.name for t in rank_threads if t.is_alive()]
        if stalled or errors:
            with lock:
                for agent in agents.values():
                    agent.stop()
        for thread in agent_threads:
            thread.join(AGENT_GRACE)

        if errors:
            raise DeploymentError(f"Implantação inline falhou: {errors[0]}") from errors[0]
        if stalled:
            raise DeploymentError(f"Ranks não terminaram em {cfg.run_timeout}s: {stalled}")
        return DeploymentOutcome(reports, [agents[n].get_stats() for n in topology.node_ids], wall_time)


def _agent_process(cfg: ScenarioConfig, topology: Topology, node: int, channel) -> None:
    try:
        stats: Dict[str, Any] = {}
        run_agent(cfg.agent, topology, node, SocketTransport(), None,
                  cfg.credits, cfg.connect_timeout, stats)
        channel.put(('agent', node, stats, None))
    except Exception as e:
        channel.put(('agent', node, None, f"{type(e).__name__}: {e}"))


def _app_process(cfg: ScenarioConfig, topology: Topology, node: int, channel) -> None:
    workload = get_workload(cfg.workload.kind)
    world_size = topology.world_size
    reports: Dict[int, Any] = {}
    errors: List[str] = []

    def rank_main(rank: int) -> None:
        try:
            handle = init(cfg.runtime, topology, rank, SocketTransport())
            reports[rank] = workload.run_rank(cfg.workload, handle, World(rank, world_size))
        except Exception as e:
            errors.append(f"rank {rank}: {type(e).__name__}: {e}")

    threads = [threading.Thread(target=rank_main, args=(r,), daemon=True) for r in topology.ranks_of(node)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    channel.put(('app', node, reports, errors[0] if errors else None))


class SidecarDeployment(IDeployment):
    """Offloading: por nó, um processo de agente e um processo de aplicação"""

    def __init__(self, start_method: str = 'spawn'):
        self.context = mp.get_context(start_method)
        self.logger = logging.getLogger(__name__)

    def execute(self, cfg: ScenarioConfig, workload) -> DeploymentOutcome:
        addresses = {node: (cfg.host, free_port(cfg.host)) for node in range(cfg.nodes)}
        topology = cfg.topology(addresses)
        channel = self.context.Queue()
        processes = []
        started = time.perf_counter()
        try:
            for node in topology.node_ids:
                for target, role in ((_agent_process, 'agent'), (_app_process, 'app')):
                    process = self.context.Process(target=target, args=(cfg, topology, node, channel),
                                                   name=f"{role}-{node}", daemon=True)
                    process.start()
                    processes.append(process)
            self.logger.info(f"Sidecar: {len(processes)} processos iniciados para {cfg.nodes} nós")

            agent_stats: Dict[int, Dict[str, Any]] = {}
            reports: Dict[int, Any] = {}
            deadline = time.monotonic() + cfg.run_timeout
            for _ in range(len(processes)):
                try:
                    role, node, payload, error = channel.get(timeout=max(0.1, deadline - time.monotonic()))
                except queue_module.Empty:
                    raise DeploymentError(f"Cenário sidecar não terminou em {cfg.run_timeout}s") from None
                if error is not None:
                    raise DeploymentError(f"Processo {role}-{node} falhou: {error}")
                if role == 'agent':
                    agent_stats[node] = payload
                else:
                    reports.update(payload)
            wall_time = time.perf_counter() - started

            for process in processes:
                process.join(AGENT_GRACE)
        finally:
            for process in processes:
                if process.is_alive():
                    self.logger.warning(f"Encerrando processo filho {process.name}")
                    process.terminate()
                    process.join(1.0)

        return DeploymentOutcome([reports[r] for r in range(topology.world_size)],
                                 [agent_stats[n] for n in topology.node_ids], wall_time)


def make_deployment(placement: str) -> IDeployment:
    if placement == 'inline':
        return InlineDeployment()
    if placement == 'sidecar':
        return SidecarDeployment()
    raise ConfigurationError(f"Posicionamento inválido: {placement}")
