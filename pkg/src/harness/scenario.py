"""
Cenários de execução: configuração, métricas por repetição e agregação
"""
import copy
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import pandas as pd

from src.utils.errors import ConfigurationError
from src.agent.agent_config import AgentConfig
from src.agent.routing_table import Topology
from src.bench.interfaces import WorkloadSpec
from src.runtime.handle import RuntimeConfig
from src.wire.codec import HEADER_SIZE

PLACEMENTS = ('inline', 'sidecar')
STATUS_OK = 'ok'
STATUS_FAILED = 'failed'
UTILIZATION_SLACK = 1.05

# Campos numéricos agregados (mean/min/max) em metrics.json e summary.csv
METRIC_FIELDS = [
    'wall_time', 'routed_bytes', 'routed_msgs', 'mean_remote_transfer', 'mean_local_transfer',
    'network_utilization', 'mc_ratio', 'throughput', 'routed_remote_bytes',
]

logger = logging.getLogger(__name__)


@dataclass
class ScenarioConfig:
    """Posicionamento, topologia uniforme, parâmetros de agente/runtime e carga"""
    name: str = 'default'
    placement: str = 'inline'
    nodes: int = 1
    ranks_per_node: int = 2
    agent: AgentConfig = field(default_factory=AgentConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    link_speed: float = 10e9
    repetitions: int = 5
    credits: int = 16
    connect_timeout: float = 10.0
    host: str = '127.0.0.1'
    run_timeout: float = 300.0

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> 'ScenarioConfig':
        """Constrói a partir do dicionário de get_default_config/load_config"""
        scenario = config.get('scenario', {})
        transport = config.get('transport', {})
        harness = config.get('harness', {})
        workload = dict(config.get('workload', {}))
        params = dict(workload.get('params') or {})
        params.setdefault('cache_bytes', harness.get('cache_bytes', 32 * 1024 * 1024))
        workload['params'] = params

        cfg = cls(
            name=str(scenario.get('name', cls.name)),
            placement=str(scenario.get('placement', cls.placement)),
            nodes=int(scenario.get('nodes', cls.nodes)),
            ranks_per_node=int(scenario.get('ranks_per_node', cls.ranks_per_node)),
            agent=AgentConfig.from_dict(config.get('agent', {})),
            runtime=RuntimeConfig.from_dict(config.get('runtime', {})),
            workload=WorkloadSpec.from_dict(workload),
            link_speed=float(scenario.get('link_speed', cls.link_speed)),
            repetitions=int(scenario.get('repetitions', cls.repetitions)),
            credits=int(transport.get('credits', cls.credits)),
            connect_timeout=float(transport.get('connect_timeout', cls.connect_timeout)),
            host=str(transport.get('host', cls.host)),
            run_timeout=float(harness.get('run_timeout', cls.run_timeout)),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.placement not in PLACEMENTS:
            raise ConfigurationError(f"Posicionamento inválido: {self.placement} (opções: {', '.join(PLACEMENTS)})")
        if self.nodes < 1 or self.ranks_per_node < 1:
            raise ConfigurationError("nodes e ranks_per_node devem ser >= 1")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions deve ser >= 1")
        if self.link_speed <= 0:
            raise ConfigurationError("link_speed deve ser positivo")
        self.agent.validate()
        self.runtime.validate()
        self.workload.validate()

    def align(self) -> 'ScenarioConfig':
        """Ajusta os tamanhos de recepção para caber qualquer bundle de entrada"""
        self.agent.runtime_buf_size = self.runtime.buf_size
        self.runtime.recv_buf_size = max(self.runtime.recv_buf_size, self.agent.local_buf_size)
        self.runtime.credits = self.credits
        self.runtime.connect_timeout = self.connect_timeout
        return self

    def copy(self) -> 'ScenarioConfig':
        return copy.deepcopy(self)

    @property
    def world_size(self) -> int:
        return self.nodes * self.ranks_per_node

    def topology(self, addresses: Optional[Dict[int, Any]] = None) -> Topology:
        return Topology.uniform(self.nodes, self.ranks_per_node, addresses)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'placement': self.placement,
            'nodes': self.nodes,
            'ranks_per_node': self.ranks_per_node,
            'agent': asdict(self.agent),
            'runtime': asdict(self.runtime),
            'workload': self.workload.to_dict(),
            'link_speed': self.link_speed,
            'repetitions': self.repetitions,
        }


@dataclass
class RunMetrics:
    """Métricas de uma repetição"""
    wall_time: float = 0.0
    routed_bytes: int = 0
    routed_msgs: int = 0
    mean_remote_transfer: float = 0.0
    mean_local_transfer: float = 0.0
    network_utilization: float = 0.0
    mc_ratio: float = 0.0
    status: str = STATUS_OK
    result_digest: str = ''
    routed_remote_bytes: int = 0
    throughput: float = 0.0
    agent_threads: List[Dict[str, Any]] = field(default_factory=list)
    error: str = ''

    def to_dict(self, include_threads: bool = True) -> Dict[str, Any]:
        result = asdict(self)
        if not include_threads:
            result.pop('agent_threads')
        return result


@dataclass
class DeploymentOutcome:
    """Tudo o que uma implantação devolve ao harness"""
    reports: List[Any]
    agent_stats: List[Dict[str, Any]]
    wall_time: float


def compute_metrics(cfg: ScenarioConfig, outcome: DeploymentOutcome, workload,
                    expected_digest: str) -> RunMetrics:
    """Deriva RunMetrics das estatísticas dos agentes e dos relatórios dos ranks"""
    totals = {}
    threads: List[Dict[str, Any]] = []
    exit_ok = True
    for stats in outcome.agent_stats:
        for key, value in stats['totals'].items():
            totals[key] = totals.get(key, 0) + value
        for thread in stats['threads']:
            threads.append(dict(thread, node=stats['node']))
        exit_ok = exit_ok and stats.get('exit_status', 0) == 0

    reports = outcome.reports
    wall = max((r.wall_time for r in reports), default=0.0) or outcome.wall_time
    wall = max(wall, 1e-9)
    routed_bytes = totals.get('ingress_bytes', 0)
    remote_bytes = totals.get('remote_bytes_posted', 0)
    remote_bundles = totals.get('remote_bundles_posted', 0)
    local_bytes_posted = totals.get('local_bytes_posted', 0)
    local_bundles = totals.get('local_bundles_posted', 0)
    local_work = sum(r.local_bytes for r in reports)
    app_routed = sum(r.routed_bytes for r in reports)

    result = workload.merge([r.output for r in reports], cfg.workload, cfg.world_size)
    digest = workload.digest(result)

    metrics = RunMetrics(
        wall_time=wall,
        routed_bytes=routed_bytes,
        routed_msgs=totals.get('ingress_msgs', 0),
        mean_remote_transfer=remote_bytes / remote_bundles if remote_bundles else 0.0,
        mean_local_transfer=local_bytes_posted / local_bundles if local_bundles else 0.0,
        network_utilization=remote_bytes * 8 / (wall * cfg.link_speed),
        mc_ratio=local_work / app_routed if app_routed else 0.0,
        result_digest=digest,
        routed_remote_bytes=remote_bytes,
        throughput=routed_bytes / wall,
        agent_threads=threads,
    )

    problems = []
    if digest != expected_digest:
        problems.append("resultado difere do oráculo")
    declared = sum(r.runtime_stats.get('sent_bytes', 0) + HEADER_SIZE * r.runtime_stats.get('sent_msgs', 0)
                   + r.runtime_stats.get('control_bytes', 0) for r in reports)
    if declared != routed_bytes:
        problems.append(f"conservação violada: {routed_bytes} bytes roteados != {declared} bytes enviados")
    if not exit_ok:
        problems.append("agente terminou com falha de enlace")
    if problems:
        metrics.status = STATUS_FAILED
        metrics.error = "; ".join(problems)
        logger.error(f"Cenário {cfg.name}: {metrics.error}")
    if metrics.network_utilization > UTILIZATION_SLACK:
        logger.warning(f"Cenário {cfg.name}: utilização {metrics.network_utilization:.3f} acima de {UTILIZATION_SLACK}")
    return metrics


def aggregate_samples(samples: List[RunMetrics]) -> Dict[str, Dict[str, float]]:
    """mean/min/max por campo numérico"""
    frame = pd.DataFrame([s.to_dict(include_threads=False) for s in samples])
    if frame.empty:
        return {}
    stats = frame[METRIC_FIELDS].astype(float).agg(['mean', 'min', 'max'])
    return {name: {agg: float(stats.loc[agg, name]) for agg in ('mean', 'min', 'max')}
            for name in METRIC_FIELDS}


def mc_category(ratio: float) -> str:
    """host-dominated (> 2), balanced (1 a 2), communication-dominated (< 1)"""
    if math.isnan(ratio):
        return 'n/a'
    if ratio > 2:
        return 'host-dominated'
    if ratio < 1:
        return 'communication-dominated'
    return 'balanced'


@dataclass
class ScenarioResult:
    """Resultado de um cenário ao longo das repetições"""
    name: str
    workload: str
    placement: str
    samples: List[RunMetrics]
    aggregate: Dict[str, Dict[str, float]]
    status: str
    result_digest: str
    expected_digest: str
    config: Dict[str, Any] = field(default_factory=dict)
    error: str = ''

    @classmethod
    def failed(cls, cfg: ScenarioConfig, error: str) -> 'ScenarioResult':
        return cls(cfg.name, cfg.workload.kind, cfg.placement, [], {}, STATUS_FAILED, '', '',
                   cfg.to_dict(), error)

    def mean(self, name: str) -> float:
        return self.aggregate.get(name, {}).get('mean', float('nan'))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'scenario': self.name,
            'workload': self.workload,
            'placement': self.placement,
            'status': self.status,
            'result_digest': self.result_digest,
            'expected_digest': self.expected_digest,
            'error': self.error,
            'config': self.config,
            'samples': [s.to_dict() for s in self.samples],
            'aggregate': self.aggregate,
        }

    def summary_row(self) -> Dict[str, Any]:
        row = {'scenario': self.name, 'workload': self.workload, 'placement': self.placement,
               'status': self.status, 'samples': len(self.samples)}
        for name in METRIC_FIELDS:
            row[name] = self.mean(name)
        row['mc_category'] = mc_category(row['mc_ratio'])
        return row

