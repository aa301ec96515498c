"""
Experimentos: execução de cenários, sweeps de parâmetros, escala fraca e
comparação de posicionamentos
"""
import logging
import math
from typing import Any, Dict, Iterable, List, Optional

import pandas as pd

from src.utils.errors import ConfigurationError
from src.bench.registry import get_workload
from .deployment import IDeployment, make_deployment
from .scenario import (
    STATUS_FAILED, STATUS_OK, RunMetrics, ScenarioConfig, ScenarioResult,
    aggregate_samples, compute_metrics, mc_category
)

SWEEP_AXES = {
    'remote_buf_size': ('agent', 'remote_buf_size'),
    'runtime_bufs': ('runtime', 'runtime_bufs'),
    'routing_threads': ('agent', 'routing_threads'),
}

logger = logging.getLogger(__name__)


def run_scenario(cfg: ScenarioConfig, deployment: Optional[IDeployment] = None) -> ScenarioResult:
    """Executa cfg.repetitions vezes, valida o oráculo e agrega as métricas"""
    cfg = cfg.copy().align()
    cfg.validate()
    deployment = deployment or make_deployment(cfg.placement)
    workload = get_workload(cfg.workload.kind)
    expected_digest = workload.digest(workload.oracle(cfg.workload, cfg.world_size))

    logger.info(f"Cenário {cfg.name}: {cfg.workload.kind}, {cfg.placement}, "
                f"{cfg.nodes}x{cfg.ranks_per_node} ranks, {cfg.repetitions} repetições")
    samples: List[RunMetrics] = []
    for repetition in range(cfg.repetitions):
        try:
            outcome = deployment.execute(cfg, workload)
        except Exception as e:
            logger.error(f"Cenário {cfg.name}: falha na implantação (repetição {repetition + 1}): {e}")
            raise
        metrics = compute_metrics(cfg, outcome, workload, expected_digest)
        logger.info(f"Repetição {repetition + 1}/{cfg.repetitions}: {metrics.wall_time:.3f}s, "
                    f"{metrics.routed_bytes} bytes, status={metrics.status}")
        samples.append(metrics)

    status = STATUS_OK if all(s.status == STATUS_OK for s in samples) else STATUS_FAILED
    digests = {s.result_digest for s in samples}
    return ScenarioResult(
        name=cfg.name,
        workload=cfg.workload.kind,
        placement=cfg.placement,
        samples=samples,
        aggregate=aggregate_samples(samples),
        status=status,
        result_digest=samples[0].result_digest if len(digests) == 1 else '',
        expected_digest=expected_digest,
        config=cfg.to_dict(),
        error="; ".join(s.error for s in samples if s.error),
    )


def _run_cell(cfg: ScenarioConfig, deployment: Optional[IDeployment]) -> ScenarioResult:
    try:
        return run_scenario(cfg, deployment)
    except Exception as e:
        logger.warning(f"Célula {cfg.name} falhou: {e}")
        return ScenarioResult.failed(cfg, str(e))


def _row(result: ScenarioResult, **extra) -> Dict[str, Any]:
    row = dict(extra)
    row.update(result.summary_row())
    return row


def _with_speedup(frame: pd.DataFrame) -> pd.DataFrame:
    """Speedup em relação à primeira célula (razão dos tempos de parede)"""
    if frame.empty:
        frame['speedup'] = []
        return frame
    baseline = frame['wall_time'].iloc[0]
    if baseline and not math.isnan(baseline):
        frame['speedup'] = baseline / frame['wall_time']
    else:
        frame['speedup'] = float('nan')
    return frame


def with_axis_value(base: ScenarioConfig, axis: str, value: Any) -> ScenarioConfig:
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"Eixo de sweep desconhecido: {axis} (opções: {', '.join(SWEEP_AXES)})")
    section, attribute = SWEEP_AXES[axis]
    cfg = base.copy()
    setattr(getattr(cfg, section), attribute, int(value))
    cfg.name = f"{base.name}-{axis}={value}"
    return cfg.align()


def sweep(base: ScenarioConfig, axis: str, values: Iterable[Any],
          deployment: Optional[IDeployment] = None,
          results: Optional[List[ScenarioResult]] = None) -> pd.DataFrame:
    """Um run_scenario por valor; células falhas viram linhas com status=failed"""
    values = list(values)
    cells = [with_axis_value(base, axis, v) for v in values]
    logger.info(f"Sweep de {axis}: {values}")
    rows = []
    for value, cfg in zip(values, cells):
        result = _run_cell(cfg, deployment)
        if results is not None:
            results.append(result)
        rows.append(_row(result, **{axis: value}))
    return _with_speedup(pd.DataFrame(rows))


def scaled_workload(base: ScenarioConfig, nodes: int) -> ScenarioConfig:
    """Multiplica o problema pelo número de nós"""
    cfg = base.copy()
    cfg.nodes = nodes
    cfg.name = f"{base.name}-nodes={nodes}"
    spec = cfg.workload
    if spec.kind == 'histogram':
        spec.params['table_factor'] = int(base.workload.params.get('table_factor', 1)) * nodes
    elif spec.kind == 'transpose':
        spec.params['dim'] = int(base.workload.params.get('dim', base.workload.scale)) * nodes
    elif spec.kind in ('tricount', 'sssp'):
        spec.scale = base.workload.scale * nodes
    return cfg.align()


def weak_scale(base: ScenarioConfig, node_counts: Iterable[int],
               deployment: Optional[IDeployment] = None,
               results: Optional[List[ScenarioResult]] = None) -> pd.DataFrame:
    """Escala fraca: problema proporcional ao número de nós"""
    rows = []
    for nodes in node_counts:
        result = _run_cell(scaled_workload(base, int(nodes)), deployment)
        if results is not None:
            results.append(result)
        rows.append(_row(result, nodes=int(nodes)))
    return _with_speedup(pd.DataFrame(rows))


def categorize_mc_ratio(ratio: float) -> str:
    """Categoria da razão M:C usada nos resumos por carga"""
    return mc_category(ratio)


def compare_placements(base: ScenarioConfig, workloads: Optional[Iterable[str]] = None,
                       results: Optional[List[ScenarioResult]] = None) -> pd.DataFrame:
    """Mesmo cenário sem offloading (inline) e com agente desacoplado (sidecar)"""
    kinds = list(workloads) if workloads else [base.workload.kind]
    rows = []
    for kind in kinds:
        per_placement: Dict[str, ScenarioResult] = {}
        for placement in ('inline', 'sidecar'):
            cfg = base.copy()
            cfg.placement = placement
            cfg.workload.kind = kind
            cfg.name = f"{base.name}-{kind}-{placement}"
            result = _run_cell(cfg, None)
            per_placement[placement] = result
            if results is not None:
                results.append(result)

        inline, sidecar = per_placement['inline'], per_placement['sidecar']
        inline_wall, sidecar_wall = inline.mean('wall_time'), sidecar.mean('wall_time')
        mc_ratio = inline.mean('mc_ratio')
        rows.append({
            'workload': kind,
            'inline_wall_time': inline_wall,
            'sidecar_wall_time': sidecar_wall,
            'speedup': inline_wall / sidecar_wall if sidecar_wall else float('nan'),
            'network_utilization': sidecar.mean('network_utilization'),
            'mc_ratio': mc_ratio,
            'category': categorize_mc_ratio(mc_ratio),
            'digests_match': bool(inline.result_digest) and inline.result_digest == sidecar.result_digest,
            'status': STATUS_OK if inline.status == sidecar.status == STATUS_OK else STATUS_FAILED,
        })
    return pd.DataFrame(rows)
