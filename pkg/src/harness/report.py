"""
Saídas do harness: metrics.json, summary.csv e REPORT.md
"""
import json
import logging
import math
import os
from datetime import datetime
from typing import Any, List, Optional

import numpy as np
import pandas as pd

from .scenario import METRIC_FIELDS, STATUS_OK, ScenarioResult

logger = logging.getLogger(__name__)


def convert_to_serializable(obj: Any) -> Any:
    """Converte tipos numpy/pandas e NaN para tipos aceitos pelo json"""
    if isinstance(obj, (np.integer,)):
        return int(obj)
    elif isinstance(obj, (np.floating, float)):
        value = float(obj)
        return None if math.isnan(value) or math.isinf(value) else value
    elif isinstance(obj, np.ndarray):
        return [convert_to_serializable(item) for item in obj.tolist()]
    elif isinstance(obj, (np.bool_,)):
        return bool(obj)
    elif isinstance(obj, dict):
        return {str(k): convert_to_serializable(v) for k, v in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [convert_to_serializable(item) for item in obj]
    else:
        return obj


def summary_frame(results: List[ScenarioResult]) -> pd.DataFrame:
    columns = ['scenario', 'workload', 'placement', 'status', 'samples'] + METRIC_FIELDS + ['mc_category']
    return pd.DataFrame([r.summary_row() for r in results], columns=columns)


def _fmt(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return 'N/A'
        return f"{value:.4g}"
    return str(value)


def emit_report(results: List[ScenarioResult], output_dir: str,
                table: Optional[pd.DataFrame] = None) -> None:
    """Grava metrics.json (objeto para um cenário, lista para vários), summary.csv e REPORT.md"""
    os.makedirs(output_dir, exist_ok=True)

    payload = [convert_to_serializable(r.to_dict()) for r in results]
    metrics_path = os.path.join(output_dir, 'metrics.json')
    with open(metrics_path, 'w', encoding='utf-8') as f:
        json.dump(payload[0] if len(payload) == 1 else payload, f, indent=2, ensure_ascii=False)

    summary = summary_frame(results)
    summary_path = os.path.join(output_dir, 'summary.csv')
    summary.to_csv(summary_path, index=False)

    report_path = os.path.join(output_dir, 'REPORT.md')
    with open(report_path, 'w', encoding='utf-8') as f:
        f.write("# Relatório de Execução do Buddy\n\n")
        f.write(f"**Data de execução:** {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n\n")

        failed = [r for r in results if r.status != STATUS_OK]
        f.write("## Resumo Executivo\n\n")
        f.write(f"- **Cenários executados:** {len(results)}\n")
        f.write(f"- **Cenários com falha:** {len(failed)}\n")
        if results:
            best = min((r for r in results if r.status == STATUS_OK),
                       key=lambda r: r.mean('wall_time'), default=None)
            if best is not None:
                f.write(f"- **Cenário mais rápido:** {best.name} ({best.mean('wall_time'):.4f}s)\n")
        f.write("\n")

        f.write("## Cenários\n\n")
        f.write("| Cenário | Carga | Posicionamento | Status | Tempo (s) | Bytes roteados "
                "| Transf. remota (B) | Transf. local (B) | Utilização | M/C |\n")
        f.write("|---------|-------|----------------|--------|-----------|----------------"
                "|--------------------|-------------------|------------|-----|\n")
        for r in results:
            f.write(f"| {r.name} | {r.workload} | {r.placement} | {r.status} | "
                    f"{_fmt(r.mean('wall_time'))} | {_fmt(r.mean('routed_bytes'))} | "
                    f"{_fmt(r.mean('mean_remote_transfer'))} | {_fmt(r.mean('mean_local_transfer'))} | "
                    f"{_fmt(r.mean('network_utilization'))} | {_fmt(r.mean('mc_ratio'))} |\n")
        f.write("\n")

        if table is not None and not table.empty:
            f.write("## Tabela do Experimento\n\n")
            f.write("| " + " | ".join(str(c) for c in table.columns) + " |\n")
            f.write("|" + "|".join("---" for _ in table.columns) + "|\n")
            for _, row in table.iterrows():
                f.write("| " + " | ".join(_fmt(v) for v in row.tolist()) + " |\n")
            f.write("\n")

        if failed:
            f.write("## Falhas\n\n")
            for r in failed:
                f.write(f"- **{r.name}:** {r.error or 'resultado inválido'}\n")
            f.write("\n")

    logger.info(f"Relatório gerado em: {output_dir} ({metrics_path}, {summary_path}, {report_path})")


def exit_code(results: List[ScenarioResult]) -> int:
    """0 se todos os cenários passaram, 1 caso contrário"""
    return 0 if results and all(r.status == STATUS_OK for r in results) else 1
