# Pacote do harness de experimentos
from .scenario import (
    ScenarioConfig, RunMetrics, ScenarioResult, DeploymentOutcome, compute_metrics,
    aggregate_samples, mc_category, METRIC_FIELDS, PLACEMENTS, STATUS_OK, STATUS_FAILED
)
from .deployment import IDeployment, InlineDeployment, SidecarDeployment, make_deployment
from .experiments import (
    run_scenario, sweep, weak_scale, compare_placements, categorize_mc_ratio, SWEEP_AXES
)
from .report import emit_report, exit_code, convert_to_serializable
