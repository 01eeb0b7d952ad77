"""crowdmi: crowd evacuation simulation with a mutual-information crush indicator.

The package couples a social-force pedestrian engine with an
information-theoretic order parameter: the mutual information between agent
positions and headings collapses when crowd flow turns from laminar to
disordered, which flags developing crush conditions without inspecting
forces.
"""
from .analysis import (
    FATAL_COMPRESSION_N,
    JointHistogram,
    MetricsRecord,
    MetricsSeries,
    MIConfig,
    crowd_order_parameter,
    detect_crush,
    mutual_information,
    series_from_trajectory,
    windowed_series,
)
from .engine import (
    SFMParams,
    SimFrame,
    Simulation,
    NonFiniteForceError,
    SimulationHalt,
    TrappedPopulationError,
    average_contact_force,
    load_params,
    social_and_contact_forces,
)
from .navigation import NavMesh, desired_direction
from .pipeline import CompareReport, RunResult, compare_runs, run, window_mean_mi
from .scenario import (
    AgentState,
    Exit,
    Floorplan,
    KnowledgeRule,
    Scenario,
    ScenarioFormatError,
    ScenarioValidationError,
    SpawnRegion,
    TimedEvent,
    apply_events,
    load_scenario,
    spawn_population,
    validate_scenario,
)
from .stats import (
    CorrelationReport,
    UndefinedCorrelationError,
    correlate_series,
    p_value_two_tailed,
    pearson_r,
)

__version__ = "0.1.0"
