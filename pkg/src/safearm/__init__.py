"""Safe teleoperation for planar arms: distance fields, bubble planning,
and a distributionally robust command filter."""

from .arm import ArmModel, forward_kinematics, workspace_distance, wrap_angles
from .bubbles import Plan, PlannerConfig, baseline_planner, build_cover, plan_path
from .cdf import CdfField, GridSpec, PointCloud, build_cdf_field, cdf_oracle
from .errors import ConfigError, FieldFormatError
from .safety import FilterParams, filter_command
from .scenario import load_scenario, parse_scenario, serialize_scenario
from .world import (Metrics, Obstacle, Scenario, TraceRecord, bench_planners,
                    run_episode)

__version__ = "0.1.0"
