"""Deterministic replay of a human-robot work cell."""

from hrsf.simulation.engine import (
    ALL_METHODS,
    Baseline,
    RunResult,
    Scenario,
    fixed_speed_baseline,
    laser_scanner_baseline,
    run_scenario,
)
from hrsf.simulation.human import HumanMotionScript, Keyframe, PartShape, Phase
from hrsf.simulation.pipeline import LaserScannerModel, PipelineLatencyModel
from hrsf.simulation.render import render_synthetic_observation
from hrsf.simulation.robot import PathTable, RobotMotion, RobotTrajectory, no_interference_time_s
from hrsf.simulation.trace import TraceRecord, TraceSummary, measure_cycle_time, write_trace_csv
