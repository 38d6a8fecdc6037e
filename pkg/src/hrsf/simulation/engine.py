"""Fixed-step replay of the work cell.

One tick is ``dt_ms`` milliseconds.  Per tick the engine (1) delivers any
finished perception pass to the regulator, (2) applies regulator outputs whose
PLC and drive delays have elapsed, and (3) moves the robot at
``min(nominal, commanded)``.  The perception pipeline is primed before ``t = 0``
so that a command already exists when the robot starts.
"""

from __future__ import annotations

import collections
import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from hrsf.errors import SimulationTimeout
from hrsf.kinematics import DHParameterTable, ProtectiveHull
from hrsf.perception import (
    D_MAX_MM,
    D_THRES_MM,
    ROI_DEFAULT_PX,
    BODY_PARTS,
    BodyPart,
    CameraExtrinsics,
    CameraIntrinsics,
    PointSelection,
    extract_body_points,
)
from hrsf.regulator import Reason, RegulatorState, SafetyDecision, VelocityLimitTable, evaluate
from hrsf.safety import (
    BudgetMode,
    HumanSpeedPolicy,
    MethodClass,
    MethodName,
    MethodProfile,
    SafetyConstants,
    builtin_profiles,
    compute_budget,
    compute_C,
)
from hrsf.simulation.human import HumanMotionScript
from hrsf.simulation.pipeline import LaserScannerModel, PipelineLatencyModel
from hrsf.simulation.render import render_synthetic_observation
from hrsf.simulation.robot import PathTable, RobotMotion, RobotTrajectory
from hrsf.simulation.trace import TraceRecord, TraceSummary

log = logging.getLogger(__name__)


class Baseline(str, enum.Enum):
    LASER_SCANNER = "LaserScanner"
    FIXED_LOWEST_SPEED = "FixedLowestSpeed"


ALL_METHODS = (
    MethodName.BODY_RECOGNITION.value,
    MethodName.BODY_SEGMENTATION.value,
    MethodName.POSE_ESTIMATION.value,
    MethodName.BODY_PART_SEGMENTATION.value,
    Baseline.LASER_SCANNER.value,
    Baseline.FIXED_LOWEST_SPEED.value,
)


def parse_method(name: str) -> MethodName | Baseline:
    try:
        return MethodName(name)
    except ValueError:
        pass
    try:
        return Baseline(name)
    except ValueError:
        raise ValueError(f"unknown method {name!r}; expected one of {', '.join(ALL_METHODS)}") from None


@dataclass
class Scenario:
    """Everything one simulation run needs, in validated in-memory form."""

    dh: DHParameterTable
    trajectory: RobotTrajectory
    human: HumanMotionScript
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics
    method: str = MethodName.BODY_PART_SEGMENTATION.value
    hull_padding_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    profiles: Mapping[MethodName, MethodProfile] = field(
        default_factory=lambda: {p.name: p for p in builtin_profiles()})
    latency: Mapping[MethodName, PipelineLatencyModel] = field(default_factory=dict)
    constants: SafetyConstants = field(default_factory=SafetyConstants)
    policy: HumanSpeedPolicy = field(default_factory=HumanSpeedPolicy)
    limits: VelocityLimitTable = field(default_factory=VelocityLimitTable.default)
    laser: LaserScannerModel = field(default_factory=LaserScannerModel)
    laser_field_mm: tuple[float, float, float, float] | None = None  # x_min, x_max, y_min, y_max
    mode: BudgetMode = BudgetMode.PER_AXIS
    dt_ms: int = 1
    seed: int = 0
    timeout_s: float = 600.0
    noise_scale: float = 0.0
    noise_truncate: bool = True  # clip prediction errors at the Z_d allowance
    failure_rate: Mapping[MethodName, float] = field(default_factory=dict)
    hysteresis_margin_mm: float = 0.0
    clear_frames_required: int = 1
    failures_before_fallback: int = 1
    selection_a: PointSelection = PointSelection.HULL  # whole-body methods
    selection_b: PointSelection = PointSelection.WORLD_ORIGIN  # part-level methods
    roi_px: tuple[int, int] = ROI_DEFAULT_PX
    d_thres_mm: float = D_THRES_MM
    d_max_mm: float = D_MAX_MM
    jitter_time_s: float = 0.0
    jitter_position_mm: float = 0.0
    _table: PathTable | None = field(default=None, repr=False, compare=False)

    @property
    def table(self) -> PathTable:
        if self._table is None:
            self._table = PathTable.build(self.dh, self.trajectory)
        return self._table

    def with_(self, **kw) -> "Scenario":
        """Copy with overrides; the path table is shared when robot and trajectory are unchanged."""
        keep = "dh" not in kw and "trajectory" not in kw
        new = replace(self, **kw)
        new._table = self._table if keep else None
        return new

    def profile(self, name: MethodName | str) -> MethodProfile:
        return self.profiles[MethodName(name)]

    def latency_for(self, name: MethodName | str) -> PipelineLatencyModel:
        return self.latency.get(MethodName(name), PipelineLatencyModel())

    def noise_sigma(self, name: MethodName | str) -> np.ndarray:
        return np.asarray(self.profile(name).z_d_mm, float) * self.noise_scale

    def laser_field(self) -> tuple[float, float, float, float]:
        """Protective field rectangle: robot work envelope grown by the field margin."""
        if self.laser_field_mm is not None:
            return tuple(self.laser_field_mm)
        margin = self.laser.field_margin_mm
        if margin is None:
            slowest = max(self.profiles.values(), key=lambda p: p.t_lat_max_ms)
            budget = compute_budget(slowest, self.constants, self.policy, math.inf, self.mode)
            margin = budget.scalar_threshold_mm + compute_C(self.laser.detection_capacity_mm)
        lo, hi = self.table.global_bounds()
        pad = np.asarray(self.hull_padding_mm, float)
        return (lo[0] - pad[0] - margin, hi[0] + pad[0] + margin, lo[1] - pad[1] - margin, hi[1] + pad[1] + margin)


@dataclass
class RunResult:
    method: str
    records: list[TraceRecord]
    summary: TraceSummary
    depart_s: float
    return_s: float
    decisions: list[tuple[float, float, SafetyDecision]] = field(default_factory=list)  # (exposure, delivery, decision)
    scenario: Scenario | None = None  # as run, including any per-seed jitter of the human script


def _phase_shares(script: HumanMotionScript, t0: float, t1: float) -> dict[str, float]:
    if not script.keyframes or t1 <= t0:
        return {}
    bounds = [k.t_s for k in script.keyframes] + [math.inf]
    shares: dict[str, float] = collections.defaultdict(float)
    current = None
    for i, k in enumerate(script.keyframes):
        current = k.phase or current
        a = -math.inf if i == 0 else bounds[i]
        b = bounds[i + 1]
        overlap = min(b, t1) - max(a, t0)
        if overlap > 0:
            shares[(current.value if current else "none")] += overlap / (t1 - t0)
    return dict(shares)


class _Perception:
    """Camera, detector and regulator chain of one perception method."""

    def __init__(self, sc: Scenario, method: MethodName, rng: np.random.Generator, dt_ms: int):
        self.sc, self.method, self.rng, self.dt_ms = sc, method, rng, dt_ms
        self.profile = sc.profile(method)
        self.lat = sc.latency_for(method)
        self.ticks = self.lat.ticks(dt_ms)
        self.sigma = sc.noise_sigma(method)
        self.bound = np.asarray(self.profile.z_d_mm, float) if sc.noise_truncate else None
        self.selection = sc.selection_a if method.method_class is MethodClass.A else sc.selection_b
        self.failure_rate = float(sc.failure_rate.get(method, 0.0))
        self.state = RegulatorState(hysteresis_margin_mm=sc.hysteresis_margin_mm,
                                    clear_frames_required=sc.clear_frames_required,
                                    failures_before_fallback=sc.failures_before_fallback)
        self.next_start: int | None = None
        self.in_flight: collections.deque = collections.deque()
        self.pad = np.asarray(sc.hull_padding_mm, float)

    def warmup_ticks(self) -> int:
        t = self.ticks
        return 2 * (t["frame"] + t["cap"] + 2 * t["proc"] + t["out"])

    def deliveries(self, tick: int) -> list[tuple[int, int]]:
        """(exposure_tick, delivery_tick) pairs finishing at ``tick``."""
        t = self.ticks
        out = []
        if self.lat.double_processing:
            if self.next_start is None:
                self.next_start = tick
            while self.in_flight and self.in_flight[0][1] == tick:
                out.append(self.in_flight.popleft())
            if tick == self.next_start:
                exposure = ((tick - t["cap"]) // t["frame"]) * t["frame"]
                done = tick + t["proc"]
                self.in_flight.append((exposure, done))
                self.next_start = done
        else:
            e = tick - t["cap"] - t["proc"]
            if e % t["frame"] == 0:
                out.append((e, tick))
        return out

    def regulate(self, exposure: int, tick: int, idx_at, table: PathTable) -> SafetyDecision:
        sc = self.sc
        t_e = exposure * self.dt_ms * 1e-3
        pose = sc.human.pose_at(t_e)
        frame, obs = render_synthetic_observation(pose, sc.intrinsics, sc.extrinsics, self.method, self.rng,
                                                  t_e, self.sigma, self.failure_rate, sc.human.shapes, self.bound)
        # the hull covers the robot from the frame exposure until now
        lo, hi = table.swept_bounds(idx_at(exposure), idx_at(tick))
        far = compute_budget(self.profile, sc.constants, sc.policy, math.inf, sc.mode)
        zd, zr = far.hull_inflation_mm
        grow = self.pad + zd + zr
        hull = ProtectiveHull.from_bounds(lo - grow, hi + grow, self.pad)
        points = extract_body_points(frame, obs, sc.intrinsics, sc.extrinsics, sc.d_thres_mm, sc.d_max_mm,
                                     self.selection, sc.roi_px, hull=hull)
        decision, state = evaluate(points, hull, far, sc.limits, self.state)
        # the assumed human speed follows this frame's measured distance
        if decision.nearest_distance_mm < sc.policy.near_threshold_mm:
            near = compute_budget(self.profile, sc.constants, sc.policy, decision.nearest_distance_mm, sc.mode)
            decision, state = evaluate(points, hull, near, sc.limits, self.state)
        self.state = state
        return decision


def run_scenario(sc: Scenario, method: str | None = None, seed: int | None = None,
                 record: bool = True, keep_decisions: bool = False) -> RunResult:
    """Run one full work cycle and return its trace and cycle-time summary."""
    method_id = parse_method(method or sc.method)
    seed = sc.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    dt_ms = int(sc.dt_ms)
    if dt_ms < 1:
        raise ValueError("dt must be at least 1 ms")
    dt_s = dt_ms * 1e-3
    table = sc.table
    sc.trajectory.check_speeds(sc.limits.full_speed_mm_s)

    script = sc.human
    if script.present and (sc.jitter_time_s > 0 or sc.jitter_position_mm > 0):
        jt = rng.uniform(-sc.jitter_time_s, sc.jitter_time_s)
        jp = rng.uniform(-sc.jitter_position_mm, sc.jitter_position_mm, 3) * np.array([1.0, 1.0, 0.0])
        script = script.shifted(jt, jp)
    run_sc = sc.with_(human=script) if script is not sc.human else sc

    full = sc.limits.full_speed_mm_s
    vmin = sc.limits.global_min
    perception = None
    laser_ticks = None
    if isinstance(method_id, MethodName):
        perception = _Perception(run_sc, method_id, rng, dt_ms)
        start = -perception.warmup_ticks()
        cmd = vmin  # conservative until the first regulator output arrives
    elif method_id is Baseline.LASER_SCANNER:
        lz = sc.laser
        q = lambda v: int(math.ceil(v / dt_ms - 1e-9))
        laser_ticks = (max(q(lz.scan_interval_ms), 1), q(lz.response_ms) + q(lz.plc_ms) + q(lz.t_adj_ms))
        field_rect = run_sc.laser_field()
        start = -2 * sum(laser_ticks)
        cmd = vmin
    else:
        start = 0
        cmd = vmin

    motion = RobotMotion(table, sc.trajectory)
    pending: collections.deque = collections.deque()
    idx_hist: list[int] = []
    idx0 = motion.sample_index()

    def idx_at(tick: int) -> int:
        k = tick - start
        if k < 0:
            return idx0
        return idx_hist[min(k, len(idx_hist) - 1)]

    limiting: BodyPart | None = None
    sep = math.inf
    records: list[TraceRecord] = []
    decisions = []
    depart_tick = None
    cur_idx, q_now, links_now = motion.indexed_state()
    timeout_ticks = int(round(sc.timeout_s * 1000 / dt_ms))
    tick = start
    lower_legs = [BODY_PARTS.index(BodyPart.LEFT_LOWER_LEG), BODY_PARTS.index(BodyPart.RIGHT_LOWER_LEG)]

    while True:
        idx_hist.append(cur_idx)

        if perception is not None:
            for exposure, _ in perception.deliveries(tick):
                d = perception.regulate(exposure, tick, idx_at, table)
                pending.append((tick + perception.ticks["out"], d))
                if keep_decisions:
                    decisions.append((exposure * dt_s, tick * dt_s, d))
        elif laser_ticks is not None and tick % laser_ticks[0] == 0:
            pts = script.positions_at(tick * dt_s)
            inside = False
            if pts is not None:
                xy = pts[lower_legs, :2]
                inside = bool(np.any((xy[:, 0] >= field_rect[0]) & (xy[:, 0] <= field_rect[1])
                                     & (xy[:, 1] >= field_rect[2]) & (xy[:, 1] <= field_rect[3])))
            d = SafetyDecision(vmin if inside else full, Reason.VIOLATION if inside else Reason.CLEAR)
            pending.append((tick + laser_ticks[1], d))

        while pending and pending[0][0] <= tick:
            d = pending.popleft()[1]
            cmd = d.commanded_velocity_mm_s
            limiting = d.limiting_part
            sep = d.nearest_distance_mm
        if perception is None and laser_ticks is None:
            cmd, limiting = vmin, None

        if tick < 0:
            tick += 1
            continue

        if motion.done:
            if record:
                records.append(TraceRecord(round(tick * dt_s, 9), tuple(q_now.tolist()), tuple(links_now[-1].tolist()),
                                           cmd, 0.0, sep, limiting, _phase_name(script, tick * dt_s)))
            break
        if tick > timeout_ticks:
            raise SimulationTimeout(f"scenario did not finish within {sc.timeout_s} s of simulated time")

        prev_pos, prev_seg = motion.pos, motion.seg
        motion.advance(dt_s, cmd)
        moved = motion.pos != prev_pos or motion.seg != prev_seg
        if depart_tick is None and moved:
            depart_tick = tick
        if record:
            cur_idx, q_next, links_next = motion.indexed_state()
            tcp_now, tcp_next = links_now[-1].tolist(), links_next[-1].tolist()
            act = math.dist(tcp_next, tcp_now) / dt_s
            records.append(TraceRecord(round(tick * dt_s, 9), tuple(q_now.tolist()), tuple(tcp_now),
                                       cmd, act, sep, limiting, _phase_name(script, tick * dt_s)))
            q_now, links_now = q_next, links_next
        elif perception is not None and moved:
            cur_idx = motion.sample_index()
        tick += 1

    if depart_tick is None:
        depart_tick = tick
    t_dep, t_ret = depart_tick * dt_s, tick * dt_s
    summary = TraceSummary(method_id.value, (t_ret - t_dep,) if t_ret > t_dep else (dt_s,),
                           _phase_shares(script, t_dep, t_ret))
    return RunResult(method_id.value, records, summary, t_dep, t_ret, decisions, run_sc)


def _phase_name(script: HumanMotionScript, t_s: float) -> str | None:
    ph = script.phase_at(t_s)
    return ph.value if ph is not None else None


def laser_scanner_baseline(sc: Scenario, seed: int | None = None, record: bool = False) -> TraceSummary:
    return run_scenario(sc, Baseline.LASER_SCANNER.value, seed, record=record).summary


def fixed_speed_baseline(sc: Scenario, seed: int | None = None, record: bool = False) -> TraceSummary:
    return run_scenario(sc, Baseline.FIXED_LOWEST_SPEED.value, seed, record=record).summary
