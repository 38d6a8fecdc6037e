"""Offline checks of an emitted trace against the scripted ground truth.

Everything here recomputes geometry from the trace's joint angles and the
human script, independently of what the perception chain saw at run time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from hrsf.kinematics import link_positions, points_hull_distance
from hrsf.perception import BODY_PARTS
from hrsf.safety import MethodClass, MethodName, compute_budget
from hrsf.simulation.engine import Scenario
from hrsf.simulation.trace import TraceRecord

SPEED_SLACK_MM_S = 0.1


@dataclass(frozen=True)
class GroundTruth:
    """Per-row, per-part truth: distance to the inflated hull, threshold, and violation flag."""

    t_s: np.ndarray  # (T,)
    distance_mm: np.ndarray  # (T, 10)
    threshold_mm: np.ndarray  # (T, 10)
    cmd_v_mm_s: np.ndarray  # (T,)
    act_v_mm_s: np.ndarray  # (T,)

    @property
    def below(self) -> np.ndarray:
        return self.distance_mm < self.threshold_mm


def ground_truth(sc: Scenario, trace: Sequence[TraceRecord], method: str | MethodName | None = None,
                 include_zd: bool = True) -> GroundTruth:
    """Truth distances to the hull inflated by padding, Z_r and (unless ``include_zd`` is off) Z_d.

    Leaving Z_d out audits runs with injected prediction error: the regulator's
    Z_d inflation is then the allowance that absorbs that error.
    """
    method = MethodName(method or sc.method)
    profile = sc.profile(method)
    t = np.array([r.t_s for r in trace])
    q = np.array([r.q_rad for r in trace])
    links = link_positions(sc.dh, q)
    pad = np.asarray(sc.hull_padding_mm, float)
    far = compute_budget(profile, sc.constants, sc.policy, math.inf, sc.mode)
    near = compute_budget(profile, sc.constants, sc.policy, 0.0, sc.mode)
    zd, zr = far.hull_inflation_mm
    grow = pad + zr + (zd if include_zd else 0.0)
    lower = links.min(axis=1) - grow
    upper = links.max(axis=1) + grow
    pts = sc.human.positions_batch(t) if sc.human.present else np.full((len(t), len(BODY_PARTS), 3), np.inf)
    dist = points_hull_distance(pts, lower[:, None, :], upper[:, None, :])
    # the assumed human speed follows the true distance
    thr = np.where(dist < sc.policy.near_threshold_mm, near.scalar_threshold_mm, far.scalar_threshold_mm)
    return GroundTruth(t, dist, thr, np.array([r.cmd_v_mm_s for r in trace]), np.array([r.act_v_mm_s for r in trace]))


def _run_lengths(flags: np.ndarray) -> np.ndarray:
    """For each row, how many consecutive rows up to and including it are True (per column)."""
    out = np.zeros(flags.shape, dtype=np.int64)
    run = np.zeros(flags.shape[1:], dtype=np.int64)
    for i in range(len(flags)):
        run = np.where(flags[i], run + 1, 0)
        out[i] = run
    return out


@dataclass(frozen=True)
class SafetyViolation:
    t_s: float
    act_v_mm_s: float
    limit_mm_s: float


def applicable_limits(sc: Scenario, truth: GroundTruth, method: str | MethodName, window_s: float) -> np.ndarray:
    """Per-row speed cap implied by parts that have been below threshold for at least ``window_s``."""
    dt = float(sc.dt_ms) * 1e-3
    need = int(math.ceil(window_s / dt - 1e-9)) + 1  # samples spanning window_s
    sustained = _run_lengths(truth.below) >= need
    if MethodName(method).method_class is MethodClass.A:
        per_part = np.full(len(BODY_PARTS), sc.limits.global_min)
    else:
        per_part = np.array([sc.limits.limits_mm_s[p] for p in BODY_PARTS])
    caps = np.where(sustained, per_part[None, :], np.inf)
    return caps.min(axis=1)


def check_hard_safety(sc: Scenario, trace: Sequence[TraceRecord], method: str | MethodName | None = None,
                      slack_mm_s: float = SPEED_SLACK_MM_S, include_zd: bool = True) -> list[SafetyViolation]:
    """Rows where a part has been inside its threshold for t_LatMax + dt and the TCP is still too fast."""
    method = MethodName(method or sc.method)
    truth = ground_truth(sc, trace, method, include_zd)
    window = sc.profile(method).t_lat_max_ms * 1e-3 + sc.dt_ms * 1e-3
    cap = applicable_limits(sc, truth, method, window)
    bad = np.nonzero(truth.act_v_mm_s > cap + slack_mm_s)[0]
    return [SafetyViolation(float(truth.t_s[i]), float(truth.act_v_mm_s[i]), float(cap[i])) for i in bad]


def check_speed_tracking(trace: Sequence[TraceRecord], slack_mm_s: float = SPEED_SLACK_MM_S) -> list[float]:
    """Times where the actual TCP speed exceeds the command."""
    return [r.t_s for r in trace if r.act_v_mm_s > r.cmd_v_mm_s + slack_mm_s]


@dataclass(frozen=True)
class ReactionEvent:
    part: str
    crossing_s: float
    reaction_s: float | None  # None: the command never came down while the part stayed inside

    @property
    def latency_s(self) -> float:
        return math.inf if self.reaction_s is None else self.reaction_s - self.crossing_s


def reaction_events(sc: Scenario, trace: Sequence[TraceRecord], method: str | MethodName | None = None,
                    include_zd: bool = True) -> list[ReactionEvent]:
    """Ground-truth threshold crossings and the first row whose command honours the crossing part.

    Only crossings that stay inside for at least t_LatMax + dt are reported;
    shorter excursions never oblige the controller to react.
    """
    method = MethodName(method or sc.method)
    truth = ground_truth(sc, trace, method, include_zd)
    dt = sc.dt_ms * 1e-3
    window = sc.profile(method).t_lat_max_ms * 1e-3 + dt
    need = int(math.ceil(window / dt - 1e-9)) + 1
    below = truth.below
    events = []
    for j, part in enumerate(BODY_PARTS):
        limit = sc.limits.global_min if method.method_class is MethodClass.A else sc.limits.limits_mm_s[part]
        col = below[:, j]
        starts = np.nonzero(col & ~np.concatenate([[False], col[:-1]]))[0]
        for s in starts:
            if s == 0:
                continue  # inside from the first row: no crossing to time
            e = s
            while e < len(col) and col[e]:
                e += 1
            if e - s < need:
                continue
            ok = np.nonzero(truth.cmd_v_mm_s[s:e] <= limit)[0]
            events.append(ReactionEvent(part.value, float(truth.t_s[s]),
                                        float(truth.t_s[s + ok[0]]) if len(ok) else None))
    return events
