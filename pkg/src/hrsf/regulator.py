"""Speed-and-separation decision core.

Each evaluation compares the current body points with the (inflated)
protective hull.  Any point closer than the separation budget forces the robot
down to the biomechanical velocity limit of the body part concerned; whole-body
methods and failed detections fall back to the most restrictive limit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

from hrsf.errors import ConfigurationError
from hrsf.kinematics import ProtectiveHull, point_hull_distance
from hrsf.perception import BODY_PARTS, BodyPart, BodyPointSet
from hrsf.safety import SeparationBudget

FULL_SPEED_MM_S = 1600.0

#: Maximum Cartesian velocities for quasi-static contact in the screwing cell (mm/s).
BIOMECHANICAL_LIMITS_MM_S = {
    "skull_forehead": 50.0,
    "hand_fingers_lower_arms": 100.0,
    "chest": 100.0,
    "upper_arms": 100.0,
    "thighs": 200.0,
    "lower_legs": 50.0,
}

_LABEL_ROW = {
    BodyPart.HEAD: "skull_forehead",
    BodyPart.BODY: "chest",
    BodyPart.LEFT_UPPER_ARM: "upper_arms",
    BodyPart.RIGHT_UPPER_ARM: "upper_arms",
    BodyPart.LEFT_LOWER_ARM: "hand_fingers_lower_arms",
    BodyPart.RIGHT_LOWER_ARM: "hand_fingers_lower_arms",
    BodyPart.LEFT_UPPER_LEG: "thighs",
    BodyPart.RIGHT_UPPER_LEG: "thighs",
    BodyPart.LEFT_LOWER_LEG: "lower_legs",
    BodyPart.RIGHT_LOWER_LEG: "lower_legs",
}


@dataclass(frozen=True)
class VelocityLimitTable:
    limits_mm_s: Mapping[BodyPart, float]
    full_speed_mm_s: float = FULL_SPEED_MM_S

    def __post_init__(self):
        limits = {BodyPart(k): float(v) for k, v in self.limits_mm_s.items()}
        missing = [p.value for p in BODY_PARTS if p not in limits]
        if missing:
            raise ConfigurationError(f"velocity limit table is missing {', '.join(missing)}")
        for p, v in limits.items():
            if not (0 < v <= self.full_speed_mm_s):
                raise ConfigurationError(f"limit for {p.value} must be in (0, {self.full_speed_mm_s}], got {v}")
        object.__setattr__(self, "limits_mm_s", limits)

    @classmethod
    def default(cls, full_speed_mm_s: float = FULL_SPEED_MM_S) -> "VelocityLimitTable":
        return cls({p: BIOMECHANICAL_LIMITS_MM_S[_LABEL_ROW[p]] for p in BODY_PARTS}, full_speed_mm_s)

    @property
    def global_min(self) -> float:
        return min(self.limits_mm_s.values())

    def scaled(self, k: float) -> "VelocityLimitTable":
        return VelocityLimitTable({p: v * k for p, v in self.limits_mm_s.items()}, self.full_speed_mm_s * k)


def map_label_to_limit(label: BodyPart, limits: VelocityLimitTable) -> float:
    try:
        return limits.limits_mm_s[BodyPart(label)]
    except (KeyError, ValueError):
        raise ConfigurationError(f"no velocity limit for body part {label!r}") from None


class Reason(str, enum.Enum):
    NO_HUMAN = "NoHuman"
    CLEAR = "Clear"
    VIOLATION = "Violation"
    FAILED_DETECTION = "FailedDetection"


@dataclass(frozen=True)
class SafetyDecision:
    commanded_velocity_mm_s: float
    reason: Reason
    nearest_distance_mm: float = math.inf
    violating: tuple[tuple[BodyPart | None, float], ...] = ()
    limiting_part: BodyPart | None = None


@dataclass(frozen=True)
class RegulatorState:
    consecutive_failures: int = 0
    consecutive_clear: int = 0
    hysteresis_margin_mm: float = 0.0
    clear_frames_required: int = 1
    failures_before_fallback: int = 1
    last_decision: SafetyDecision | None = None

    def __post_init__(self):
        if self.consecutive_failures < 0 or self.consecutive_clear < 0:
            raise ValueError("counters must be >= 0")
        if self.clear_frames_required < 1 or self.failures_before_fallback < 1:
            raise ValueError("frame counts must be >= 1")
        if self.hysteresis_margin_mm < 0:
            raise ValueError("hysteresis margin must be >= 0")


def evaluate(points: BodyPointSet, hull: ProtectiveHull, budget: SeparationBudget,
             limits: VelocityLimitTable, state: RegulatorState) -> tuple[SafetyDecision, RegulatorState]:
    """One regulation step; ``hull`` must already carry any per-axis inflation."""
    full = limits.full_speed_mm_s
    last = state.last_decision

    if points.failed:
        n = state.consecutive_failures + 1
        if n >= state.failures_before_fallback or last is None:
            d = SafetyDecision(limits.global_min, Reason.FAILED_DETECTION)
        else:
            # not yet at the fallback count: keep the previous command
            d = replace(last, reason=Reason.FAILED_DETECTION)
        return d, replace(state, consecutive_failures=n, consecutive_clear=0, last_decision=d)

    threshold = budget.scalar_threshold_mm
    pts = points.valid_points()
    dists = [(lbl, point_hull_distance(p, hull)) for lbl, p in pts]
    nearest = min((d for _, d in dists), default=math.inf)
    violating = tuple((lbl, d) for lbl, d in dists if d < threshold)

    if violating:
        if points.whole_body is not None:
            v, limiting = limits.global_min, None
        else:
            limiting = min((lbl for lbl, _ in violating), key=lambda l: (limits.limits_mm_s[l], BODY_PARTS.index(l)))
            v = limits.limits_mm_s[limiting]
        d = SafetyDecision(v, Reason.VIOLATION, nearest, violating, limiting)
        return d, replace(state, consecutive_failures=0, consecutive_clear=0, last_decision=d)

    reason = Reason.NO_HUMAN if not points.person_present else Reason.CLEAR
    clear_ok = nearest >= threshold + state.hysteresis_margin_mm
    n_clear = state.consecutive_clear + 1 if clear_ok else 0
    if last is None or n_clear >= state.clear_frames_required or last.commanded_velocity_mm_s >= full:
        v = full
    else:
        v = last.commanded_velocity_mm_s  # hold the reduced speed until the clear streak is long enough
    d = SafetyDecision(v, reason, nearest, (), None if v >= full else last.limiting_part)
    return d, replace(state, consecutive_failures=0, consecutive_clear=n_clear, last_decision=d)
