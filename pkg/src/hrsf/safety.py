"""Minimum separation distance budgets per perception method.

The protective separation distance is assembled from the human-motion term
(``v_h * t_LatMax``), the robot query term, the intrusion distance, and the
human/robot position uncertainties.  The robot stopping term is fixed at zero:
the regulator slows the robot down instead of stopping it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np


class MethodClass(str, enum.Enum):
    A = "A"  # whole body, a single closest point
    B = "B"  # per body part


class MethodName(str, enum.Enum):
    BODY_RECOGNITION = "BodyRecognition"
    BODY_SEGMENTATION = "BodySegmentation"
    POSE_ESTIMATION = "PoseEstimation"
    BODY_PART_SEGMENTATION = "BodyPartSegmentation"

    @property
    def method_class(self) -> MethodClass:
        if self in (MethodName.BODY_RECOGNITION, MethodName.BODY_SEGMENTATION):
            return MethodClass.A
        return MethodClass.B


class BudgetMode(str, enum.Enum):
    PER_AXIS = "per-axis"
    SCALAR = "scalar"


@dataclass(frozen=True)
class LatencyBreakdown:
    """Measured latency contributions in milliseconds (the ``*2`` stages are the repeated pass)."""

    t_cap: float = 0.0
    t_alg1: float = 0.0
    t_3d1: float = 0.0
    t_alg2: float = 0.0
    t_3d2: float = 0.0
    t_adj: float = 0.0
    t_lat_max: float = 0.0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"latency {k} must be finite and >= 0, got {v}")
        if self.total() > self.t_lat_max:
            raise ValueError(f"t_LatMax {self.t_lat_max} ms is below the component sum {self.total()} ms")

    def total(self) -> float:
        return self.t_cap + self.t_alg1 + self.t_3d1 + self.t_alg2 + self.t_3d2 + self.t_adj


@dataclass(frozen=True)
class HumanSpeedPolicy:
    v_far_mm_s: float = 1600.0
    v_near_mm_s: float = 2000.0
    near_threshold_mm: float = 500.0

    def __post_init__(self):
        if not (self.v_near_mm_s >= self.v_far_mm_s > 0):
            raise ValueError("human speed policy needs v_near >= v_far > 0")
        if self.near_threshold_mm < 0:
            raise ValueError("near threshold must be >= 0")

    def speed(self, current_distance_mm: float | None) -> float:
        """Assumed human speed; the near speed applies when no distance is known yet."""
        if current_distance_mm is None or current_distance_mm < self.near_threshold_mm:
            return self.v_near_mm_s
        return self.v_far_mm_s


@dataclass(frozen=True)
class MethodProfile:
    name: MethodName
    t_lat_max_ms: float
    z_d_mm: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "name", MethodName(self.name))
        object.__setattr__(self, "z_d_mm", tuple(float(v) for v in self.z_d_mm))
        if len(self.z_d_mm) != 3:
            raise ValueError("Z_d must be a 3-vector")
        if not (math.isfinite(self.t_lat_max_ms) and self.t_lat_max_ms >= 0):
            raise ValueError(f"{self.name.value}: t_LatMax must be >= 0")
        if any(not math.isfinite(v) or v < 0 for v in self.z_d_mm):
            raise ValueError(f"{self.name.value}: Z_d components must be >= 0")

    @property
    def method_class(self) -> MethodClass:
        return self.name.method_class


_BUILTIN = (
    MethodProfile(MethodName.BODY_RECOGNITION, 370.0, (346.0, 767.0, 399.0)),
    MethodProfile(MethodName.POSE_ESTIMATION, 305.0, (131.0, 57.0, 206.0)),
    MethodProfile(MethodName.BODY_SEGMENTATION, 559.0, (346.0, 416.0, 334.0)),
    MethodProfile(MethodName.BODY_PART_SEGMENTATION, 812.0, (87.0, 71.0, 151.0)),
)

#: Human-motion distances reported alongside the built-in latencies (mm).
REFERENCE_SH_MM = {
    MethodName.BODY_RECOGNITION: 592,
    MethodName.POSE_ESTIMATION: 488,
    MethodName.BODY_SEGMENTATION: 894,
    MethodName.BODY_PART_SEGMENTATION: 1299,
}


def builtin_profiles() -> list[MethodProfile]:
    return list(_BUILTIN)


def profile_by_name(name, profiles=None) -> MethodProfile:
    name = MethodName(name)
    for p in profiles if profiles is not None else _BUILTIN:
        if p.name == name:
            return p
    raise KeyError(name.value)


@dataclass(frozen=True)
class SafetyConstants:
    s_r_mm: float = 5.0
    z_r_mm: tuple[float, float, float] = (8.0, 7.0, 11.0)
    s_s_mm: float = 0.0
    intrusion_c_mm: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "z_r_mm", tuple(float(v) for v in self.z_r_mm))
        if self.s_s_mm != 0.0:
            raise ValueError("the stopping distance S_s is fixed at 0 mm")
        if len(self.z_r_mm) != 3:
            raise ValueError("Z_r must be a 3-vector")
        for v in (self.s_r_mm, self.intrusion_c_mm, *self.z_r_mm):
            if not (math.isfinite(v) and v >= 0):
                raise ValueError("safety constants must be finite and >= 0")

    @classmethod
    def for_detection_capacity(cls, d_mm: float, **kw) -> "SafetyConstants":
        return cls(intrusion_c_mm=compute_C(d_mm), **kw)


def derive_sr(t_query_ms: float, v_robot_max_mm_s: float) -> float:
    """Robot motion during the joint-state query; 3 ms at 1.6 m/s gives 4.8 mm."""
    return t_query_ms * 1e-3 * v_robot_max_mm_s


@dataclass(frozen=True)
class SeparationBudget:
    s_h_mm: float
    s_r_mm: float
    c_mm: float
    z_d_mm: tuple[float, float, float]
    z_r_mm: tuple[float, float, float]
    mode: BudgetMode = BudgetMode.PER_AXIS
    scalar_threshold_mm: float = field(init=False)

    def __post_init__(self):
        base = self.s_h_mm + self.s_r_mm + self.c_mm
        if BudgetMode(self.mode) is BudgetMode.SCALAR:
            base += float(np.linalg.norm(self.z_d_mm)) + float(np.linalg.norm(self.z_r_mm))
        object.__setattr__(self, "scalar_threshold_mm", base)

    @property
    def hull_inflation_mm(self) -> tuple[np.ndarray, np.ndarray]:
        """(zd, zr) to inflate the hull with; zero vectors in scalar mode."""
        if BudgetMode(self.mode) is BudgetMode.PER_AXIS:
            return np.asarray(self.z_d_mm, float), np.asarray(self.z_r_mm, float)
        return np.zeros(3), np.zeros(3)

    def report(self) -> dict:
        """Rounded-to-mm view for summaries; comparisons use the full-precision fields."""
        return {
            "s_h_mm": round(self.s_h_mm),
            "s_r_mm": round(self.s_r_mm),
            "c_mm": round(self.c_mm),
            "z_d_mm": [round(v) for v in self.z_d_mm],
            "z_r_mm": [round(v) for v in self.z_r_mm],
            "mode": BudgetMode(self.mode).value,
            "scalar_threshold_mm": round(self.scalar_threshold_mm, 1),
        }


def compute_Sh(t_lat_max_ms: float, policy: HumanSpeedPolicy | None = None,
               current_distance_mm: float | None = None) -> float:
    """Distance the human covers during the worst-case latency (mm, full precision)."""
    if t_lat_max_ms < 0:
        raise ValueError("t_LatMax must be >= 0")
    policy = policy or HumanSpeedPolicy()
    return policy.speed(current_distance_mm) * t_lat_max_ms * 1e-3


def compute_C(detection_capacity_mm: float) -> float:
    """Intrusion distance ``8 (d - 14)``; capacities at or below 14 mm contribute nothing."""
    if detection_capacity_mm < 0:
        raise ValueError("detection capacity must be >= 0")
    return max(0.0, 8.0 * (detection_capacity_mm - 14.0))


def compute_budget(profile: MethodProfile, consts: SafetyConstants | None = None,
                   policy: HumanSpeedPolicy | None = None, current_distance_mm: float | None = None,
                   mode: BudgetMode | str = BudgetMode.PER_AXIS) -> SeparationBudget:
    consts = consts or SafetyConstants()
    return SeparationBudget(
        s_h_mm=compute_Sh(profile.t_lat_max_ms, policy, current_distance_mm),
        s_r_mm=consts.s_r_mm,
        c_mm=consts.intrusion_c_mm,
        z_d_mm=profile.z_d_mm,
        z_r_mm=consts.z_r_mm,
        mode=BudgetMode(mode),
    )


def with_latency(profile: MethodProfile, t_lat_max_ms: float) -> MethodProfile:
    return replace(profile, t_lat_max_ms=t_lat_max_ms)
