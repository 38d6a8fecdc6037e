"""Latency model of the perception-to-robot chain.

Camera frames are exposed every ``frame_interval_ms``; a frame is available
``t_cap_ms`` after exposure.  With ``double_processing`` the detector runs as a
back-to-back loop that always grabs the freshest available frame, so an event
that lands just after a grab waits for the running pass and then needs a full
pass of its own.  Without it, every frame is processed independently as soon as
it is available.  Results go through the PLC relay and the robot-side velocity
adjustment before they take effect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict


@dataclass(frozen=True)
class PipelineLatencyModel:
    frame_interval_ms: float = 33.0
    t_cap_ms: float = 35.0
    t_alg_ms: float = 100.0
    t_3d_ms: float = 10.0
    plc_ms: float = 20.0
    t_adj_ms: float = 60.0
    double_processing: bool = True

    def __post_init__(self):
        for k, v in asdict(self).items():
            if k == "double_processing":
                continue
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"latency {k} must be finite and >= 0")
        if self.frame_interval_ms <= 0:
            raise ValueError("frame interval must be positive")

    @property
    def processing_ms(self) -> float:
        return self.t_alg_ms + self.t_3d_ms

    def worst_case_ms(self) -> float:
        """Longest delay from a change in the scene to the robot running at the new command."""
        passes = 2 if self.double_processing else 1
        return self.frame_interval_ms + self.t_cap_ms + passes * self.processing_ms + self.plc_ms + self.t_adj_ms

    def ticks(self, dt_ms: int) -> dict[str, int]:
        """Stage delays rounded up to whole simulation steps."""
        def q(v):
            return int(math.ceil(v / dt_ms - 1e-9))
        return {
            "frame": max(q(self.frame_interval_ms), 1),
            "cap": q(self.t_cap_ms),
            "proc": max(q(self.processing_ms), 1),
            "out": q(self.plc_ms) + q(self.t_adj_ms),
        }

    def worst_case_quantized_ms(self, dt_ms: int) -> int:
        t = self.ticks(dt_ms)
        passes = 2 if self.double_processing else 1
        return (t["frame"] + t["cap"] + passes * t["proc"] + t["out"]) * dt_ms


@dataclass(frozen=True)
class LaserScannerModel:
    """2-D protective field scanner at floor level."""

    detection_capacity_mm: float = 70.0
    scan_interval_ms: float = 30.0
    response_ms: float = 60.0
    plc_ms: float = 20.0
    t_adj_ms: float = 60.0
    field_margin_mm: float | None = None  # None: slowest profile threshold plus intrusion distance
