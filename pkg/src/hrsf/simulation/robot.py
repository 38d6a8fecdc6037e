"""Joint-space trajectories executed at a commanded Cartesian TCP speed.

Each move is linear in joint space.  The path is sampled densely through
forward kinematics once; the robot then advances along the TCP polyline of
those samples, so the distance the TCP covers in a step never exceeds
``speed * dt``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from hrsf.errors import ConfigurationError
from hrsf.kinematics import DHParameterTable, link_positions

SAMPLE_SPACING_MM = 1.0


@dataclass(frozen=True)
class RobotTrajectory:
    """Waypoints ``q_0 .. q_n`` with a nominal TCP speed per move and a dwell per waypoint.

    ``dwells_s[i]`` is spent at waypoint ``i`` after arriving there (the entry
    for the start waypoint is ignored).
    """

    waypoints: tuple[tuple[float, ...], ...]
    speeds_mm_s: tuple[float, ...]
    dwells_s: tuple[float, ...] = ()
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.waypoints)
        if n < 2:
            raise ConfigurationError("a trajectory needs at least two waypoints")
        if len({len(w) for w in self.waypoints}) != 1:
            raise ConfigurationError("waypoints have inconsistent joint counts")
        if len(self.speeds_mm_s) != n - 1:
            raise ConfigurationError(f"expected {n - 1} segment speeds, got {len(self.speeds_mm_s)}")
        if any(not (v > 0 and math.isfinite(v)) for v in self.speeds_mm_s):
            raise ConfigurationError("segment speeds must be positive")
        dw = tuple(self.dwells_s) or (0.0,) * n
        if len(dw) != n or any(d < 0 for d in dw):
            raise ConfigurationError("dwells must be one non-negative value per waypoint")
        object.__setattr__(self, "dwells_s", tuple(float(d) for d in dw))
        object.__setattr__(self, "labels", tuple(self.labels) or ("",) * n)

    @property
    def n_joints(self) -> int:
        return len(self.waypoints[0])

    def check_speeds(self, full_speed_mm_s: float) -> None:
        if max(self.speeds_mm_s) > full_speed_mm_s:
            raise ConfigurationError(f"nominal segment speed exceeds full speed {full_speed_mm_s} mm/s")


@dataclass
class PathTable:
    """Dense forward-kinematics samples along a trajectory.

    ``arc`` is the cumulative TCP path length at each sample; ``seg_end`` holds
    the arc value at which each move ends.
    """

    q: np.ndarray
    links: np.ndarray
    arc: np.ndarray
    seg_end: list[float]
    seg_start_idx: list[int]
    arc_list: list[float] = field(repr=False, default_factory=list)

    @classmethod
    def build(cls, dh: DHParameterTable, traj: RobotTrajectory, spacing_mm: float = SAMPLE_SPACING_MM) -> "PathTable":
        if traj.n_joints != dh.n_joints:
            raise ConfigurationError(f"trajectory has {traj.n_joints} joints, DH table has {dh.n_joints}")
        qs, ls, arcs, seg_end, seg_start_idx = [], [], [], [], []
        total = 0.0
        for a, b in zip(traj.waypoints[:-1], traj.waypoints[1:]):
            a, b = np.asarray(a, float), np.asarray(b, float)
            coarse = link_positions(dh, a + np.linspace(0, 1, 65)[:, None] * (b - a))[:, -1]
            est = float(np.sum(np.linalg.norm(np.diff(coarse, axis=0), axis=1)))
            k = max(int(math.ceil(est / spacing_mm)), 16)
            s = np.linspace(0.0, 1.0, k + 1)
            q = a + s[:, None] * (b - a)
            links = link_positions(dh, q)
            step = np.linalg.norm(np.diff(links[:, -1], axis=0), axis=1)
            arc = total + np.concatenate([[0.0], np.cumsum(step)])
            seg_start_idx.append(sum(len(x) for x in qs))
            qs.append(q)
            ls.append(links)
            arcs.append(arc)
            total = float(arc[-1])
            seg_end.append(total)
        arc = np.concatenate(arcs)
        return cls(np.concatenate(qs), np.concatenate(ls), arc, seg_end, seg_start_idx, arc.tolist())

    @property
    def length_mm(self) -> float:
        return self.seg_end[-1]

    def index_at(self, pos: float, seg: int) -> tuple[int, float]:
        """Sample index ``i`` and weight ``w`` so that the state is ``(1-w) x[i] + w x[i+1]``."""
        lo = self.seg_start_idx[seg]
        hi = self.seg_start_idx[seg + 1] - 1 if seg + 1 < len(self.seg_start_idx) else len(self.arc_list) - 1
        i = bisect.bisect_right(self.arc_list, pos, lo, hi) - 1
        i = min(max(i, lo), hi - 1)
        a0, a1 = self.arc_list[i], self.arc_list[i + 1]
        w = 0.0 if a1 <= a0 else min(max((pos - a0) / (a1 - a0), 0.0), 1.0)
        return i, w

    def state_at(self, pos: float, seg: int) -> tuple[np.ndarray, np.ndarray]:
        """Interpolated ``(q, links)`` at arc position ``pos`` inside move ``seg``."""
        return self.indexed_state_at(pos, seg)[1:]

    def indexed_state_at(self, pos: float, seg: int) -> tuple[int, np.ndarray, np.ndarray]:
        """Like :meth:`state_at`, also returning the sample index."""
        i, w = self.index_at(pos, seg)
        q = self.q[i] + w * (self.q[i + 1] - self.q[i])
        links = self.links[i] + w * (self.links[i + 1] - self.links[i])
        return i, q, links

    def swept_bounds(self, i_from: int, i_to: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-axis min/max of every link over samples ``i_from .. i_to + 1``."""
        lo, hi = min(i_from, i_to), max(i_from, i_to)
        block = self.links[lo: min(hi + 2, len(self.links))].reshape(-1, 3)
        return block.min(axis=0), block.max(axis=0)

    def global_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        flat = self.links.reshape(-1, 3)
        return flat.min(axis=0), flat.max(axis=0)


def no_interference_time_s(table: PathTable, traj: RobotTrajectory) -> float:
    """Cycle time at nominal speeds: path time of every move plus dwells after departure."""
    starts = [0.0] + table.seg_end[:-1]
    moves = sum((e - s) / v for s, e, v in zip(starts, table.seg_end, traj.speeds_mm_s))
    return moves + sum(traj.dwells_s[1:-1])


@dataclass
class RobotMotion:
    """Mutable progress of the robot along its path table."""

    table: PathTable
    traj: RobotTrajectory
    seg: int = 0
    pos: float = 0.0
    dwell_left: float = 0.0
    done: bool = False

    def advance(self, dt_s: float, cmd_mm_s: float) -> None:
        """Move for ``dt_s`` at ``min(nominal, cmd)`` per move, carrying leftover time across waypoints."""
        left = dt_s
        table, traj = self.table, self.traj
        while left > 0 and not self.done:
            if self.dwell_left > 0:
                used = min(left, self.dwell_left)
                self.dwell_left -= used
                left -= used
                if self.dwell_left <= 1e-12:
                    self.dwell_left = 0.0
                    if self.seg >= len(table.seg_end):
                        self.done = True
                continue
            v = min(traj.speeds_mm_s[self.seg], cmd_mm_s)
            if v <= 0:
                return
            end = table.seg_end[self.seg]
            step = v * left
            if self.pos + step < end:
                self.pos += step
                return
            left -= (end - self.pos) / v
            self.pos = end
            self.seg += 1
            if self.seg >= len(table.seg_end):
                self.seg = len(table.seg_end) - 1
                self.dwell_left = 0.0
                self.done = True
                return
            self.dwell_left = traj.dwells_s[self.seg]

    def state(self) -> tuple[np.ndarray, np.ndarray]:
        return self.table.state_at(self.pos, self.seg)

    def indexed_state(self) -> tuple[int, np.ndarray, np.ndarray]:
        return self.table.indexed_state_at(self.pos, self.seg)

    def sample_index(self) -> int:
        return self.table.index_at(self.pos, self.seg)[0]
