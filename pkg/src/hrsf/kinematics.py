"""Serial-manipulator forward kinematics and the cuboid protective hull.

All lengths are millimetres, all angles radians. The hull is an axis-aligned box
in the world frame built from the link-frame origins of the current joint
configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from hrsf.errors import ConfigurationError


@dataclass(frozen=True)
class DHJoint:
    """Standard (distal) Denavit-Hartenberg parameters of one revolute joint."""

    a_mm: float
    alpha_rad: float
    d_mm: float
    theta_offset_rad: float = 0.0


@dataclass(frozen=True)
class DHParameterTable:
    joints: tuple[DHJoint, ...]
    tool_offset_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.joints) < 1:
            raise ConfigurationError("DH table needs at least one joint")
        values = [v for j in self.joints for v in (j.a_mm, j.alpha_rad, j.d_mm, j.theta_offset_rad)]
        values += list(self.tool_offset_mm)
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("DH table contains non-finite values")
        if len(self.tool_offset_mm) != 3:
            raise ConfigurationError("tool offset must be a 3-vector")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], tool_offset_mm=(0.0, 0.0, 0.0)) -> "DHParameterTable":
        """Build from ``(a_mm, alpha_rad, d_mm, theta_offset_rad)`` rows."""
        return cls(tuple(DHJoint(*map(float, r)) for r in rows), tuple(float(v) for v in tool_offset_mm))

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def has_tool(self) -> bool:
        return any(v != 0.0 for v in self.tool_offset_mm)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        a = np.array([j.a_mm for j in self.joints], dtype=float)
        alpha = np.array([j.alpha_rad for j in self.joints], dtype=float)
        d = np.array([j.d_mm for j in self.joints], dtype=float)
        theta0 = np.array([j.theta_offset_rad for j in self.joints], dtype=float)
        return a, alpha, d, theta0


@dataclass(frozen=True)
class JointConfiguration:
    q: tuple[float, ...]
    qd: tuple[float, ...] | None = None
    qdd: tuple[float, ...] | None = None

    def __post_init__(self):
        for name in ("q", "qd", "qdd"):
            v = getattr(self, name)
            if v is None:
                continue
            if not np.all(np.isfinite(v)):
                raise ConfigurationError(f"joint {name} contains non-finite values")
            if name != "q" and len(v) != len(self.q):
                raise ConfigurationError(f"joint {name} length {len(v)} != {len(self.q)}")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.q, dtype=float)


@dataclass(frozen=True)
class LinkPoses:
    """World-frame origins: base, each joint frame, then the TCP if a tool offset is set."""

    positions: np.ndarray = field(repr=False)

    @property
    def base(self) -> np.ndarray:
        return self.positions[0]

    @property
    def tcp(self) -> np.ndarray:
        return self.positions[-1]

    def __len__(self) -> int:
        return len(self.positions)


def link_positions(dh: DHParameterTable, q) -> np.ndarray:
    """Batched forward kinematics.

    ``q`` has shape ``(..., N)``; the result has shape ``(..., M, 3)`` with
    ``M = N + 1`` (+1 when the table carries a tool offset).
    """
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != dh.n_joints:
        raise ConfigurationError(f"joint vector has {q.shape[-1]} entries, DH table has {dh.n_joints}")
    if not np.all(np.isfinite(q)):
        raise ConfigurationError("joint vector contains non-finite values")
    a, alpha, d, theta0 = dh.as_arrays()
    theta = q + theta0
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)

    batch = q.shape[:-1]
    n = dh.n_joints
    T = np.zeros(batch + (n, 4, 4))
    T[..., 0, 0] = ct
    T[..., 0, 1] = -st * ca
    T[..., 0, 2] = st * sa
    T[..., 0, 3] = a * ct
    T[..., 1, 0] = st
    T[..., 1, 1] = ct * ca
    T[..., 1, 2] = -ct * sa
    T[..., 1, 3] = a * st
    T[..., 2, 1] = sa
    T[..., 2, 2] = ca
    T[..., 2, 3] = d
    T[..., 3, 3] = 1.0

    m = n + 1 + (1 if dh.has_tool else 0)
    out = np.zeros(batch + (m, 3))
    acc = np.broadcast_to(np.eye(4), batch + (4, 4))
    for i in range(n):
        acc = acc @ T[..., i, :, :]
        out[..., i + 1, :] = acc[..., :3, 3]
    if dh.has_tool:
        tool = np.asarray(dh.tool_offset_mm, dtype=float)
        out[..., -1, :] = acc[..., :3, 3] + np.einsum("...ij,j->...i", acc[..., :3, :3], tool)
    return out


def forward_kinematics(dh: DHParameterTable, q: JointConfiguration | Sequence[float]) -> LinkPoses:
    """Link-frame origins of a single configuration."""
    if isinstance(q, JointConfiguration):
        q = q.q
    return LinkPoses(link_positions(dh, q))


@dataclass(frozen=True)
class ProtectiveHull:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float
    padding: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max and self.z_min <= self.z_max):
            raise ValueError(f"degenerate hull bounds {self.bounds()}")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.z_min])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.z_max])

    def bounds(self) -> tuple[float, float, float, float, float, float]:
        return (self.x_min, self.x_max, self.y_min, self.y_max, self.z_min, self.z_max)

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))

    @classmethod
    def from_bounds(cls, lower, upper, padding=(0.0, 0.0, 0.0)) -> "ProtectiveHull":
        lo = [float(v) for v in lower]
        hi = [float(v) for v in upper]
        return cls(lo[0], hi[0], lo[1], hi[1], lo[2], hi[2], tuple(float(v) for v in padding))


def _check_nonneg3(name: str, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector")
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise ValueError(f"{name} must be finite and non-negative per axis, got {v.tolist()}")
    return v


def compute_protective_hull(links, padding=(0.0, 0.0, 0.0)) -> ProtectiveHull:
    """Per-axis min/max of the link positions, grown outward by ``padding``."""
    pts = links.positions if isinstance(links, LinkPoses) else np.asarray(links, dtype=float)
    pts = pts.reshape(-1, 3) if pts.size else pts
    if pts.size == 0:
        raise ValueError("cannot build a hull from an empty point set")
    pad = _check_nonneg3("padding", padding)
    return ProtectiveHull.from_bounds(pts.min(axis=0) - pad, pts.max(axis=0) + pad, pad)


def points_hull_distance(points, lower, upper) -> np.ndarray:
    """Vectorised Euclidean distance from ``points`` (..., 3) to the closed box."""
    p = np.asarray(points, dtype=float)
    gap = np.maximum(np.maximum(lower - p, p - upper), 0.0)
    # hypot avoids squaring tiny gaps down to zero
    return np.hypot(np.hypot(gap[..., 0], gap[..., 1]), gap[..., 2])


def point_hull_distance(p, hull: ProtectiveHull) -> float:
    """Distance from ``p`` to the hull; zero inside or on the boundary."""
    p = np.asarray(p, dtype=float)
    dx = max(hull.x_min - p[0], 0.0, p[0] - hull.x_max)
    dy = max(hull.y_min - p[1], 0.0, p[1] - hull.y_max)
    dz = max(hull.z_min - p[2], 0.0, p[2] - hull.z_max)
    return math.hypot(dx, dy, dz)


def inflate_hull(hull: ProtectiveHull, zd, zr) -> ProtectiveHull:
    """Move every face outward by the per-axis sum of ``zd`` and ``zr``."""
    grow = _check_nonneg3("zd", zd) + _check_nonneg3("zr", zr)
    pad = np.asarray(hull.padding, dtype=float)
    return ProtectiveHull.from_bounds(hull.lower - grow, hull.upper + grow, pad)
