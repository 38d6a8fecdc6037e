"""Depth extraction: turn depth frames plus detection geometry into world-frame body points.

Two extraction classes are supported.  Whole-body detectors (bounding box or
person mask) yield a single closest body point; part-level detectors
(keypoints or per-part masks) yield one point per body part.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from hrsf.errors import InvalidDepthError, NoValidDepthError
from hrsf.kinematics import ProtectiveHull, points_hull_distance

D_THRES_MM = 500.0
D_MAX_MM = 8000.0
ROI_DEFAULT_PX = (10, 10)


class BodyPart(str, enum.Enum):
    HEAD = "head"
    BODY = "body"
    LEFT_UPPER_ARM = "l_upper_arm"
    RIGHT_UPPER_ARM = "r_upper_arm"
    LEFT_LOWER_ARM = "l_lower_arm"
    RIGHT_LOWER_ARM = "r_lower_arm"
    LEFT_UPPER_LEG = "l_upper_leg"
    RIGHT_UPPER_LEG = "r_upper_leg"
    LEFT_LOWER_LEG = "l_lower_leg"
    RIGHT_LOWER_LEG = "r_lower_leg"


BODY_PARTS = tuple(BodyPart)


class PointSelection(str, enum.Enum):
    """How the representative pixel of a region is chosen."""

    WORLD_ORIGIN = "origin"  # valid pixel whose world point is nearest the robot base
    CAMERA_DEPTH = "depth"  # valid pixel with the smallest camera depth
    HULL = "hull"  # valid pixel whose world point is nearest the protective hull


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def footprint_mm(self, depth_mm: float) -> float:
        """Lateral size of one pixel at ``depth_mm`` (the coarser axis)."""
        return depth_mm / min(self.fx, self.fy)


@dataclass(frozen=True)
class CameraExtrinsics:
    """Camera-to-world transform: ``X_w = R @ X_cam + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation_mm: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation_mm, dtype=float).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9) or not np.isclose(np.linalg.det(R), 1.0, atol=1e-9):
            raise ValueError("extrinsic rotation must be orthonormal with det +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation_mm", t)

    @classmethod
    def look_at(cls, eye_mm, target_mm, up=(0.0, 0.0, 1.0)) -> "CameraExtrinsics":
        """Optical axis from ``eye`` toward ``target``; image y points away from ``up``."""
        eye = np.asarray(eye_mm, float)
        z = np.asarray(target_mm, float) - eye
        z /= np.linalg.norm(z)
        x = np.cross(z, np.asarray(up, float))
        if np.linalg.norm(x) < 1e-9:
            raise ValueError("viewing direction is parallel to the up vector")
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        return cls(np.column_stack([x, y, z]), eye)

    def to_world(self, p_cam) -> np.ndarray:
        return np.asarray(p_cam, float) @ self.rotation.T + self.translation_mm

    def to_camera(self, p_world) -> np.ndarray:
        return (np.asarray(p_world, float) - self.translation_mm) @ self.rotation

    def inverse(self) -> "CameraExtrinsics":
        return CameraExtrinsics(self.rotation.T, -self.rotation.T @ self.translation_mm)


@dataclass(frozen=True)
class DepthFrame:
    """Row-major depth image in integer millimetres; 0 marks an invalid pixel."""

    depth_mm: np.ndarray
    timestamp_s: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.depth_mm)
        if d.ndim != 2:
            raise ValueError("depth frame must be 2-D")
        if np.any(d < 0):
            raise ValueError("depth values must be >= 0")
        object.__setattr__(self, "depth_mm", d)

    @property
    def height(self) -> int:
        return self.depth_mm.shape[0]

    @property
    def width(self) -> int:
        return self.depth_mm.shape[1]


@dataclass(frozen=True)
class BoundingBox:
    """Detector box: centre ``(x_c, y_c)``, width and height, all in pixels."""

    x_c: float
    y_c: float
    w: float
    h: float

    def pixel_slices(self, width: int, height: int) -> tuple[slice, slice]:
        c0 = max(int(np.floor(self.x_c - self.w / 2)), 0)
        c1 = min(int(np.ceil(self.x_c + self.w / 2)), width)
        r0 = max(int(np.floor(self.y_c - self.h / 2)), 0)
        r1 = min(int(np.ceil(self.y_c + self.h / 2)), height)
        return slice(r0, r1), slice(c0, c1)

    def mask(self, width: int, height: int) -> np.ndarray:
        m = np.zeros((height, width), dtype=bool)
        m[self.pixel_slices(width, height)] = True
        return m


Region = Union[BoundingBox, np.ndarray]


@dataclass(frozen=True)
class ClassAObservation:
    """Whole-body detection; ``region`` is ``None`` when the detector found nobody."""

    timestamp_s: float
    region: Region | None = None
    failed: bool = False


@dataclass(frozen=True)
class KeypointObservation:
    """Per-part image keypoints ``(u, v)`` from a pose estimator."""

    timestamp_s: float
    keypoints: Mapping[BodyPart, tuple[float, float]] = field(default_factory=dict)
    failed: bool = False
    person_present: bool = True


@dataclass(frozen=True)
class PartMaskObservation:
    """Per-part boolean pixel masks from a body-part segmenter."""

    timestamp_s: float
    masks: Mapping[BodyPart, np.ndarray] = field(default_factory=dict)
    failed: bool = False
    person_present: bool = True


Observation = Union[ClassAObservation, KeypointObservation, PartMaskObservation]


@dataclass(frozen=True)
class BodyPointSet:
    """World-frame body points (mm).

    ``whole_body`` is set for whole-body methods, ``parts`` for part-level ones.
    Invalid part entries are kept with ``valid[label] = False``.
    """

    timestamp_s: float
    whole_body: np.ndarray | None = None
    parts: Mapping[BodyPart, np.ndarray] = field(default_factory=dict)
    valid: Mapping[BodyPart, bool] = field(default_factory=dict)
    failed: bool = False
    person_present: bool = True

    def valid_points(self) -> list[tuple[BodyPart | None, np.ndarray]]:
        if self.failed or not self.person_present:
            return []
        if self.whole_body is not None:
            return [(None, self.whole_body)]
        return [(lbl, p) for lbl, p in self.parts.items() if self.valid.get(lbl, False)]

    @classmethod
    def failure(cls, timestamp_s: float) -> "BodyPointSet":
        return cls(timestamp_s, failed=True)

    @classmethod
    def nobody(cls, timestamp_s: float) -> "BodyPointSet":
        return cls(timestamp_s, person_present=False)


def deproject(pixel, depth_mm: float, intr: CameraIntrinsics) -> np.ndarray:
    """Pinhole back-projection to the camera frame (mm)."""
    if not depth_mm > 0:
        raise InvalidDepthError(f"depth must be positive, got {depth_mm}")
    u, v = pixel
    return np.array([(u - intr.cx) * depth_mm / intr.fx, (v - intr.cy) * depth_mm / intr.fy, float(depth_mm)])


def project(p_cam, intr: CameraIntrinsics) -> np.ndarray:
    p = np.asarray(p_cam, float)
    return np.array([intr.fx * p[0] / p[2] + intr.cx, intr.fy * p[1] / p[2] + intr.cy])


def _deproject_grid(rows, cols, depth, intr: CameraIntrinsics) -> np.ndarray:
    d = depth.astype(float)
    return np.stack([(cols - intr.cx) * d / intr.fx, (rows - intr.cy) * d / intr.fy, d], axis=-1)


def _valid(depth, d_thres_mm, d_max_mm):
    return (depth >= d_thres_mm) & (depth <= d_max_mm) & (depth > 0)


def _region_mask(frame: DepthFrame, region: Region) -> np.ndarray:
    if isinstance(region, BoundingBox):
        return region.mask(frame.width, frame.height)
    m = np.asarray(region, dtype=bool)
    if m.shape != frame.depth_mm.shape:
        raise ValueError(f"mask shape {m.shape} does not match frame {frame.depth_mm.shape}")
    return m


def min_depth_point(frame: DepthFrame, region: Region, d_thres_mm: float = D_THRES_MM,
                    d_max_mm: float = np.inf) -> tuple[tuple[int, int], float]:
    """Nearest valid pixel of ``region`` as ``((u, v), depth)``.

    Depths below ``d_thres_mm`` are discarded.  Ties go to the lowest row, then
    the lowest column.
    """
    mask = _region_mask(frame, region)
    if not mask.any():
        raise ValueError("empty region")
    ok = mask & _valid(frame.depth_mm, d_thres_mm, d_max_mm)
    if not ok.any():
        raise NoValidDepthError("no pixel in the region passes the depth threshold")
    d = np.where(ok, frame.depth_mm, np.inf)
    flat = int(np.argmin(d))  # argmin returns the first minimum in row-major order
    r, c = divmod(flat, frame.width)
    return (c, r), float(frame.depth_mm[r, c])


def roi_mean_depth(frame: DepthFrame, center, roi=ROI_DEFAULT_PX, d_thres_mm: float = D_THRES_MM,
                   d_max_mm: float = np.inf) -> float:
    """Mean of the valid depths in a ``roi = (w, h)`` window centred on ``center``, clipped to the frame."""
    u, v = center
    w, h = roi
    c0 = int(np.floor(u - w / 2 + 0.5))
    r0 = int(np.floor(v - h / 2 + 0.5))
    c0, c1 = max(c0, 0), min(c0 + int(w), frame.width)
    r0, r1 = max(r0, 0), min(r0 + int(h), frame.height)
    if c0 >= c1 or r0 >= r1:
        raise NoValidDepthError("region of interest lies outside the frame")
    window = frame.depth_mm[r0:r1, c0:c1]
    ok = _valid(window, d_thres_mm, d_max_mm)
    if not ok.any():
        raise NoValidDepthError("no valid depth inside the region of interest")
    return float(window[ok].astype(float).mean())


def _select_in_mask(frame, mask, intr, extr, d_thres_mm, d_max_mm, selection, hull=None):
    """World point of the selected valid pixel of ``mask``, or ``None``.  Ties go to the first pixel in row-major order."""
    ok = mask & _valid(frame.depth_mm, d_thres_mm, d_max_mm)
    if not ok.any():
        return None
    selection = PointSelection(selection)
    if selection is PointSelection.CAMERA_DEPTH:
        (u, v), d = min_depth_point(frame, ok, d_thres_mm, d_max_mm)
        return extr.to_world(deproject((u, v), d, intr))
    rows, cols = np.nonzero(ok)  # row-major order
    world = extr.to_world(_deproject_grid(rows, cols, frame.depth_mm[rows, cols], intr))
    if selection is PointSelection.HULL:
        i = int(np.argmin(points_hull_distance(world, hull.lower, hull.upper)))
    else:
        i = int(np.argmin(np.einsum("ij,ij->i", world, world)))
    return world[i]


def extract_body_points(frame: DepthFrame, obs: Observation, intr: CameraIntrinsics,
                        extr: CameraExtrinsics, d_thres_mm: float = D_THRES_MM, d_max_mm: float = D_MAX_MM,
                        selection: PointSelection | str = PointSelection.WORLD_ORIGIN,
                        roi=ROI_DEFAULT_PX, hull: ProtectiveHull | None = None) -> BodyPointSet:
    """World-frame body points for one observation.

    Whole-body regions and part masks reduce to one pixel chosen by
    ``selection``: closest to the world origin, closest to the camera
    (``"depth"``), or closest to ``hull`` (``"hull"``, which needs the hull).
    Keypoints take the mean valid depth of a small window around each keypoint.
    """
    if PointSelection(selection) is PointSelection.HULL and hull is None:
        raise ValueError("hull selection needs the protective hull")
    ts = obs.timestamp_s
    if obs.failed:
        return BodyPointSet.failure(ts)
    if isinstance(obs, ClassAObservation):
        if obs.region is None:
            return BodyPointSet.nobody(ts)
        mask = _region_mask(frame, obs.region)
        p = _select_in_mask(frame, mask, intr, extr, d_thres_mm, d_max_mm, selection, hull)
        if p is None:
            return BodyPointSet.failure(ts)
        return BodyPointSet(ts, whole_body=p)

    if not obs.person_present:
        return BodyPointSet.nobody(ts)
    parts: dict[BodyPart, np.ndarray] = {}
    valid: dict[BodyPart, bool] = {}
    if isinstance(obs, KeypointObservation):
        for label, (u, v) in obs.keypoints.items():
            label = BodyPart(label)
            try:
                d = roi_mean_depth(frame, (u, v), roi, d_thres_mm, d_max_mm)
            except NoValidDepthError:
                parts[label], valid[label] = np.full(3, np.nan), False
                continue
            parts[label] = extr.to_world(deproject((u, v), d, intr))
            valid[label] = True
    elif isinstance(obs, PartMaskObservation):
        for label, mask in obs.masks.items():
            label = BodyPart(label)
            p = _select_in_mask(frame, np.asarray(mask, bool), intr, extr, d_thres_mm, d_max_mm, selection, hull)
            parts[label] = p if p is not None else np.full(3, np.nan)
            valid[label] = p is not None
    else:
        raise TypeError(f"unsupported observation type {type(obs).__name__}")
    if not any(valid.values()):
        return BodyPointSet.failure(ts)
    return BodyPointSet(ts, parts=parts, valid=valid)


# -- synthetic capsule rendering -------------------------------------------------------------


@dataclass(frozen=True)
class Capsule:
    """Segment ``a``-``b`` swept by a sphere of ``radius`` (world frame, mm)."""

    a: np.ndarray
    b: np.ndarray
    radius: float


def capsule_through_point(p_mm, radius_mm: float, half_length_mm: float, up=(0.0, 0.0, 1.0)) -> Capsule:
    """Capsule whose surface point closest to the world origin is exactly ``p_mm``.

    The axis is perpendicular to the origin direction, as close to ``up`` as
    possible, and sits ``radius_mm`` behind ``p_mm``.
    """
    p = np.asarray(p_mm, float)
    n = np.linalg.norm(p)
    if n <= 0:
        raise ValueError("a body point cannot coincide with the world origin")
    dirn = p / n
    centre = p + radius_mm * dirn
    u = np.asarray(up, float) - np.dot(up, dirn) * dirn
    if np.linalg.norm(u) < 1e-9:
        u = np.cross(dirn, [1.0, 0.0, 0.0])
        if np.linalg.norm(u) < 1e-9:
            u = np.cross(dirn, [0.0, 1.0, 0.0])
    u /= np.linalg.norm(u)
    return Capsule(centre - half_length_mm * u, centre + half_length_mm * u, float(radius_mm))


def closest_point_to_origin(cap: Capsule) -> np.ndarray:
    """Analytic closest surface point of a capsule to the world origin (origin assumed outside)."""
    ab = cap.b - cap.a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0 else float(np.clip(-(cap.a @ ab) / denom, 0.0, 1.0))
    c = cap.a + t * ab
    return c - cap.radius * c / np.linalg.norm(c)


def _ray_capsule_depth(dirs: np.ndarray, cap: Capsule) -> np.ndarray:
    """Distance along unit rays from the camera origin to the capsule; ``inf`` on a miss.

    ``dirs`` has shape (K, 3) and the capsule is given in camera coordinates.
    """
    r2 = cap.radius ** 2
    best = np.full(len(dirs), np.inf)

    def spheres(centre):
        b = dirs @ centre
        disc = b * b - (centre @ centre - r2)
        hit = disc >= 0
        t = np.where(hit, b - np.sqrt(np.where(hit, disc, 0.0)), np.inf)
        return np.where(t > 0, t, np.inf)

    best = np.minimum(best, spheres(cap.a))
    ab = cap.b - cap.a
    L = float(np.linalg.norm(ab))
    if L > 0:
        best = np.minimum(best, spheres(cap.b))
        w = ab / L
        # infinite cylinder around the axis, clipped to the segment
        dw = dirs @ w
        oa = -cap.a
        oaw = oa @ w
        dp = dirs - dw[:, None] * w
        op = oa - oaw * w
        A = np.einsum("ij,ij->i", dp, dp)
        B = 2 * (dp @ op)
        C = op @ op - r2
        disc = B * B - 4 * A * C
        ok = (disc >= 0) & (A > 1e-12)
        t = np.where(ok, (-B - np.sqrt(np.where(ok, disc, 0.0))) / (2 * np.where(ok, A, 1.0)), np.inf)
        s = oaw + t * dw
        t = np.where(ok & (t > 0) & (s >= 0) & (s <= L), t, np.inf)
        best = np.minimum(best, t)
    return best


def render_capsules(capsules: Mapping[BodyPart, Capsule], intr: CameraIntrinsics, extr: CameraExtrinsics,
                    timestamp_s: float = 0.0) -> tuple[DepthFrame, np.ndarray]:
    """Render capsules into an integer-mm depth frame.

    Returns the frame and a label image holding the index (into ``BODY_PARTS``)
    of the front-most part per pixel, ``-1`` for background.  Only the screen
    rectangle covered by each capsule is ray-traced.
    """
    H, W = intr.height, intr.width
    zbuf = np.full((H, W), np.inf)
    labels = np.full((H, W), -1, dtype=np.int16)
    for label, cap in capsules.items():
        a = extr.to_camera(cap.a)
        b = extr.to_camera(cap.b)
        cam_cap = Capsule(a, b, cap.radius)
        # the image of a convex body lies inside the image of its bounding box corners
        lo = np.minimum(a, b) - cap.radius
        hi = np.maximum(a, b) + cap.radius
        if hi[2] <= 0:
            continue
        if lo[2] <= 1.0:
            r0, r1, c0, c1 = 0, H, 0, W
        else:
            corners = np.array(list(itertools.product(*zip(lo.tolist(), hi.tolist()))))
            u = intr.fx * corners[:, 0] / corners[:, 2] + intr.cx
            v = intr.fy * corners[:, 1] / corners[:, 2] + intr.cy
            r0, r1 = max(int(np.floor(v.min())), 0), min(int(np.ceil(v.max())) + 1, H)
            c0, c1 = max(int(np.floor(u.min())), 0), min(int(np.ceil(u.max())) + 1, W)
        if r0 >= r1 or c0 >= c1:
            continue
        rr, cc = np.mgrid[r0:r1, c0:c1]
        dirs = np.stack([(cc - intr.cx) / intr.fx, (rr - intr.cy) / intr.fy, np.ones_like(rr, float)], -1)
        dirs = dirs.reshape(-1, 3)
        norm = np.linalg.norm(dirs, axis=1)
        t = _ray_capsule_depth(dirs / norm[:, None], cam_cap)
        z = (t / norm).reshape(rr.shape)  # range along the ray -> optical-axis depth
        sub = zbuf[r0:r1, c0:c1]
        front = z < sub
        sub[front] = z[front]
        labels[r0:r1, c0:c1][front] = BODY_PARTS.index(BodyPart(label))
    depth = np.where(np.isfinite(zbuf), np.rint(zbuf), 0).astype(np.int32)
    labels[depth == 0] = -1
    return DepthFrame(depth, timestamp_s), labels
