"""Scripted human motion: piecewise-linear keyframes per body part."""

from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from hrsf.errors import ConfigurationError
from hrsf.perception import BODY_PARTS, BodyPart, Capsule, capsule_through_point


class Phase(str, enum.Enum):
    COEXISTENCE = "coexistence"
    COLLABORATION = "collaboration"
    COOPERATION = "cooperation"


@dataclass(frozen=True)
class PartShape:
    radius_mm: float
    half_length_mm: float = 0.0


DEFAULT_PART_SHAPES = {
    BodyPart.HEAD: PartShape(100.0, 0.0),
    BodyPart.BODY: PartShape(150.0, 200.0),
    BodyPart.LEFT_UPPER_ARM: PartShape(50.0, 120.0),
    BodyPart.RIGHT_UPPER_ARM: PartShape(50.0, 120.0),
    BodyPart.LEFT_LOWER_ARM: PartShape(45.0, 110.0),
    BodyPart.RIGHT_LOWER_ARM: PartShape(45.0, 110.0),
    BodyPart.LEFT_UPPER_LEG: PartShape(70.0, 160.0),
    BodyPart.RIGHT_UPPER_LEG: PartShape(70.0, 160.0),
    BodyPart.LEFT_LOWER_LEG: PartShape(55.0, 170.0),
    BodyPart.RIGHT_LOWER_LEG: PartShape(55.0, 170.0),
}


@dataclass(frozen=True)
class Keyframe:
    t_s: float
    positions_mm: Mapping[BodyPart, np.ndarray]
    phase: Phase | None = None


@dataclass(frozen=True)
class HumanMotionScript:
    """Body-part reference points over time.

    Each scripted point is the surface point of its part closest to the robot
    base; the rendered capsule is placed behind it.  Before the first keyframe
    and after the last one the pose is held.
    """

    keyframes: tuple[Keyframe, ...]
    shapes: Mapping[BodyPart, PartShape] = field(default_factory=lambda: dict(DEFAULT_PART_SHAPES))

    def __post_init__(self):
        times = [k.t_s for k in self.keyframes]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError("keyframe times must be strictly increasing")
        for k in self.keyframes:
            missing = [p.value for p in BODY_PARTS if p not in k.positions_mm]
            if missing:
                raise ConfigurationError(f"keyframe at t={k.t_s}s is missing {', '.join(missing)}")
        missing = [p.value for p in BODY_PARTS if p not in self.shapes]
        if missing:
            raise ConfigurationError(f"part shapes missing {', '.join(missing)}")
        object.__setattr__(self, "_times", times)
        # (K, 10, 3) array in BODY_PARTS order
        arr = np.array([[np.asarray(k.positions_mm[p], float) for p in BODY_PARTS] for k in self.keyframes])
        object.__setattr__(self, "_arr", arr.reshape(len(self.keyframes), len(BODY_PARTS), 3))

    @property
    def present(self) -> bool:
        return len(self.keyframes) > 0

    def positions_at(self, t_s: float) -> np.ndarray | None:
        """(10, 3) array of part points in ``BODY_PARTS`` order, or ``None`` without keyframes."""
        if not self.keyframes:
            return None
        times, arr = self._times, self._arr
        if t_s <= times[0]:
            return arr[0].copy()
        if t_s >= times[-1]:
            return arr[-1].copy()
        i = bisect.bisect_right(times, t_s) - 1
        w = (t_s - times[i]) / (times[i + 1] - times[i])
        return (1 - w) * arr[i] + w * arr[i + 1]

    def positions_batch(self, t_s: np.ndarray) -> np.ndarray:
        """Vectorised ``positions_at`` for an array of times: shape (T, 10, 3)."""
        t = np.asarray(t_s, float)
        out = np.empty(t.shape + (len(BODY_PARTS), 3))
        for j in range(len(BODY_PARTS)):
            for ax in range(3):
                out[..., j, ax] = np.interp(t, self._times, self._arr[:, j, ax])
        return out

    def pose_at(self, t_s: float) -> dict[BodyPart, np.ndarray] | None:
        pos = self.positions_at(t_s)
        if pos is None:
            return None
        return {p: pos[i] for i, p in enumerate(BODY_PARTS)}

    def phase_at(self, t_s: float) -> Phase | None:
        """Phase annotation of the keyframe interval containing ``t_s``."""
        if not self.keyframes:
            return None
        i = max(bisect.bisect_right(self._times, t_s) - 1, 0)
        for k in reversed(self.keyframes[: i + 1]):
            if k.phase is not None:
                return k.phase
        return None

    def capsules(self, pose: Mapping[BodyPart, np.ndarray]) -> dict[BodyPart, Capsule]:
        return {p: capsule_through_point(pose[p], self.shapes[p].radius_mm, self.shapes[p].half_length_mm)
                for p in BODY_PARTS}

    def max_speed_mm_s(self) -> float:
        """Largest part speed between keyframes."""
        if len(self.keyframes) < 2:
            return 0.0
        d = np.linalg.norm(np.diff(self._arr, axis=0), axis=2).max(axis=1)
        return float(np.max(d / np.diff(self._times)))

    def shifted(self, dt_s: float = 0.0, offset_mm=(0.0, 0.0, 0.0)) -> "HumanMotionScript":
        off = np.asarray(offset_mm, float)
        kfs = tuple(Keyframe(k.t_s + dt_s, {p: np.asarray(v, float) + off for p, v in k.positions_mm.items()}, k.phase)
                    for k in self.keyframes)
        return HumanMotionScript(kfs, self.shapes)

    @classmethod
    def absent(cls) -> "HumanMotionScript":
        return cls(())


def standing_pose(x_mm: float, y_mm: float, floor_z_mm: float, facing=(0.0, -1.0), reach_mm: float = 0.0,
                  height_mm: float = 1750.0) -> dict[BodyPart, np.ndarray]:
    """A coarse standing skeleton at floor position ``(x, y)``.

    ``facing`` is the horizontal direction the person faces; ``reach_mm``
    pushes both hands forward along it.
    """
    f = np.array([facing[0], facing[1], 0.0], float)
    f /= np.linalg.norm(f)
    side = np.cross([0.0, 0.0, 1.0], f)
    base = np.array([x_mm, y_mm, floor_z_mm])
    s = height_mm / 1750.0
    up = np.array([0.0, 0.0, 1.0])

    def at(h, lateral=0.0, fwd=0.0):
        return base + up * h * s + side * lateral + f * fwd

    reach = max(reach_mm, 0.0)
    return {
        BodyPart.HEAD: at(1620),
        BodyPart.BODY: at(1250, 0, 40),
        BodyPart.LEFT_UPPER_ARM: at(1300, 200, 40 + 0.3 * reach),
        BodyPart.RIGHT_UPPER_ARM: at(1300, -200, 40 + 0.3 * reach),
        BodyPart.LEFT_LOWER_ARM: at(1050 + 0.15 * reach, 200, 60 + reach),
        BodyPart.RIGHT_LOWER_ARM: at(1050 + 0.15 * reach, -200, 60 + reach),
        BodyPart.LEFT_UPPER_LEG: at(700, 100, 30),
        BodyPart.RIGHT_UPPER_LEG: at(700, -100, 30),
        BodyPart.LEFT_LOWER_LEG: at(280, 100, 20),
        BodyPart.RIGHT_LOWER_LEG: at(280, -100, 20),
    }


def script_from_poses(times_s: Sequence[float], poses: Sequence[Mapping[BodyPart, np.ndarray]],
                      phases: Sequence[Phase | None] | None = None, shapes=None) -> HumanMotionScript:
    phases = phases or [None] * len(times_s)
    kfs = tuple(Keyframe(float(t), {BodyPart(k): np.asarray(v, float) for k, v in pose.items()},
                         Phase(ph) if ph is not None else None)
                for t, pose, ph in zip(times_s, poses, phases))
    return HumanMotionScript(kfs, dict(shapes) if shapes else dict(DEFAULT_PART_SHAPES))
