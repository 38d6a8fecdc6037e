"""Independent oracles and scenario builders shared by the test modules.

The oracles deliberately avoid the package's own vectorised code paths: plain
loops, explicit matrices, brute-force scans.
"""

from __future__ import annotations

import math

import numpy as np

from hrsf.config import load_reference
from hrsf.perception import BODY_PARTS, BodyPart
from hrsf.safety import MethodName
from hrsf.simulation.human import script_from_poses, standing_pose
from hrsf.simulation.robot import RobotTrajectory

IIWA_LIKE_ROWS = [
    (0.0, -math.pi / 2, 340.0, 0.0),
    (0.0, math.pi / 2, 0.0, 0.0),
    (0.0, math.pi / 2, 400.0, 0.0),
    (0.0, -math.pi / 2, 0.0, 0.0),
    (0.0, -math.pi / 2, 400.0, 0.0),
    (0.0, math.pi / 2, 0.0, 0.0),
    (0.0, 0.0, 126.0, 0.0),
]


# -- kinematics --------------------------------------------------------------------------

def naive_fk_positions(rows, q, tool=(0.0, 0.0, 0.0)):
    """Frame origins by composing one 4x4 DH matrix per joint, one joint at a time."""
    T = [[1.0 if i == j else 0.0 for j in range(4)] for i in range(4)]
    out = [(0.0, 0.0, 0.0)]

    def mul(A, B):
        return [[sum(A[i][k] * B[k][j] for k in range(4)) for j in range(4)] for i in range(4)]

    for (a, alpha, d, off), qi in zip(rows, q):
        th = qi + off
        ct, st, ca, sa = math.cos(th), math.sin(th), math.cos(alpha), math.sin(alpha)
        A = [[ct, -st * ca, st * sa, a * ct],
             [st, ct * ca, -ct * sa, a * st],
             [0.0, sa, ca, d],
             [0.0, 0.0, 0.0, 1.0]]
        T = mul(T, A)
        out.append((T[0][3], T[1][3], T[2][3]))
    if any(tool):
        p = [sum(T[i][k] * (list(tool) + [1.0])[k] for k in range(4)) for i in range(3)]
        out.append(tuple(p))
    return np.array(out)


def mc_box_surface_distance(p, lower, upper, rng, n=100_000):
    """Minimum distance from ``p`` to ``n`` points drawn uniformly on the box surface."""
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    size = upper - lower
    areas = np.array([size[1] * size[2], size[0] * size[2], size[0] * size[1]] * 2)
    face = rng.choice(6, size=n, p=areas / areas.sum())
    pts = lower + rng.random((n, 3)) * size
    axis = face % 3
    side = face // 3
    pts[np.arange(n), axis] = np.where(side == 0, lower[axis], upper[axis])
    return float(np.min(np.linalg.norm(pts - np.asarray(p, float), axis=1)))


# -- perception --------------------------------------------------------------------------

def brute_min_depth(depth, mask, d_thres, d_max=math.inf):
    best = None
    h, w = depth.shape
    for r in range(h):
        for c in range(w):
            if not mask[r][c]:
                continue
            d = int(depth[r][c])
            if d <= 0 or d < d_thres or d > d_max:
                continue
            if best is None or d < best[1]:
                best = ((c, r), d)
    return best


def brute_roi_mean(depth, u, v, roi_w, roi_h, d_thres, d_max=math.inf):
    h, w = depth.shape
    c0 = math.floor(u - roi_w / 2 + 0.5)
    r0 = math.floor(v - roi_h / 2 + 0.5)
    vals = []
    for r in range(r0, r0 + roi_h):
        for c in range(c0, c0 + roi_w):
            if 0 <= r < h and 0 <= c < w:
                d = int(depth[r][c])
                if d > 0 and d_thres <= d <= d_max:
                    vals.append(d)
    return sum(vals) / len(vals) if vals else None


def brute_nearest_to_origin(depth, mask, intr, R, t, d_thres, d_max):
    """World point of the valid mask pixel nearest the world origin, scanning row by row."""
    best, best_d2 = None, math.inf
    h, w = depth.shape
    for r in range(h):
        for c in range(w):
            if not mask[r][c]:
                continue
            d = float(depth[r][c])
            if d <= 0 or d < d_thres or d > d_max:
                continue
            pc = ((c - intr.cx) * d / intr.fx, (r - intr.cy) * d / intr.fy, d)
            pw = [sum(R[i][k] * pc[k] for k in range(3)) + t[i] for i in range(3)]
            d2 = sum(x * x for x in pw)
            if d2 < best_d2:
                best, best_d2 = pw, d2
    return None if best is None else np.array(best)


# -- cycle time --------------------------------------------------------------------------

def two_pointer_cycle(times, positions, tol=1e-6):
    """Departure and return by walking inwards from both ends of the trace."""
    home = positions[0]

    def at_home(p):
        return math.dist(p, home) <= tol

    i = 0
    while i < len(positions) and at_home(positions[i]):
        i += 1
    j = len(positions) - 1
    while j >= 0 and at_home(positions[j]):
        j -= 1
    if i >= len(positions) or j == len(positions) - 1:
        return None
    return times[j + 1] - times[i - 1]


# -- scenarios ---------------------------------------------------------------------------

def reference_scenario():
    return load_reference().build()


SHORT_WAYPOINTS = {
    "home": (0.0, 0.0096, 0.0, -1.2142, 0.0, 1.9178, 0.0),
    "a2": (0.0, 0.6024, 0.0, -1.3355, 0.0, 1.2036, 0.0),
    "s2": (0.0, 0.7454, 0.0, -1.4317, 0.0, 0.9645, 0.0),
    "a3": (0.1326, 0.6152, 0.0, -1.3149, 0.0, 1.2115, 0.0),
}


def _visible(sc, pose) -> bool:
    I, E = sc.intrinsics, sc.extrinsics
    for p, v in pose.items():
        shape = sc.human.shapes[p]
        r = shape.radius_mm + shape.half_length_mm
        for d in ((0, 0, r), (0, 0, -r), (r, 0, 0), (-r, 0, 0), (0, r, 0)):
            c = E.to_camera(np.asarray(v) + np.array(d, float))
            if c[2] <= 0:
                return False
            u = I.fx * c[0] / c[2] + I.cx
            w = I.fy * c[1] / c[2] + I.cy
            if not (0 <= u < I.width and 0 <= w < I.height):
                return False
    return True


def random_scenario(seed: int, base=None):
    """A short robot task with a random, camera-visible human walking about near the cell.

    Returns ``(scenario, method)``.  Human parts never move faster than 1.5 m/s.
    """
    rng = np.random.default_rng(seed)
    base = base or reference_scenario()
    names = ["home", "a2", "s2", "a2", "a3", "home"] if rng.random() < 0.5 else ["home", "a2", "s2", "a2", "home"]
    speeds = [float(rng.choice([250.0, 400.0, 800.0])) for _ in names[1:]]
    dwells = [0.0] + [float(rng.choice([0.0, 0.5])) for _ in names[1:-1]] + [0.0]
    traj = RobotTrajectory(tuple(SHORT_WAYPOINTS[n] for n in names), tuple(speeds), tuple(dwells), tuple(names))

    times, poses = [], []
    t = 0.0
    while t < 40.0:
        for _ in range(200):
            pose = standing_pose(rng.uniform(-100, 1300), rng.uniform(650, 2700), -800.0,
                                 facing=(rng.uniform(-0.5, 0.5), -1.0), reach_mm=rng.uniform(0, 900))
            if _visible(base, pose):
                break
        if poses:
            prev = np.array([poses[-1][p] for p in BODY_PARTS])
            cur = np.array([pose[p] for p in BODY_PARTS])
            need = float(np.max(np.linalg.norm(cur - prev, axis=1))) / 1500.0
            t += max(need, rng.uniform(0.3, 2.5))
        times.append(t)
        poses.append(pose)
    phases = [str(rng.choice(["coexistence", "collaboration", "cooperation"])) for _ in times]
    script = script_from_poses(times, poses, phases)
    method = [m.value for m in MethodName][int(rng.integers(4))]
    sc = base.with_(trajectory=traj, human=script, method=method, noise_scale=0.0,
                    failure_rate={m: float(rng.uniform(0.0, 0.3)) for m in MethodName},
                    jitter_time_s=0.0, jitter_position_mm=0.0, seed=int(rng.integers(2 ** 32)))
    return sc, method


def approach_scenario(speed_mm_s: float = 1000.0, stop_y_mm: float = 800.0, base=None):
    """Human walks straight at the cell from 3.5 m and stays, hands slightly forward."""
    base = base or reference_scenario()
    y0 = 3500.0
    T = (y0 - stop_y_mm) / speed_mm_s
    poses = [standing_pose(600, y0, -800.0), standing_pose(600, stop_y_mm, -800.0, reach_mm=300.0)]
    script = script_from_poses([0.0, T, T + 60.0], poses + poses[1:])
    return base.with_(human=script, jitter_time_s=0.3, jitter_position_mm=0.0)


def part_index(label: str) -> int:
    return BODY_PARTS.index(BodyPart(label))
