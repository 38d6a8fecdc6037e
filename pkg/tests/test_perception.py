import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrsf.errors import InvalidDepthError, NoValidDepthError
from hrsf.kinematics import ProtectiveHull, point_hull_distance
from hrsf.perception import (
    BODY_PARTS,
    BodyPart,
    BoundingBox,
    CameraExtrinsics,
    CameraIntrinsics,
    ClassAObservation,
    DepthFrame,
    KeypointObservation,
    PartMaskObservation,
    PointSelection,
    capsule_through_point,
    closest_point_to_origin,
    deproject,
    extract_body_points,
    min_depth_point,
    project,
    render_capsules,
    roi_mean_depth,
)
from support import brute_min_depth, brute_nearest_to_origin, brute_roi_mean

INTR = CameraIntrinsics(fx=20.0, fy=22.0, cx=7.5, cy=5.5, width=16, height=12)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def fuzz_frame(rng, h=12, w=16):
    depth = rng.integers(300, 3000, (h, w))
    depth[rng.random((h, w)) < 0.3] = 0
    depth[rng.random((h, w)) < 0.1] = rng.integers(1, 500)
    return DepthFrame(depth.astype(np.int32))


class TestDeproject:
    def test_principal_point(self):
        assert deproject((INTR.cx, INTR.cy), 1000, INTR).tolist() == [0, 0, 1000]

    def test_unit_tangent(self):
        assert np.allclose(deproject((INTR.cx + INTR.fx, INTR.cy), 1000, INTR), (1000, 0, 1000))

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            px = (rng.uniform(0, 16), rng.uniform(0, 12))
            back = project(deproject(px, rng.uniform(500, 8000), INTR), INTR)
            assert np.allclose(back, px, atol=1e-9)

    def test_nonpositive_depth(self):
        with pytest.raises(InvalidDepthError):
            deproject((1, 1), 0, INTR)

    def test_invalid_intrinsics(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(0, 1, 1, 1, 4, 4)
        with pytest.raises(ValueError):
            CameraIntrinsics(1, 1, 4, 1, 4, 4)


class TestExtrinsics:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            CameraExtrinsics(np.diag([1.0, 1.0, 2.0]))
        with pytest.raises(ValueError):
            CameraExtrinsics(np.diag([1.0, 1.0, -1.0]))

    def test_inverse_round_trip(self):
        rng = np.random.default_rng(1)
        E = CameraExtrinsics(random_rotation(rng), rng.uniform(-1000, 1000, 3))
        p = rng.uniform(-500, 500, (5, 3))
        assert np.allclose(E.to_camera(E.to_world(p)), p)
        assert np.allclose(E.inverse().to_world(p), E.to_camera(p))

    def test_look_at_axis(self):
        E = CameraExtrinsics.look_at((0, -1000, 500), (0, 0, 500))
        assert np.allclose(E.to_camera((0, 0, 500)), (0, 0, 1000))


class TestMinDepthPoint:
    def test_threshold_rejects_near(self):
        frame = DepthFrame(np.array([[400, 600, 700]]))
        assert min_depth_point(frame, np.ones((1, 3), bool), 500)[1] == 600

    def test_all_below_threshold(self):
        frame = DepthFrame(np.array([[100, 200, 499]]))
        with pytest.raises(NoValidDepthError):
            min_depth_point(frame, np.ones((1, 3), bool), 500)

    def test_tie_goes_to_scanline_order(self):
        frame = DepthFrame(np.array([[900, 700], [700, 800]]))
        assert min_depth_point(frame, np.ones((2, 2), bool), 500) == ((1, 0), 700)

    def test_bounding_box_region(self):
        depth = np.full((6, 6), 2000)
        depth[0, 0] = 600  # outside the box
        depth[3, 3] = 1000
        assert min_depth_point(DepthFrame(depth), BoundingBox(3, 3, 2, 2), 500) == ((3, 3), 1000)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            frame = fuzz_frame(rng)
            mask = rng.random(frame.depth_mm.shape) < 0.5
            mask[0, 0] = True
            want = brute_min_depth(frame.depth_mm, mask, 500)
            if want is None:
                with pytest.raises(NoValidDepthError):
                    min_depth_point(frame, mask, 500)
            else:
                assert min_depth_point(frame, mask, 500) == want


class TestRoiMeanDepth:
    def test_uniform(self):
        assert roi_mean_depth(DepthFrame(np.full((20, 20), 1000)), (10, 10)) == 1000

    def test_invalid_half_ignored(self):
        depth = np.zeros((20, 20), int)
        depth[:, 10:] = 1000
        assert roi_mean_depth(DepthFrame(depth), (10, 10), (10, 10), 500) == 1000

    def test_no_valid(self):
        with pytest.raises(NoValidDepthError):
            roi_mean_depth(DepthFrame(np.zeros((5, 5), int)), (2, 2))

    def test_clipped_at_border(self):
        depth = np.full((5, 5), 800)
        depth[0, 0] = 1800
        assert roi_mean_depth(DepthFrame(depth), (0, 0), (2, 2), 500) == pytest.approx(1800)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            frame = fuzz_frame(rng)
            u, v = rng.uniform(-2, 18), rng.uniform(-2, 14)
            roi = tuple(int(x) for x in rng.integers(1, 8, 2))
            want = brute_roi_mean(frame.depth_mm, u, v, roi[0], roi[1], 500)
            if want is None:
                with pytest.raises(NoValidDepthError):
                    roi_mean_depth(frame, (u, v), roi, 500)
            else:
                assert roi_mean_depth(frame, (u, v), roi, 500) == pytest.approx(want, rel=1e-12)


class TestExtractBodyPoints:
    E_ID = CameraExtrinsics()

    def test_single_pixel_mask(self):
        depth = np.zeros((12, 16), int)
        depth[5, 7] = 2000
        intr = CameraIntrinsics(20, 20, 7, 5, 16, 12)
        mask = depth > 0
        pts = extract_body_points(DepthFrame(depth), ClassAObservation(0.0, mask), intr, self.E_ID)
        assert pts.whole_body.tolist() == [0, 0, 2000]

    def test_part_ordering_preserved(self):
        depth = np.zeros((12, 16), int)
        depth[2, 2] = 900
        depth[8, 8] = 2500
        masks = {BodyPart.HEAD: depth == 900, BodyPart.BODY: depth == 2500}
        pts = extract_body_points(DepthFrame(depth), PartMaskObservation(0.0, masks), INTR, self.E_ID)
        assert np.linalg.norm(pts.parts[BodyPart.HEAD]) < np.linalg.norm(pts.parts[BodyPart.BODY])

    def test_failed_and_absent(self):
        frame = DepthFrame(np.full((12, 16), 1000))
        assert extract_body_points(frame, ClassAObservation(0.0, None, failed=True), INTR, self.E_ID).failed
        nobody = extract_body_points(frame, ClassAObservation(0.0, None), INTR, self.E_ID)
        assert not nobody.person_present and not nobody.failed
        kp = extract_body_points(frame, KeypointObservation(0.0, person_present=False), INTR, self.E_ID)
        assert not kp.person_present

    def test_region_without_valid_depth_fails(self):
        frame = DepthFrame(np.full((12, 16), 100))
        pts = extract_body_points(frame, ClassAObservation(0.0, BoundingBox(8, 6, 4, 4)), INTR, self.E_ID)
        assert pts.failed

    def test_partly_invalid_parts(self):
        depth = np.full((12, 16), 1500)
        depth[:, :4] = 0
        kps = {BodyPart.HEAD: (1.0, 1.0), BodyPart.BODY: (10.0, 6.0)}
        pts = extract_body_points(DepthFrame(depth), KeypointObservation(0.0, kps), INTR, self.E_ID, roi=(2, 2))
        assert pts.valid == {BodyPart.HEAD: False, BodyPart.BODY: True}
        assert [lbl for lbl, _ in pts.valid_points()] == [BodyPart.BODY]

    def test_hull_selection_needs_hull(self):
        frame = DepthFrame(np.full((12, 16), 1500))
        with pytest.raises(ValueError):
            extract_body_points(frame, ClassAObservation(0.0, BoundingBox(8, 6, 4, 4)), INTR, self.E_ID,
                                selection=PointSelection.HULL)

    def test_hull_selection_picks_nearest_to_hull(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            frame = fuzz_frame(rng)
            mask = rng.random(frame.depth_mm.shape) < 0.6
            R, t = random_rotation(rng), rng.uniform(-500, 500, 3)
            E = CameraExtrinsics(R, t)
            lo = rng.uniform(-1500, 1500, 3)
            hull = ProtectiveHull.from_bounds(lo, lo + rng.uniform(0, 800, 3))
            pts = extract_body_points(frame, ClassAObservation(0.0, mask), INTR, E, 500, 8000,
                                      PointSelection.HULL, hull=hull)
            best = math.inf
            for r in range(12):
                for c in range(16):
                    d = int(frame.depth_mm[r, c])
                    if mask[r, c] and 500 <= d <= 8000:
                        w = E.to_world(((c - INTR.cx) * d / INTR.fx, (r - INTR.cy) * d / INTR.fy, d))
                        best = min(best, point_hull_distance(w, hull))
            if math.isinf(best):
                assert pts.failed
            else:
                assert point_hull_distance(pts.whole_body, hull) == pytest.approx(best, abs=1e-6)

    def test_part_masks_match_brute_force(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            frame = fuzz_frame(rng)
            R, t = random_rotation(rng), rng.uniform(-500, 500, 3)
            masks = {p: rng.random(frame.depth_mm.shape) < 0.2 for p in BODY_PARTS[: rng.integers(1, 11)]}
            pts = extract_body_points(frame, PartMaskObservation(0.0, masks), INTR, CameraExtrinsics(R, t), 500, 8000)
            assert len(pts.parts) <= 10 and set(pts.parts) <= set(BODY_PARTS)
            for p, m in masks.items():
                want = brute_nearest_to_origin(frame.depth_mm, m, INTR, R.tolist(), t.tolist(), 500, 8000)
                if pts.failed:
                    assert want is None
                elif want is None:
                    assert not pts.valid[p]
                else:
                    assert np.allclose(pts.parts[p], want, atol=1e-6)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_no_depth_below_threshold(self, seed):
        rng = np.random.default_rng(seed)
        frame = fuzz_frame(rng)
        E = CameraExtrinsics(random_rotation(rng), rng.uniform(-500, 500, 3))
        obs = [ClassAObservation(0.0, rng.random((12, 16)) < 0.5),
               KeypointObservation(0.0, {p: tuple(rng.uniform(0, 16, 2)) for p in BODY_PARTS}),
               PartMaskObservation(0.0, {p: rng.random((12, 16)) < 0.3 for p in BODY_PARTS})]
        for o in obs:
            for sel in (PointSelection.WORLD_ORIGIN, PointSelection.CAMERA_DEPTH):
                pts = extract_body_points(frame, o, INTR, E, 500, 8000, sel, roi=(3, 3))
                for _, p in pts.valid_points():
                    assert E.to_camera(p)[2] >= 500 - 1e-6

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_invariant_to_added_zero_pixels(self, seed):
        rng = np.random.default_rng(seed)
        depth = rng.integers(300, 3000, (12, 16))
        depth[rng.random((12, 16)) < 0.4] = 0
        frame = DepthFrame(depth)
        masks = {p: rng.random((12, 16)) < 0.3 for p in BODY_PARTS}
        grown = {p: m | ((depth == 0) & (rng.random((12, 16)) < 0.5)) for p, m in masks.items()}
        for sel in PointSelection:
            if sel is PointSelection.HULL:
                continue
            a = extract_body_points(frame, PartMaskObservation(0.0, masks), INTR, self.E_ID, selection=sel)
            b = extract_body_points(frame, PartMaskObservation(0.0, grown), INTR, self.E_ID, selection=sel)
            assert a.failed == b.failed
            for p in a.parts:
                assert a.valid[p] == b.valid[p]
                assert np.array_equal(a.parts[p], b.parts[p], equal_nan=True)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_rigid_transform_consistency(self, seed):
        rng = np.random.default_rng(seed)
        E = CameraExtrinsics(random_rotation(rng), rng.uniform(-2000, 2000, 3))
        lo = rng.uniform(-1000, 1000, 3)
        hi = lo + rng.uniform(0, 1000, 3)
        p_cam = rng.uniform(-3000, 3000, 3)
        in_world = point_hull_distance(E.to_world(p_cam), ProtectiveHull.from_bounds(lo, hi))
        # the box expressed in camera coordinates is oriented, so measure there directly
        corner = E.to_camera(lo)
        axes = E.rotation.T  # world axes seen from the camera, one per column
        rel = p_cam - corner
        local = axes.T @ rel
        gap = np.maximum(np.maximum(-local, local - (hi - lo)), 0.0)
        assert in_world == pytest.approx(float(np.linalg.norm(gap)), abs=1e-6)


class TestCapsuleRendering:
    def test_capsule_through_point(self):
        cap = capsule_through_point((300, 1200, -100), 60, 150)
        assert np.allclose(closest_point_to_origin(cap), (300, 1200, -100))
        assert np.isclose(np.linalg.norm(cap.b - cap.a), 300)

    def test_single_sphere_depth(self):
        intr = CameraIntrinsics(100, 100, 50, 50, 101, 101)
        cap = capsule_through_point((0, 0, 1000), 100, 0)
        frame, labels = render_capsules({BodyPart.HEAD: cap}, intr, CameraExtrinsics())
        assert frame.depth_mm[50, 50] == 1000
        assert labels[50, 50] == 0 and labels[0, 0] == -1

    def _scene(self, rng, half_length):
        intr = CameraIntrinsics(200, 200, 99.5, 79.5, 200, 160)
        # camera at the robot base looking along +y, so each part's nearest point faces the camera
        E = CameraExtrinsics.look_at((0, 0, 0), (0, 1, 0))
        caps, truth = {}, {}
        for i, p in enumerate(BODY_PARTS):
            pt = np.array([(i % 5 - 2) * 380.0, rng.uniform(2500, 3500), (i // 5 - 0.5) * 700.0])
            caps[p] = capsule_through_point(pt, 50.0, half_length)
            truth[p] = closest_point_to_origin(caps[p])
        frame, labels = render_capsules(caps, intr, E)
        masks = {p: labels == i for i, p in enumerate(BODY_PARTS)}
        return intr, E, truth, extract_body_points(frame, PartMaskObservation(0.0, masks), intr, E)

    def test_closed_loop_spheres_within_one_footprint(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            intr, E, truth, pts = self._scene(rng, 0.0)
            for p in BODY_PARTS:
                foot = intr.footprint_mm(E.to_camera(truth[p])[2])
                assert np.linalg.norm(pts.parts[p] - truth[p]) <= foot + 1.0  # +1 mm for integer depth

    def test_closed_loop_capsules_distance_within_one_footprint(self):
        # along a capsule axis the distance to the origin is flat to second order, so
        # the recovered point may slide along it; its distance to the origin may not
        rng = np.random.default_rng(8)
        for _ in range(20):
            intr, E, truth, pts = self._scene(rng, 60.0)
            for p in BODY_PARTS:
                foot = intr.footprint_mm(E.to_camera(truth[p])[2])
                assert abs(np.linalg.norm(pts.parts[p]) - np.linalg.norm(truth[p])) <= foot + 1.0
