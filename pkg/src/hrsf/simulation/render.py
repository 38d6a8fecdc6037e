"""Synthetic detections standing in for the neural networks.

The human is rendered as one capsule per body part.  Optional Gaussian
prediction error displaces the rendered geometry (independently per part for
part-level methods, as one rigid shift for whole-body methods), and optional
failed identifications drop the prediction altogether.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from hrsf.perception import (
    BODY_PARTS,
    BodyPart,
    BoundingBox,
    CameraExtrinsics,
    CameraIntrinsics,
    ClassAObservation,
    DepthFrame,
    KeypointObservation,
    Observation,
    PartMaskObservation,
    capsule_through_point,
    render_capsules,
)
from hrsf.safety import MethodClass, MethodName
from hrsf.simulation.human import DEFAULT_PART_SHAPES, PartShape


def _bbox_of(mask: np.ndarray) -> BoundingBox:
    rows, cols = np.nonzero(mask)
    r0, r1, c0, c1 = rows.min(), rows.max() + 1, cols.min(), cols.max() + 1
    return BoundingBox((c0 + c1) / 2, (r0 + r1) / 2, float(c1 - c0), float(r1 - r0))


def render_synthetic_observation(pose: Mapping[BodyPart, np.ndarray] | None, intr: CameraIntrinsics,
                                 extr: CameraExtrinsics, method: MethodName | str,
                                 rng: np.random.Generator, timestamp_s: float = 0.0,
                                 noise_sigma_mm=(0.0, 0.0, 0.0), failure_rate: float = 0.0,
                                 shapes: Mapping[BodyPart, PartShape] | None = None,
                                 noise_bound_mm=None) -> tuple[DepthFrame, Observation]:
    """Depth frame plus method-specific detection geometry for one human pose.

    ``pose`` maps each part to its scripted point (``None``: nobody in view).
    Both random draws happen on every call so that the stream stays aligned
    whatever the outcome.  ``noise_bound_mm`` clips each error component to
    ``[-bound, bound]``.
    """
    method = MethodName(method)
    shapes = shapes or DEFAULT_PART_SHAPES
    fail = rng.random() < failure_rate
    sigma = np.asarray(noise_sigma_mm, float)
    if method.method_class is MethodClass.A:
        noise = np.broadcast_to(rng.standard_normal(3) * sigma, (len(BODY_PARTS), 3))
    else:
        noise = rng.standard_normal((len(BODY_PARTS), 3)) * sigma
    if noise_bound_mm is not None:
        bound = np.asarray(noise_bound_mm, float)
        noise = np.clip(noise, -bound, bound)

    empty = DepthFrame(np.zeros((intr.height, intr.width), dtype=np.int32), timestamp_s)
    if pose is None:
        if method.method_class is MethodClass.A:
            return empty, ClassAObservation(timestamp_s, None)
        cls = KeypointObservation if method is MethodName.POSE_ESTIMATION else PartMaskObservation
        return empty, cls(timestamp_s, person_present=False)

    shown = {p: np.asarray(pose[p], float) + noise[i] for i, p in enumerate(BODY_PARTS)}
    caps = {p: capsule_through_point(shown[p], shapes[p].radius_mm, shapes[p].half_length_mm) for p in BODY_PARTS}
    frame, labels = render_capsules(caps, intr, extr, timestamp_s)
    person = labels >= 0

    if method.method_class is MethodClass.A:
        if fail:
            return frame, ClassAObservation(timestamp_s, None, failed=True)
        if not person.any():
            return frame, ClassAObservation(timestamp_s, None)
        region = _bbox_of(person) if method is MethodName.BODY_RECOGNITION else person
        return frame, ClassAObservation(timestamp_s, region)

    if method is MethodName.POSE_ESTIMATION:
        if fail:
            return frame, KeypointObservation(timestamp_s, failed=True)
        # a keypoint sits on the part's own pixel that lies closest to its reference point
        kps = {}
        for i, p in enumerate(BODY_PARTS):
            rows, cols = np.nonzero(labels == i)
            if len(rows) == 0:
                continue
            d = frame.depth_mm[rows, cols].astype(float)
            cam = np.stack([(cols - intr.cx) * d / intr.fx, (rows - intr.cy) * d / intr.fy, d], axis=-1)
            k = int(np.argmin(np.linalg.norm(extr.to_world(cam) - shown[p], axis=1)))
            kps[p] = (float(cols[k]), float(rows[k]))
        return frame, KeypointObservation(timestamp_s, kps, person_present=bool(person.any()))

    if fail:
        return frame, PartMaskObservation(timestamp_s, failed=True)
    masks = {p: labels == i for i, p in enumerate(BODY_PARTS) if np.any(labels == i)}
    return frame, PartMaskObservation(timestamp_s, masks, person_present=bool(masks))
