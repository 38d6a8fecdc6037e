"""Scenario documents: JSON loading, validation, canonical serialization.

A scenario is a UTF-8 JSON object with a top-level ``schema_version``.  Units
are carried in key names (``_mm``, ``_ms``, ``_s``, ``_rad``).  Structural
problems are reported by JSON Schema, semantic ones by the typed constructors;
either way every issue carries the JSON path and the source line it points at.
"""

from __future__ import annotations

import bisect
import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from hrsf.errors import ConfigurationError
from hrsf.kinematics import DHParameterTable
from hrsf.perception import ROI_DEFAULT_PX, BODY_PARTS, BodyPart, CameraExtrinsics, CameraIntrinsics, PointSelection
from hrsf.regulator import VelocityLimitTable
from hrsf.safety import (
    REFERENCE_SH_MM,
    BudgetMode,
    HumanSpeedPolicy,
    MethodName,
    MethodProfile,
    SafetyConstants,
    builtin_profiles,
    compute_C,
    compute_Sh,
)
from hrsf.simulation.engine import ALL_METHODS, Scenario
from hrsf.simulation.human import HumanMotionScript, PartShape, Phase, script_from_poses, standing_pose
from hrsf.simulation.pipeline import LaserScannerModel, PipelineLatencyModel
from hrsf.simulation.robot import RobotTrajectory

SCHEMA_VERSION = 1
PART_LABELS = [p.value for p in BODY_PARTS]
PROFILE_NAMES = [m.value for m in MethodName]

_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec3 = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}
_vec3_nonneg = {"type": "array", "items": _nonneg, "minItems": 3, "maxItems": 3}


def _obj(props: dict, required=(), extra=False) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": extra}


_LATENCY = _obj({
    "frame_interval_ms": _pos, "t_cap_ms": _nonneg, "t_alg_ms": _nonneg, "t_3d_ms": _nonneg,
    "plc_ms": _nonneg, "t_adj_ms": _nonneg, "double_processing": {"type": "boolean"},
}, ["frame_interval_ms", "t_cap_ms", "t_alg_ms", "t_3d_ms", "plc_ms", "t_adj_ms"])

_KEYFRAME = _obj({
    "t_s": _num,
    "phase": {"enum": [p.value for p in Phase] + [None]},
    "parts_mm": _obj({k: _vec3 for k in PART_LABELS}, PART_LABELS),
    "standing": _obj({"x_mm": _num, "y_mm": _num, "facing": {"type": "array", "items": _num, "minItems": 2,
                                                             "maxItems": 2},
                      "reach_mm": _nonneg, "height_mm": _pos}, ["x_mm", "y_mm"]),
}, ["t_s"])
_KEYFRAME["oneOf"] = [{"required": ["parts_mm"]}, {"required": ["standing"]}]

SCHEMA: dict = _obj({
    "schema_version": {"const": SCHEMA_VERSION},
    "name": {"type": "string"},
    "robot": _obj({
        "dh": {"type": "array", "minItems": 1, "items": _obj(
            {"a_mm": _num, "alpha_rad": _num, "d_mm": _num, "theta_offset_rad": _num},
            ["a_mm", "alpha_rad", "d_mm"])},
        "tool_offset_mm": _vec3,
        "hull_padding_mm": _vec3_nonneg,
    }, ["dh"]),
    "trajectory": _obj({
        "waypoints_rad": {"type": "array", "minItems": 2, "items": {"type": "array", "items": _num}},
        "labels": {"type": "array", "items": {"type": "string"}},
        "speeds_mm_s": {"type": "array", "items": _pos},
        "dwells_s": {"type": "array", "items": _nonneg},
    }, ["waypoints_rad", "speeds_mm_s"]),
    "camera": _obj({
        "intrinsics": _obj({"fx": _pos, "fy": _pos, "cx": _num, "cy": _num,
                            "width": {"type": "integer", "minimum": 1},
                            "height": {"type": "integer", "minimum": 1}},
                           ["fx", "fy", "cx", "cy", "width", "height"]),
        "extrinsics": _obj({"eye_mm": _vec3, "target_mm": _vec3, "up": _vec3,
                            "rotation": {"type": "array", "items": _vec3, "minItems": 3, "maxItems": 3},
                            "translation_mm": _vec3}),
    }, ["intrinsics", "extrinsics"]),
    "method": {"enum": list(ALL_METHODS)},
    "profiles": {"type": "array", "items": _obj({
        "name": {"enum": PROFILE_NAMES},
        "t_lat_max_ms": _num,
        "z_d_mm": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
        "expected_s_h_mm": _num,
    }, ["name", "t_lat_max_ms", "z_d_mm"])},
    "latency": _obj({k: _LATENCY for k in PROFILE_NAMES}),
    "safety": _obj({
        "s_r_mm": _nonneg, "z_r_mm": _vec3_nonneg, "s_s_mm": {"const": 0},
        "detection_capacity_mm": _nonneg, "intrusion_c_mm": _nonneg,
        "v_far_mm_s": _pos, "v_near_mm_s": _pos, "near_threshold_mm": _nonneg,
        "d_thres_mm": _nonneg, "d_max_mm": _pos,
    }),
    "perception": _obj({
        "roi_px": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
        "point_selection_a": {"enum": [s.value for s in PointSelection]},
        "point_selection_b": {"enum": [s.value for s in PointSelection]},
    }),
    "velocity_limits": _obj({
        "full_speed_mm_s": _pos,
        "limits_mm_s": _obj({k: _pos for k in PART_LABELS}, PART_LABELS),
    }, ["limits_mm_s"]),
    "human": _obj({
        "floor_z_mm": _num,
        "shapes": _obj({k: _obj({"radius_mm": _pos, "half_length_mm": _nonneg}, ["radius_mm"])
                        for k in PART_LABELS}, PART_LABELS),
        "keyframes": {"type": "array", "items": _KEYFRAME},
        "jitter_time_s": _nonneg,
        "jitter_position_mm": _nonneg,
    }, ["keyframes"]),
    "laser": _obj({
        "detection_capacity_mm": _nonneg, "scan_interval_ms": _pos, "response_ms": _nonneg,
        "plc_ms": _nonneg, "t_adj_ms": _nonneg, "field_margin_mm": {"type": ["number", "null"], "minimum": 0},
        "field_mm": {"oneOf": [{"type": "null"}, _obj({"x_min": _num, "x_max": _num, "y_min": _num, "y_max": _num},
                                                      ["x_min", "x_max", "y_min", "y_max"])]},
    }),
    "simulation": _obj({
        "dt_ms": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "timeout_s": _pos,
        "mode": {"enum": [m.value for m in BudgetMode]},
        "noise_scale": _nonneg,
        "noise_truncate": {"type": "boolean"},
        "failure_rate": {"oneOf": [{"type": "number", "minimum": 0, "maximum": 1},
                                   _obj({k: {"type": "number", "minimum": 0, "maximum": 1} for k in PROFILE_NAMES})]},
        "hysteresis_margin_mm": _nonneg,
        "clear_frames_required": {"type": "integer", "minimum": 1},
        "failures_before_fallback": {"type": "integer", "minimum": 1},
    }),
}, ["schema_version", "robot", "trajectory", "camera", "human"])


@dataclass(frozen=True)
class Issue:
    path: str
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.path}: {self.message}"


class ConfigValidationError(ConfigurationError):
    def __init__(self, issues: list[Issue], source: str = "<config>"):
        self.issues = issues
        self.source = source
        super().__init__("\n".join(f"{source}:{i}" for i in issues))


def locate_lines(text: str) -> dict[tuple, int]:
    """Map every JSON path (tuple of keys and indices) to the line where its value starts."""
    dec = json.JSONDecoder()
    lines: dict[tuple, int] = {}
    ws = " \t\r\n"

    newlines = [i for i, ch in enumerate(text) if ch == "\n"]

    def line_of(i: int) -> int:
        return bisect.bisect_left(newlines, i) + 1

    def skip(i: int) -> int:
        while i < len(text) and text[i] in ws:
            i += 1
        return i

    def walk(i: int, path: tuple, key_line: int | None = None) -> int:
        i = skip(i)
        lines[path] = key_line or line_of(i)
        c = text[i]
        if c == "{":
            i = skip(i + 1)
            if text[i] == "}":
                return i + 1
            while True:
                kl = line_of(i)
                key, i = json.decoder.scanstring(text, i + 1)
                i = skip(i) + 1  # ':'
                i = skip(walk(i, path + (key,), kl))
                if text[i] == "}":
                    return i + 1
                i = skip(i + 1)
        if c == "[":
            i = skip(i + 1)
            if text[i] == "]":
                return i + 1
            k = 0
            while True:
                i = skip(walk(i, path + (k,)))
                k += 1
                if text[i] == "]":
                    return i + 1
                i += 1
        _, end = dec.raw_decode(text, i)
        return end

    walk(0, ())
    return lines


def _line_for(lines: dict[tuple, int], path: tuple) -> int:
    path = tuple(path)
    while path not in lines and path:
        path = path[:-1]
    return lines.get(path, 1)


def _fmt_path(path) -> str:
    out = "$"
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _schema_issues(doc: Any, lines: dict[tuple, int]) -> list[Issue]:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    issues = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message)):
        path = tuple(err.absolute_path)
        issues.append(Issue(_fmt_path(path), _line_for(lines, path), err.message))
    return issues


def normalize(doc: dict) -> dict:
    """Fill defaults so that equal scenarios have equal documents."""
    d = copy.deepcopy(doc)
    d.setdefault("name", "")
    d.setdefault("method", MethodName.BODY_PART_SEGMENTATION.value)
    r = d["robot"]
    r.setdefault("tool_offset_mm", [0.0, 0.0, 0.0])
    r.setdefault("hull_padding_mm", [0.0, 0.0, 0.0])
    for j in r["dh"]:
        j.setdefault("theta_offset_rad", 0.0)
    t = d["trajectory"]
    n = len(t["waypoints_rad"])
    t.setdefault("labels", [""] * n)
    t.setdefault("dwells_s", [0.0] * n)
    d.setdefault("profiles", [{"name": p.name.value, "t_lat_max_ms": p.t_lat_max_ms, "z_d_mm": list(p.z_d_mm),
                               "expected_s_h_mm": REFERENCE_SH_MM[p.name]} for p in builtin_profiles()])
    lat = d.setdefault("latency", {})
    for v in lat.values():
        v.setdefault("double_processing", True)
    s = d.setdefault("safety", {})
    for k, v in (("s_r_mm", 5.0), ("z_r_mm", [8.0, 7.0, 11.0]), ("s_s_mm", 0), ("detection_capacity_mm", 0.0),
                 ("v_far_mm_s", 1600.0), ("v_near_mm_s", 2000.0), ("near_threshold_mm", 500.0),
                 ("d_thres_mm", 500.0), ("d_max_mm", 8000.0)):
        s.setdefault(k, v)
    vl = d.setdefault("velocity_limits", {"limits_mm_s": {p.value: v for p, v in
                                                          VelocityLimitTable.default().limits_mm_s.items()}})
    vl.setdefault("full_speed_mm_s", 1600.0)
    h = d["human"]
    h.setdefault("floor_z_mm", 0.0)
    h.setdefault("jitter_time_s", 0.0)
    h.setdefault("jitter_position_mm", 0.0)
    la = d.setdefault("laser", {})
    for k, v in (("detection_capacity_mm", 70.0), ("scan_interval_ms", 30.0), ("response_ms", 60.0),
                 ("plc_ms", 20.0), ("t_adj_ms", 60.0), ("field_margin_mm", None), ("field_mm", None)):
        la.setdefault(k, v)
    sim = d.setdefault("simulation", {})
    for k, v in (("dt_ms", 1), ("seed", 0), ("timeout_s", 600.0), ("mode", BudgetMode.PER_AXIS.value),
                 ("noise_scale", 0.0), ("noise_truncate", True), ("failure_rate", 0.0), ("hysteresis_margin_mm", 0.0),
                 ("clear_frames_required", 1), ("failures_before_fallback", 1)):
        sim.setdefault(k, v)
    pe = d.setdefault("perception", {})
    for k, v in (("roi_px", list(ROI_DEFAULT_PX)), ("point_selection_a", PointSelection.HULL.value),
                 ("point_selection_b", PointSelection.WORLD_ORIGIN.value)):
        pe.setdefault(k, v)
    return d


@dataclass(frozen=True)
class ScenarioConfig:
    """A validated, default-filled scenario document."""

    document: dict
    source: str = "<config>"
    _lines: dict = field(default_factory=dict, repr=False, compare=False)

    def to_json(self) -> str:
        return json.dumps(self.document, indent=2, sort_keys=False) + "\n"

    def with_overrides(self, seed: int | None = None, mode: str | None = None, method: str | None = None
                       ) -> "ScenarioConfig":
        d = copy.deepcopy(self.document)
        if seed is not None:
            d["simulation"]["seed"] = int(seed)
        if mode is not None:
            d["simulation"]["mode"] = BudgetMode(mode).value
        if method is not None:
            d["method"] = method
        return load_document(d, self.source)

    def build(self) -> Scenario:
        return _build(self.document, self._lines, self.source)[0]


def _build(d: dict, lines: dict, source: str) -> tuple[Scenario | None, list[Issue]]:
    issues: list[Issue] = []

    def err(path, msg):
        issues.append(Issue(_fmt_path(path), _line_for(lines, path), msg))

    def guard(path, fn, *a, **kw):
        try:
            return fn(*a, **kw)
        except (ValueError, ConfigurationError, TypeError) as e:
            err(path, str(e))
            return None

    r = d["robot"]
    dh = guard(("robot", "dh"), DHParameterTable.from_rows,
               [(j["a_mm"], j["alpha_rad"], j["d_mm"], j["theta_offset_rad"]) for j in r["dh"]], r["tool_offset_mm"])

    t = d["trajectory"]
    n_wp = len(t["waypoints_rad"])
    if len(t["labels"]) != n_wp:
        err(("trajectory", "labels"), f"expected {n_wp} labels, got {len(t['labels'])}")
    traj = guard(("trajectory",), RobotTrajectory, tuple(tuple(w) for w in t["waypoints_rad"]),
                 tuple(t["speeds_mm_s"]), tuple(t["dwells_s"]), tuple(t["labels"]) if len(t["labels"]) == n_wp else ())
    if dh is not None and traj is not None and traj.n_joints != dh.n_joints:
        err(("trajectory", "waypoints_rad"), f"waypoints have {traj.n_joints} joints, the DH table has {dh.n_joints}")

    cam = d["camera"]
    intr = guard(("camera", "intrinsics"), lambda c: CameraIntrinsics(**c), cam["intrinsics"])
    ex = cam["extrinsics"]
    if "eye_mm" in ex and "target_mm" in ex:
        extr = guard(("camera", "extrinsics"), CameraExtrinsics.look_at, ex["eye_mm"], ex["target_mm"],
                     ex.get("up", (0.0, 0.0, 1.0)))
    elif "rotation" in ex and "translation_mm" in ex:
        extr = guard(("camera", "extrinsics"), CameraExtrinsics, ex["rotation"], ex["translation_mm"])
    else:
        err(("camera", "extrinsics"), "give either eye_mm and target_mm, or rotation and translation_mm")
        extr = None

    profiles = {}
    policy = None
    s = d["safety"]
    policy = guard(("safety",), HumanSpeedPolicy, s["v_far_mm_s"], s["v_near_mm_s"], s["near_threshold_mm"])
    for i, p in enumerate(d["profiles"]):
        prof = guard(("profiles", i), MethodProfile, p["name"], p["t_lat_max_ms"], tuple(p["z_d_mm"]))
        if prof is None:
            continue
        if prof.name in profiles:
            err(("profiles", i, "name"), f"duplicate profile {prof.name.value}")
        profiles[prof.name] = prof
        if "expected_s_h_mm" in p and policy is not None:
            got = round(compute_Sh(prof.t_lat_max_ms, policy, math.inf))
            if got != p["expected_s_h_mm"]:
                err(("profiles", i, "expected_s_h_mm"),
                    f"S_h recomputes to {got} mm from t_lat_max_ms={p['t_lat_max_ms']}, document says "
                    f"{p['expected_s_h_mm']}")

    method = d["method"]
    if method in PROFILE_NAMES and MethodName(method) not in profiles:
        err(("method",), f"method {method} has no entry under profiles")

    latency = {}
    for name, spec in d["latency"].items():
        lm = guard(("latency", name), lambda x: PipelineLatencyModel(**x), spec)
        if lm is None:
            continue
        latency[MethodName(name)] = lm
        prof = profiles.get(MethodName(name))
        if prof is None:
            err(("latency", name), f"no profile named {name}")
        elif lm.worst_case_ms() > prof.t_lat_max_ms:
            err(("latency", name), f"worst-case pipeline latency {lm.worst_case_ms():g} ms exceeds "
                                   f"t_lat_max_ms {prof.t_lat_max_ms:g}")

    c_mm = s.get("intrusion_c_mm")
    if c_mm is None:
        c_mm = compute_C(s["detection_capacity_mm"])
    consts = guard(("safety",), SafetyConstants, s["s_r_mm"], tuple(s["z_r_mm"]), float(s["s_s_mm"]), c_mm)
    if s["d_max_mm"] <= s["d_thres_mm"]:
        err(("safety", "d_max_mm"), "d_max_mm must exceed d_thres_mm")

    vl = d["velocity_limits"]
    limits = guard(("velocity_limits",), VelocityLimitTable, vl["limits_mm_s"], vl["full_speed_mm_s"])
    if traj is not None and max(traj.speeds_mm_s) > vl["full_speed_mm_s"]:
        err(("trajectory", "speeds_mm_s"), f"nominal speed exceeds full_speed_mm_s {vl['full_speed_mm_s']}")

    h = d["human"]
    shapes = {BodyPart(k): PartShape(v["radius_mm"], v.get("half_length_mm", 0.0)) for k, v in h["shapes"].items()} \
        if "shapes" in h else None
    times, poses, phases = [], [], []
    for i, k in enumerate(h["keyframes"]):
        times.append(k["t_s"])
        phases.append(k.get("phase"))
        if "parts_mm" in k:
            poses.append({BodyPart(p): np.asarray(v, float) for p, v in k["parts_mm"].items()})
        else:
            st = k["standing"]
            poses.append(standing_pose(st["x_mm"], st["y_mm"], h["floor_z_mm"], tuple(st.get("facing", (0.0, -1.0))),
                                       st.get("reach_mm", 0.0), st.get("height_mm", 1750.0)))
    script = guard(("human", "keyframes"), script_from_poses, times, poses, phases, shapes)

    la = d["laser"]
    laser = guard(("laser",), LaserScannerModel, la["detection_capacity_mm"], la["scan_interval_ms"],
                  la["response_ms"], la["plc_ms"], la["t_adj_ms"], la["field_margin_mm"])
    fm = la["field_mm"]
    field_rect = None
    if fm is not None:
        if fm["x_max"] <= fm["x_min"] or fm["y_max"] <= fm["y_min"]:
            err(("laser", "field_mm"), "field rectangle must have positive extent")
        field_rect = (fm["x_min"], fm["x_max"], fm["y_min"], fm["y_max"])

    sim = d["simulation"]
    fr = sim["failure_rate"]
    failure = {m: float(fr) for m in MethodName} if not isinstance(fr, dict) else \
        {MethodName(k): float(v) for k, v in fr.items()}

    if issues:
        return None, issues
    sc = Scenario(
        dh=dh, trajectory=traj, human=script, intrinsics=intr, extrinsics=extr, method=method,
        hull_padding_mm=tuple(r["hull_padding_mm"]), profiles=profiles, latency=latency, constants=consts,
        policy=policy, limits=limits, laser=laser, laser_field_mm=field_rect, mode=BudgetMode(sim["mode"]),
        dt_ms=sim["dt_ms"], seed=sim["seed"], timeout_s=sim["timeout_s"], noise_scale=sim["noise_scale"],
        noise_truncate=sim["noise_truncate"],
        failure_rate=failure, hysteresis_margin_mm=sim["hysteresis_margin_mm"],
        clear_frames_required=sim["clear_frames_required"], failures_before_fallback=sim["failures_before_fallback"],
        selection_a=PointSelection(d["perception"]["point_selection_a"]),
        selection_b=PointSelection(d["perception"]["point_selection_b"]), roi_px=tuple(d["perception"]["roi_px"]),
        d_thres_mm=s["d_thres_mm"], d_max_mm=s["d_max_mm"],
        jitter_time_s=h["jitter_time_s"], jitter_position_mm=h["jitter_position_mm"],
    )
    return sc, []


def load_document(doc: Any, source: str = "<config>", lines: dict | None = None) -> ScenarioConfig:
    lines = lines or {}
    issues = _schema_issues(doc, lines)
    if issues:
        raise ConfigValidationError(issues, source)
    d = normalize(doc)
    _, issues = _build(d, lines, source)
    if issues:
        raise ConfigValidationError(issues, source)
    return ScenarioConfig(d, source, lines)


def loads(text: str, source: str = "<config>") -> ScenarioConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigValidationError([Issue("$", e.lineno, f"invalid JSON: {e.msg}")], source) from None
    return load_document(doc, source, locate_lines(text))


def load(path: str | Path) -> ScenarioConfig:
    p = Path(path)
    return loads(p.read_text(encoding="utf-8"), str(p))


def reference_config_path() -> Path:
    return Path(__file__).parent / "scenarios" / "reference.json"


def load_reference() -> ScenarioConfig:
    return load(reference_config_path())
