import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hrsf.errors import ConfigurationError
from hrsf.kinematics import ProtectiveHull, point_hull_distance
from hrsf.perception import BODY_PARTS, BodyPart, BodyPointSet
from hrsf.regulator import (
    Reason,
    RegulatorState,
    VelocityLimitTable,
    evaluate,
    map_label_to_limit,
)
from hrsf.safety import SeparationBudget

HULL = ProtectiveHull(0, 1000, 0, 1000, 0, 1000)
BUDGET = SeparationBudget(1299.2, 5.0, 0.0, (0, 0, 0), (0, 0, 0))  # threshold 1304.2
LIMITS = VelocityLimitTable.default()
TABLE = {
    BodyPart.HEAD: 50, BodyPart.BODY: 100,
    BodyPart.LEFT_UPPER_ARM: 100, BodyPart.RIGHT_UPPER_ARM: 100,
    BodyPart.LEFT_LOWER_ARM: 100, BodyPart.RIGHT_LOWER_ARM: 100,
    BodyPart.LEFT_UPPER_LEG: 200, BodyPart.RIGHT_UPPER_LEG: 200,
    BodyPart.LEFT_LOWER_LEG: 50, BodyPart.RIGHT_LOWER_LEG: 50,
}


def at_distance(d):
    """A point straight above the hull at distance ``d``."""
    return np.array([500.0, 500.0, 1000.0 + d])


def parts(dists: dict) -> BodyPointSet:
    return BodyPointSet(0.0, parts={p: at_distance(d) for p, d in dists.items()}, valid={p: True for p in dists})


class TestLimitTable:
    @pytest.mark.parametrize("label", BODY_PARTS)
    def test_table_values(self, label):
        assert map_label_to_limit(label, LIMITS) == TABLE[label]

    def test_named_rows(self):
        assert map_label_to_limit(BodyPart.LEFT_UPPER_LEG, LIMITS) == 200
        assert map_label_to_limit(BodyPart.RIGHT_LOWER_LEG, LIMITS) == 50
        assert map_label_to_limit(BodyPart.BODY, LIMITS) == 100

    def test_global_min_and_full_speed(self):
        assert LIMITS.global_min == 50 and LIMITS.full_speed_mm_s == 1600

    def test_unknown_label(self):
        with pytest.raises(ConfigurationError):
            map_label_to_limit("tail", LIMITS)

    def test_missing_label(self):
        with pytest.raises(ConfigurationError, match="r_lower_leg"):
            VelocityLimitTable({p: 50 for p in BODY_PARTS[:-1]})

    def test_out_of_range(self):
        with pytest.raises(ConfigurationError):
            VelocityLimitTable({p: 1700 for p in BODY_PARTS})


class TestEvaluate:
    @pytest.mark.parametrize("label", BODY_PARTS)
    def test_single_violation_commands_part_limit(self, label):
        pts = parts({p: (100 if p is label else 5000) for p in BODY_PARTS})
        d, _ = evaluate(pts, HULL, BUDGET, LIMITS, RegulatorState())
        assert d.reason is Reason.VIOLATION
        assert d.commanded_velocity_mm_s == TABLE[label]
        assert d.limiting_part is label

    def test_head_only(self):
        d, _ = evaluate(parts({BodyPart.HEAD: 1000}), HULL, BUDGET, LIMITS, RegulatorState())
        assert d.commanded_velocity_mm_s == 50

    def test_thigh_and_lower_arm(self):
        pts = parts({BodyPart.LEFT_UPPER_LEG: 200, BodyPart.RIGHT_LOWER_ARM: 900, BodyPart.HEAD: 4000})
        d, _ = evaluate(pts, HULL, BUDGET, LIMITS, RegulatorState())
        assert d.commanded_velocity_mm_s == 100
        assert {lbl for lbl, _ in d.violating} == {BodyPart.LEFT_UPPER_LEG, BodyPart.RIGHT_LOWER_ARM}

    def test_all_clear(self):
        d, _ = evaluate(parts({p: 1400 for p in BODY_PARTS}), HULL, BUDGET, LIMITS, RegulatorState())
        assert d.reason is Reason.CLEAR and d.commanded_velocity_mm_s == 1600
        assert d.nearest_distance_mm == pytest.approx(1400)

    def test_boundary_is_not_a_violation(self):
        budget = SeparationBudget(1300.0, 4.0, 0.0, (0, 0, 0), (0, 0, 0))  # threshold exactly 1304
        d, _ = evaluate(parts({BodyPart.HEAD: 1304}), HULL, budget, LIMITS, RegulatorState())
        assert d.reason is Reason.CLEAR

    def test_class_a_violation_is_global_min(self):
        pts = BodyPointSet(0.0, whole_body=at_distance(500))
        d, _ = evaluate(pts, HULL, BUDGET, LIMITS, RegulatorState())
        assert d.commanded_velocity_mm_s == 50 and d.limiting_part is None

    def test_failed_detection_is_global_min(self):
        d, s = evaluate(BodyPointSet.failure(0.0), HULL, BUDGET, LIMITS, RegulatorState())
        assert d.reason is Reason.FAILED_DETECTION and d.commanded_velocity_mm_s == 50
        assert s.consecutive_failures == 1

    def test_nobody_is_full_speed(self):
        d, _ = evaluate(BodyPointSet.nobody(0.0), HULL, BUDGET, LIMITS, RegulatorState())
        assert d.reason is Reason.NO_HUMAN and d.commanded_velocity_mm_s == 1600

    def test_invalid_entries_ignored(self):
        pts = BodyPointSet(0.0, parts={BodyPart.HEAD: at_distance(10), BodyPart.BODY: at_distance(3000)},
                           valid={BodyPart.HEAD: False, BodyPart.BODY: True})
        d, _ = evaluate(pts, HULL, BUDGET, LIMITS, RegulatorState())
        assert d.reason is Reason.CLEAR

    def test_failures_before_fallback(self):
        s = RegulatorState(failures_before_fallback=3)
        d, s = evaluate(parts({BodyPart.HEAD: 3000}), HULL, BUDGET, LIMITS, s)
        for _ in range(2):
            d, s = evaluate(BodyPointSet.failure(0.0), HULL, BUDGET, LIMITS, s)
            assert d.commanded_velocity_mm_s == 1600
        d, s = evaluate(BodyPointSet.failure(0.0), HULL, BUDGET, LIMITS, s)
        assert d.commanded_velocity_mm_s == 50

    def test_hysteresis(self):
        s = RegulatorState(hysteresis_margin_mm=100, clear_frames_required=2)
        d, s = evaluate(parts({BodyPart.HEAD: 1000}), HULL, BUDGET, LIMITS, s)
        assert d.commanded_velocity_mm_s == 50
        d, s = evaluate(parts({BodyPart.HEAD: 1350}), HULL, BUDGET, LIMITS, s)  # inside the margin
        assert d.commanded_velocity_mm_s == 50
        d, s = evaluate(parts({BodyPart.HEAD: 1500}), HULL, BUDGET, LIMITS, s)
        assert d.commanded_velocity_mm_s == 50 and s.consecutive_clear == 1
        d, s = evaluate(parts({BodyPart.HEAD: 1500}), HULL, BUDGET, LIMITS, s)
        assert d.commanded_velocity_mm_s == 1600

    def test_default_state_reaccelerates_immediately(self):
        d, s = evaluate(parts({BodyPart.HEAD: 1000}), HULL, BUDGET, LIMITS, RegulatorState())
        d, s = evaluate(parts({BodyPart.HEAD: 1305}), HULL, BUDGET, LIMITS, s)
        assert d.commanded_velocity_mm_s == 1600

    def test_state_validation(self):
        with pytest.raises(ValueError):
            RegulatorState(consecutive_failures=-1)
        with pytest.raises(ValueError):
            RegulatorState(clear_frames_required=0)


dist = st.floats(0, 4000)
part_dists = st.dictionaries(st.sampled_from(BODY_PARTS), dist, min_size=1)


class TestRegulatorProperties:
    @given(part_dists)
    def test_safety_dominance(self, dists):
        d, _ = evaluate(parts(dists), HULL, BUDGET, LIMITS, RegulatorState())
        assert d.commanded_velocity_mm_s <= 1600
        viol = [p for p, x in dists.items() if point_hull_distance(at_distance(x), HULL) < BUDGET.scalar_threshold_mm]
        if viol:
            assert d.commanded_velocity_mm_s == min(TABLE[p] for p in viol)

    @given(dist)
    def test_class_a_dominance(self, x):
        d, _ = evaluate(BodyPointSet(0.0, whole_body=at_distance(x)), HULL, BUDGET, LIMITS, RegulatorState())
        if point_hull_distance(at_distance(x), HULL) < BUDGET.scalar_threshold_mm:
            assert d.commanded_velocity_mm_s == LIMITS.global_min
        else:
            assert d.commanded_velocity_mm_s == 1600

    @given(part_dists, st.sampled_from(BODY_PARTS), st.floats(0, 1304))
    def test_monotone_conservatism(self, dists, extra, x):
        before, _ = evaluate(parts(dists), HULL, BUDGET, LIMITS, RegulatorState())
        after, _ = evaluate(parts({**dists, extra: min(x, dists.get(extra, math.inf))}), HULL, BUDGET, LIMITS,
                            RegulatorState())
        assert after.commanded_velocity_mm_s <= before.commanded_velocity_mm_s

    @given(st.integers(1, 5), st.integers(0, 4))
    def test_failed_never_above_global_min_once_fallen_back(self, n, k):
        s = RegulatorState(failures_before_fallback=n, consecutive_failures=max(n - 1, 0) + k)
        d, _ = evaluate(BodyPointSet.failure(0.0), HULL, BUDGET, LIMITS, s)
        assert d.commanded_velocity_mm_s <= LIMITS.global_min

    @given(part_dists)
    def test_deterministic(self, dists):
        a = evaluate(parts(dists), HULL, BUDGET, LIMITS, RegulatorState())
        b = evaluate(parts(dists), HULL, BUDGET, LIMITS, RegulatorState())
        assert a == b

    @given(part_dists, st.floats(0.01, 5))
    def test_scale_invariance(self, dists, k):
        a, _ = evaluate(parts(dists), HULL, BUDGET, LIMITS, RegulatorState())
        b, _ = evaluate(parts(dists), HULL, BUDGET, LIMITS.scaled(k), RegulatorState())
        assert b.commanded_velocity_mm_s == pytest.approx(k * a.commanded_velocity_mm_s)
        assert b.limiting_part == a.limiting_part
