"""Trace records, the CSV sink, and cycle-time statistics."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from hrsf.errors import IncompleteCycleError
from hrsf.perception import BodyPart

HOME_TOLERANCE_MM = 1e-6


@dataclass(frozen=True, slots=True)
class TraceRecord:
    t_s: float
    q_rad: tuple[float, ...]
    tcp_mm: tuple[float, float, float]
    cmd_v_mm_s: float
    act_v_mm_s: float
    sep_mm: float
    limiting_part: BodyPart | None
    phase: str | None


def csv_header(n_joints: int) -> str:
    qs = ",".join(f"q{i + 1}_rad" for i in range(n_joints))
    return f"t_s,{qs},tcp_x_mm,tcp_y_mm,tcp_z_mm,cmd_v_mm_s,act_v_mm_s,sep_mm,limiting_part,phase"


def _f(v: float, nd: int) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    s = f"{v:.{nd}f}"
    return "0." + "0" * nd if s == "-0." + "0" * nd else s


def format_record(r: TraceRecord) -> str:
    parts = [_f(r.t_s, 3)]
    parts += [_f(q, 6) for q in r.q_rad]
    parts += [_f(c, 3) for c in r.tcp_mm]
    parts += [_f(r.cmd_v_mm_s, 3), _f(r.act_v_mm_s, 3), _f(r.sep_mm, 3)]
    parts.append(r.limiting_part.value if r.limiting_part is not None else "none")
    parts.append(r.phase or "none")
    return ",".join(parts)


def write_trace_csv(records: Sequence[TraceRecord], fh) -> None:
    """Write the fixed-column trace; ``\\n`` line endings, ``.`` decimal point."""
    if not records:
        raise ValueError("empty trace")
    fh.write(csv_header(len(records[0].q_rad)) + "\n")
    for r in records:
        fh.write(format_record(r) + "\n")


def trace_csv_text(records: Sequence[TraceRecord]) -> str:
    buf = io.StringIO(newline="")
    write_trace_csv(records, buf)
    return buf.getvalue()


def read_trace_csv(fh) -> list[TraceRecord]:
    lines = [ln for ln in fh.read().split("\n") if ln]
    header = lines[0].split(",")
    n = sum(1 for h in header if h.startswith("q") and h.endswith("_rad"))
    out = []
    for ln in lines[1:]:
        c = ln.split(",")
        out.append(TraceRecord(
            t_s=float(c[0]),
            q_rad=tuple(float(v) for v in c[1:1 + n]),
            tcp_mm=tuple(float(v) for v in c[1 + n:4 + n]),
            cmd_v_mm_s=float(c[4 + n]),
            act_v_mm_s=float(c[5 + n]),
            sep_mm=float(c[6 + n]),
            limiting_part=None if c[7 + n] == "none" else BodyPart(c[7 + n]),
            phase=None if c[8 + n] == "none" else c[8 + n],
        ))
    return out


def cycle_bounds(times: Sequence[float], positions, tol_mm: float = HOME_TOLERANCE_MM) -> tuple[float, float]:
    """(departure, return) times: last sample at home before the first move, and start of the final stay at home."""
    p = np.asarray(positions, float)
    if len(p) == 0:
        raise IncompleteCycleError("empty trace")
    away = np.linalg.norm(p - p[0], axis=1) > tol_mm
    if not away.any():
        raise IncompleteCycleError("the robot never left its initial position")
    first_away = int(np.argmax(away))
    last_away = len(away) - 1 - int(np.argmax(away[::-1]))
    if last_away == len(away) - 1:
        raise IncompleteCycleError("the robot never returned to its initial position")
    return float(times[first_away - 1]), float(times[last_away + 1])


def measure_cycle_time(trace: Sequence[TraceRecord], tol_mm: float = HOME_TOLERANCE_MM) -> float:
    """Time from leaving the initial TCP position until the final return to it (s)."""
    if not trace:
        raise IncompleteCycleError("empty trace")
    t0, t1 = cycle_bounds([r.t_s for r in trace], [r.tcp_mm for r in trace], tol_mm)
    return t1 - t0


@dataclass(frozen=True)
class TraceSummary:
    method: str
    cycle_times_s: tuple[float, ...]
    phase_shares: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.cycle_times_s or any(t <= 0 for t in self.cycle_times_s):
            raise ValueError("cycle times must be positive")

    @property
    def mean_s(self) -> float:
        return float(np.mean(self.cycle_times_s))

    @property
    def std_s(self) -> float:
        """Sample standard deviation; zero for a single run."""
        if len(self.cycle_times_s) < 2:
            return 0.0
        return float(np.std(self.cycle_times_s, ddof=1))

    @property
    def t_cycle_s(self) -> float:
        return self.mean_s

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "t_cycle_mean_s": round(self.mean_s, 4),
            "t_cycle_std_s": round(self.std_s, 4),
            "runs": len(self.cycle_times_s),
            "cycle_times_s": [round(t, 4) for t in self.cycle_times_s],
            "phase_shares": {k: round(v, 4) for k, v in sorted(self.phase_shares.items())},
        }


def merge_summaries(method: str, summaries: Iterable[TraceSummary]) -> TraceSummary:
    summaries = list(summaries)
    times = tuple(t for s in summaries for t in s.cycle_times_s)
    keys = sorted({k for s in summaries for k in s.phase_shares})
    shares = {k: float(np.mean([s.phase_shares.get(k, 0.0) for s in summaries])) for k in keys}
    return TraceSummary(method, times, shares)
