"""Episode metrics: progress, speed, energy, recovery and deadlock checks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .control import G

BODY_LENGTH = 0.107  # m, CoM-forward length used for body lengths per second


@dataclass(frozen=True)
class EpisodeSummary:
    duration: float
    revolutions: float
    distance: float
    speed: float
    energy: float
    energy_per_m: float
    cost_of_transport: float
    recoveries: int
    impacts: int
    truncated: str | None

    def as_dict(self) -> dict:
        return asdict(self)


def summarize(trace, mass: float) -> EpisodeSummary:
    a = trace.array()
    if len(a) < 2:
        return EpisodeSummary(0.0, 0.0, 0.0, 0.0, trace.energy, math.nan, math.nan, 0, 0, trace.truncated)
    T = float(a[-1, 0] - a[0, 0])
    revs = float(a[0, 1] - a[-1, 1]) / (2 * math.pi)
    dist = float(a[-1, 3] - a[0, 3])
    n_rec = sum(1 for _, e in trace.events if e == "RECOVERY")
    n_imp = sum(1 for _, e in trace.events if e == "IMPACT")
    jpm = trace.energy / dist if dist > 0 else math.inf
    cot = trace.energy / (mass * G * dist) if dist > 0 else math.inf
    return EpisodeSummary(T, revs, dist, dist / T, trace.energy, jpm, cot, n_rec, n_imp, trace.truncated)


def recovery_times(trace) -> list[float]:
    return [t for t, e in trace.events if e == "RECOVERY"]


def forward_monotone_between_recoveries(trace, tol: float = 0.01) -> bool:
    """CoM forward position never drops by more than ``tol`` (m) below its running maximum
    except within a recovery episode (from a recovery entry until the next State 1 entry)."""
    a = trace.array()
    t, y = a[:, 0], a[:, 3]
    excused = np.zeros(t.size, dtype=bool)
    enter = None
    for te, e in trace.events:
        if e == "RECOVERY":
            enter = te if enter is None else enter
        elif enter is not None and e.startswith("STATE R") and "->1 " in e + " ":
            excused |= (t >= enter) & (t <= te + 1.0)
            enter = None
    if enter is not None:
        excused |= t >= enter
    peak = -math.inf
    for i in range(t.size):
        if excused[i]:
            peak = max(peak, y[i])
            continue
        peak = max(peak, y[i])
        if y[i] < peak - tol:
            return False
    return True


def deadlocked(trace, window: float = 3.0, tol: float = math.radians(0.5)) -> bool:
    """True if, while rolling, the body angle stays within ``tol`` for longer than ``window``."""
    a = trace.array()
    if len(a) < 2:
        return False
    t, th = a[:, 0], a[:, 1]
    rolling = np.array([m == "rolling" for m in trace.mode])
    i = 0
    for j in range(t.size):
        if not rolling[j]:
            i = j + 1
            continue
        while i < j and (np.ptp(th[i:j + 1]) > tol):
            i += 1
        if t[j] - t[i] > window:
            return True
    return False


def resumed_after_recovery(trace, min_revs: float = 1.0) -> bool:
    """A recovery state was entered and the body then rolled on by ``min_revs`` revolutions."""
    times = recovery_times(trace)
    if not times:
        return False
    a = trace.array()
    t, th = a[:, 0], a[:, 1]
    for tr in times:
        k = int(np.searchsorted(t, tr))
        if k < t.size and (th[k] - th[k:].min()) / (2 * math.pi) >= min_revs:
            return True
    return False


def step_back(trace, t0: float, t1: float) -> float:
    """Largest backward CoM excursion (m) inside ``[t0, t1]`` relative to the running maximum."""
    a = trace.array()
    sel = (a[:, 0] >= t0) & (a[:, 0] <= t1)
    y = a[sel, 3]
    if y.size == 0:
        return 0.0
    return float(np.max(np.maximum.accumulate(y) - y))


def velocity(trace, smooth: float = 0.2) -> np.ndarray:
    """CoM forward velocity smoothed over ``smooth`` seconds."""
    a = trace.array()
    t, y = a[:, 0], a[:, 3]
    if t.size < 3:
        return np.zeros_like(t)
    k = max(1, int(round(smooth / (t[1] - t[0]))))
    v = np.empty_like(y)
    for i in range(y.size):
        lo, hi = max(0, i - k // 2), min(y.size - 1, i + k // 2)
        v[i] = (y[hi] - y[lo]) / max(t[hi] - t[lo], 1e-12)
    return v


def benchmark_row(summary: EpisodeSummary, mass: float, length: float = BODY_LENGTH,
                  dof: int = 2, mode: str = "rolling") -> dict:
    power = summary.energy / summary.duration if summary.duration > 0 else math.nan
    return {
        "mode": mode,
        "mass[kg]": mass,
        "length[m]": length,
        "dof": dof,
        "speed[m/s]": summary.speed,
        "BL/s": summary.speed / length,
        "power[W]": power,
        "CoT": summary.cost_of_transport,
    }
