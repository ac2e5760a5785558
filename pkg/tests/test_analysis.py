import math

import numpy as np
import pytest

from walkroll.analysis import (
    benchmark_row, deadlocked, forward_monotone_between_recoveries, resumed_after_recovery,
    step_back, summarize, velocity,
)
from walkroll.sim import TRACE_COLUMNS, SimTrace


def synthetic(t, theta, y, mode="rolling", events=()):
    tr = SimTrace(dt=float(t[1] - t[0]))
    for ti, th, yi in zip(t, theta, y):
        row = [0.0] * len(TRACE_COLUMNS)
        row[0], row[1], row[3] = ti, th, yi
        tr.append(tuple(row), "1", mode)
    tr.events = list(events)
    tr.energy = 10.0
    return tr


def test_summary_of_steady_roll():
    t = np.linspace(0, 10, 1001)
    tr = synthetic(t, -2 * math.pi * 0.5 * t, 0.1 * t)
    s = summarize(tr, 0.373)
    assert s.revolutions == pytest.approx(5.0)
    assert s.speed == pytest.approx(0.1)
    assert s.cost_of_transport == pytest.approx(10.0 / (0.373 * 9.81 * 1.0))
    row = benchmark_row(s, 0.373)
    assert row["power[W]"] == pytest.approx(1.0)
    assert row["BL/s"] == pytest.approx(0.1 / 0.107)


def test_deadlock_detection():
    t = np.linspace(0, 5, 501)
    assert deadlocked(synthetic(t, np.zeros_like(t), np.zeros_like(t)))
    assert not deadlocked(synthetic(t, -t, 0.05 * t))
    assert not deadlocked(synthetic(t, np.zeros_like(t), np.zeros_like(t), mode="walking"))


def test_resumed_and_monotone():
    t = np.linspace(0, 6, 601)
    theta = np.where(t < 2, -t, np.where(t < 3, -2 + (t - 2), -1 - 3 * (t - 3)))
    y = -0.03 * theta
    ev = [(2.0, "STATE 1->R1 reason=rollback"), (2.0, "RECOVERY"), (3.0, "STATE R1->1 reason=angle")]
    tr = synthetic(t, theta, y, events=ev)
    assert resumed_after_recovery(tr)
    assert forward_monotone_between_recoveries(tr)
    assert not forward_monotone_between_recoveries(synthetic(t, theta, y))
    assert step_back(tr, 2.0, 3.0) == pytest.approx(0.03, abs=1e-3)


def test_velocity_of_linear_motion():
    t = np.linspace(0, 2, 201)
    v = velocity(synthetic(t, -t, 0.2 * t))
    assert np.allclose(v, 0.2)
