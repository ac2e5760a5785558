import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_designs
from walkroll.geometry import rot
from walkroll.statics import (
    SENSOR_BIN, MomentField, ThresholdSet, boundary_candidates, build_moment_field,
    command_quality, deadband_variation, default_thresholds, eval_J1, eval_J2, moment_arm,
    optimal_trajectory, score_design, select_thresholds,
)

DESIGNS = random_designs()
STROKE = math.radians(55.0)


def synthetic_field(arm, dphi=None):
    """Shared-schedule field built straight from an (N_theta, N_dphi) arm table."""
    arm = np.asarray(arm, dtype=float)
    theta = np.linspace(-math.pi, math.pi, arm.shape[0])
    dphi = np.linspace(0.0, STROKE, arm.shape[1]) if dphi is None else dphi
    j = np.argmin(arm, axis=1)
    rows = np.arange(arm.shape[0])
    return MomentField(theta, dphi, arm, np.full_like(arm, np.nan), dphi[j], arm[rows, j])


def single_leg_dense(design, side, theta, dphi):
    """Lowest point of one leg on a 10x denser contour, world axes about the body centre."""
    leg = design.leg(side)
    n = (leg.phi.size - 1) * 10 + 1
    phi = np.union1d(np.linspace(leg.phi[0], leg.phi[-1], n), leg.phi)
    r = np.interp(phi, leg.phi, leg.r)
    sign = 1.0 if side == "front" else -1.0
    pts = design.body.joint(side) + np.column_stack((sign * r * np.cos(phi + dphi), r * np.sin(phi + dphi)))
    world = pts @ rot(theta).T
    k = int(np.argmin(world[:, 1]))
    return world[k]


@settings(max_examples=40, deadline=None)
@given(k=st.integers(0, len(DESIGNS) - 1), theta=st.floats(-math.pi, math.pi),
       u=st.floats(0, 1), side=st.sampled_from(["front", "rear"]))
def test_moment_arm_matches_geometric_construction(k, theta, u, side):
    d = DESIGNS[k]
    lo, hi = d.dphi_range
    a = lo + u * (hi - lo)
    P = single_leg_dense(d, side, theta, a)
    G = rot(theta) @ d.body.com
    assert moment_arm(d, theta, a, side) == pytest.approx(P[0] - G[0], abs=1e-4)


def test_wheel_centred_on_com_has_zero_arm(wheel):
    f = build_moment_field(wheel, 128, 16)
    # closed legs form the wheel; whichever leg touches sits under the centre
    assert np.abs(f.arm[:, 0]).max() < 1e-3


def test_reference_upright_closed_rolls_forward(ref):
    assert moment_arm(ref, 0.0, ref.dphi_range[0], "front") < 0


def test_field_rejects_coarse_grid(ref):
    with pytest.raises(ValueError):
        build_moment_field(ref, 32, 28)


def test_zero_field_scores_zero():
    f = synthetic_field(np.zeros((65, 16)))
    assert eval_J1(f) == 0.0
    assert eval_J2(f) == 0.0


def test_constant_field_J1_closed_form():
    c = 0.012
    f = synthetic_field(np.full((129, 16), -c))
    assert eval_J1(f) == pytest.approx(-2 * math.pi * c, rel=1e-12)


def test_linear_ramp_J2_is_stroke():
    n, m = 257, 56
    dphi = np.linspace(0.0, STROKE, m)
    target = np.linspace(0, m - 1, n).round().astype(int)
    arm = np.abs(np.arange(m)[None, :] - target[:, None]).astype(float)
    f = synthetic_field(arm, dphi)
    assert eval_J2(f) == pytest.approx(STROKE, rel=1e-12)


@pytest.mark.parametrize("y,band,expected", [
    ([0, 1, 0, 1, 0, 1], 1.5, 1.0),
    ([0, 1, 2, 3, 4], 1.5, 4.0),
    ([0, 4, 0], 1.5, 8.0),
    ([2, 2, 2], 0.1, 0.0),
])
def test_deadband_variation(y, band, expected):
    assert deadband_variation(np.array(y, float), band) == pytest.approx(expected)


@pytest.mark.parametrize("k", range(len(DESIGNS)))
def test_argmin_dominates_every_column(k):
    f = build_moment_field(DESIGNS[k], 128, 16)
    assert np.all(f.argmin_arm[:, None] <= np.nan_to_num(f.arm, nan=np.inf) + 1e-15)


def test_grid_doubling_changes_scores_under_one_percent(ref):
    a = score_design(ref, 720, 56)
    b = score_design(ref, 1440, 112)
    assert abs(b.J1 - a.J1) < 0.01 * abs(a.J1)
    assert abs(b.J2 - a.J2) < 0.01 * a.J2


@settings(max_examples=8, deadline=None)
@given(k=st.integers(0, len(DESIGNS) - 1), s=st.floats(0.5, 2.0))
def test_score_scale_covariance(k, s):
    d = DESIGNS[k]
    a = score_design(d, 128, 16)
    b = score_design(d.scaled(s), 128, 16)
    assert b.J1 == pytest.approx(s * a.J1, rel=1e-9)
    assert b.J2 == pytest.approx(a.J2, abs=1e-12)


def test_reference_design_scores(ref):
    s = score_design(ref)
    assert s.J1 < 0
    # both legs open and close at least once
    assert s.J2 >= 2 * 2 * STROKE - 1e-9


def test_reference_max_slope_near_ramp_rate(ref):
    t = optimal_trajectory(build_moment_field(ref))
    assert t.max_slope == pytest.approx(55 / 60, rel=0.2)


def test_trajectory_achieves_argmin(ref):
    f = build_moment_field(ref, 256, 28)
    t = optimal_trajectory(f)
    assert np.array_equal(t.arm, f.argmin_arm)


def test_independent_schedules_never_worse(ref):
    shared = score_design(ref, 128, 16)
    split = score_design(ref, 128, 16, shared=False)
    assert split.J1 <= shared.J1 + 1e-12


@pytest.mark.parametrize("args", [
    (0.5, 0.4, 3.0, 0.0, 0.1, 0.2),      # unordered
    (0.1, 0.3, 3.0, 0.0, 0.1, 0.2),      # State 2 narrower than pi/6
    (0.5, 1.5, 3.0, 0.2, 0.1, 0.3),      # targets unordered
])
def test_threshold_set_validation(args):
    with pytest.raises(ValueError):
        ThresholdSet(*args)


def test_threshold_regions():
    t = default_thresholds((0.0, 1.0))
    assert [t.region(p) for p in (0.1, t.p12, t.p23 + 0.01, t.p31, 2 * math.pi - 0.01)] == [1, 2, 3, 1, 1]
    assert sum(t.widths()) == pytest.approx(2 * math.pi)
    assert t.targets(2) == (t.mid, t.closed)


def test_zero_field_gives_default_thresholds(wheel):
    f = synthetic_field(np.zeros((65, 16)))
    assert select_thresholds(f) == default_thresholds(f.dphi_range)


def test_ramp_thresholds_sit_at_terciles():
    n, m = 721, 16
    theta = np.linspace(-math.pi, math.pi, n)
    p = np.mod(-theta, 2 * math.pi)
    # best leg column rises linearly with progress; the arm is negative only there
    best = np.floor(p / (2 * math.pi) * 3).clip(0, 2)
    cols = np.where(best == 0, 0, np.where(best == 1, m // 2, m - 1))
    arm = np.ones((n, m))
    arm[np.arange(n), cols] = -1.0
    f = synthetic_field(arm)
    t = select_thresholds(f)
    widths = t.widths()
    assert min(widths) >= SENSOR_BIN - 1e-9
    assert t.p12 == pytest.approx(2 * math.pi / 3, abs=SENSOR_BIN)
    assert t.p23 == pytest.approx(4 * math.pi / 3, abs=SENSOR_BIN)


def test_selected_thresholds_beat_every_coarse_partition(ref):
    f = build_moment_field(ref, 360, 28)
    t = select_thresholds(f)
    j = int(np.argmin(np.abs(f.dphi_grid - t.mid)))
    best, _ = command_quality(f, t.p12, t.p23, t.p31, j)
    c = boundary_candidates(math.pi / 3)
    for a in c:
        for b in c[c > a + SENSOR_BIN]:
            for e in c[(c > b + SENSOR_BIN) & (c < a + 2 * math.pi - SENSOR_BIN)]:
                for jm in range(1, f.dphi_grid.size - 1, 4):
                    assert command_quality(f, a, b, e, jm)[0] <= best + 1e-12


def test_reference_state_two_starts_near_quarter_turn(ref):
    t = select_thresholds(build_moment_field(ref, 360, 28))
    assert abs(t.p12 - math.pi / 2) <= max(t.widths())
    assert min(t.widths()) >= SENSOR_BIN - 1e-9
