import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import dense_lowest, random_designs
from walkroll.geometry import (
    TAU_CONTACT, TAU_JOIN, BodyParams, GeometryError, InfeasibleProfileError, LegProfile,
    RobotDesign, arc_profile, circle_profile, find_contact, generate_leg, gradient_is_monotone,
    junction_gap, leg_contact, mirror_leg, profile_from_keypoints, sample_radius, wrap_angle,
)

DESIGNS = random_designs()


@pytest.mark.parametrize("kw", [
    dict(width=0.0),
    dict(height=-0.01),
    dict(com_offset=(0.031, 0.0)),
    dict(com_offset=(0.0, -0.03)),
    dict(joint_offset=(0.05, 0.0)),
    dict(mass=0.0),
])
def test_body_rejects_invalid(kw):
    with pytest.raises(GeometryError):
        BodyParams(**kw)


def test_body_default_inertia_is_block():
    b = BodyParams()
    assert b.inertia == pytest.approx(0.373 * (0.06**2 + 0.06**2) / 12)


@pytest.mark.parametrize("phi,r", [
    ([0.0, 0.0, 1.0], [1.0, 1.0, 1.0]),
    ([0.0, 1.0], [1.0, 0.0]),
    ([0.0], [1.0]),
])
def test_profile_rejects_invalid(phi, r):
    with pytest.raises(GeometryError):
        LegProfile(phi=np.array(phi), r=np.array(r), dphi_range=(0.0, 1.0))


def test_profile_arrays_are_read_only():
    p = arc_profile(0.05, 0.0, 1.0, (0.0, 0.5))
    with pytest.raises(ValueError):
        p.r[0] = 1.0


def test_sample_radius_midpoint_is_mean_of_neighbours():
    phi = np.linspace(0.0, 1.0, 11)
    p = LegProfile(phi=phi, r=0.05 + 0.02 * phi**2, dphi_range=(0.0, 0.5))
    mid = 0.5 * (phi[3] + phi[4])
    assert sample_radius(p, mid) == pytest.approx(0.5 * (p.r[3] + p.r[4]), rel=1e-12)
    with pytest.raises(GeometryError):
        sample_radius(p, 1.5)


def test_wrap_angle_range():
    a = wrap_angle(np.array([-math.pi, math.pi, 3 * math.pi, 0.1]))
    assert np.allclose(a, [math.pi, math.pi, math.pi, 0.1])


def test_mirror_leg_is_involution():
    leg = DESIGNS[0].front_leg
    assert mirror_leg(mirror_leg(leg)) == leg
    assert mirror_leg(leg).side == "rear"


def test_swapped_sides_rejected():
    d = DESIGNS[0]
    with pytest.raises(GeometryError):
        RobotDesign(d.body, d.rear_leg, d.front_leg)


@pytest.mark.parametrize("theta", np.linspace(-math.pi, math.pi, 13))
def test_wheel_contact_is_radius_below_centre(wheel, theta):
    c = find_contact(wheel, theta, 0.0, 0.0)
    assert c.Z == pytest.approx(-0.05, abs=1e-5)
    assert abs(c.Y) < 2e-3


def test_circle_requires_enclosing_radius():
    with pytest.raises(GeometryError):
        circle_profile(BodyParams(), 0.02, (0.0, 1.0))


def test_out_of_range_leg_angle_rejected(ref):
    with pytest.raises(GeometryError):
        find_contact(ref, 0.0, ref.dphi_range[1] + 0.1, 0.0)


def test_contact_tie_prefers_forward_point(wheel):
    # upright wheel with a flat-bottomed leg pair: both legs reach the same depth
    body = wheel.body
    leg = arc_profile(0.05, -math.pi / 2 - 0.3, -math.pi / 2 + 0.3, (0.0, 0.5))
    d = RobotDesign(body, leg, mirror_leg(leg))
    c = find_contact(d, 0.0, 0.0, 0.0)
    f = leg_contact(d, "front", 0.0, 0.0)
    r = leg_contact(d, "rear", 0.0, 0.0)
    assert abs(f.Z - r.Z) <= TAU_CONTACT
    assert c.Y == max(f.Y, r.Y)


@settings(max_examples=60, deadline=None)
@given(k=st.integers(0, len(DESIGNS) - 1), theta=st.floats(-math.pi, math.pi),
       uf=st.floats(0, 1), ur=st.floats(0, 1))
def test_contact_matches_dense_sampling(k, theta, uf, ur):
    d = DESIGNS[k]
    lo, hi = d.dphi_range
    df, dr = lo + uf * (hi - lo), lo + ur * (hi - lo)
    c = find_contact(d, theta, df, dr)
    z_dense, _ = dense_lowest(d, theta, df, dr)
    assert abs(c.Z - z_dense) <= TAU_CONTACT
    # no stored sample lies below the returned contact
    for side, a in (("front", df), ("rear", dr)):
        pts = d.leg_points(side, a)
        z = math.sin(theta) * pts[:, 0] + math.cos(theta) * pts[:, 1]
        assert z.min() >= c.Z - TAU_CONTACT


@settings(max_examples=40, deadline=None)
@given(k=st.integers(0, len(DESIGNS) - 1), theta=st.floats(-math.pi, math.pi),
       uf=st.floats(0, 1), ur=st.floats(0, 1))
def test_contact_mirror_symmetry(k, theta, uf, ur):
    d = DESIGNS[k]
    lo, hi = d.dphi_range
    df, dr = lo + uf * (hi - lo), lo + ur * (hi - lo)
    yg, zg = d.body.com_offset
    m = RobotDesign.symmetric(BodyParams(com_offset=(-yg, zg), joint_offset=d.body.joint_offset),
                              d.front_leg)
    a = find_contact(d, theta, df, dr)
    b = find_contact(m, -theta, dr, df)
    assert b.Z == pytest.approx(a.Z, abs=1e-12)
    f, r = leg_contact(d, "front", theta, df), leg_contact(d, "rear", theta, dr)
    if abs(f.Z - r.Z) > TAU_CONTACT:  # the forward tie-break is not mirror symmetric
        assert b.Y == pytest.approx(-a.Y, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(k=st.integers(0, len(DESIGNS) - 1), theta=st.floats(-math.pi, math.pi),
       s=st.floats(0.25, 4.0))
def test_contact_scale_covariance(k, theta, s):
    d = DESIGNS[k]
    df = dr = d.dphi_range[0]
    a = find_contact(d, theta, df, dr)
    b = find_contact(d.scaled(s), theta, df, dr)
    assert b.Z == pytest.approx(s * a.Z, rel=1e-9, abs=1e-15)
    assert b.Y == pytest.approx(s * a.Y, rel=1e-9, abs=1e-12)


def test_generate_leg_is_deterministic():
    b = BodyParams()
    assert generate_leg(7, b) == generate_leg(7, b)


@pytest.mark.parametrize("seed", range(6))
def test_generated_leg_invariants(seed):
    b = BodyParams()
    leg = generate_leg(seed, b)
    d = RobotDesign.symmetric(b, leg)
    assert gradient_is_monotone(leg)
    assert np.all(leg.r > 0)
    assert junction_gap(d) < TAU_JOIN
    assert leg.dphi_range[1] - leg.dphi_range[0] == pytest.approx(math.radians(55))
    # the open leg, the pose it was drawn in, stays clear of the body
    p = d.leg_points("front", leg.dphi_range[1])
    inside = (np.abs(p[:, 0]) < b.width / 2 - 1e-9) & (np.abs(p[:, 1]) < b.height / 2 - 1e-9)
    assert not inside.any()


def test_generate_leg_gives_up():
    with pytest.raises(InfeasibleProfileError):
        generate_leg(0, BodyParams(), margin=1e-6, max_attempts=5)


def test_profile_from_keypoints_roundtrip():
    b = BodyParams(joint_offset=(0.03, 0.03))
    kp = [(0.03, 0.12), (0.06, 0.09), (0.075, 0.04), (0.05, -0.03), (0.01, -0.05)]
    leg = profile_from_keypoints(b, kp)
    d = RobotDesign.symmetric(b, leg)
    assert junction_gap(d) < 1e-9
    assert leg.r[-1] == pytest.approx(0.09)
    with pytest.raises(GeometryError):
        profile_from_keypoints(b, [(0.02, 0.12)] + kp[1:])
