"""Body and leg geometry for the two-leg walking/rolling robot.

Frames: the body frame has its origin at the geometric centre of the body,
``y`` forward and ``z`` up.  World axes ``(Y, Z)`` are aligned with the body
axes when ``theta_G = 0``; positive angles are counter-clockwise, so forward
rolling drives ``theta_G`` negative.

A leg is stored in polar form about its joint: the sample ``(phi_i, r_i)`` of
the front leg sits at ``joint + r_i * (cos(phi_i + dphi), sin(phi_i + dphi))``
in the body frame.  The rear leg keeps the same ``(phi, r)`` samples and is
reflected about the body's vertical axis, so a positive ``dphi`` opens either
leg.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

N_PHI = 256
MAX_ATTEMPTS = 10_000
LEG_STROKE = math.radians(55.0)
TAU_CONTACT = 1e-6
TAU_JOIN = 1e-6
REFINE_SUBSTEPS = 32


class GeometryError(ValueError):
    pass


class InfeasibleProfileError(GeometryError):
    """Raised when rejection sampling runs out of attempts."""


@dataclass(frozen=True)
class BodyParams:
    width: float = 0.060
    height: float = 0.060
    com_offset: tuple[float, float] = (0.0, 0.0)
    joint_offset: tuple[float, float] = (0.030, 0.030)
    mass: float = 0.373
    inertia: float | None = None

    def __post_init__(self):
        if self.inertia is None:
            # uniform block of the body envelope
            object.__setattr__(
                self, "inertia", self.mass * (self.width**2 + self.height**2) / 12.0
            )
        object.__setattr__(self, "com_offset", tuple(float(v) for v in self.com_offset))
        object.__setattr__(self, "joint_offset", tuple(float(v) for v in self.joint_offset))
        self.validate()

    def validate(self) -> None:
        w, h = self.width, self.height
        yg, zg = self.com_offset
        yl, zl = self.joint_offset
        if not (w > 0 and h > 0):
            raise GeometryError("body width and height must be positive")
        if not (abs(yg) < w / 2 and abs(zg) < h / 2):
            raise GeometryError("centre of mass must lie inside the body")
        eps = 1e-12
        if abs(yl) > w / 2 + eps or abs(zl) > h / 2 + eps:
            raise GeometryError("leg joints must lie on or within the body")
        if not (self.mass > 0 and self.inertia > 0):
            raise GeometryError("mass and inertia must be positive")

    @property
    def com(self) -> np.ndarray:
        return np.array(self.com_offset)

    def joint(self, side: str) -> np.ndarray:
        yl, zl = self.joint_offset
        return np.array([yl if side == "front" else -yl, zl])

    def corners(self) -> np.ndarray:
        w, h = self.width / 2, self.height / 2
        return np.array([[w, h], [-w, h], [-w, -h], [w, -h]])

    def scaled(self, s: float) -> "BodyParams":
        return replace(
            self,
            width=self.width * s,
            height=self.height * s,
            com_offset=(self.com_offset[0] * s, self.com_offset[1] * s),
            joint_offset=(self.joint_offset[0] * s, self.joint_offset[1] * s),
            inertia=self.inertia * s**2,
        )


@dataclass(frozen=True, eq=False)
class LegProfile:
    """Polar leg contour about its joint.

    ``keypoints`` are A..F (B being the tip-slope point) in the body frame at
    ``dphi = 0``.  ``phi`` is strictly increasing; the tip A is the last sample.
    """

    phi: np.ndarray
    r: np.ndarray
    dphi_range: tuple[float, float]
    keypoints: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    side: str = "front"

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        r = np.asarray(self.r, dtype=float)
        kp = np.asarray(self.keypoints, dtype=float).reshape(-1, 2)
        for a in (phi, r, kp):
            a.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "keypoints", kp)
        object.__setattr__(self, "dphi_range", (float(self.dphi_range[0]), float(self.dphi_range[1])))
        if self.side not in ("front", "rear"):
            raise GeometryError(f"unknown leg side {self.side!r}")
        if phi.ndim != 1 or phi.shape != r.shape or phi.size < 2:
            raise GeometryError("phi and r must be matching 1-D arrays")
        if not np.all(np.diff(phi) > 0):
            raise GeometryError("phi samples must be strictly increasing")
        if not np.all(r > 0):
            raise GeometryError("leg radius must be positive")
        if not self.dphi_range[1] > self.dphi_range[0]:
            raise GeometryError("empty leg rotation range")

    def __eq__(self, other):
        if not isinstance(other, LegProfile):
            return NotImplemented
        return (
            self.side == other.side
            and self.dphi_range == other.dphi_range
            and np.array_equal(self.phi, other.phi)
            and np.array_equal(self.r, other.r)
            and np.array_equal(self.keypoints, other.keypoints)
        )

    @property
    def sign(self) -> float:
        return 1.0 if self.side == "front" else -1.0

    @property
    def phi_min(self) -> float:
        return float(self.phi[0])

    @property
    def phi_max(self) -> float:
        return float(self.phi[-1])

    @property
    def max_radius(self) -> float:
        return float(self.r.max())

    def world_angles(self) -> np.ndarray:
        """Angle offsets ``a_j`` such that a sample points along ``theta + sign*dphi + a_j``."""
        return self.phi if self.side == "front" else math.pi - self.phi

    def points(self, dphi: float = 0.0) -> np.ndarray:
        """Contour samples relative to the joint, body frame, shape (N, 2)."""
        ang = self.phi + dphi
        return np.column_stack((self.sign * self.r * np.cos(ang), self.r * np.sin(ang)))

    def scaled(self, s: float) -> "LegProfile":
        return replace(self, r=self.r * s, keypoints=self.keypoints * s)


@dataclass(frozen=True, eq=False)
class RobotDesign:
    body: BodyParams
    front_leg: LegProfile
    rear_leg: LegProfile
    leg_mass: float = 0.059
    leg_rate_limit: float = math.radians(400.0)

    def __post_init__(self):
        if self.front_leg.side != "front" or self.rear_leg.side != "rear":
            raise GeometryError("front_leg/rear_leg sides are swapped")
        if self.leg_mass < 0 or self.leg_rate_limit <= 0:
            raise GeometryError("invalid leg mass or rate limit")

    def __eq__(self, other):
        if not isinstance(other, RobotDesign):
            return NotImplemented
        return (
            self.body == other.body
            and self.front_leg == other.front_leg
            and self.rear_leg == other.rear_leg
            and self.leg_mass == other.leg_mass
            and self.leg_rate_limit == other.leg_rate_limit
        )

    @classmethod
    def symmetric(cls, body: BodyParams, front: LegProfile, **kw) -> "RobotDesign":
        return cls(body=body, front_leg=front, rear_leg=mirror_leg(front), **kw)

    def leg(self, side: str) -> LegProfile:
        return self.front_leg if side == "front" else self.rear_leg

    @property
    def dphi_range(self) -> tuple[float, float]:
        return self.front_leg.dphi_range

    @property
    def max_leg_radius(self) -> float:
        return max(self.front_leg.max_radius, self.rear_leg.max_radius)

    def leg_points(self, side: str, dphi: float) -> np.ndarray:
        """Leg contour in the body frame."""
        return self.body.joint(side) + self.leg(side).points(dphi)

    def scaled(self, s: float) -> "RobotDesign":
        return replace(
            self,
            body=self.body.scaled(s),
            front_leg=self.front_leg.scaled(s),
            rear_leg=self.rear_leg.scaled(s),
        )


@dataclass(frozen=True)
class ContactInfo:
    """Lowest leg point.  ``point_global`` is relative to the body centre in world axes."""

    leg: str
    phi_P: float
    point_global: tuple[float, float]
    index: int = -1

    @property
    def Y(self) -> float:
        return self.point_global[0]

    @property
    def Z(self) -> float:
        return self.point_global[1]


def rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, 2 * math.pi) - math.pi
    w = np.where(w == -math.pi, math.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def mirror_leg(front: LegProfile) -> LegProfile:
    """Reflect a leg about the body's vertical axis (front <-> rear)."""
    kp = front.keypoints.copy()
    kp[:, 0] = -kp[:, 0]
    return replace(front, keypoints=kp, side="rear" if front.side == "front" else "front")


def sample_radius(profile: LegProfile, phi: float) -> float:
    if not profile.phi_min <= phi <= profile.phi_max:
        raise GeometryError(
            f"phi={phi:.6f} outside [{profile.phi_min:.6f}, {profile.phi_max:.6f}]"
        )
    return float(np.interp(phi, profile.phi, profile.r))


def arc_profile(radius: float, phi_min: float, phi_max: float, dphi_range, n: int = N_PHI,
                side: str = "front") -> LegProfile:
    """Constant-radius leg, handy for tests and idealised wheels."""
    phi = np.linspace(phi_min, phi_max, n)
    return LegProfile(phi=phi, r=np.full(n, float(radius)), dphi_range=dphi_range, side=side)


def circle_profile(body: BodyParams, radius: float, dphi_range, n: int = N_PHI) -> LegProfile:
    """Front leg tracing the front half of a circle centred on the body centre.

    With its mirror image the two legs form a full wheel at ``dphi = 0``.
    """
    J = body.joint("front")
    if radius <= float(np.hypot(*J)):
        raise GeometryError("circle must enclose the joint")
    a = np.linspace(-math.pi / 2, math.pi / 2, n)
    rel = radius * np.column_stack((np.cos(a), np.sin(a))) - J
    phi = np.arctan2(rel[:, 1], rel[:, 0])
    return LegProfile(phi=phi, r=np.hypot(rel[:, 0], rel[:, 1]), dphi_range=dphi_range)


# ---------------------------------------------------------------------------
# Algorithm: front leg generation
# ---------------------------------------------------------------------------


def _slope(p, q) -> float:
    dx = q[0] - p[0]
    if dx == 0.0:
        return math.copysign(math.inf, q[1] - p[1])
    return (q[1] - p[1]) / dx


def _inside_body(pts: np.ndarray, w: float, h: float) -> np.ndarray:
    """Strict interior test in the bottom-centre frame."""
    pts = np.atleast_2d(pts)
    return (np.abs(pts[:, 0]) < w / 2) & (pts[:, 1] > 0) & (pts[:, 1] < h)


def _draw(rng, lo, hi, cond, tries=50):
    for _ in range(tries):
        p = (rng.uniform(*lo), rng.uniform(*hi))
        if cond(p):
            return p
    return None


def _spline_profile(L, pts, tip_slope, n_phi):
    """Cubic spline r(phi) through keypoints (tip last); returns (phi, r, dr) or None."""
    rel = np.asarray(pts) - L
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    rad = np.hypot(rel[:, 0], rel[:, 1])
    ang, rad = ang[::-1], rad[::-1]  # F..A, increasing angle expected
    if not np.all(np.diff(ang) > 1e-3):
        return None
    spl = CubicSpline(ang, rad, bc_type=("not-a-knot", (1, tip_slope)))
    phi = np.linspace(ang[0], ang[-1], n_phi)
    return phi, spl(phi), spl(phi, 1)


def _monotone(d: np.ndarray, tol: float = 1e-9) -> bool:
    dd = np.diff(d)
    return bool(np.all(dd >= -tol) or np.all(dd <= tol))


def generate_leg(rng_seed: int, body: BodyParams, *, margin: float | None = None,
                 stroke: float = LEG_STROKE, n_phi: int = N_PHI,
                 max_attempts: int = MAX_ATTEMPTS) -> LegProfile:
    """Random front leg by rejection sampling over keypoints A..F.

    Keypoints are drawn in a frame at the bottom-centre of the body.  The tip A
    starts on the centreline above the body; B is a tiny horizontal offset
    from A so that the mirrored rear leg closes smoothly against it.  Both are
    then rotated about the joint until A sits vertically above it; that
    rotation is the fully open leg angle.  ``margin`` bounds how far keypoints
    may reach beyond the body (default 0.75 * max(w, h)).
    """
    rng = np.random.default_rng(rng_seed)
    w, h = body.width, body.height
    M = 0.75 * max(w, h) if margin is None else margin
    eps = 1e-4 * h
    yl, zl = body.joint_offset
    L = np.array([yl, zl + h / 2])
    to_body = np.array([0.0, -h / 2])

    for _ in range(max_attempts):
        A = np.array([0.0, rng.uniform(h, 2 * h)])
        B = A + np.array([eps, 0.0])
        beta = math.atan2(A[1] - L[1], A[0] - L[0]) - math.pi / 2
        R = rot(-beta)
        A = L + R @ (A - L)
        B = L + R @ (B - L)
        if _inside_body(np.array([A, B]), w, h).any() or A[1] <= h:
            continue
        m_ab = _slope(A, B)

        C = _draw(rng, (w / 2, w / 2 + M), (h, B[1]),
                  lambda p: _slope(B, p) < m_ab)
        if C is None:
            continue
        m_bc = _slope(B, C)
        D = _draw(rng, (C[0], w / 2 + M), (w / 2, h),
                  lambda p: _slope(C, p) < m_bc)
        if D is None:
            continue
        E = (rng.uniform(w / 2, D[0]), rng.uniform(-M, 0.0))
        m_ed = _slope(E, D)
        F = _draw(rng, (0.0, w / 2), (-M, E[1]),
                  lambda p: _slope(E, p) < m_ed)
        if F is None:
            continue

        keys = np.array([A, C, D, E, F])
        # dr/dphi at the tip that reproduces the AB direction
        tip_slope = float(np.hypot(*(A - L))) * math.tan(beta)
        prof = _spline_profile(L, keys, tip_slope, n_phi)
        if prof is None:
            continue
        phi, r, dr = prof
        if not np.all(r > 0) or not _monotone(dr):
            continue
        pts = L + np.column_stack((r * np.cos(phi), r * np.sin(phi)))
        if _inside_body(pts, w, h).any():
            continue
        kp = np.array([A, B, C, D, E, F]) + to_body
        return LegProfile(phi=phi, r=r, dphi_range=(beta - stroke, beta), keypoints=kp)
    raise InfeasibleProfileError(f"no feasible profile after {max_attempts} attempts")


def profile_from_keypoints(body: BodyParams, keypoints, *, stroke: float = LEG_STROKE,
                           n_phi: int = N_PHI) -> LegProfile:
    """Deterministic counterpart of generate_leg for hand-placed keypoints.

    ``keypoints`` are A, C, D, E, F in the body frame with A already above the
    joint; the tip slope comes from the open-leg meeting condition.
    """
    keypoints = np.asarray(keypoints, dtype=float)
    L = body.joint("front")
    A = keypoints[0]
    if abs(A[0] - L[0]) > 1e-12:
        raise GeometryError("tip keypoint must sit vertically above the joint")
    # open pose brings the tip back to the centreline
    rho = A[1] - L[1]
    if rho <= abs(L[0]):
        raise GeometryError("tip too close to the joint to reach the centreline")
    beta = math.asin(L[0] / rho)
    prof = _spline_profile(L, keypoints, rho * math.tan(beta), n_phi)
    if prof is None:
        raise GeometryError("keypoints are not angularly ordered about the joint")
    phi, r, dr = prof
    if not np.all(r > 0):
        raise GeometryError("non-positive radius")
    B = A + 1e-4 * body.height * np.array([math.cos(beta), -math.sin(beta)])
    kp = np.vstack([A, B, keypoints[1:]])
    return LegProfile(phi=phi, r=r, dphi_range=(beta - stroke, beta), keypoints=kp)


def gradient_is_monotone(profile: LegProfile) -> bool:
    return _monotone(np.gradient(profile.r, profile.phi), tol=1e-7)


# ---------------------------------------------------------------------------
# Contact search
# ---------------------------------------------------------------------------


def _leg_lowest(leg: LegProfile, psi: np.ndarray, refine: bool):
    """Lowest point of a leg for leg-direction angle(s) ``psi = theta + sign*dphi``.

    Returns (dy, dz, phi_P, index) relative to the joint in world axes.
    """
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    a = leg.world_angles()
    ang = psi[:, None] + a[None, :]
    z = leg.r[None, :] * np.sin(ang)
    idx = np.argmin(z, axis=1)
    rows = np.arange(psi.size)
    zmin = z[rows, idx]
    ymin = leg.r[idx] * np.cos(ang[rows, idx])
    phi_p = leg.phi[idx].copy()
    if refine:
        n = leg.phi.size
        lo = np.clip(idx - 1, 0, n - 2)
        hi = np.clip(idx, 0, n - 2)
        t = np.linspace(0.0, 1.0, REFINE_SUBSTEPS + 1)
        for seg in (lo, hi):
            p0, p1 = leg.phi[seg], leg.phi[seg + 1]
            r0, r1 = leg.r[seg], leg.r[seg + 1]
            ph = p0[:, None] + (p1 - p0)[:, None] * t[None, :]
            rr = r0[:, None] + (r1 - r0)[:, None] * t[None, :]
            aa = ph if leg.side == "front" else math.pi - ph
            zz = rr * np.sin(psi[:, None] + aa)
            k = np.argmin(zz, axis=1)
            zc = zz[rows, k]
            better = zc < zmin
            if better.any():
                zmin = np.where(better, zc, zmin)
                ymin = np.where(better, rr[rows, k] * np.cos(psi + aa[rows, k]), ymin)
                phi_p = np.where(better, ph[rows, k], phi_p)
    return ymin, zmin, phi_p, idx


def _check_dphi(design: RobotDesign, dphi: float) -> None:
    lo, hi = design.dphi_range
    if not lo - 1e-9 <= dphi <= hi + 1e-9:
        raise GeometryError(f"leg angle {dphi:.4f} outside [{lo:.4f}, {hi:.4f}]")


def leg_contact(design: RobotDesign, side: str, theta_G: float, dphi: float,
                refine: bool = True) -> ContactInfo:
    """Lowest point of a single leg."""
    leg = design.leg(side)
    J = rot(theta_G) @ design.body.joint(side)
    dy, dz, phi_p, idx = _leg_lowest(leg, theta_G + leg.sign * dphi, refine)
    return ContactInfo(side, float(phi_p[0]), (float(J[0] + dy[0]), float(J[1] + dz[0])), int(idx[0]))


def find_contact(design: RobotDesign, theta_G: float, dphi_front: float, dphi_rear: float,
                 refine: bool = True) -> ContactInfo:
    """Globally lowest outer-contour point over both legs.

    With ``refine`` the search continues between samples on the interpolated
    contour; without it the result is the lowest stored sample.  Ties within
    TAU_CONTACT go to the more forward point.
    """
    _check_dphi(design, dphi_front)
    _check_dphi(design, dphi_rear)
    f = leg_contact(design, "front", theta_G, dphi_front, refine)
    r = leg_contact(design, "rear", theta_G, dphi_rear, refine)
    if abs(f.Z - r.Z) <= TAU_CONTACT:
        return f if f.Y >= r.Y else r
    return f if f.Z < r.Z else r


def contour_world(design: RobotDesign, theta_G: float, dphi_front: float, dphi_rear: float):
    """All leg samples rotated into world axes about the body centre: dict side -> (N, 2)."""
    R = rot(theta_G)
    return {
        "front": design.leg_points("front", dphi_front) @ R.T,
        "rear": design.leg_points("rear", dphi_rear) @ R.T,
    }


def junction_gap(design: RobotDesign) -> float:
    """Distance between the two leg tips with both legs fully open."""
    hi = design.dphi_range[1]
    f = design.leg_points("front", hi)[-1]
    r = design.leg_points("rear", hi)[-1]
    return float(np.hypot(*(f - r)))
