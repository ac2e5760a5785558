"""Planar hybrid simulation of whole-body rolling and quasi-static walking.

The body pivots about the lowest leg sample (a polygonal contour rolls
without slip), gravity acts through the moment arm to that pivot, and the
legs follow rate-limited commands.  When the pivot jumps to a distant sample
(leg hand-off, step obstacles) angular momentum about the new pivot is
conserved; small migrations between neighbouring samples keep kinetic energy.
"""

from __future__ import annotations

import math
import weakref
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import ContactInfo, RobotDesign, rot, wrap_angle

G = 9.81
TAU_PEN = 5e-4
TAU_TIE = 1e-12  # height ties between samples; far below sample spacing
HANDOFF_JUMP = 2e-3
MAX_DT = 5e-3


class SimulationError(RuntimeError):
    pass


DEFAULT_ROLLING_DAMPING = 0.005  # N*m*s/rad


@dataclass(frozen=True)
class Terrain:
    """Flat ground at height 0 with optional box obstacles.

    ``steps`` holds ``(y_start, y_end, height)`` boxes; ``rolling_damping``
    (N*m*s/rad) is a viscous rolling-resistance torque on the body.  The
    default is an assumed value that bounds the rolling speed; it is not a
    measured property of any surface.
    """

    steps: tuple[tuple[float, float, float], ...] = ()
    mu: float = 0.5
    rolling_damping: float = DEFAULT_ROLLING_DAMPING

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(tuple(float(v) for v in s) for s in self.steps))
        if self.mu <= 0:
            raise ValueError("friction coefficient must be positive")
        for y0, y1, h in self.steps:
            if h < 0 or y1 <= y0:
                raise ValueError("steps need y_end > y_start and height >= 0")
        if self.rolling_damping < 0:
            raise ValueError("rolling damping must be non-negative")

    def height(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for y0, y1, h in self.steps:
            out = np.where((y >= y0) & (y < y1), np.maximum(out, h), out)
        return out

    def flat_level(self, y_lo: float, y_hi: float) -> float | None:
        """Ground height if it is constant over ``[y_lo, y_hi]``, else None."""
        level = 0.0
        for y0, y1, h in self.steps:
            if y1 <= y_lo or y0 > y_hi:
                continue
            if y0 <= y_lo and y1 > y_hi:
                level = max(level, h)
            elif h > 0:
                return None
        return level

    def faces(self):
        """Vertical faces as (y, low, high, side): side=+1 rises going forward."""
        for y0, y1, h in self.steps:
            yield y0, 0.0, h, +1
            yield y1, 0.0, h, -1


@dataclass(frozen=True)
class SensorConfig:
    sample_rate: float = 100.0
    angle_noise_sigma: float = math.radians(5.0)
    quantization: float = math.pi / 12  # half-width of a reading bin
    latency: float = 0.01
    rng_seed: int = 0

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.quantization < 0 or self.angle_noise_sigma < 0 or self.latency < 0:
            raise ValueError("negative sensor parameter")

    @property
    def bin_width(self) -> float:
        return 2 * self.quantization


def quantize(angle, half_width: float):
    if half_width <= 0:
        return wrap_angle(angle)
    step = 2 * half_width
    return wrap_angle(np.round(np.asarray(angle) / step) * step)


def sense(theta_G: float, cfg: SensorConfig, rng: np.random.Generator | None = None) -> float:
    """Accelerometer tilt estimate: wrapped angle plus Gaussian noise, quantised."""
    noise = 0.0
    if cfg.angle_noise_sigma > 0:
        noise = rng.normal(0.0, cfg.angle_noise_sigma)
    return float(quantize(wrap_angle(theta_G) + noise, cfg.quantization))


class Imu:
    """Sampled sensor with a fixed delay (whole samples)."""

    def __init__(self, cfg: SensorConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.rng_seed)
        self.delay = int(round(cfg.latency * cfg.sample_rate))
        self._buf: deque[float] = deque(maxlen=self.delay + 1)

    def read(self, theta_G: float) -> float:
        self._buf.append(theta_G)
        return sense(self._buf[0], self.cfg, self.rng)


# ---------------------------------------------------------------------------
# Rigid-body model
# ---------------------------------------------------------------------------


class BodyModel:
    """Cached per-design arrays used by the integrator.

    ``lowest`` answers "which sample of each leg is lowest" through a table of
    candidate indices over the leg's world orientation, so the integrator
    never scans whole contours on flat ground.
    """

    TABLE_BINS = 4096

    def __init__(self, design: RobotDesign):
        self.design = design
        b = design.body
        self.mass = b.mass
        self.com = b.com.copy()
        self.gy, self.gz = float(b.com[0]), float(b.com[1])
        self.joints = {s: b.joint(s) for s in ("front", "rear")}
        self.legs = {s: design.leg(s) for s in ("front", "rear")}
        self.lo, self.hi = design.dphi_range
        self.rate = design.leg_rate_limit
        self.corners = b.corners()
        self.reach = float(np.hypot(b.width, b.height)) + design.max_leg_radius
        self._leg_c0, self._leg_i = {}, {}
        self._last_i = (None, 0.0)
        self._sign = {k: float(leg.sign) for k, leg in self.legs.items()}
        self._J = {k: (float(j[0]), float(j[1])) for k, j in self.joints.items()}
        self._r, self._a, self._phi, self._table = {}, {}, {}, {}
        for s, leg in self.legs.items():
            p = leg.points(0.0)
            c0 = p.mean(axis=0)
            self._leg_c0[s] = (float(c0[0]), float(c0[1]))
            self._leg_i[s] = design.leg_mass * float(np.mean(np.sum((p - c0) ** 2, axis=1)))
            self._r[s] = leg.r.tolist()
            self._a[s] = leg.world_angles().tolist()
            self._phi[s] = leg.phi.tolist()
            self._table[s] = self._build_table(leg)

    def _build_table(self, leg) -> list:
        K = self.TABLE_BINS
        psi = np.linspace(-math.pi, math.pi, 2 * K + 1)
        a = leg.world_angles()
        am = np.empty(psi.size, dtype=np.int64)
        for lo in range(0, psi.size, 512):
            chunk = psi[lo:lo + 512, None]
            am[lo:lo + 512] = np.argmin(leg.r * np.sin(chunk + a), axis=1)
        cand = np.stack([am[0:-1:2], am[1::2], am[2::2]], axis=1)
        return [tuple(sorted(set(row))) for row in cand.tolist()]

    def leg_pts(self, side: str, dphi: float) -> np.ndarray:
        return self.joints[side] + self.legs[side].points(dphi)

    def sample(self, side: str, idx: int, dphi: float) -> np.ndarray:
        return np.array(self.sample_body(side, idx, dphi))

    def sample_body(self, side: str, idx: int, dphi: float) -> tuple[float, float]:
        a = self._phi[side][idx] + dphi
        r = self._r[side][idx]
        J = self._J[side]
        return J[0] + self._sign[side] * r * math.cos(a), J[1] + r * math.sin(a)

    def lowest(self, theta: float, df: float, dr: float):
        """(side, index, y, z) of the lowest sample relative to the body centre; ties go forward."""
        c, s_ = math.cos(theta), math.sin(theta)
        best = None
        K = self.TABLE_BINS
        two_pi = 2 * math.pi
        for side, d in (("front", df), ("rear", dr)):
            psi = theta + self._sign[side] * d
            J0, J1 = self._J[side]
            jy = c * J0 - s_ * J1
            jz = s_ * J0 + c * J1
            b = int(((psi + math.pi) % two_pi) / two_pi * K) % K
            r, a = self._r[side], self._a[side]
            for j in self._table[side][b]:
                ang = psi + a[j]
                z = jz + r[j] * math.sin(ang)
                if best is None or z < best[3] - TAU_TIE:
                    best = (side, j, jy + r[j] * math.cos(ang), z)
                elif abs(z - best[3]) <= TAU_TIE:
                    y = jy + r[j] * math.cos(ang)
                    if y > best[2]:
                        best = (side, j, y, z)
        return best

    def inertia_com(self, df: float, dr: float) -> float:
        """Composite inertia about the CoM with legs at the given angles."""
        if self._last_i[0] == (df, dr):
            return self._last_i[1]
        I = self.design.body.inertia
        for s, d in (("front", df), ("rear", dr)):
            x0, y0 = self._leg_c0[s]
            ca, sa = math.cos(d), math.sin(d)
            J = self._J[s]
            if s == "front":
                cy, cz = J[0] + ca * x0 - sa * y0, J[1] + sa * x0 + ca * y0
            else:
                # mirrored: reflect, rotate, reflect back
                cy, cz = J[0] - (ca * -x0 - sa * y0), J[1] + sa * -x0 + ca * y0
            I += self._leg_i[s] + self.design.leg_mass * ((cy - self.gy) ** 2 + (cz - self.gz) ** 2)
        self._last_i = ((df, dr), I)
        return I


_MODELS: dict[int, tuple[weakref.ref, BodyModel]] = {}


def body_model(design: RobotDesign) -> BodyModel:
    """Shared per-design cache (the lookup tables take ~0.1 s to build)."""
    hit = _MODELS.get(id(design))
    if hit is not None and hit[0]() is design:
        return hit[1]
    m = BodyModel(design)
    key = id(design)
    _MODELS[key] = (weakref.ref(design, lambda _r, k=key, cache=_MODELS: cache.pop(k, None)), m)
    return m


@dataclass(frozen=True)
class SimState:
    t: float
    theta_G: float
    omega: float
    leg_front: float
    leg_rear: float
    leg_cmd_front: float
    leg_cmd_rear: float
    contact_leg: str
    contact_index: int
    pivot: tuple[float, float]  # world position of the pinned contact sample
    origin: tuple[float, float] = (0.0, 0.0)  # world position of the body centre

    def com_pos(self, design: RobotDesign) -> tuple[float, float]:
        gy, gz = design.body.com_offset
        c, sn = math.cos(self.theta_G), math.sin(self.theta_G)
        return self.origin[0] + c * gy - sn * gz, self.origin[1] + sn * gy + c * gz

    def contact(self, design: RobotDesign) -> ContactInfo:
        leg = design.leg(self.contact_leg)
        return ContactInfo(self.contact_leg, float(leg.phi[self.contact_index]), self.pivot, self.contact_index)


def _world(model: BodyModel, theta: float, origin, df: float, dr: float):
    R = rot(theta)
    o = np.asarray(origin)
    return {
        "front": model.leg_pts("front", df) @ R.T + o,
        "rear": model.leg_pts("rear", dr) @ R.T + o,
    }


def _lowest(world: dict, terrain: Terrain | None = None):
    """(side, index, penetration) of the sample deepest below the ground; ties go forward."""
    best = None
    for side, W in world.items():
        ground = 0.0 if terrain is None or not terrain.steps else terrain.height(W[:, 0])
        pen = ground - W[:, 1]
        j = int(np.argmax(pen))
        cand = np.flatnonzero(pen >= pen[j] - TAU_TIE)
        j = int(cand[np.argmax(W[cand, 0])])
        key = (pen[j], W[j, 0])
        if best is None or key[0] > best[2] + TAU_TIE or (
            abs(key[0] - best[2]) <= TAU_TIE and key[1] > best[3]
        ):
            best = (side, j, float(pen[j]), float(W[j, 0]))
    return best[0], best[1], best[2]


def settle(design: RobotDesign, theta_G: float, leg_front: float, leg_rear: float,
           y: float = 0.0, terrain: Terrain | None = None, t: float = 0.0, omega: float = 0.0) -> SimState:
    """Place the body so its lowest leg sample rests on the ground at forward position ``y``."""
    model = body_model(design)
    W = _world(model, theta_G, (0.0, 0.0), leg_front, leg_rear)
    side, j, pen = _lowest(W)
    p = W[side][j]
    ground = float(terrain.height(y)) if terrain is not None else 0.0
    origin = (y - p[0], ground - p[1])
    return SimState(t, theta_G, omega, leg_front, leg_rear, leg_front, leg_rear, side, j,
                    (y, ground), origin)


def mechanical_energy(state: SimState, design: RobotDesign, model: BodyModel | None = None) -> float:
    model = model or body_model(design)
    P = np.asarray(state.pivot)
    Gw = np.asarray(state.com_pos(design))
    I_P = model.inertia_com(state.leg_front, state.leg_rear) + model.mass * float(np.sum((Gw - P) ** 2))
    return 0.5 * I_P * state.omega**2 + model.mass * G * Gw[1]


def impact_omega(omega: float, I_G: float, mass: float, G_rel_old, G_rel_new) -> float:
    """Angular velocity after the pivot jumps, conserving momentum about the new pivot.

    ``G_rel_old``/``G_rel_new`` are the CoM positions relative to the old and new
    contact points.  Contacts are unilateral, so the result never reverses
    the rotation.
    """
    a = np.asarray(G_rel_new, dtype=float)
    b = np.asarray(G_rel_old, dtype=float)
    ratio = (I_G + mass * float(a @ b)) / (I_G + mass * float(a @ a))
    # a reversed rotation would need the new contact to pull: the body stops instead
    return omega * max(ratio, 0.0)


def impact(state: SimState, new_contact: ContactInfo, design: RobotDesign) -> SimState:
    """Pivot hand-off to ``new_contact``, momentum about the new point conserved.

    ``new_contact.point_global`` is relative to the body centre (world axes),
    as returned by :func:`find_contact`.
    """
    model = body_model(design)
    Gw = np.asarray(state.com_pos(design))
    old = np.asarray(state.pivot)
    new = np.asarray(state.origin) + np.asarray(new_contact.point_global)
    if np.allclose(old, new, rtol=0, atol=0):
        w = state.omega
    else:
        I_G = model.inertia_com(state.leg_front, state.leg_rear)
        w = impact_omega(state.omega, I_G, model.mass, Gw - old, Gw - new)
    return replace(state, omega=w, contact_leg=new_contact.leg,
                   contact_index=new_contact.index, pivot=(float(new[0]), float(new[1])))


def _touch_angle(d: np.ndarray, c: float, theta: float) -> float | None:
    """Body angle nearest ``theta`` at which offset ``d`` (body frame) from the pivot has height ``c``."""
    A = math.hypot(d[0], d[1])
    if A < 1e-15 or abs(c) > A:
        return None
    alpha = math.atan2(d[1], d[0])
    base = math.asin(c / A)
    best = None
    for root in (base - alpha, math.pi - base - alpha):
        k = round((theta - root) / (2 * math.pi))
        cand = root + 2 * math.pi * k
        if best is None or abs(cand - theta) < abs(best - theta):
            best = cand
    return best


class Integrator:
    """Stateful stepping helper; ``step`` below is the functional wrapper."""

    def __init__(self, design: RobotDesign, terrain: Terrain):
        self.design = design
        self.terrain = terrain
        self.model = body_model(design)
        self.events: list[str] = []

    def _move_legs(self, s: SimState, dt: float, leg_rates):
        m = self.model
        if leg_rates is None:
            # rate-limited first-order tracking of the commands
            tau = 0.02
            vf = max(-m.rate, min(m.rate, (s.leg_cmd_front - s.leg_front) / tau))
            vr = max(-m.rate, min(m.rate, (s.leg_cmd_rear - s.leg_rear) / tau))
            df = s.leg_front + vf * dt
            dr = s.leg_rear + vr * dt
            # never overshoot the command
            if (s.leg_cmd_front - s.leg_front) * (s.leg_cmd_front - df) < 0:
                df = s.leg_cmd_front
            if (s.leg_cmd_rear - s.leg_rear) * (s.leg_cmd_rear - dr) < 0:
                dr = s.leg_cmd_rear
        else:
            vf = max(-m.rate, min(m.rate, leg_rates[0]))
            vr = max(-m.rate, min(m.rate, leg_rates[1]))
            df, dr = s.leg_front + vf * dt, s.leg_rear + vr * dt
        return min(max(df, m.lo), m.hi), min(max(dr, m.lo), m.hi)

    def _deepest(self, s: SimState, theta, origin, df, dr):
        """Deepest sample below the terrain: (side, idx, pen, world point, corner or None)."""
        m = self.model
        level = self.terrain.flat_level(origin[0] - m.reach, origin[0] + m.reach)
        if level is not None:
            side, j, y, z = m.lowest(theta, df, dr)
            wy, wz = origin[0] + y, origin[1] + z
            return side, j, level - wz, (wy, wz), None
        W = _world(m, theta, origin, df, dr)
        side, j, pen = _lowest(W, self.terrain)
        corner = self._face_crossing(W, s, df, dr, origin) if pen > 1e-12 else None
        return side, j, pen, (float(W[side][j, 0]), float(W[side][j, 1])), corner

    def step(self, s: SimState, dt: float, leg_rates=None) -> SimState:
        if not 0 < dt <= MAX_DT:
            raise SimulationError(f"dt={dt} outside (0, {MAX_DT}]")
        m = self.model
        df, dr = self._move_legs(s, dt, leg_rates)
        legs = {"front": df, "rear": dr}
        theta, omega = s.theta_G, s.omega
        side, idx = s.contact_leg, s.contact_index
        Py, Pz = s.pivot
        mass, gy, gz = m.mass, m.gy, m.gz

        def rel(th, pb):
            # CoM relative to the pivot sample, world axes
            c, sn = math.cos(th), math.sin(th)
            dy, dz = gy - pb[0], gz - pb[1]
            return c * dy - sn * dz, sn * dy + c * dz

        # torque about the pinned sample at the current configuration
        p_body = m.sample_body(side, idx, legs[side])
        ry, rz = rel(theta, p_body)
        p_start = p_body
        I_G = m.inertia_com(df, dr)
        I_P = I_G + mass * (ry * ry + rz * rz)
        c = self.terrain.rolling_damping
        omega_pred = omega + dt * (-mass * G * ry - c * omega) / I_P
        theta_new = theta + 0.5 * dt * (omega + omega_pred)
        # the rotation itself is integrated exactly in energy: KE is tracked
        # along the path and only damping and impacts remove it
        ke = 0.5 * I_P * omega**2 - c * abs(omega * (theta_new - theta))
        mg = mass * G

        cn, sn = math.cos(theta_new), math.sin(theta_new)
        th_cur = theta
        stopped = False
        origin = (Py - (cn * p_body[0] - sn * p_body[1]), Pz - (sn * p_body[0] + cn * p_body[1]))
        for _ in range(8):
            new_side, new_idx, pen, wq, corner = self._deepest(s, theta_new, origin, df, dr)
            if pen <= 1e-12 or (new_side, new_idx) == (side, idx):
                break
            th_star = None
            if corner is None:
                q_body = m.sample_body(new_side, new_idx, legs[new_side])
                ground = wq[1] + pen
                d = (q_body[0] - p_body[0], q_body[1] - p_body[1])
                th_star = _touch_angle(d, ground - Pz, theta_new)
            if th_star is None:
                if corner is not None:
                    new_side, new_idx, target = corner
                    wq = tuple(_world(m, theta_new, origin, df, dr)[new_side][new_idx])
                    target = (float(target[0]), float(target[1]))
                else:
                    target = (wq[0], wq[1] + pen)
                q_body = m.sample_body(new_side, new_idx, legs[new_side])
                th_star = theta_new
                ke += mg * (rel(th_cur, p_body)[1] - rel(th_star, p_body)[1])
                # the shift itself moves the CoM
                ke -= mg * (target[1] - wq[1])
                origin = (origin[0] + target[0] - wq[0], origin[1] + target[1] - wq[1])
                nPy, nPz = target
            else:
                # the new sample touched at th_star; keep rotating about it
                ke += mg * (rel(th_cur, p_body)[1] - rel(th_star, p_body)[1])
                cs, ss = math.cos(th_star), math.sin(th_star)
                nPy = Py + cs * d[0] - ss * d[1]
                nPz = ground
                origin = (nPy - (cn * q_body[0] - sn * q_body[1]), nPz - (sn * q_body[0] + cn * q_body[1]))
            g_old = rel(th_star, p_body)
            g_new = rel(th_star, q_body)
            I_old = I_G + mass * (g_old[0] ** 2 + g_old[1] ** 2)
            I_new = I_G + mass * (g_new[0] ** 2 + g_new[1] ** 2)
            if math.hypot(q_body[0] - p_body[0], q_body[1] - p_body[1]) > HANDOFF_JUMP:
                w_old = math.copysign(math.sqrt(2 * max(ke, 0.0) / I_old), omega_pred)
                w_new = impact_omega(w_old, I_G, mass, g_old, g_new)
                ke = 0.5 * I_new * w_new**2
                self.events.append("IMPACT")
                if w_new == 0.0:
                    # came to rest on the new contact at the touch angle
                    stopped = True
                    theta_new = th_star
                    cn, sn = math.cos(th_star), math.sin(th_star)
                    origin = (nPy - (cn * q_body[0] - sn * q_body[1]), nPz - (sn * q_body[0] + cn * q_body[1]))
            side, idx, Py, Pz, p_body, th_cur = new_side, new_idx, nPy, nPz, q_body, th_star
            if stopped:
                break

        fy, fz = rel(theta_new, p_body)
        ke += mg * ((rz if th_cur == theta and p_body is p_start else rel(th_cur, p_body)[1]) - fz)
        I_fin = I_G + mass * (fy * fy + fz * fz)
        if stopped:
            omega = 0.0
            if s.omega == 0.0 and self.terrain.flat_level(origin[0] - m.reach, origin[0] + m.reach) is not None:
                # resting on two contacts: the feet slide rather than drag the body sideways
                Py += s.origin[0] - origin[0]
                origin = (s.origin[0], origin[1])
        elif ke > 0 and omega * omega_pred > 0:
            omega = math.copysign(math.sqrt(2 * ke / I_fin), omega_pred)
        else:
            omega = omega_pred  # turning point or start from rest: explicit estimate
        theta = theta_new

        for cy, cz in m.corners:
            wy = origin[0] + cn * cy - sn * cz
            wz = origin[1] + sn * cy + cn * cz
            ground = float(self.terrain.height(wy)) if self.terrain.steps else 0.0
            if wz < ground - TAU_PEN:
                raise SimulationError("body corner penetrates the ground")
        if not (math.isfinite(theta) and math.isfinite(omega)):
            raise SimulationError("non-finite state")
        return SimState(s.t + dt, theta, omega, df, dr, s.leg_cmd_front, s.leg_cmd_rear,
                        side, idx, (float(Py), float(Pz)), (float(origin[0]), float(origin[1])))

    def _face_crossing(self, W, s: SimState, df, dr, origin):
        """Sample that crossed an obstacle face this step -> (side, idx, corner point)."""
        if not self.terrain.steps:
            return None
        Wprev = _world(self.model, s.theta_G, s.origin, s.leg_front, s.leg_rear)
        best = None
        for y_face, low, high, direction in self.terrain.faces():
            corner = np.array([y_face, high])
            for side in ("front", "rear"):
                yp, yn, zn = Wprev[side][:, 0], W[side][:, 0], W[side][:, 1]
                if direction > 0:
                    crossed = (yp < y_face) & (yn >= y_face)
                else:
                    crossed = (yp >= y_face) & (yn < y_face)
                crossed &= zn < high - 1e-12
                if crossed.any():
                    cand = np.flatnonzero(crossed)
                    d = np.hypot(W[side][cand, 0] - corner[0], W[side][cand, 1] - corner[1])
                    k = int(np.argmin(d))
                    if best is None or d[k] < best[0]:
                        best = (float(d[k]), side, int(cand[k]), corner)
        if best is None:
            return None
        return best[1], best[2], best[3]


def step(state: SimState, design: RobotDesign, terrain: Terrain, dt: float, leg_rates=None) -> SimState:
    return Integrator(design, terrain).step(state, dt, leg_rates)


# ---------------------------------------------------------------------------
# Quasi-static stance (walking)
# ---------------------------------------------------------------------------


def _lift(model: BodyModel, theta: float, df: float, dr: float) -> float:
    """Height of the body centre when its lowest sample touches flat ground."""
    return -model.lowest(theta, df, dr)[3]


def potential(model: BodyModel, theta: float, df: float, dr: float) -> float:
    R = rot(theta)
    return model.mass * G * (_lift(model, theta, df, dr) + float((R @ model.com)[1]))


def static_pose(model: BodyModel, theta0: float, df: float, dr: float,
                step0: float = 2e-3, tol: float = 1e-5, max_iter: int = 2000) -> float:
    """Local minimum of the potential reached by descending from ``theta0``."""
    th, h = theta0, step0
    v = potential(model, th, df, dr)
    it = 0
    while h > tol and it < max_iter:
        it += 1
        vm, vp = potential(model, th - h, df, dr), potential(model, th + h, df, dr)
        if vp < v and vp <= vm:
            th, v = th + h, vp
        elif vm < v:
            th, v = th - h, vm
        else:
            h *= 0.5
    return th


def stance_contacts(model: BodyModel, theta: float, df: float, dr: float):
    """Lowest sample of each leg in world axes about the body centre: side -> (y, z, idx)."""
    R = rot(theta)
    out = {}
    for side, d in (("front", df), ("rear", dr)):
        W = model.leg_pts(side, d) @ R.T
        j = int(np.argmin(W[:, 1]))
        out[side] = (float(W[j, 0]), float(W[j, 1]), j)
    return out


@dataclass(frozen=True)
class FrictionVerdict:
    theta: float
    normal_front: float
    normal_rear: float
    push_ok: bool
    slide_ok: bool
    mu_interval: tuple[float, float]
    two_contact: bool

    @property
    def feasible(self) -> bool:
        return self.push_ok and self.slide_ok


class IndeterminateStance(ValueError):
    pass


TORQUE_BUDGET = 0.08  # N*m per leg (two motors); assumed actuator figure


def check_walk_friction(design: RobotDesign, stance: tuple[float, float], mu: float,
                        torque_budget: float = TORQUE_BUDGET, sliding: str = "rear",
                        contact_tol: float = 2e-4) -> FrictionVerdict:
    """Two-contact static balance for a walking stance.

    Normal forces follow from vertical and moment balance; the tangential
    split is indeterminate and taken as the minimum-norm solution (zero at
    rest).  Pushing needs the gripping leg's tangential/normal ratio within
    ``mu`` while it drags the sliding leg (``mu * N_slide``); sliding needs
    that friction torque about the sliding leg's joint within
    ``torque_budget`` (N*m, both motors of a leg).
    """
    if mu < 0:
        raise ValueError("mu must be non-negative")
    model = body_model(design)
    df, dr = stance
    th = static_pose(model, 0.0, df, dr)
    c = stance_contacts(model, th, df, dr)
    zf, zr = c["front"][1], c["rear"][1]
    two = abs(zf - zr) <= contact_tol
    Gw = rot(th) @ model.com
    yf, yr = c["front"][0], c["rear"][0]
    W = model.mass * G
    if not two:
        # single support: all weight on the lower leg
        nf, nr = (W, 0.0) if zf < zr else (0.0, W)
    else:
        if abs(yf - yr) < 1e-9:
            raise IndeterminateStance("coincident contacts")
        nf = W * (Gw[0] - yr) / (yf - yr)
        nr = W - nf
    grip = "front" if sliding == "rear" else "rear"
    n_grip = nr if grip == "rear" else nf
    n_slide = nr if sliding == "rear" else nf
    # drag of the sliding foot must be carried by the gripping foot
    push_ok = mu > 0 and n_grip > 0 and mu * n_slide <= mu * n_grip + 1e-12
    ys, zs, _ = c[sliding]
    J = rot(th) @ model.joints[sliding]
    lever = abs(zs - J[1])
    need = n_slide * lever
    mu_hi = math.inf if need <= 0 else torque_budget / need
    slide_ok = mu <= mu_hi
    lo = 0.0 if n_grip >= n_slide and n_grip > 0 else math.inf
    return FrictionVerdict(th, nf, nr, push_ok, slide_ok, (lo, mu_hi), two)


@dataclass(frozen=True)
class WalkFriction:
    """Friction verdict for a whole walking cycle.

    ``slide``: stance A with the rear foot sliding while it retracts.
    ``push``: stance C with the rear foot gripping for the kick.
    """

    slide: FrictionVerdict
    push: FrictionVerdict

    @property
    def feasible(self) -> bool:
        return self.slide.slide_ok and self.push.push_ok

    @property
    def mu_interval(self) -> tuple[float, float]:
        return (max(self.slide.mu_interval[0], self.push.mu_interval[0]), self.slide.mu_interval[1])


def walk_friction(design: RobotDesign, targets: dict, mu: float,
                  torque_budget: float = TORQUE_BUDGET) -> WalkFriction:
    """Check the slide phase at stance A and the push phase at stance C."""
    slide = check_walk_friction(design, tuple(targets["A"]), mu, torque_budget, sliding="rear")
    push = check_walk_friction(design, tuple(targets["C"]), mu, torque_budget, sliding="front")
    return WalkFriction(slide, push)


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------

TRACE_COLUMNS = (
    "t", "theta_G", "omega", "com_y", "com_z", "leg_front", "leg_rear",
    "cmd_front", "cmd_rear", "duty_front", "duty_rear", "theta_hat",
)


@dataclass
class SimTrace:
    """Per-step records; ``state``/``mode`` are controller labels."""

    rows: list = field(default_factory=list)
    state: list = field(default_factory=list)
    mode: list = field(default_factory=list)
    events: list = field(default_factory=list)  # (t, text)
    truncated: str | None = None
    dt: float = 1e-3
    energy: float = 0.0

    def append(self, row, state: str, mode: str) -> None:
        self.rows.append(row)
        self.state.append(state)
        self.mode.append(mode)

    def array(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=float).reshape(-1, len(TRACE_COLUMNS))

    def column(self, name: str) -> np.ndarray:
        return self.array()[:, TRACE_COLUMNS.index(name)]

    def __len__(self) -> int:
        return len(self.rows)

    def identical(self, other: "SimTrace") -> bool:
        return (
            np.array_equal(self.array(), other.array(), equal_nan=True)
            and self.state == other.state
            and self.mode == other.mode
            and self.events == other.events
        )


@dataclass(frozen=True)
class EpisodeConfig:
    duration: float = 10.0
    dt: float = 1e-3
    sensor: SensorConfig = field(default_factory=SensorConfig)
    script: tuple[tuple[float, str], ...] = ()  # (time, requested mode)
    settle_angle: float = math.radians(0.5)  # body-angle band that counts as at rest
    settle_time: float = 0.2
    settle_legs: float = 0.02  # rad, leg tracking error that counts as arrived
    initial_theta: float = 0.0


class _Walker:
    """Quasi-static stance update used while walking."""

    def __init__(self, model: BodyModel, terrain: Terrain, mu_ok: bool):
        self.m = model
        self.terrain = terrain
        self.mu_ok = mu_ok

    def step(self, s: SimState, df: float, dr: float, anchor: str, dt: float) -> SimState:
        m = self.m
        if df == s.leg_front and dr == s.leg_rear and anchor == s.contact_leg:
            return replace(s, t=s.t + dt)
        th = static_pose(m, s.theta_G, df, dr, step0=5e-4, tol=1e-6)
        R = rot(th)
        lows = {}
        for side, d in (("front", df), ("rear", dr)):
            W = m.leg_pts(side, d) @ R.T
            j = int(np.argmin(W[:, 1]))
            lows[side] = (j, W[j])
        zmin = min(v[1][1] for v in lows.values())
        other = "front" if anchor == "rear" else "rear"
        if lows[anchor][1][1] > zmin + 2e-4:
            anchor = other  # anchor leg is in the air; the grounded one holds
        j, pw = lows[anchor]
        P = np.asarray(s.pivot, dtype=float)
        if self.mu_ok:
            if anchor == s.contact_leg:
                # roll the anchor foot along the ground between its old and new lowest samples
                d = df if anchor == "front" else dr
                old = m.sample(anchor, s.contact_index, d)
                P = P + np.array([float((R @ (m.leg_pts(anchor, d)[j] - old))[0]), 0.0])
            else:
                P = np.array([s.origin[0] + pw[0], 0.0])
            origin = (float(P[0] - pw[0]), float(-zmin))
        else:
            origin = (s.origin[0], float(-zmin))
            P = np.array([origin[0] + pw[0], 0.0])
        return SimState(s.t + dt, th, 0.0, df, dr, s.leg_cmd_front, s.leg_cmd_rear,
                        anchor, j, (float(P[0]), float(P[1])), origin)


def _walk_anchor(state: str) -> str:
    return "front" if state == "B" else "rear"


def run_episode(design: RobotDesign, controller, terrain: Terrain, cfg: EpisodeConfig | None = None,
                initial: SimState | None = None) -> SimTrace:
    """Sense, decide (sensor rate), servo and integrate (every ``dt``); returns the full trace."""
    cfg = cfg or EpisodeConfig()
    integ = Integrator(design, terrain)
    model = integ.model
    imu = Imu(cfg.sensor)
    dt = cfg.dt
    n = int(round(cfg.duration / dt))
    sense_every = max(1, int(round(1.0 / (cfg.sensor.sample_rate * dt))))
    tf, tr = controller.targets
    s = initial or settle(design, cfg.initial_theta, tf, tr, terrain=terrain)
    walk_ok = walk_friction(design, controller.cfg.walking_targets(), terrain.mu).feasible
    walker = _Walker(model, terrain, walk_ok)
    ledger_rate = controller.cfg.voltage * controller.cfg.i_max * dt * 2  # two motors per leg
    trace = SimTrace(dt=dt)
    script = sorted(cfg.script)
    theta_hat = float("nan")
    duty = (0.0, 0.0)

    def record():
        cy, cz = s.com_pos(design)
        tf, tr = controller.targets
        trace.append((s.t, s.theta_G, s.omega, cy, cz, s.leg_front, s.leg_rear, tf, tr,
                      abs(duty[0]), abs(duty[1]), theta_hat), controller.state, controller.mode)

    record()
    calm_since, calm_theta = None, 0.0
    n_log = 0
    slip_noted = False
    for k in range(n):
        t = s.t
        while script and script[0][0] <= t + 1e-12:
            _, mode = script.pop(0)
            ack = controller.request_mode_change(mode, t)
            trace.events.append((t, f"REQUEST {mode} {ack}"))
        if k % sense_every == 0:
            theta_hat = imu.read(s.theta_G)
            if controller.mode == "rolling":
                controller.update(theta_hat, t)
        if controller.mode == "walking":
            controller.walking_update(t)
        duty = controller.servo((s.leg_front, s.leg_rear), dt)
        trace.energy += ledger_rate * (abs(duty[0]) + abs(duty[1]))
        rates = (duty[0] * model.rate, duty[1] * model.rate)
        try:
            if controller.mode == "walking":
                if not walk_ok and not slip_noted:
                    trace.events.append((t, "SLIP walking stance infeasible at this friction"))
                    slip_noted = True
                df, dr = integ._move_legs(s, dt, rates)
                s = walker.step(s, df, dr, _walk_anchor(controller.state), dt)
            else:
                n_imp = len(integ.events)
                s = integ.step(s, dt, rates)
                for _ in range(len(integ.events) - n_imp):
                    trace.events.append((s.t, "IMPACT"))
        except SimulationError as exc:
            trace.truncated = str(exc)
            trace.events.append((s.t, f"ERROR {exc}"))
            break
        if controller.mode == "transition":
            legs_there = (abs(s.leg_front - controller.targets[0]) < cfg.settle_legs
                          and abs(s.leg_rear - controller.targets[1]) < cfg.settle_legs)
            if calm_since is None or abs(s.theta_G - calm_theta) > cfg.settle_angle or not legs_there:
                calm_since, calm_theta = s.t, s.theta_G
            elif s.t - calm_since >= cfg.settle_time:
                controller.finish_transition(s.t)
                trace.events.append((s.t, "SETTLED"))
                calm_since = None
        while n_log < len(controller.log):
            tl, text = controller.log[n_log]
            trace.events.append((tl, text))
            if "R1" in text.split("->")[1] or "R2" in text.split("->")[1]:
                trace.events.append((tl, "RECOVERY"))
            n_log += 1
        record()
    return trace
