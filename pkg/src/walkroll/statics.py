"""Quasi-static rolling analysis: moment arm, moment fields, J1/J2, thresholds."""

from __future__ import annotations

import itertools
import warnings
import math
from dataclasses import dataclass

import numpy as np

from .geometry import RobotDesign, _check_dphi, _leg_lowest, leg_contact, rot

N_THETA = 720
N_DPHI = 56
SENSOR_BIN = math.pi / 6


def moment_arm(design: RobotDesign, theta_G: float, dphi: float, leg: str,
               refine: bool = True) -> float:
    """Forward component of the vector from the CoM to the queried leg's contact.

    Negative means the contact is behind the CoM and gravity rolls the body
    forward (clockwise).
    """
    _check_dphi(design, dphi)
    c = leg_contact(design, leg, theta_G, dphi, refine)
    G = rot(theta_G) @ design.body.com
    return c.Y - float(G[0])


def _leg_arrays(design: RobotDesign, side: str, theta: np.ndarray, dphi: np.ndarray,
                refine: bool):
    """(arm, Z) arrays of shape (len(theta), len(dphi)) for one leg."""
    leg = design.leg(side)
    psi = theta[:, None] + leg.sign * dphi[None, :]
    key = np.round(psi, 12)
    uniq, inv = np.unique(key.ravel(), return_inverse=True)
    dy, dz, _, _ = _leg_lowest(leg, uniq, refine)
    dy = dy[inv].reshape(psi.shape)
    dz = dz[inv].reshape(psi.shape)
    J = design.body.joint(side)
    G = design.body.com
    c, s = np.cos(theta), np.sin(theta)
    jy, jz = c * J[0] - s * J[1], s * J[0] + c * J[1]
    gy = c * G[0] - s * G[1]
    arm = (jy - gy)[:, None] + dy
    Z = jz[:, None] + dz
    return arm, Z


@dataclass(frozen=True, eq=False)
class MomentField:
    theta_grid: np.ndarray
    dphi_grid: np.ndarray
    arm_front: np.ndarray  # NaN where the rear leg is lower
    arm_rear: np.ndarray   # NaN where the front leg is lower
    argmin_dphi: np.ndarray  # (N_theta,) shared, or (N_theta, 2) front/rear
    argmin_arm: np.ndarray
    shared: bool = True

    @property
    def arm(self) -> np.ndarray:
        """Governing moment arm (whichever leg touches the ground)."""
        return np.fmin(self.arm_front, self.arm_rear)

    @property
    def dphi_range(self) -> tuple[float, float]:
        return float(self.dphi_grid[0]), float(self.dphi_grid[-1])


def _tie_break_argmin(arm: np.ndarray, dphi: np.ndarray) -> np.ndarray:
    """Row-wise argmin; ties go to smallest |dphi|, then smaller dphi."""
    scale = max(float(np.nanmax(np.abs(arm))), 1e-300)
    tol = 1e-9 * scale
    best = np.nanmin(arm, axis=1, keepdims=True)
    cand = arm <= best + tol
    order = np.lexsort((dphi, np.abs(dphi)))  # preference order of columns
    pref = np.empty_like(order)
    pref[order] = np.arange(order.size)
    rank = np.where(cand, pref[None, :], order.size + 1)
    return np.argmin(rank, axis=1)


def build_moment_field(design: RobotDesign, N_theta: int = N_THETA, N_dphi: int = N_DPHI,
                       shared: bool = True, refine: bool = True) -> MomentField:
    if N_theta < 64 or N_dphi < 16:
        raise ValueError("moment field needs N_theta >= 64 and N_dphi >= 16")
    theta = np.linspace(-math.pi, math.pi, N_theta)
    lo, hi = design.dphi_range
    dphi = np.linspace(lo, hi, N_dphi)
    af, zf = _leg_arrays(design, "front", theta, dphi, refine)
    ar, zr = _leg_arrays(design, "rear", theta, dphi, refine)
    # +pi and -pi are the same pose
    for a in (af, zf, ar, zr):
        a[-1] = a[0]

    if shared:
        front_low = (zf < zr - 1e-6) | ((np.abs(zf - zr) <= 1e-6) & (af >= ar))
        arm_f = np.where(front_low, af, np.nan)
        arm_r = np.where(front_low, np.nan, ar)
        gov = np.fmin(arm_f, arm_r)
        j = _tie_break_argmin(gov, dphi)
        rows = np.arange(N_theta)
        return MomentField(theta, dphi, arm_f, arm_r, dphi[j], gov[rows, j], True)

    # independent front/rear schedules: pair every front angle with every rear angle
    zf3, zr3 = zf[:, :, None], zr[:, None, :]
    af3, ar3 = af[:, :, None], ar[:, None, :]
    front_low = (zf3 < zr3 - 1e-6) | ((np.abs(zf3 - zr3) <= 1e-6) & (af3 >= ar3))
    gov = np.where(front_low, af3, ar3).reshape(N_theta, -1)
    jf, jr = np.meshgrid(np.arange(N_dphi), np.arange(N_dphi), indexing="ij")
    jf, jr = jf.ravel(), jr.ravel()
    cost = np.abs(dphi[jf]) + np.abs(dphi[jr])
    scale = max(float(np.abs(gov).max()), 1e-300)
    best = gov.min(axis=1, keepdims=True)
    cand = gov <= best + 1e-9 * scale
    order = np.lexsort((dphi[jr], dphi[jf], cost))
    pref = np.empty_like(order)
    pref[order] = np.arange(order.size)
    k = np.argmin(np.where(cand, pref[None, :], order.size + 1), axis=1)
    rows = np.arange(N_theta)
    # per-leg maps: best arm over partner angles among pairs that leg governs
    g3 = gov.reshape(N_theta, N_dphi, N_dphi)
    with np.errstate(invalid="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        arm_f = np.nanmin(np.where(front_low, g3, np.nan), axis=2)
        arm_r = np.nanmin(np.where(front_low, np.nan, g3), axis=1)
    argmin = np.column_stack((dphi[jf[k]], dphi[jr[k]]))
    return MomentField(theta, dphi, arm_f, arm_r, argmin, gov[rows, k], False)


def eval_J1(field: MomentField) -> float:
    """Integral of the best achievable moment arm over a full revolution (m*rad)."""
    return float(np.trapezoid(field.argmin_arm, field.theta_grid))


def deadband_variation(y: np.ndarray, band: float) -> float:
    """Total variation of ``y`` ignoring back-and-forth moves no larger than ``band``.

    A reference level follows the signal only once it has moved more than
    ``band`` away; the last residual is added so monotone runs count in full.
    """
    y = np.asarray(y, dtype=float)
    ref, tv = float(y[0]), 0.0
    for v in y[1:]:
        if abs(v - ref) > band:
            tv += abs(v - ref)
            ref = float(v)
    return tv + abs(float(y[-1]) - ref)


def eval_J2(field: MomentField) -> float:
    """Total variation of the J1-optimal leg schedule (rad).

    Flicker between neighbouring leg-grid columns, where the arm is flat in
    the leg angle, is grid noise: it is filtered with a band of 1.5 grid steps
    so that the result converges under refinement.
    """
    d = field.argmin_dphi.reshape(field.argmin_dphi.shape[0], -1)
    band = 1.5 * float(field.dphi_grid[1] - field.dphi_grid[0])
    return float(sum(deadband_variation(d[:, i], band) for i in range(d.shape[1])))


@dataclass(frozen=True)
class DesignScore:
    J1: float
    J2: float
    max_leg_radius: float

    def __post_init__(self):
        if self.J2 < 0 or self.max_leg_radius <= 0:
            raise ValueError("invalid design score")


def score_design(design: RobotDesign, N_theta: int = N_THETA, N_dphi: int = N_DPHI,
                 shared: bool = True) -> DesignScore:
    field = build_moment_field(design, N_theta, N_dphi, shared=shared)
    return DesignScore(eval_J1(field), eval_J2(field), design.max_leg_radius)


@dataclass(frozen=True)
class Trajectory:
    theta: np.ndarray
    dphi: np.ndarray
    arm: np.ndarray
    max_slope: float


def _ramp_max_slope(theta: np.ndarray, y: np.ndarray, window: float, jump: float) -> float:
    """Steepest windowed slope inside continuous stretches of a periodic schedule.

    The schedule is cut wherever consecutive samples differ by more than
    ``jump``: such steps are switching decisions, not motion the legs have to
    track.  Stretches shorter than half a window are ignored.
    """
    th, yy = theta[:-1], y[:-1]  # drop the duplicated +pi sample
    n = th.size
    step = (theta[-1] - theta[0]) / n
    k = max(1, int(round(window / step)))
    cuts = np.flatnonzero(np.abs(np.diff(np.append(yy, yy[0]))) > jump)
    if cuts.size == 0:
        segments = [np.concatenate([yy, yy[:k]])]
    else:
        start = cuts[0] + 1
        yy = np.roll(yy, -start)
        cuts = np.append((cuts - start) % n, n - 1)
        cuts = np.unique(cuts)
        segments, lo = [], 0
        for c in cuts:
            segments.append(yy[lo:c + 1])
            lo = c + 1
    best = 0.0
    for seg in segments:
        if seg.size - 1 < k / 2:
            continue
        kk = min(k, seg.size - 1)
        best = max(best, float(np.max(np.abs(seg[kk:] - seg[:-kk]))) / (kk * step))
    return best


def optimal_trajectory(field: MomentField, window: float = SENSOR_BIN, jump_steps: int = 3) -> Trajectory:
    """Per-angle leg command minimising the moment arm.

    ``max_slope`` is the steepest leg-angle change per body angle over a
    sliding window (default one sensor region) within continuous stretches of
    the schedule; jumps larger than ``jump_steps`` leg-grid steps between
    neighbouring body angles are treated as switches and excluded.
    """
    d = field.argmin_dphi
    grid = field.dphi_grid
    jump = jump_steps * float(grid[1] - grid[0]) + 1e-12
    cols = d.reshape(d.shape[0], -1)
    slope = max(_ramp_max_slope(field.theta_grid, cols[:, i], window, jump) for i in range(cols.shape[1]))
    return Trajectory(field.theta_grid, d, field.argmin_arm, slope)


# ---------------------------------------------------------------------------
# Event thresholds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdSet:
    """Rolling-state boundaries as body angles, plus target leg angles.

    Progress ``p = -theta mod 2*pi`` grows while rolling forward.  State 1 covers
    ``[p31, 2*pi) + [0, p12)``, State 2 ``[p12, p23)``, State 3 ``[p23, p31)``.
    """

    p12: float
    p23: float
    p31: float
    closed: float
    mid: float
    open: float

    def __post_init__(self):
        w = [self.p23 - self.p12, self.p31 - self.p23, 2 * math.pi - self.p31 + self.p12]
        if not 0 <= self.p12 < self.p23 < self.p31 <= 2 * math.pi + 1e-12:
            raise ValueError("thresholds must satisfy 0 <= p12 < p23 < p31 <= 2*pi")
        if min(w) < SENSOR_BIN - 1e-9:
            raise ValueError("every region must span at least pi/6")
        if not self.closed <= self.mid <= self.open:
            raise ValueError("targets must be ordered closed <= mid <= open")

    @property
    def theta_12(self) -> float:
        return -self.p12

    @property
    def theta_23(self) -> float:
        return -self.p23

    @property
    def theta_31(self) -> float:
        return 2 * math.pi - self.p31

    def targets(self, state) -> tuple[float, float]:
        return {
            1: (self.closed, self.closed),
            2: (self.mid, self.closed),
            3: (self.open, self.open),
        }[state]

    def region(self, progress: float) -> int:
        p = progress % (2 * math.pi)
        if self.p12 <= p < self.p23:
            return 2
        if self.p23 <= p < self.p31:
            return 3
        return 1

    def widths(self) -> tuple[float, float, float]:
        return (2 * math.pi - self.p31 + self.p12, self.p23 - self.p12, self.p31 - self.p23)


def progress_of(theta):
    return np.mod(-np.asarray(theta, dtype=float), 2 * math.pi)


def default_thresholds(dphi_range) -> ThresholdSet:
    lo, hi = dphi_range
    return ThresholdSet(math.radians(75), math.radians(135), math.radians(195), lo, 0.5 * (lo + hi), hi)


def boundary_candidates(bin_width: float = SENSOR_BIN) -> np.ndarray:
    """Sensor bin edges in progress terms (bins are centred on multiples of bin_width)."""
    n = int(round(2 * math.pi / bin_width))
    return (np.arange(n) + 0.5) * bin_width


def _partitions(cands: np.ndarray, min_width: float):
    for a, b, c in itertools.combinations(cands, 3):
        if b - a >= min_width - 1e-9 and c - b >= min_width - 1e-9 and 2 * math.pi - c + a >= min_width - 1e-9:
            yield a, b, c


def command_quality(field: MomentField, p12, p23, p31, j_mid: int):
    """(negative measure, integral) of the governing arm under the quantised schedule."""
    arm = field.arm[:-1]
    th = field.theta_grid[:-1]
    step = (field.theta_grid[-1] - field.theta_grid[0]) / th.size
    p = progress_of(th)
    col = np.where((p >= p12) & (p < p23), j_mid, np.where((p >= p23) & (p < p31), arm.shape[1] - 1, 0))
    a = arm[np.arange(th.size), col]
    return float(np.sum(a < 0) * step), float(np.sum(a) * step)


def select_thresholds(field: MomentField, region_min_width: float = SENSOR_BIN,
                      bin_width: float = SENSOR_BIN) -> ThresholdSet:
    """Three-level quantisation of the optimal schedule.

    Exhaustive over sensor-bin-edge boundaries and grid mid levels; maximises the
    body-angle measure with a negative moment arm, ties broken by the more
    negative integral and then by the earliest candidate.
    """
    if region_min_width < SENSOR_BIN - 1e-12:
        raise ValueError("regions narrower than the sensor resolution")
    lo, hi = field.dphi_range
    if not hi - lo > 1e-9 or field.dphi_grid.size < 3:
        raise ValueError("leg rotation range collapsed; no thresholds possible")
    arm = field.arm[:-1]
    if float(np.nanmax(np.abs(arm))) < 1e-12:
        return default_thresholds((lo, hi))

    th = field.theta_grid[:-1]
    step = (field.theta_grid[-1] - field.theta_grid[0]) / th.size
    p = progress_of(th)
    order = np.argsort(p, kind="stable")
    ps = p[order]
    A = arm[order]
    neg = np.vstack([np.zeros(A.shape[1]), np.cumsum(A < 0, axis=0)])
    tot = np.vstack([np.zeros(A.shape[1]), np.cumsum(A, axis=0)])

    def seg(cum, a, b, j):
        i0, i1 = np.searchsorted(ps, a, "left"), np.searchsorted(ps, b, "left")
        return cum[i1, j] - cum[i0, j]

    last = A.shape[1] - 1
    best = None
    for a, b, c in _partitions(boundary_candidates(bin_width), region_min_width):
        n1 = seg(neg, 0, a, 0) + seg(neg, c, 2 * math.pi + 1, 0)
        t1 = seg(tot, 0, a, 0) + seg(tot, c, 2 * math.pi + 1, 0)
        n3, t3 = seg(neg, b, c, last), seg(tot, b, c, last)
        for j in range(1, last):
            key = (-(n1 + n3 + seg(neg, a, b, j)), t1 + t3 + seg(tot, a, b, j))
            if best is None or key < best[0]:
                best = (key, a, b, c, j)
    _, a, b, c, j = best
    return ThresholdSet(float(a), float(b), float(c), lo, float(field.dphi_grid[j]), hi)
