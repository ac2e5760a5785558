"""Event-driven gait controller, PID leg servo and energy accounting."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .statics import ThresholdSet, progress_of

G = 9.81
MOTORS_PER_LEG = 2

ROLLING_STATES = ("1", "2", "3", "R1", "R2")
WALKING_STATES = ("A", "B", "C")
MODES = ("walking", "rolling", "transition")
REASONS = ("rollback", "stall", "angle", "timer", "mode_request")


@dataclass
class PidState:
    kp: float = 8.0
    ki: float = 2.0
    kd: float = 0.05
    i_limit: float = 0.2
    integral: float = 0.0
    prev_error: float | None = None
    output: float = 0.0

    def reset(self) -> None:
        self.integral, self.prev_error, self.output = 0.0, None, 0.0


def pid_update(pid: PidState, target: float, measured: float, dt: float) -> float:
    """One PID tick; returns the saturated duty cycle in [-1, 1]."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    e = target - measured
    if pid.ki > 0:
        lim = pid.i_limit / pid.ki
        pid.integral = min(max(pid.integral + e * dt, -lim), lim)
    deriv = 0.0 if pid.prev_error is None else (e - pid.prev_error) / dt
    pid.prev_error = e
    u = pid.kp * e + pid.ki * pid.integral + pid.kd * deriv
    pid.output = min(max(u, -1.0), 1.0)
    return pid.output


@dataclass
class EnergyLedger:
    """Stall-current energy estimate per motor (front x2, rear x2)."""

    voltage: float = 7.4
    i_max: float = 1.0  # A; assumed, not a measured motor figure
    period: float = 1e-3
    energy: np.ndarray = field(default_factory=lambda: np.zeros(2 * MOTORS_PER_LEG))

    def __post_init__(self):
        if min(self.voltage, self.i_max, self.period) <= 0:
            raise ValueError("ledger parameters must be positive")
        self.energy = np.asarray(self.energy, dtype=float).copy()

    @property
    def total(self) -> float:
        return float(self.energy.sum())


def accumulate_energy(ledger: EnergyLedger, duties, T: float | None = None) -> EnergyLedger:
    T = ledger.period if T is None else T
    d = np.asarray(duties, dtype=float)
    if T < 0 or np.any(d < 0) or np.any(d > 1):
        raise ValueError("duties must lie in [0, 1] and T must be non-negative")
    if d.shape != ledger.energy.shape:
        raise ValueError(f"expected {ledger.energy.size} duties")
    ledger.energy = ledger.energy + d * ledger.voltage * ledger.i_max * T
    return ledger


def cost_of_transport(energy, mass: float, distance: float) -> float:
    """Sum of consumed energy over weight times distance."""
    total = energy.total if isinstance(energy, EnergyLedger) else float(np.sum(energy))
    if distance <= 0:
        raise ValueError("distance must be positive")
    return total / (mass * G * distance)


@dataclass(frozen=True)
class ControllerConfig:
    thresholds: ThresholdSet
    dphi_range: tuple[float, float]
    bin_width: float = math.pi / 6
    rollback_window: float = 0.3
    stall_timeout: float = 0.8
    r1_timeout: float = 1.0
    r1_kick: float = 0.3
    r2_dwell: float = 0.3
    upright_tol: float = math.pi / 12
    dwell_A: float = 0.35
    dwell_B: float = 0.3
    dwell_C: float = 0.35
    walk_open: float | None = None
    walk_closed: float | None = None
    walk_mid: float | None = None
    kp: float = 8.0
    ki: float = 2.0
    kd: float = 0.05
    i_limit: float = 0.2
    voltage: float = 7.4
    i_max: float = 1.0

    def __post_init__(self):
        lo, hi = self.dphi_range
        for v in (self.thresholds.closed, self.thresholds.mid, self.thresholds.open,
                  self.walk_open, self.walk_closed, self.walk_mid):
            if v is not None and not lo - 1e-12 <= v <= hi + 1e-12:
                raise ValueError("target angle outside the leg range")
        if min(self.dwell_A, self.dwell_B, self.dwell_C) <= 0:
            raise ValueError("dwell times must be positive")
        if self.rollback_window <= 0 or self.stall_timeout <= 0:
            raise ValueError("timeouts must be positive")

    @property
    def cycle_time(self) -> float:
        return self.dwell_A + self.dwell_B + self.dwell_C

    def walking_targets(self) -> dict[str, tuple[float, float]]:
        lo, hi = self.dphi_range
        op = hi if self.walk_open is None else self.walk_open
        cl = lo if self.walk_closed is None else self.walk_closed
        mid = 0.5 * (op + cl) if self.walk_mid is None else self.walk_mid
        return {"A": (op, op), "B": (op, cl), "C": (mid, cl)}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["thresholds"] = asdict(self.thresholds)
        d["dphi_range"] = list(self.dphi_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerConfig":
        d = dict(d)
        d["thresholds"] = ThresholdSet(**d["thresholds"])
        d["dphi_range"] = tuple(d["dphi_range"])
        return cls(**d)


class GaitController:
    """Finite-state gait controller.

    Rolling decisions use only the quantised body-angle reading; walking is
    purely time-scheduled.  Every transition is logged as
    ``STATE <from>-><to> reason=<...>``.
    """

    def __init__(self, cfg: ControllerConfig, mode: str = "rolling", t0: float = 0.0):
        if mode not in ("walking", "rolling"):
            raise ValueError("initial mode must be walking or rolling")
        self.cfg = cfg
        self.mode = mode
        self.state = "1" if mode == "rolling" else "A"
        self.entered = t0
        self.pending: str | None = None
        self.log: list[tuple[float, str]] = []
        self.pid = {"front": self._pid(), "rear": self._pid()}
        self._hist: deque[tuple[float, float]] = deque()
        self._last_unwrapped: float | None = None
        self._last_reading: float | None = None
        self._reading_since = t0
        self._exit_3 = math.inf
        self._targets = self._state_targets(self.state)

    def _pid(self) -> PidState:
        c = self.cfg
        return PidState(c.kp, c.ki, c.kd, c.i_limit)

    # -- bookkeeping -----------------------------------------------------
    def _state_targets(self, state: str) -> tuple[float, float]:
        th = self.cfg.thresholds
        if state in ("1", "2", "3"):
            return th.targets(int(state))
        if state in ("R1", "R2"):
            return (th.closed, th.open)
        return self.cfg.walking_targets()[state]

    def _go(self, state: str, t: float, reason: str) -> None:
        assert reason in REASONS
        self.log.append((t, f"STATE {self.state}->{state} reason={reason}"))
        self.state = state
        self.entered = t
        self._targets = self._state_targets(state)
        self._hist.clear()
        self._reading_since = t
        if state == "3" and self._last_unwrapped is not None:
            # unwrapped progress at which State 3 hands over to State 1
            p = self._last_unwrapped
            self._exit_3 = p + ((self.cfg.thresholds.p31 - p) % (2 * math.pi))

    @property
    def targets(self) -> tuple[float, float]:
        return self._targets

    # -- rolling -----------------------------------------------------------
    def _track(self, theta_hat: float, t: float) -> float:
        """Unwrapped forward progress of the readings; updates stall timing."""
        p = float(progress_of(theta_hat))
        if self._last_unwrapped is None:
            u = p
        else:
            k = round((self._last_unwrapped - p) / (2 * math.pi))
            u = p + 2 * math.pi * k
        self._last_unwrapped = u
        # Stall anchor: flicker to an adjacent bin (sensor noise) does not count as motion.
        if self._last_reading is None:
            self._last_reading = theta_hat
        elif abs(math.remainder(theta_hat - self._last_reading, 2 * math.pi)) > 1.5 * self.cfg.bin_width:
            self._last_reading = theta_hat
            self._reading_since = t
        self._hist.append((t, u))
        while self._hist and self._hist[0][0] < t - self.cfg.rollback_window:
            self._hist.popleft()
        return u

    def _rollback(self, u: float) -> bool:
        peak = max(v for _, v in self._hist)
        return peak - u > self.cfg.bin_width + 1e-9

    def _stalled(self, t: float) -> bool:
        return t - max(self._reading_since, self.entered) > self.cfg.stall_timeout

    def _inverted(self, theta_hat: float) -> bool:
        return abs(math.remainder(theta_hat + math.pi, 2 * math.pi)) <= self.cfg.bin_width + 1e-9

    def _upright(self, theta_hat: float) -> bool:
        return abs(math.remainder(theta_hat, 2 * math.pi)) <= self.cfg.upright_tol + 1e-9

    def rolling_update(self, theta_hat: float, t: float) -> tuple[float, float]:
        if self.mode != "rolling":
            raise RuntimeError("rolling_update called outside rolling mode")
        u = self._track(theta_hat, t)
        th = self.cfg.thresholds
        region = th.region(progress_of(theta_hat))
        back = self._rollback(u)
        stall = self._stalled(t)
        s = self.state
        if s == "1":
            if self.pending == "walking" and self._upright(theta_hat):
                self._switch_to_walking(t)
            elif back:
                self._go("R1", t, "rollback")
            elif stall:
                self._go("R2" if self._inverted(theta_hat) else "R1", t, "stall")
            elif region == 2:
                self._go("2", t, "angle")
        elif s == "2":
            if back:
                self._go("1", t, "rollback")
            elif stall:
                self._go("R1", t, "stall")
            elif region == 3:
                self._go("3", t, "angle")
        elif s == "3":
            if back:
                self._go("1", t, "rollback")
            elif region == 1 and u >= self._exit_3 - 1e-12:
                self._go("1", t, "angle")
            elif stall:
                self._go("R2", t, "stall")
        elif s == "R1":
            if t - self.entered >= self.cfg.r1_kick and self._upright(theta_hat):
                self._go("1", t, "angle")
            elif region == 2:
                self._go("2", t, "angle")
            elif t - self.entered > self.cfg.r1_timeout:
                self._go("1", t, "timer")
        elif s == "R2":
            if t - self.entered >= self.cfg.r2_dwell:
                past = region != 3 and self._inverted(theta_hat)
                self._go("3" if region == 3 or past else "1", t, "timer")
                if past:
                    # re-entered beyond the boundary: require one more bin of progress
                    self._exit_3 = u + self.cfg.bin_width
        return self._targets

    # -- walking -----------------------------------------------------------
    def walking_update(self, t: float) -> tuple[float, float]:
        if self.mode != "walking":
            raise RuntimeError("walking_update called outside walking mode")
        dwell = {"A": self.cfg.dwell_A, "B": self.cfg.dwell_B, "C": self.cfg.dwell_C}
        nxt = {"A": "B", "B": "C", "C": "A"}
        while t - self.entered >= dwell[self.state] - 1e-12:
            entered = self.entered + dwell[self.state]
            if self.state == "A" and self.pending == "rolling":
                self._switch_to_rolling(t)
                return self._targets
            self._go(nxt[self.state], t, "timer")
            self.entered = entered
        return self._targets

    # -- modes -------------------------------------------------------------
    def request_mode_change(self, target: str, t: float | None = None) -> str:
        if target not in ("walking", "rolling"):
            raise ValueError(f"unknown mode {target!r}")
        current = "walking" if self.mode in ("walking", "transition") else "rolling"
        if target == current:
            self.pending = None
            return "noop"
        self.pending = target
        if target == "rolling" and self.mode == "walking" and self.state == "A":
            self._switch_to_rolling(self.entered if t is None else t)
            return "switched"
        return "latched"

    def _switch_to_rolling(self, t: float) -> None:
        self.pending = None
        self.mode = "rolling"
        self._last_unwrapped = self._last_reading = None
        self._go("1", t, "mode_request")

    def _switch_to_walking(self, t: float) -> None:
        self.pending = None
        self.mode = "transition"
        self._go("A", t, "mode_request")

    def finish_transition(self, t: float) -> None:
        """Called once the body has settled after a roll-to-walk switch."""
        if self.mode == "transition":
            self.mode = "walking"
            self.entered = t

    def update(self, theta_hat: float, t: float) -> tuple[float, float]:
        if self.mode == "rolling":
            return self.rolling_update(theta_hat, t)
        if self.mode == "walking":
            return self.walking_update(t)
        return self._targets

    def servo(self, measured: tuple[float, float], dt: float) -> tuple[float, float]:
        """PID duty per leg towards the current targets."""
        tf, tr = self._targets
        return (pid_update(self.pid["front"], tf, measured[0], dt),
                pid_update(self.pid["rear"], tr, measured[1], dt))
