"""Can the platoon clear an upcoming light on green within the speed limits?

Times are sample indices and speeds are m/s; ``dt`` converts between the two.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .signal import LightState, TrafficLight, light_state


class Option(enum.Enum):
    FIRST_WINDOW = "first_window"
    SECOND_WINDOW = "second_window"
    STOP = "stop"


class ReachabilityError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReachabilityInputs:
    distance: float
    leader_speed: float
    light: TrafficLight
    v_min: float
    v_max: float
    pass_time: float
    max_accel: float
    dt: float = 1.0
    now: float = 0.0

    def __post_init__(self) -> None:
        if self.distance <= 0:
            raise ValueError("distance to light must be positive")
        if not 0 < self.v_min < self.v_max:
            raise ValueError("speed limits must satisfy 0 < v_min < v_max")
        if self.pass_time < 0:
            raise ValueError("pass_time must be nonnegative")


@dataclass(frozen=True)
class ReachabilityDecision:
    stop_flag: int
    option: Option
    trigger_time: float
    distance: float
    speed_band: tuple[float, float] | None = None
    crossing_window: tuple[float, float] | None = None
    stop_window: tuple[float, float] | None = None
    adjust_accel: float | None = None
    adjust_speed: float | None = None

    @property
    def window(self) -> tuple[float, float]:
        """Time window (steps) the leader must reach the stop line in."""
        w = self.crossing_window if self.stop_flag == 0 else self.stop_window
        assert w is not None
        return w


@dataclass(frozen=True)
class PositionConstraint:
    step: int
    sense: str  # "<=" or ">="
    bound: float


def platoon_pass_time(n_vehicles: int, desired_gap: float, v_min: float, v_max: float, dt: float = 1.0) -> float:
    """Estimated time (in samples of ``dt``) for the whole platoon to clear a stop line."""
    if n_vehicles < 1:
        raise ValueError("n_vehicles must be >= 1")
    if desired_gap <= 0:
        raise ValueError("desired_gap must be positive")
    return 2.0 * (n_vehicles - 1) * desired_gap / (v_min + v_max) / dt


def trigger_threshold(light: TrafficLight, v_max: float, dt: float = 1.0) -> float:
    """Leader position at which the planning for ``light`` fires."""
    return light.position - 0.6 * light.cycle * dt * v_max


def feasible_speed_ranges(inp: ReachabilityInputs) -> tuple[tuple[float, float], tuple[float, float]]:
    """Average-speed bands that reach the light inside the first and second feasible windows."""
    light, ell, dt = inp.light, inp.distance, inp.dt
    tau, t_r, c = light.clock, light.red_duration, light.cycle

    def ratio(steps: float) -> float:
        return ell / (steps * dt) if steps > 0 else math.inf

    if light_state(light) is LightState.RED:
        if t_r - tau < 0:
            raise ReachabilityError(f"light flagged red with clock {tau} past red duration {t_r}")
        # clock == t_r: the window opens now, so there is no upper speed bound
        q2 = ratio(t_r - tau)
    else:
        q2 = math.inf
    # an exhausted first window has no admissible speed
    q1 = ratio(c - tau - inp.pass_time)
    q3 = ratio(2 * c - tau - inp.pass_time)
    q4 = ratio(t_r - tau + c)
    return (q1, q2), (q3, q4)


def _band(lo: float, hi: float, v_min: float, v_max: float) -> tuple[float, float] | None:
    lo, hi = max(lo, v_min), min(hi, v_max)
    return (lo, hi) if lo <= hi else None


def adjust_speed(v1: float, accel: float, t_target: float, distance: float) -> float | None:
    """Cruise speed reached by a constant-acceleration phase that covers ``distance`` in ``t_target``.

    Returns None when no admissible root exists.
    """
    # -v^2/(2a) + v (t + v1/a) - v1^2/(2a) - l = 0, scaled by -2a
    b = -2.0 * (accel * t_target + v1)
    cc = v1 * v1 + 2.0 * accel * distance
    disc = b * b - 4.0 * cc
    if disc < 0:
        return None
    sq = math.sqrt(disc)
    best = None
    for root in ((-b - sq) / 2.0, (-b + sq) / 2.0):
        t_adj = (root - v1) / accel
        if not -1e-12 <= t_adj <= t_target + 1e-12:
            continue
        if (accel > 0 and root < v1) or (accel < 0 and root > v1):
            continue
        if best is None or abs(root - v1) < abs(best - v1):
            best = root
    return best


def classify(inp: ReachabilityInputs) -> ReachabilityDecision:
    light, ell, dt, now = inp.light, inp.distance, inp.dt, inp.now
    tau, t_r, c = light.clock, light.red_duration, light.cycle
    stop = ReachabilityDecision(
        stop_flag=1,
        option=Option.STOP,
        trigger_time=now,
        distance=ell,
        stop_window=(now + 2 * c + t_r - tau, now + 3 * c - tau - inp.pass_time),
    )
    (q1, q2), (q3, q4) = feasible_speed_ranges(inp)
    band = _band(q1, q2, inp.v_min, inp.v_max)
    option = Option.FIRST_WINDOW
    if band is None:
        band = _band(q3, q4, inp.v_min, inp.v_max)
        option = Option.SECOND_WINDOW
    if band is None:
        return stop

    lo, hi = band
    v1 = inp.leader_speed
    crossing = (now + ell / (hi * dt), now + ell / (lo * dt))
    if lo <= v1 <= hi:
        return ReachabilityDecision(0, option, now, ell, band, crossing)

    accel = 0.6 * inp.max_accel if v1 < lo else -0.6 * inp.max_accel
    t_target = ell / lo if v1 < lo else ell / hi
    v_adj = adjust_speed(v1, accel, t_target, ell)
    if v_adj is None or not inp.v_min <= v_adj <= inp.v_max:
        return ReachabilityDecision(
            1, Option.STOP, now, ell, stop_window=stop.stop_window, adjust_accel=accel, adjust_speed=v_adj
        )
    return ReachabilityDecision(0, option, now, ell, band, crossing, adjust_accel=accel, adjust_speed=v_adj)


def position_constraints(decision: ReachabilityDecision, light_position: float) -> list[PositionConstraint]:
    """Hard leader-position constraints for the chosen window.

    Window ends are rounded inward: ceil for the "not yet crossed" time and
    floor for the "already crossed" time. If no integer step lies inside the
    window, both constraints share the step nearest its midpoint.
    """
    lo, hi = decision.window
    k_before, k_after = math.ceil(lo - 1e-9), math.floor(hi + 1e-9)
    if k_after < k_before:
        k_before = k_after = round(0.5 * (lo + hi))
    return [
        PositionConstraint(k_before, "<=", light_position),
        PositionConstraint(k_after, ">=", light_position),
    ]
