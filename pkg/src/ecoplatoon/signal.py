"""Fixed-time traffic lights driven by a cycling clock.

All durations and times are integer sample indices; only the platoon pass
time may be fractional, which makes feasible window ends fractional too.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace


class LightState(enum.Enum):
    RED = "red"
    GREEN = "green"


class InfeasiblePlatoonError(ValueError):
    """The platoon needs longer than a full green phase to clear a light."""


@dataclass(frozen=True)
class TrafficLight:
    position: float
    red_duration: int
    green_duration: int
    clock: int = 0

    def __post_init__(self) -> None:
        if self.red_duration <= 0 or self.green_duration <= 0:
            raise ValueError("light durations must be positive")
        if not 0 <= self.clock < self.cycle:
            raise ValueError(f"clock {self.clock} outside [0, {self.cycle})")

    @property
    def cycle(self) -> int:
        return self.red_duration + self.green_duration


@dataclass(frozen=True)
class GreenWindow:
    start: float
    end: float
    empty: bool = False

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"window start {self.start} after end {self.end}")

    def contains(self, t: float) -> bool:
        return not self.empty and self.start <= t <= self.end


def advance_clock(light: TrafficLight) -> TrafficLight:
    return replace(light, clock=(light.clock + 1) % light.cycle)


def clock_after(light: TrafficLight, steps: int) -> int:
    return (light.clock + steps) % light.cycle


def state_at_clock(clock: int, red_duration: int) -> LightState:
    # The red interval is closed: clock == red_duration is still red.
    return LightState.RED if clock <= red_duration else LightState.GREEN


def light_state(light: TrafficLight) -> LightState:
    return state_at_clock(light.clock, light.red_duration)


def upcoming_green_windows(light: TrafficLight, now: float) -> tuple[GreenWindow, GreenWindow]:
    tau, t_r, c = light.clock, light.red_duration, light.cycle
    second = GreenWindow(now + t_r - tau + c, now - tau + 2 * c)
    if light_state(light) is LightState.RED:
        return GreenWindow(now + t_r - tau, now - tau + c), second
    return GreenWindow(now, now - tau + c), second


def feasible_green_windows(
    light: TrafficLight, now: float, pass_time: float
) -> tuple[GreenWindow, GreenWindow]:
    """Green windows with each end pulled in by the platoon pass time.

    When the current green phase is too short for the platoon to clear, the
    first window is returned as ``empty``.
    """
    if pass_time < 0:
        raise ValueError("pass_time must be nonnegative")
    if pass_time >= light.green_duration:
        raise InfeasiblePlatoonError(
            f"platoon pass time {pass_time} >= green duration {light.green_duration}"
        )
    raw = upcoming_green_windows(light, now)
    out = []
    for w in raw:
        end = w.end - pass_time
        out.append(GreenWindow(w.start, end) if end >= w.start else GreenWindow(w.start, w.start, empty=True))
    return out[0], out[1]
