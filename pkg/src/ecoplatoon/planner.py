"""Long-term leader planning: reference speeds, horizon choice, event triggers and the plan itself.

All step indices here are absolute simulation steps unless a name says
otherwise; the assembled QP works in steps relative to the plan start.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dynamics import AeroConfig, RoadProfile, VehicleParams, VehicleState
from .horizon import HorizonQp, build_horizon_qp
from .qp import NonConvergenceError, QpProblem, SolveResult, SolverConfig, SolverError, SolverState, solve
from .reachability import (
    Option,
    ReachabilityDecision,
    ReachabilityInputs,
    classify,
    platoon_pass_time,
    position_constraints,
    trigger_threshold,
)
from .signal import TrafficLight


class PlanningError(RuntimeError):
    """The long-term problem could not be assembled or solved."""


@dataclass(frozen=True)
class PlannerWeights:
    fuel: float = 0.4
    brake: float = 0.01
    speed: float = 0.7
    position: float = 0.001

    def __post_init__(self) -> None:
        for name in ("fuel", "brake", "speed", "position"):
            if getattr(self, name) < 0:
                raise ValueError(f"planner weight {name} must be nonnegative")
        if self.fuel <= 0:
            raise ValueError("planner weight fuel must be positive")


@dataclass(frozen=True)
class ReferenceSchedule:
    """Shape of the speed reference handed to the long-term problem."""

    cruise_speed: float = 13.3
    below_band_offset: float = 1.0
    above_band_offset: float = 3.0


def reference_speed(
    schedule: ReferenceSchedule,
    k: int,
    start: int,
    horizon: int,
    decision: ReachabilityDecision | None,
    start_speed: float,
) -> float:
    """Reference speed at step ``k`` of a plan that starts at ``start``.

    Without a fresh light decision the reference is the cruise speed. A stop
    decision ramps linearly to zero over the horizon. Otherwise a ramp from the
    start speed toward the band top is capped relative to the band top.
    The middle case uses ``max`` exactly as the schedule is usually printed,
    although ``min`` would look more natural for a vehicle above the band.
    """
    if not start <= k <= start + horizon:
        raise ValueError(f"step {k} outside plan [{start}, {start + horizon}]")
    if decision is None:
        return schedule.cruise_speed
    elapsed = k - start
    if decision.stop_flag == 1:
        return start_speed - start_speed / horizon * elapsed
    lo, hi = decision.speed_band
    ramp = start_speed + elapsed * (hi - start_speed) / horizon
    if start_speed < lo:
        return min(ramp, hi - schedule.below_band_offset)
    if start_speed > hi:
        return max(ramp, hi - schedule.above_band_offset)
    return max(ramp, hi - schedule.below_band_offset)


def planning_horizon(decision: ReachabilityDecision | None, base: int = 64) -> int:
    """Horizon long enough to reach the later light constraint, and never shorter than ``base``."""
    if decision is None:
        return base
    after = position_constraints(decision, 0.0)[1].step
    return max(int(after - decision.trigger_time), base)


@dataclass(frozen=True)
class LightConstraint:
    """Pair of position rows that pin the leader's crossing of one light."""

    light_id: int
    position: float
    before_step: int
    after_step: int
    decision: ReachabilityDecision

    @classmethod
    def from_decision(cls, light_id: int, decision: ReachabilityDecision, position: float) -> "LightConstraint":
        before, after = position_constraints(decision, position)
        k_before, k_after = before.step, after.step
        if k_before == k_after:
            # both rows on one step pin the leader exactly onto the light, which leaves the
            # recorded crossing step to solver rounding. Split them so the crossing step lies
            # strictly after the window opens: the opening step itself still shows red.
            if k_after > decision.window[0] + 1e-9:
                k_before -= 1
            else:
                k_after += 1
        return cls(light_id, position, k_before, k_after, decision)

    def bounds(self, start: int, horizon: int, margin: float) -> tuple[dict[int, float], dict[int, float]]:
        """Relative-step upper and lower position bounds that fall inside the horizon."""
        m = margin if self.after_step > self.before_step else 0.0
        upper, lower = {}, {}
        mu1, mu2 = self.before_step - start, self.after_step - start
        if 1 <= mu1 <= horizon:
            upper[mu1] = self.position - m
        if 1 <= mu2 <= horizon:
            lower[mu2] = self.position + m
        return upper, lower


@dataclass
class PlanProfile:
    start: int
    horizon: int
    speeds: np.ndarray
    positions: np.ndarray
    tractions: np.ndarray
    brakes: np.ndarray
    primal: np.ndarray = field(repr=False)
    iterations: int = 0
    light_id: int | None = None
    stop_flag: int | None = None
    option: Option | None = None
    relinearizations: int = 0
    dt: float = 1.0

    def __post_init__(self) -> None:
        K = self.horizon
        if self.speeds.shape != (K + 1,) or self.positions.shape != (K + 1,):
            raise ValueError("plan state sequences need horizon + 1 entries")
        if self.tractions.shape != (K,) or self.brakes.shape != (K,):
            raise ValueError("plan control sequences need horizon entries")

    @property
    def end(self) -> int:
        return self.start + self.horizon

    def covers(self, k: int, length: int) -> bool:
        return self.start <= k and k + length <= self.end

    def segment(self, k: int, length: int, extrapolate: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Planned speeds and positions for steps ``k .. k + length``.

        Past the plan end the last speed is held when ``extrapolate`` is set;
        otherwise running off the end is an error.
        """
        if k < self.start:
            raise PlanningError(f"step {k} precedes plan start {self.start}")
        if not extrapolate and k + length > self.end:
            raise PlanningError(f"plan ends at {self.end}, need data up to {k + length}")
        idx = np.arange(k, k + length + 1) - self.start
        inside = np.minimum(idx, self.horizon)
        v = self.speeds[inside]
        s = self.positions[inside]
        over = idx - inside
        return v.copy(), s + over * self.speeds[-1] * self.dt

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "speed", "position", "traction", "brake"])
        for j in range(self.horizon + 1):
            ft = self.tractions[j] if j < self.horizon else ""
            fb = self.brakes[j] if j < self.horizon else ""
            w.writerow([self.start + j, repr(float(self.speeds[j])), repr(float(self.positions[j])),
                        "" if ft == "" else repr(float(ft)), "" if fb == "" else repr(float(fb))])
        return buf.getvalue()


def assemble_long_term(
    params: VehicleParams,
    aero: AeroConfig,
    road: RoadProfile,
    state: VehicleState,
    start: int,
    horizon: int,
    weights: PlannerWeights,
    v_ref: Sequence[float],
    v_max: float,
    dt: float,
    constraints: Sequence[LightConstraint] = (),
    light_margin: float = 0.0,
    gravity_mass_scaling: bool = True,
    prune: bool = True,
) -> HorizonQp:
    """Build the long-term QP with time measured from ``start``.

    The position reference pulls toward ``s(0) + k * v_max * dt``.
    """
    K = horizon
    v_ref = np.asarray(v_ref, dtype=float)
    if v_ref.shape != (K + 1,):
        raise PlanningError(f"speed reference needs {K + 1} entries, got {v_ref.shape}")
    upper = np.full(K + 1, math.inf)
    lower = np.full(K + 1, -math.inf)
    for con in constraints:
        if con.after_step - start > K:
            raise PlanningError(
                f"light {con.light_id} constraint at step {con.after_step} lies beyond horizon end {start + K}"
            )
        up, lo = con.bounds(start, K, light_margin)
        for k, b in up.items():
            upper[k] = min(upper[k], b)
        for k, b in lo.items():
            lower[k] = max(lower[k], b)
    s_star = state.position + np.arange(K + 1) * v_max * dt
    return build_horizon_qp(
        params,
        aero,
        road,
        state,
        dt,
        K,
        speed_terms=[(weights.speed, v_ref)],
        position_terms=[(weights.position, s_star)],
        fuel_weight=weights.fuel,
        brake_weight=weights.brake,
        v_max=v_max,
        upper_pos=upper,
        lower_pos=lower,
        gravity_mass_scaling=gravity_mass_scaling,
        prune=prune,
    )


def _warm_start(hq: HorizonQp, previous: PlanProfile | None, start: int) -> np.ndarray:
    if previous is None or start < previous.start:
        return hq.hold_speed_start()
    shift = start - previous.start
    K = hq.horizon
    ft = np.zeros(K)
    fb = np.zeros(K)
    tail = previous.tractions[shift:], previous.brakes[shift:]
    n = min(K, tail[0].size)
    if n == 0:
        return hq.hold_speed_start()
    ft[:n], fb[:n] = tail[0][:n], tail[1][:n]
    ft[n:], fb[n:] = tail[0][n - 1], tail[1][n - 1]
    return hq.rollout(ft, fb)


def solve_with_relinearization(
    problem: QpProblem,
    solver: SolverConfig,
    z0: np.ndarray,
    refresh_iterations: int = 60,
    max_passes: int = 8,
    accept_tol: float = 1e-3,
) -> tuple[SolveResult, int]:
    """Solve a problem whose equality rows depend on ``z``.

    First the plain iteration runs, refreshing the rows every step, for at
    most ``refresh_iterations``. Near a grade discontinuity that iteration
    can cycle, since no exactly consistent point may exist. If it does, the
    rows are frozen at the current iterate, the fixed QP is solved, the rows
    are rebuilt at its solution, and this repeats. A pass whose rebuilt rows
    hold to ``solver.tol`` is returned at once; otherwise the best pass is
    returned if its violation is below ``accept_tol``.

    Returns the result and the number of frozen passes used.
    """
    try:
        first = replace(solver, max_iter=min(solver.max_iter, refresh_iterations))
        return solve(problem, first, SolverState.initial(problem, z0)), 0
    except NonConvergenceError as exc:
        z = exc.state.primal
    best: tuple[float, SolveResult, int] | None = None
    for n_pass in range(1, max_passes + 1):
        fixed = replace(problem.refreshed(z), refresh=None)
        result = solve(fixed, solver, SolverState.initial(fixed, z))
        z = result.z
        E, d = problem.refresh(z)
        violation = float(np.max(np.abs(E @ z - d), initial=0.0))
        if violation < solver.tol:
            return result, n_pass
        if best is None or violation < best[0]:
            best = (violation, result, n_pass)
    if best[0] < accept_tol:
        return best[1], best[2]
    raise NonConvergenceError(
        f"relinearization left a dynamics violation of {best[0]:.2e}", best[1].state, best[0]
    )


def plan(
    params: VehicleParams,
    aero: AeroConfig,
    road: RoadProfile,
    state: VehicleState,
    start: int,
    horizon: int,
    weights: PlannerWeights,
    v_ref: Sequence[float],
    v_max: float,
    dt: float,
    constraints: Sequence[LightConstraint] = (),
    light_margin: float = 0.0,
    solver: SolverConfig = SolverConfig(),
    previous: PlanProfile | None = None,
    gravity_mass_scaling: bool = True,
    refresh_iterations: int = 60,
) -> PlanProfile:
    """Assemble and solve one long-term problem; solver failures surface as :class:`PlanningError`."""
    hq = assemble_long_term(
        params, aero, road, state, start, horizon, weights, v_ref, v_max, dt,
        constraints, light_margin, gravity_mass_scaling,
    )
    z0 = _warm_start(hq, previous, start)
    try:
        result, passes = solve_with_relinearization(hq.problem, solver, z0, refresh_iterations)
    except SolverError as exc:
        raise PlanningError(f"long-term solve failed at step {start}: {exc}") from exc
    z = result.z
    profile = PlanProfile(
        start=start,
        horizon=horizon,
        speeds=np.maximum(hq.speeds(z), 0.0),
        positions=hq.positions(z),
        tractions=np.clip(hq.tractions(z), 0.0, params.max_traction),
        brakes=np.clip(hq.brakes(z), 0.0, params.max_brake),
        primal=z,
        iterations=result.iterations,
        relinearizations=passes,
        dt=dt,
    )
    return profile


@dataclass(frozen=True)
class PeriodicReplan:
    pass


@dataclass(frozen=True)
class LightTrigger:
    light_id: int


@dataclass
class TriggerState:
    last_start: int
    last_horizon: int
    margin: int = 12
    fired: set[int] = field(default_factory=set)

    def __post_init__(self) -> None:
        if self.margin < 0 or self.margin > self.last_horizon / 4:
            raise ValueError(f"replan margin {self.margin} must lie in [0, horizon/4 = {self.last_horizon / 4}]")


def should_trigger(
    state: TriggerState,
    t: int,
    leader_position: float,
    lights: Sequence[TrafficLight],
    v_max: float,
    dt: float,
) -> PeriodicReplan | LightTrigger | None:
    """Which replanning event, if any, fires at step ``t``. A light trigger wins over a periodic one."""
    for j, light in enumerate(lights):
        if j in state.fired or leader_position >= light.position:
            continue
        if leader_position >= trigger_threshold(light, v_max, dt):
            return LightTrigger(j)
    if t >= state.last_start + state.last_horizon - state.margin:
        return PeriodicReplan()
    return None


@dataclass(frozen=True)
class PlannerConfig:
    weights: PlannerWeights = PlannerWeights()
    schedule: ReferenceSchedule = ReferenceSchedule()
    base_horizon: int = 64
    replan_margin: int = 12
    light_margin: float = 1.0
    hard_constraints: bool = True
    solver: SolverConfig = SolverConfig()
    refresh_iterations: int = 60

    def __post_init__(self) -> None:
        if self.base_horizon < 4:
            raise ValueError("base_horizon must be >= 4")
        if not 0 <= self.replan_margin <= self.base_horizon / 4:
            raise ValueError("replan_margin must lie in [0, base_horizon/4]")
        if self.light_margin < 0:
            raise ValueError("light_margin must be nonnegative")


@dataclass(frozen=True)
class PlanEvent:
    t: int
    kind: str  # "light" or "periodic"
    light_id: int | None
    horizon: int
    stop_flag: int | None = None
    option: str | None = None
    speed_band: tuple[float, float] | None = None
    iterations: int | None = None
    relinearizations: int = 0
    failed: bool = False
    message: str = ""


class LongTermPlanner:
    """Event-triggered leader planner that keeps light constraints alive across periodic replans.

    With ``hard_constraints`` off it becomes the soft-constraint variant: no
    position rows, and the speed reference is the band top of the latest
    light decision until that light is passed.
    """

    def __init__(
        self,
        config: PlannerConfig,
        params: VehicleParams,
        aero: AeroConfig,
        road: RoadProfile,
        lights: Sequence[TrafficLight],
        v_min: float,
        v_max: float,
        dt: float,
        n_vehicles: int,
        desired_gap: float,
        gravity_mass_scaling: bool = True,
    ):
        self.config = config
        self.params = params
        self.aero = aero
        self.road = road
        self.lights = list(lights)
        self.v_min, self.v_max, self.dt = v_min, v_max, dt
        self.pass_time = platoon_pass_time(n_vehicles, desired_gap, v_min, v_max, dt)
        self.gravity_mass_scaling = gravity_mass_scaling
        self.trigger = TriggerState(0, config.base_horizon, config.replan_margin)
        self.current: PlanProfile | None = None
        self.pending: list[LightConstraint] = []
        self.needs_replan = True

    def _drop_passed(self, position: float) -> None:
        self.pending = [c for c in self.pending if position < c.position]

    def _reference(self, t: int, K: int, speed: float, fresh: ReachabilityDecision | None) -> np.ndarray:
        ks = range(t, t + K + 1)
        if not self.config.hard_constraints:
            band_top = next((c.decision.speed_band[1] for c in self.pending if c.decision.stop_flag == 0), None)
            if band_top is not None:
                return np.full(K + 1, band_top)
            if fresh is not None and fresh.stop_flag == 1:
                return np.array([reference_speed(self.config.schedule, k, t, K, fresh, speed) for k in ks])
            return np.full(K + 1, self.config.schedule.cruise_speed)
        return np.array([reference_speed(self.config.schedule, k, t, K, fresh, speed) for k in ks])

    def update(self, t: int, leader: VehicleState, light_clocks: Sequence[int]) -> PlanEvent | None:
        """Replan if a trigger fires at step ``t``; return a record of what happened."""
        self._drop_passed(leader.position)
        lights = [TrafficLight(l.position, l.red_duration, l.green_duration, c) for l, c in zip(self.lights, light_clocks)]
        event = should_trigger(self.trigger, t, leader.position, lights, self.v_max, self.dt)
        if event is None and not self.needs_replan:
            return None
        decision = None
        light_id = None
        if isinstance(event, LightTrigger):
            light_id = event.light_id
            self.trigger.fired.add(light_id)
            light = lights[light_id]
            decision = classify(
                ReachabilityInputs(
                    distance=light.position - leader.position,
                    leader_speed=leader.speed,
                    light=light,
                    v_min=self.v_min,
                    v_max=self.v_max,
                    pass_time=self.pass_time,
                    max_accel=self.params.max_traction / self.params.mass,
                    dt=self.dt,
                    now=t,
                )
            )
            self.pending = [c for c in self.pending if c.light_id != light_id]
            self.pending.append(LightConstraint.from_decision(light_id, decision, light.position))
        K = self.config.base_horizon
        if decision is not None:
            K = planning_horizon(decision, self.config.base_horizon)
        if self.config.hard_constraints:
            for con in self.pending:
                K = max(K, con.after_step - t)
        constraints = self.pending if self.config.hard_constraints else ()
        v_ref = self._reference(t, K, leader.speed, decision)
        kind = "light" if light_id is not None else "periodic"
        try:
            profile = plan(
                self.params, self.aero, self.road, leader, t, K, self.config.weights, v_ref, self.v_max, self.dt,
                constraints, self.config.light_margin, self.config.solver, self.current, self.gravity_mass_scaling,
                self.config.refresh_iterations,
            )
        except PlanningError as exc:
            self.needs_replan = True
            return PlanEvent(t, kind, light_id, K, decision and decision.stop_flag,
                             decision and decision.option.value, None, None, 0, True, str(exc))
        if decision is not None:
            profile.light_id, profile.stop_flag, profile.option = light_id, decision.stop_flag, decision.option
        self.current = profile
        self.trigger.last_start, self.trigger.last_horizon = t, K
        self.needs_replan = False
        return PlanEvent(
            t, kind, light_id, K,
            decision.stop_flag if decision else None,
            decision.option.value if decision else None,
            decision.speed_band if decision else None,
            profile.iterations,
            profile.relinearizations,
        )
