"""Per-step MPC for the leader (tracks the long-term plan) and followers (track predecessor and leader)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import (
    AeroConfig,
    RoadProfile,
    VehicleParams,
    VehicleState,
    air_drag_coefficient,
    grade_forces,
)
from .horizon import HorizonQp, build_horizon_qp
from .qp import SolverConfig, SolverError, SolverState, solve


@dataclass(frozen=True)
class LeaderWeights:
    speed: float = 2.0
    position: float = 2.0
    fuel: float = 0.1
    brake: float = 0.01
    horizon: int = 12


@dataclass(frozen=True)
class FollowerWeights:
    speed: float = 6.0
    position: float = 6.0
    fuel: float = 0.06
    brake: float = 0.01
    leader_speed: float = 0.0
    leader_position: float = 0.0
    horizon: int = 12


@dataclass(frozen=True)
class ControllerWeights:
    leader: LeaderWeights = LeaderWeights()
    followers: tuple[FollowerWeights, ...] = ()

    def __post_init__(self) -> None:
        groups = [self.leader, *self.followers]
        for i, w in enumerate(groups, start=1):
            for name, value in vars(w).items():
                if value < 0:
                    raise ValueError(f"vehicle {i} weight {name} must be nonnegative")
            if w.horizon < 1:
                raise ValueError(f"vehicle {i} horizon must be >= 1")
        for i in range(1, len(groups)):
            if groups[i].horizon > groups[i - 1].horizon:
                raise ValueError(f"vehicle {i + 1} horizon exceeds its predecessor's")
        if self.followers:
            first = self.followers[0]
            if first.leader_speed != 0 or first.leader_position != 0:
                raise ValueError("vehicle 2 follows the leader directly, so its leader-tracking weights must be 0")


@dataclass(frozen=True)
class PredictionMessage:
    sender: int
    base_time: int
    speeds: np.ndarray
    positions: np.ndarray

    def __post_init__(self) -> None:
        if self.speeds.shape != self.positions.shape or self.speeds.ndim != 1:
            raise ValueError("prediction speeds and positions must be 1-D and equally long")

    @property
    def horizon(self) -> int:
        return self.speeds.size - 1

    def window(self, k: int, length: int, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """Values for steps ``k .. k + length``, holding the last speed past the message end."""
        idx = np.arange(k, k + length + 1) - self.base_time
        if idx[0] < 0:
            raise ValueError(f"message from step {self.base_time} cannot cover step {k}")
        inside = np.minimum(idx, self.horizon)
        over = idx - inside
        return self.speeds[inside].copy(), self.positions[inside] + over * self.speeds[-1] * dt

    def shifted(self, steps: int, dt: float) -> "PredictionMessage":
        v, s = self.window(self.base_time + steps, self.horizon, dt)
        return PredictionMessage(self.sender, self.base_time + steps, v, s)


@dataclass(frozen=True)
class ControlOutput:
    traction: float
    brake: float
    message: PredictionMessage
    flag: str | None = None
    iterations: int = 0


def predict_trajectory(state: VehicleState, accelerations: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Speeds and positions from applying ``accelerations`` one step at a time."""
    a = np.asarray(accelerations, dtype=float)
    v = np.empty(a.size + 1)
    s = np.empty(a.size + 1)
    v[0], s[0] = state.speed, state.position
    for k, ak in enumerate(a):
        v[k + 1] = v[k] + ak * dt
        s[k + 1] = s[k] + v[k] * dt + 0.5 * ak * dt * dt
    return v, s


def _message_from_solution(sender: int, t: int, hq: HorizonQp, z: np.ndarray) -> PredictionMessage:
    # Roll the solved accelerations forward instead of copying the iterate, so the message is
    # kinematically exact even though the dynamics rows only hold to solver tolerance.
    accel = np.diff(hq.speeds(z)) / hq.dt
    v, s = predict_trajectory(hq.x0, accel, hq.dt)
    return PredictionMessage(sender, t, v, s)


def _solve(hq: HorizonQp, solver: SolverConfig, warm: np.ndarray | None):
    z0 = warm if warm is not None and warm.size == hq.problem.n else hq.hold_speed_start()
    return solve(hq.problem, solver, SolverState.initial(hq.problem, z0))


def leader_step(
    t: int,
    params: VehicleParams,
    aero: AeroConfig,
    road: RoadProfile,
    state: VehicleState,
    plan_speeds: np.ndarray,
    plan_positions: np.ndarray,
    weights: LeaderWeights,
    v_max: float,
    dt: float,
    solver: SolverConfig = SolverConfig(),
    previous: ControlOutput | None = None,
    gravity_mass_scaling: bool = True,
) -> ControlOutput:
    """Track the plan segment ``plan_*[0..horizon]`` (entry 0 is step ``t``) and emit a prediction."""
    N = weights.horizon
    hq = build_horizon_qp(
        params, aero, road, state, dt, N,
        speed_terms=[(weights.speed, plan_speeds)],
        position_terms=[(weights.position, plan_positions)],
        fuel_weight=weights.fuel,
        brake_weight=weights.brake,
        v_max=v_max,
        gravity_mass_scaling=gravity_mass_scaling,
    )
    try:
        res = _solve(hq, solver, None)
    except SolverError:
        if previous is None:
            hold = hq.hold_speed_start()
            return ControlOutput(float(hold[0]), float(hold[1]), _message_from_solution(1, t, hq, hold), "solver_failure")
        return ControlOutput(previous.traction, previous.brake, previous.message.shifted(1, dt), "solver_failure")
    z = res.z
    traction = float(np.clip(z[0], 0.0, params.max_traction))
    brake = float(np.clip(z[1], 0.0, params.max_brake))
    return ControlOutput(traction, brake, _message_from_solution(1, t, hq, z), None, res.iterations)


def follower_drag(
    aero: AeroConfig, params: VehicleParams, predecessor_positions: np.ndarray
):
    """Drag coefficient function for the horizon QP using the predecessor's predicted positions."""
    base = air_drag_coefficient(aero, params)

    def drag(k: np.ndarray, s: np.ndarray) -> np.ndarray:
        gap = np.maximum(predecessor_positions[np.asarray(k)] - s, 1e-3)
        return base * np.minimum(1.0, 1.0 + (aero.alpha * gap - aero.beta) / 100.0)

    return drag


def braking_rollout(
    params: VehicleParams,
    aero: AeroConfig,
    road: RoadProfile,
    state: VehicleState,
    steps: int,
    dt: float,
    drag_coeff: float,
    gravity_mass_scaling: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Speeds and positions under full braking and no traction, stopping at zero speed."""
    v = np.empty(steps + 1)
    s = np.empty(steps + 1)
    v[0], s[0] = state.speed, state.position
    for k in range(steps):
        env = grade_forces(aero, params, np.array([s[k]]), road, gravity_mass_scaling)[0] + drag_coeff * v[k] ** 2
        a = (-params.max_brake - env) / params.mass
        if v[k] + a * dt < 0:
            a = -v[k] / dt
        v[k + 1] = v[k] + a * dt
        s[k + 1] = s[k] + v[k] * dt + 0.5 * a * dt * dt
    return v, s


def follower_step(
    index: int,
    t: int,
    params: VehicleParams,
    aero: AeroConfig,
    road: RoadProfile,
    state: VehicleState,
    leader_msg: PredictionMessage,
    predecessor_msg: PredictionMessage,
    weights: FollowerWeights,
    desired_gap: float,
    safe_gap: float,
    v_max: float,
    dt: float,
    solver: SolverConfig = SolverConfig(),
    gravity_mass_scaling: bool = True,
) -> ControlOutput:
    """Vehicle ``index`` (2-based) tracks its predecessor at ``desired_gap`` behind, never closer than ``safe_gap``.

    If full braking cannot keep the safety distance, or the solver fails,
    the follower brakes fully and says so in the output flag.
    """
    if index < 2:
        raise ValueError("followers are numbered from 2")
    N = weights.horizon
    v_pred, s_pred = predecessor_msg.window(t, N, dt)
    v_lead, s_lead = leader_msg.window(t, N, dt)
    upper = s_pred - safe_gap
    upper[0] = np.inf

    gap_now = s_pred[0] - state.position
    drag_now = air_drag_coefficient(aero, params, gap_now) if gap_now > 0 else air_drag_coefficient(aero, params)
    vb, sb = braking_rollout(params, aero, road, state, N, dt, drag_now, gravity_mass_scaling)

    def full_brake(flag: str) -> ControlOutput:
        return ControlOutput(0.0, params.max_brake, PredictionMessage(index, t, vb, sb), flag)

    if np.any(sb[1:] > upper[1:] + 1e-9):
        return full_brake("safety_fallback")

    hq = build_horizon_qp(
        params, aero, road, state, dt, N,
        speed_terms=[(weights.speed, v_pred), (weights.leader_speed, v_lead)],
        position_terms=[
            (weights.position, s_pred - desired_gap),
            (weights.leader_position, s_lead - (index - 1) * desired_gap),
        ],
        fuel_weight=weights.fuel,
        brake_weight=weights.brake,
        v_max=v_max,
        upper_pos=upper,
        drag=follower_drag(aero, params, s_pred),
        gravity_mass_scaling=gravity_mass_scaling,
    )
    try:
        res = _solve(hq, solver, None)
    except SolverError:
        return full_brake("solver_failure")
    z = res.z
    traction = float(np.clip(z[0], 0.0, params.max_traction))
    brake = float(np.clip(z[1], 0.0, params.max_brake))
    return ControlOutput(traction, brake, _message_from_solution(index, t, hq, z), None, res.iterations)


def equilibrium_traction(
    params: VehicleParams, aero: AeroConfig, road: RoadProfile, state: VehicleState, drag_coeff: float,
    gravity_mass_scaling: bool = True,
) -> float:
    """Traction that gives zero acceleration at ``state`` (negative means braking is needed)."""
    env = grade_forces(aero, params, np.array([state.position]), road, gravity_mass_scaling)[0]
    return float(env + drag_coeff * state.speed**2)

