"""Assembly of the finite-horizon vehicle QP in compact ``(H, b, c, G, h, E, d)`` form.

Decision vector layout for a horizon of N steps::

    z = [F_T(0), F_B(0), v(1), s(1), F_T(1), F_B(1), v(2), s(2), ..., F_T(N-1), F_B(N-1), v(N), s(N)]

The nonlinear dynamics are written as ``x(k+1) = A(x(k)) x(k) + B u(k)``,
where A absorbs air drag through ``v`` and grade/rolling force through
``s``. Positions inside the QP are shifted by ``offset`` so that ``s >= 1``
and the division by ``s`` in A stays well defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import AeroConfig, RoadProfile, VehicleParams, VehicleState, air_drag_coefficient, grade_force, grade_forces
from .qp import QpProblem

# (horizon steps, absolute positions) -> quadratic drag coefficients
DragFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
Term = tuple[np.ndarray, np.ndarray]  # (weights, targets), both of length N + 1

ROWS_PER_STEP = 8


def speed_index(k: int) -> int:
    return 4 * k - 2


def position_index(k: int) -> int:
    return 4 * k - 1


def control_index(k: int) -> int:
    return 4 * k


@dataclass
class HorizonQp:
    """An assembled horizon problem plus what is needed to interpret its solution."""

    problem: QpProblem
    horizon: int
    dt: float
    x0: VehicleState
    offset: float
    params: VehicleParams
    transition: Callable[[float, float, int], np.ndarray] = field(repr=False)

    @property
    def v_idx(self) -> np.ndarray:
        return 4 * np.arange(1, self.horizon + 1) - 2

    @property
    def s_idx(self) -> np.ndarray:
        return 4 * np.arange(1, self.horizon + 1) - 1

    def speeds(self, z: np.ndarray) -> np.ndarray:
        return np.concatenate([[self.x0.speed], z[self.v_idx]])

    def positions(self, z: np.ndarray) -> np.ndarray:
        return np.concatenate([[self.x0.position], z[self.s_idx] - self.offset])

    def tractions(self, z: np.ndarray) -> np.ndarray:
        return z[0::4][: self.horizon].copy()

    def brakes(self, z: np.ndarray) -> np.ndarray:
        return z[1::4][: self.horizon].copy()

    def rollout(self, tractions: Sequence[float], brakes: Sequence[float]) -> np.ndarray:
        """Primal vector consistent with the (nonlinear) dynamics for the given controls."""
        N = self.horizon
        z = np.zeros(4 * N)
        x = np.array([self.x0.speed, self.x0.position + self.offset])
        Bm = input_matrix(self.params.mass, self.dt)
        for k in range(N):
            u = np.array([tractions[k], brakes[k]])
            z[4 * k : 4 * k + 2] = u
            x = self.transition(x[0], x[1], k) @ x + Bm @ u
            z[4 * k + 2 : 4 * k + 4] = x
        return z

    def hold_speed_start(self) -> np.ndarray:
        """Rollout whose controls try to keep the initial speed, clipped to the force limits."""
        N, M = self.horizon, self.params.mass
        z = np.zeros(4 * N)
        x = np.array([self.x0.speed, self.x0.position + self.offset])
        Bm = input_matrix(M, self.dt)
        for k in range(N):
            A = self.transition(x[0], x[1], k)
            # A @ x drifts the speed; push back just enough to hold it
            need = (x[0] - (A @ x)[0]) * M / self.dt
            u = np.array([min(max(need, 0.0), self.params.max_traction), min(max(-need, 0.0), self.params.max_brake)])
            z[4 * k : 4 * k + 2] = u
            x = A @ x + Bm @ u
            x[0] = max(x[0], 0.0)
            z[4 * k + 2 : 4 * k + 4] = x
        return z


def input_matrix(mass: float, dt: float) -> np.ndarray:
    return np.array([[dt / mass, -dt / mass], [0.5 * dt * dt / mass, -0.5 * dt * dt / mass]])


def build_horizon_qp(
    params: VehicleParams,
    aero: AeroConfig,
    road: RoadProfile,
    x0: VehicleState,
    dt: float,
    horizon: int,
    *,
    speed_terms: Sequence[Term] = (),
    position_terms: Sequence[Term] = (),
    fuel_weight: float = 0.0,
    brake_weight: float = 0.0,
    v_max: float,
    upper_pos: np.ndarray | None = None,
    lower_pos: np.ndarray | None = None,
    drag: DragFn | None = None,
    gravity_mass_scaling: bool = True,
    prune: bool = True,
) -> HorizonQp:
    """Assemble the tracking + fuel + brake problem for one vehicle.

    ``upper_pos``/``lower_pos`` are absolute position bounds indexed by horizon
    step 0..N (entry 0 is ignored; use inf/-inf for "none"). With
    ``prune=False`` the always-true padding rows are kept, giving exactly 8
    inequality rows per step.
    """
    N = horizon
    if N < 1:
        raise ValueError("horizon must be >= 1")
    n = 4 * N
    M = params.mass
    offset = max(0.0, 1.0 - x0.position)
    if drag is None:
        xi0 = air_drag_coefficient(aero, params)
        drag = lambda k, s: np.full(np.shape(k), xi0)  # noqa: E731

    def blocks(v: np.ndarray, s_shift: np.ndarray, k: np.ndarray) -> tuple[np.ndarray, ...]:
        s_abs = s_shift - offset
        xi = drag(k, s_abs)
        fe = grade_forces(aero, params, s_abs, road, gravity_mass_scaling)
        s_div = np.maximum(s_shift, 1.0)
        return (
            1.0 - dt / M * xi * v,
            -dt / (M * s_div) * fe,
            dt - dt * dt / (2 * M) * xi * v,
            1.0 - dt * dt / (2 * M * s_div) * fe,
        )

    def transition(v: float, s_shift: float, k: int) -> np.ndarray:
        # scalar twin of blocks(); rollouts call this once per step
        s_abs = s_shift - offset
        xi = float(drag(np.array([k]), np.array([s_abs]))[0])
        fe = grade_force(aero, params, s_abs, road, gravity_mass_scaling)
        s_div = max(s_shift, 1.0)
        return np.array(
            [
                [1.0 - dt / M * xi * v, -dt / (M * s_div) * fe],
                [dt - dt * dt / (2 * M) * xi * v, 1.0 - dt * dt / (2 * M * s_div) * fe],
            ]
        )

    # ---- objective: J = z'Qz + b'z + c, H = 2Q ----
    Q = np.zeros((n, n))
    b = np.zeros(n)
    c = 0.0
    v_idx = 4 * np.arange(1, N + 1) - 2
    s_idx = 4 * np.arange(1, N + 1) - 1

    def add_tracking(terms: Sequence[Term], idx: np.ndarray, x0_val: float, shift: float) -> float:
        const = 0.0
        for weights, targets in terms:
            w = np.broadcast_to(np.asarray(weights, dtype=float), (N + 1,))
            t = np.asarray(targets, dtype=float) + shift
            if t.shape != (N + 1,):
                raise ValueError(f"tracking targets need length {N + 1}, got {t.shape}")
            Q[idx, idx] += w[1:]
            b[idx] += -2.0 * w[1:] * t[1:]
            const += float(np.sum(w[1:] * t[1:] ** 2)) + float(w[0] * (x0_val + shift - t[0]) ** 2)
        return const

    c += add_tracking(speed_terms, v_idx, x0.speed, 0.0)
    c += add_tracking(position_terms, s_idx, x0.position, offset)

    fc = params.fuel_coeffs
    fw = fuel_weight * dt
    (o11, o12), (_, o22) = fc.quad
    ob1, ob2 = fc.lin
    ft_idx = 4 * np.arange(N)
    fb_idx = ft_idx + 1
    Q[ft_idx, ft_idx] += fw * o11
    Q[fb_idx, fb_idx] += brake_weight
    b[ft_idx] += fw * ob1
    # step 0 uses the known current speed
    b[0] += 2.0 * fw * o12 * x0.speed
    c += fw * (o22 * x0.speed**2 + ob2 * x0.speed + fc.const)
    if N > 1:
        vk = v_idx[:-1]  # v(1)..v(N-1) pair with F_T(1)..F_T(N-1)
        fk = ft_idx[1:]
        Q[vk, vk] += fw * o22
        Q[vk, fk] += fw * o12
        Q[fk, vk] += fw * o12
        b[vk] += fw * ob2
        c += fw * fc.const * (N - 1)
    H = 2.0 * Q

    # ---- inequalities, 8 rows per step ----
    G = np.zeros((ROWS_PER_STEP * N, n))
    h = np.zeros(ROWS_PER_STEP * N)
    vcap = max(v_max, x0.speed)
    upper = np.full(N + 1, math.inf) if upper_pos is None else np.asarray(upper_pos, dtype=float)
    lower = np.full(N + 1, -math.inf) if lower_pos is None else np.asarray(lower_pos, dtype=float)
    s0 = x0.position + offset
    for k in range(N):
        r = ROWS_PER_STEP * k
        ft, fb, vi, si = 4 * k, 4 * k + 1, 4 * k + 2, 4 * k + 3
        G[r, ft], h[r] = 1.0, params.max_traction
        G[r + 1, ft] = -1.0
        G[r + 2, fb], h[r + 2] = 1.0, params.max_brake
        G[r + 3, fb] = -1.0
        G[r + 4, vi], h[r + 4] = 1.0, v_max
        G[r + 5, vi] = -1.0
        # redundant reach bound keeps G column full rank
        G[r + 6, si] = 1.0
        h[r + 6] = min(s0 + vcap * (k + 1) * dt, upper[k + 1] + offset)
        if math.isfinite(lower[k + 1]):
            G[r + 7, si], h[r + 7] = -1.0, -(lower[k + 1] + offset)

    # ---- equalities ----
    Bm = input_matrix(M, dt)
    E0 = np.zeros((2 * N, n))
    for k in range(N):
        E0[2 * k : 2 * k + 2, 4 * k : 4 * k + 2] = -Bm
        E0[2 * k : 2 * k + 2, 4 * k + 2 : 4 * k + 4] = np.eye(2)
    x0_vec = np.array([x0.speed, s0])
    d = np.zeros(2 * N)
    d[:2] = transition(x0.speed, s0, 0) @ x0_vec

    ks = np.arange(1, N)
    rows = 2 * ks
    cols = 4 * ks - 2

    def refresh(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        E = E0.copy()
        if N > 1:
            a11, a12, a21, a22 = blocks(z[cols], z[cols + 1], ks)
            E[rows, cols] = -a11
            E[rows, cols + 1] = -a12
            E[rows + 1, cols] = -a21
            E[rows + 1, cols + 1] = -a22
        return E, d

    E_init, _ = refresh(np.zeros(n) + _nominal_primal(N, x0, s0, dt))
    problem = QpProblem(H, b, c, G, h, E_init, d, refresh=refresh)
    if prune:
        problem = problem.pruned()
    return HorizonQp(problem, N, dt, x0, offset, params, transition)


def _nominal_primal(N: int, x0: VehicleState, s0: float, dt: float) -> np.ndarray:
    z = np.zeros(4 * N)
    k = np.arange(1, N + 1)
    z[4 * k - 2] = x0.speed
    z[4 * k - 1] = s0 + x0.speed * k * dt
    return z
