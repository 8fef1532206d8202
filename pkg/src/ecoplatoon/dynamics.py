"""Longitudinal vehicle model: kinematics, environment forces and fuel rate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

GRAVITY = 9.81


class DomainError(ValueError):
    """Raised when an input lies outside the physical domain of the model."""


class ContractError(ValueError):
    """Raised when a caller violates an operation's precondition."""


@dataclass(frozen=True)
class FuelCoeffs:
    """Coefficients of the quadratic fuel-rate polynomial in (traction, speed).

    The rate is ``[F v] quad [F v]^T + lin . [F v] + const`` in 1e-6 kg/s.
    """

    quad: np.ndarray
    lin: np.ndarray
    const: float = 0.0

    def __post_init__(self) -> None:
        quad = np.asarray(self.quad, dtype=float).reshape(2, 2)
        lin = np.asarray(self.lin, dtype=float).reshape(2)
        object.__setattr__(self, "quad", quad)
        object.__setattr__(self, "lin", lin)
        if not (np.all(np.isfinite(quad)) and np.all(np.isfinite(lin)) and math.isfinite(self.const)):
            raise DomainError("fuel coefficients must be finite")
        if not math.isclose(quad[0, 1], quad[1, 0], rel_tol=1e-12, abs_tol=0.0):
            raise DomainError("fuel quadratic coefficients must be symmetric")
        if np.min(np.linalg.eigvalsh(quad)) < -1e-15:
            raise DomainError("fuel quadratic coefficients must be positive semidefinite")

    @classmethod
    def from_tire_radius(cls, radius: float) -> "FuelCoeffs":
        """Regression coefficients scaled by tire radius (passenger-car fit)."""
        o12 = 8.6815e-6 / radius
        quad = np.array([[1.8085e-4 / radius, o12], [o12, 5.4479e-6 / radius**2]])
        return cls(quad=quad, lin=np.array([0.0, 1.1046e-2 / radius]), const=0.0)


@dataclass(frozen=True)
class VehicleParams:
    mass: float
    rolling_coeff: float
    face_area: float
    max_traction: float
    max_brake: float
    fuel_coeffs: FuelCoeffs
    tire_radius: float | None = None

    def __post_init__(self) -> None:
        if self.mass <= 0:
            raise DomainError("mass must be positive")
        if self.face_area <= 0:
            raise DomainError("face_area must be positive")
        if self.max_traction <= 0 or self.max_brake <= 0:
            raise DomainError("force limits must be positive")
        if not 0.0 <= self.rolling_coeff <= 0.1:
            raise DomainError("rolling_coeff must lie in [0, 0.1]")


@dataclass(frozen=True)
class AeroConfig:
    drag_coeff: float = 0.36
    air_density: float = 1.205
    alpha: float = 0.414
    beta: float = 41.29
    gravity: float = GRAVITY

    def __post_init__(self) -> None:
        for name in ("drag_coeff", "air_density", "alpha", "beta", "gravity"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")


@dataclass(frozen=True)
class VehicleState:
    speed: float
    position: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.speed) and math.isfinite(self.position)):
            raise DomainError("state must be finite")
        if self.speed < 0:
            raise DomainError("speed must be nonnegative")


@dataclass(frozen=True)
class RoadSegment:
    """Slope on ``[start, end)`` given by polynomial coefficients in s (lowest order first)."""

    start: float
    end: float
    slope_poly: tuple[float, ...]

    def slope(self, s: float) -> float:
        value = 0.0
        for c in reversed(self.slope_poly):
            value = value * s + c
        return value


@dataclass(frozen=True)
class RoadProfile:
    segments: tuple[RoadSegment, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise DomainError("road profile needs at least one segment")
        if segs[0].start != 0.0:
            raise DomainError("road profile must start at s = 0")
        for a, b in zip(segs, segs[1:]):
            if a.end != b.start:
                raise DomainError(f"road segments not contiguous at s = {a.end}")
            if not a.start < a.end:
                raise DomainError("road segments must have positive length")
        if segs[-1].end != math.inf:
            raise DomainError("last road segment must extend to infinity")
        object.__setattr__(self, "_starts", np.array([seg.start for seg in segs]))
        degree = max(len(seg.slope_poly) for seg in segs)
        table = np.zeros((len(segs), degree))
        for i, seg in enumerate(segs):
            table[i, : len(seg.slope_poly)] = seg.slope_poly
        object.__setattr__(self, "_poly_table", table)

    def slope(self, s: float) -> float:
        """Road slope angle (rad) at position ``s``; positions below 0 use the first segment."""
        idx = int(np.searchsorted(self._starts, s, side="right")) - 1
        return self.segments[max(idx, 0)].slope(s)

    def slopes(self, s: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`slope`."""
        s = np.asarray(s, dtype=float)
        idx = np.maximum(np.searchsorted(self._starts, s, side="right") - 1, 0)
        coeffs = self._poly_table[idx]
        out = coeffs[..., -1].copy()
        for j in range(coeffs.shape[-1] - 2, -1, -1):
            out = out * s + coeffs[..., j]
        return out

    @classmethod
    def flat(cls) -> "RoadProfile":
        return cls((RoadSegment(0.0, math.inf, (0.0,)),))

    @classmethod
    def paper_sec5(cls) -> "RoadProfile":
        # Derivative of the piecewise height profile. Segments are half-open
        # [start, end); the slope is discontinuous at 200 and 500 and is kept so.
        return cls(
            (
                RoadSegment(0.0, 200.0, (1e-2, -1e-4)),
                RoadSegment(200.0, 300.0, (-0.1, 1 / 2500)),
                RoadSegment(300.0, 500.0, (2 / 25, -1 / 5000)),
                RoadSegment(500.0, math.inf, (0.1,)),
            )
        )

    def to_dict(self) -> list[dict]:
        return [
            {"start": seg.start, "end": None if math.isinf(seg.end) else seg.end, "slope_poly": list(seg.slope_poly)}
            for seg in self.segments
        ]

    @classmethod
    def from_dict(cls, data: Sequence[dict]) -> "RoadProfile":
        return cls(
            tuple(
                RoadSegment(
                    float(d["start"]),
                    math.inf if d.get("end") is None else float(d["end"]),
                    tuple(float(c) for c in d["slope_poly"]),
                )
                for d in data
            )
        )


def drag_multiplier(aero: AeroConfig, gap: float) -> float:
    """Platoon air-drag reduction factor, clamped to at most 1."""
    return min(1.0, 1.0 + (aero.alpha * gap - aero.beta) / 100.0)


def air_drag_coefficient(aero: AeroConfig, params: VehicleParams, gap: float | None = None) -> float:
    """Quadratic air-drag coefficient (kg/m); ``gap`` is None for the leader."""
    base = 0.5 * aero.drag_coeff * aero.air_density * params.face_area
    if gap is None:
        return base
    if gap <= 0:
        raise DomainError(f"non-positive gap {gap} (collision state)")
    return base * drag_multiplier(aero, gap)


def grade_force(
    aero: AeroConfig, params: VehicleParams, position: float, road: RoadProfile, gravity_mass_scaling: bool = True
) -> float:
    """Gravity plus rolling resistance at ``position`` (no air drag)."""
    theta = road.slope(position)
    scale = params.mass if gravity_mass_scaling else 1.0
    return scale * aero.gravity * (math.sin(theta) + params.rolling_coeff * math.cos(theta))


def grade_forces(
    aero: AeroConfig, params: VehicleParams, positions: np.ndarray, road: RoadProfile, gravity_mass_scaling: bool = True
) -> np.ndarray:
    theta = road.slopes(positions)
    scale = params.mass if gravity_mass_scaling else 1.0
    return scale * aero.gravity * (np.sin(theta) + params.rolling_coeff * np.cos(theta))


def environment_resistance(
    aero: AeroConfig,
    params: VehicleParams,
    state: VehicleState,
    road: RoadProfile,
    drag_coeff: float,
    gravity_mass_scaling: bool = True,
) -> float:
    return grade_force(aero, params, state.position, road, gravity_mass_scaling) + drag_coeff * state.speed**2


@dataclass(frozen=True)
class StepResult:
    state: VehicleState
    acceleration: float
    clamped: bool


def step(
    params: VehicleParams,
    state: VehicleState,
    traction: float,
    brake: float,
    env_force: float,
    dt: float,
    force_tol: float = 1e-6,
) -> StepResult:
    """Advance one sample; negative speeds are clamped to zero and flagged."""
    if not -force_tol <= traction <= params.max_traction + force_tol:
        raise ContractError(f"traction {traction} outside [0, {params.max_traction}]")
    if not -force_tol <= brake <= params.max_brake + force_tol:
        raise ContractError(f"brake {brake} outside [0, {params.max_brake}]")
    a = (traction - brake - env_force) / params.mass
    v_next = state.speed + a * dt
    s_next = state.position + state.speed * dt + 0.5 * a * dt * dt
    clamped = v_next < 0.0
    if clamped:
        v_next = 0.0
    return StepResult(VehicleState(v_next, s_next), a, clamped)


def fuel_rate(coeffs: FuelCoeffs, traction: float, speed: float) -> float:
    """Fuel consumption rate in 1e-6 kg/s."""
    x = np.array([traction, speed])
    return float(x @ coeffs.quad @ x + coeffs.lin @ x + coeffs.const)
