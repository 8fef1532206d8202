"""Convex QP ``min 1/2 z'Hz + b'z + c  s.t.  Gz <= h, Ez = d`` solved by Newton's method on the KKT system.

The equality block may depend on the iterate; a ``refresh`` callback returns
fresh ``(E, d)`` for the current ``z`` at the top of every iteration. Equality
constraints also enter through a quadratic penalty (augmented Lagrangian),
which keeps the reduced Hessian positive definite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError
from scipy.linalg.lapack import dpotrf, dpotrs, dtrtrs

RefreshFn = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray]"]


class SolverError(RuntimeError):
    """Linear algebra breakdown inside the Newton iteration."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NonConvergenceError(SolverError):
    def __init__(self, message: str, state: "SolverState", residual_norm: float):
        super().__init__(message, {"residual_norm": residual_norm})
        self.state = state
        self.residual_norm = residual_norm


@dataclass(frozen=True)
class QpProblem:
    hessian: np.ndarray
    lin: np.ndarray
    const: float = 0.0
    ineq_mat: np.ndarray | None = None
    ineq_rhs: np.ndarray | None = None
    eq_mat: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    refresh: RefreshFn | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        H = np.asarray(self.hessian, dtype=float)
        b = np.asarray(self.lin, dtype=float).ravel()
        n = b.size
        if H.shape != (n, n):
            raise ValueError(f"hessian shape {H.shape} does not match {n} variables")
        G = np.zeros((0, n)) if self.ineq_mat is None else np.asarray(self.ineq_mat, dtype=float).reshape(-1, n)
        h = np.zeros(0) if self.ineq_rhs is None else np.asarray(self.ineq_rhs, dtype=float).ravel()
        E = np.zeros((0, n)) if self.eq_mat is None else np.asarray(self.eq_mat, dtype=float).reshape(-1, n)
        d = np.zeros(0) if self.eq_rhs is None else np.asarray(self.eq_rhs, dtype=float).ravel()
        if h.size != G.shape[0]:
            raise ValueError("inequality rhs length does not match G")
        if d.size != E.shape[0]:
            raise ValueError("equality rhs length does not match E")
        for name, value in (("hessian", H), ("lin", b), ("ineq_mat", G), ("ineq_rhs", h), ("eq_mat", E), ("eq_rhs", d)):
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.lin.size

    @property
    def m_ineq(self) -> int:
        return self.ineq_rhs.size

    @property
    def m_eq(self) -> int:
        return self.eq_rhs.size

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.hessian @ z + self.lin @ z + self.const)

    def with_equalities(self, eq_mat: np.ndarray, eq_rhs: np.ndarray) -> "QpProblem":
        return replace(self, eq_mat=eq_mat, eq_rhs=eq_rhs)

    def refreshed(self, z: np.ndarray) -> "QpProblem":
        if self.refresh is None:
            return self
        E, d = self.refresh(z)
        if E.shape != self.eq_mat.shape or d.shape != self.eq_rhs.shape:
            raise ValueError("refresh changed the equality block dimensions")
        # skip __post_init__: shapes are already known to be consistent
        out = object.__new__(QpProblem)
        out.__dict__.update(self.__dict__)
        out.__dict__["eq_mat"] = E
        out.__dict__["eq_rhs"] = d
        return out

    def pruned(self) -> "QpProblem":
        """Drop inequality rows that read ``0 <= 0`` (structural padding)."""
        keep = np.any(self.ineq_mat != 0.0, axis=1) | (self.ineq_rhs != 0.0)
        if keep.all():
            return self
        return replace(self, ineq_mat=self.ineq_mat[keep], ineq_rhs=self.ineq_rhs[keep])


@dataclass
class SolverState:
    primal: np.ndarray
    eq_mult: np.ndarray
    ineq_mult: np.ndarray
    slack: np.ndarray

    def copy(self) -> "SolverState":
        return SolverState(self.primal.copy(), self.eq_mult.copy(), self.ineq_mult.copy(), self.slack.copy())

    @classmethod
    def initial(cls, problem: QpProblem, z0: np.ndarray | None = None) -> "SolverState":
        z = np.zeros(problem.n) if z0 is None else np.asarray(z0, dtype=float).copy()
        slack = np.maximum(problem.ineq_rhs - problem.ineq_mat @ z, 1.0)
        return cls(z, np.zeros(problem.m_eq), np.ones(problem.m_ineq), slack)


@dataclass(frozen=True)
class SolverConfig:
    penalty: float = 1e4
    tol: float = 1e-6
    boundary_frac: float = 0.995
    centering: float = 0.1
    max_iter: int = 200

    def __post_init__(self) -> None:
        if self.penalty <= 0 or self.tol <= 0:
            raise ValueError("penalty and tol must be positive")
        if not 0 < self.boundary_frac < 1:
            raise ValueError("boundary_frac must lie in (0, 1)")
        if not 0 <= self.centering < 1:
            raise ValueError("centering must lie in [0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class Direction:
    primal: np.ndarray
    eq_mult: np.ndarray
    ineq_mult: np.ndarray
    slack: np.ndarray


@dataclass(frozen=True)
class SolveResult:
    z: np.ndarray
    iterations: int
    residual_norm: float
    state: SolverState
    problem: QpProblem


def _augmented(problem: QpProblem, penalty: float) -> tuple[np.ndarray, np.ndarray]:
    E, d = problem.eq_mat, problem.eq_rhs
    H_bar = problem.hessian + (0.5 * penalty) * (E.T @ E)
    b_bar = problem.lin - penalty * (E.T @ d)
    return H_bar, b_bar


def kkt_residual(
    problem: QpProblem,
    state: SolverState,
    penalty: float = 1e4,
    centering: float = 0.0,
    _augmented_parts: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Stacked KKT residual ``[stationarity; Ez-d; Gz-h+pi; pi*eta - sigma*mu]``."""
    z, lam, eta, pi = state.primal, state.eq_mult, state.ineq_mult, state.slack
    if z.size != problem.n or lam.size != problem.m_eq or eta.size != problem.m_ineq or pi.size != problem.m_ineq:
        raise ValueError("solver state dimensions do not match the problem")
    H_bar, b_bar = _augmented_parts or _augmented(problem, penalty)
    G, E = problem.ineq_mat, problem.eq_mat
    r_z = H_bar @ z + b_bar + E.T @ lam + G.T @ eta
    r_lam = E @ z - problem.eq_rhs
    r_eta = G @ z - problem.ineq_rhs + pi
    r_pi = pi * eta
    if centering and eta.size:
        r_pi = r_pi - centering * float(pi @ eta) / eta.size
    return np.concatenate([r_z, r_lam, r_eta, r_pi])


def newton_direction(
    problem: QpProblem,
    state: SolverState,
    residual: np.ndarray,
    penalty: float = 1e4,
    _H_bar: np.ndarray | None = None,
) -> Direction:
    """Newton step for the KKT residual, by eliminating slack, inequality and primal blocks in turn."""
    n, p, m = problem.n, problem.m_eq, problem.m_ineq
    r = -residual
    r_z, r_lam, r_eta, r_pi = r[:n], r[n : n + p], r[n + p : n + p + m], r[n + p + m :]
    eta, pi = state.ineq_mult, state.slack
    H_bar = _H_bar if _H_bar is not None else _augmented(problem, penalty)[0]
    try:
        return _eliminated_direction(problem, r_z, r_lam, r_eta, r_pi, eta, pi, H_bar)
    except SolverError as exc:
        # near convergence eta/pi can reach 1e15 and break the condensed factorization;
        # the unreduced system has no such ratios
        return _full_direction(problem, r, eta, pi, H_bar, exc)


def _eliminated_direction(problem, r_z, r_lam, r_eta, r_pi, eta, pi, H_bar) -> Direction:
    p = problem.m_eq
    G, E = problem.ineq_mat, problem.eq_mat
    w = eta / pi
    H_breve = H_bar + (G.T * w) @ G
    r_bar = r_z + G.T @ (w * r_eta - r_pi / pi)
    chol = _cholesky(H_breve, "reduced Hessian is not positive definite")
    if p:
        # with H_breve = L L': E H^-1 E' = X'X for X = L^-1 E', and E H^-1 r = X'y for y = L^-1 r
        X = _tri_solve(chol, E.T, trans=0)
        y = _tri_solve(chol, r_bar, trans=0)
        schur_chol = _cholesky(X.T @ X, "equality Schur complement is singular")
        d_lam = _chol_solve(schur_chol, X.T @ y - r_lam)
        d_z = _tri_solve(chol, y - X @ d_lam, trans=1)
    else:
        d_lam = np.zeros(0)
        d_z = _chol_solve(chol, r_bar)
    d_eta = w * (G @ d_z - r_eta) + r_pi / pi
    d_pi = (r_pi - pi * d_eta) / eta
    return Direction(d_z, d_lam, d_eta, d_pi)


def _full_direction(problem, r, eta, pi, H_bar, cause: SolverError) -> Direction:
    n, p, m = problem.n, problem.m_eq, problem.m_ineq
    G, E = problem.ineq_mat, problem.eq_mat
    J = np.zeros((n + p + 2 * m, n + p + 2 * m))
    J[:n, :n] = H_bar
    J[:n, n : n + p] = E.T
    J[:n, n + p : n + p + m] = G.T
    J[n : n + p, :n] = E
    J[n + p : n + p + m, :n] = G
    J[n + p : n + p + m, n + p + m :] = np.eye(m)
    J[n + p + m :, n + p : n + p + m] = np.diag(pi)
    J[n + p + m :, n + p + m :] = np.diag(eta)
    try:
        x = np.linalg.solve(J, r)
    except np.linalg.LinAlgError:
        raise cause from None
    if not np.all(np.isfinite(x)):
        raise cause
    return Direction(x[:n], x[n : n + p], x[n + p : n + p + m], x[n + p + m :])


def _cholesky(mat: np.ndarray, what: str) -> np.ndarray:
    # raw LAPACK: the scipy.linalg wrappers cost more than the factorization at these sizes
    factor, info = dpotrf(mat, lower=True, clean=False)
    if info != 0:
        raise SolverError(what, _diagnostics(mat))
    return factor


def _chol_solve(factor: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    x, info = dpotrs(factor, rhs, lower=True)
    if info != 0:
        raise SolverError("triangular solve failed", {"info": int(info)})
    return x


def _tri_solve(factor: np.ndarray, rhs: np.ndarray, trans: int) -> np.ndarray:
    x, info = dtrtrs(factor, rhs, lower=1, trans=trans)
    if info != 0:
        raise SolverError("triangular solve failed", {"info": int(info)})
    return x


def _diagnostics(mat: np.ndarray) -> dict:
    try:
        eig = np.linalg.eigvalsh(0.5 * (mat + mat.T))
        return {"min_eig": float(eig[0]), "max_eig": float(eig[-1]), "size": mat.shape[0]}
    except LinAlgError:
        return {"size": mat.shape[0]}


def step_length(state: SolverState, direction: Direction, boundary_frac: float) -> float:
    """Largest step in ``(0, boundary_frac]`` that keeps multipliers and slacks positive."""
    vals = np.concatenate([state.ineq_mult, state.slack])
    deltas = np.concatenate([direction.ineq_mult, direction.slack])
    neg = deltas < 0
    if not neg.any():
        return boundary_frac
    with np.errstate(over="ignore"):  # a subnormal delta gives inf, which correctly means no limit
        ratio = float(np.min(-vals[neg] / deltas[neg]))
    return min(boundary_frac, boundary_frac * ratio)


def solve(
    problem: QpProblem,
    config: SolverConfig = SolverConfig(),
    initial: SolverState | None = None,
    trace: list[dict] | None = None,
) -> SolveResult:
    """Run the Newton iteration until the KKT residual norm drops below ``config.tol``.

    The stopping test always uses the unperturbed residual; ``config.centering``
    only shifts the complementarity target used to compute the direction.
    """
    state = (initial or SolverState.initial(problem)).copy()
    if state.ineq_mult.size and (np.any(state.ineq_mult <= 0) or np.any(state.slack <= 0)):
        raise ValueError("initial multipliers and slacks must be strictly positive")
    m = problem.m_ineq
    norm = math.inf
    for it in range(config.max_iter + 1):
        current = problem.refreshed(state.primal)
        parts = _augmented(current, config.penalty)
        F = kkt_residual(current, state, config.penalty, _augmented_parts=parts)
        norm = float(np.linalg.norm(F))
        if not math.isfinite(norm):
            raise SolverError("KKT residual is not finite", {"iteration": it})
        if norm < config.tol:
            return SolveResult(state.primal, it, norm, state, current)
        if it == config.max_iter:
            break
        mu = float(state.slack @ state.ineq_mult) / m if m else 0.0
        if config.centering and m:
            F[-m:] -= config.centering * mu
        direction = newton_direction(current, state, F, config.penalty, _H_bar=parts[0])
        delta = step_length(state, direction, config.boundary_frac)
        state.primal = state.primal + delta * direction.primal
        state.eq_mult = state.eq_mult + delta * direction.eq_mult
        state.ineq_mult = state.ineq_mult + delta * direction.ineq_mult
        state.slack = state.slack + delta * direction.slack
        if trace is not None:
            trace.append({"iter": it, "residual_norm": norm, "step": delta, "mu": mu})
    raise NonConvergenceError(
        f"no convergence after {config.max_iter} iterations (|F| = {norm:.3e})", state, norm
    )
