"""Fixed-point solver for the discounted algebraic Riccati equation.

For a discount factor gamma in [0, 1) the value matrix P solves

    P = gamma A'PA - gamma^2 A'PB (R + gamma B'PB)^{-1} B'PA + Q

and the optimal linear gain is K* = -gamma (R + gamma B'PB)^{-1} B'PA.
The solver iterates the right-hand side from P0 = Q, which is a monotone
contraction for gamma < 1 whenever (A, B) is controllable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DareConvergenceError, RepresentationError
from .policies import PolicyClass, probe_grid
from .problem import InitialDistribution, LqrProblem

RESIDUAL_TOL = 1e-12
MAX_ITERS = 1_000_000


@dataclass(frozen=True)
class DareSolution:
    """Converged value matrix, optimal gain, and achieved residual."""

    P: np.ndarray
    K_star: np.ndarray
    gamma: float
    residual: float
    iterations: int


def _dare_rhs(problem: LqrProblem, P: np.ndarray, gamma: float) -> np.ndarray:
    A, B, Q, R = problem.A, problem.B, problem.Q, problem.R
    BtPB = B.T @ P @ B
    BtPA = B.T @ P @ A
    inner = R + gamma * BtPB
    try:
        sol = np.linalg.solve(inner, BtPA)
    except np.linalg.LinAlgError as exc:
        raise DareConvergenceError(
            "singular inner matrix R + gamma B'PB", residual=np.inf,
            gamma=gamma,
        ) from exc
    return gamma * A.T @ P @ A - gamma**2 * A.T @ P @ B @ sol + Q


def gain_from_value(problem: LqrProblem, P: np.ndarray,
                    gamma: float) -> np.ndarray:
    """K* = -gamma (R + gamma B'PB)^{-1} B'PA."""
    A, B, R = problem.A, problem.B, problem.R
    inner = R + gamma * B.T @ P @ B
    return -gamma * np.linalg.solve(inner, B.T @ P @ A)


def solve_dare(problem: LqrProblem, gamma: float,
               P0: np.ndarray | None = None,
               tol: float = RESIDUAL_TOL,
               max_iters: int = MAX_ITERS) -> DareSolution:
    """Solve the discounted Riccati equation by fixed-point iteration.

    gamma = 1 (the undiscounted equation) is accepted; the iteration then
    converges only for stabilizable and detectable systems and otherwise
    raises DareConvergenceError.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    P = problem.Q.copy() if P0 is None else np.asarray(P0, dtype=float).copy()
    residual = np.inf
    for it in range(1, max_iters + 1):
        P_next = _dare_rhs(problem, P, gamma)
        residual = float(np.max(np.abs(P_next - P)))
        P = P_next
        if residual <= tol:
            K = gain_from_value(problem, P, gamma)
            P.setflags(write=False)
            K.setflags(write=False)
            return DareSolution(P=P, K_star=K, gamma=gamma,
                                residual=residual, iterations=it)
    raise DareConvergenceError(
        f"Riccati fixed point did not reach residual {tol:g} in "
        f"{max_iters} iterations", residual=residual, gamma=gamma,
    )


def dare_residual(problem: LqrProblem, P: np.ndarray, gamma: float) -> float:
    """Max-abs defect of P in the discounted Riccati equation."""
    return float(np.max(np.abs(_dare_rhs(problem, P, gamma) - P)))


def optimal_cost(problem: LqrProblem, sol: DareSolution,
                 dist: InitialDistribution) -> float:
    """E[x0' P x0] under the initial distribution."""
    X0, W = dist.support_points()
    quad = np.einsum("bi,ij,bj->b", X0, sol.P, X0)
    return float(W @ quad)


def gamma_sweep(problem: LqrProblem, gammas) -> list[DareSolution]:
    """Solve the discounted equation along a grid, warm-starting each solve."""
    gammas = [float(g) for g in gammas]
    out: list[DareSolution] = []
    P_prev: np.ndarray | None = None
    for g in gammas:
        sol = solve_dare(problem, g, P0=P_prev)
        out.append(sol)
        P_prev = sol.P
    return out


def optimal_theta(pclass: PolicyClass, sol: DareSolution,
                  tol: float = 1e-8) -> np.ndarray:
    """Coefficients representing x -> K* x exactly in the policy class.

    Solves a least-squares fit of the features to the linear gain on a
    probe grid and demands an essentially zero residual; classes that
    cannot represent the gain raise RepresentationError.
    """
    n, m = pclass.n, pclass.m
    K = np.asarray(sol.K_star)
    if K.shape != (m, n):
        raise RepresentationError(
            f"gain shape {K.shape} does not match policy class ({m}, {n})"
        )
    X = probe_grid(n, max(20, 10 * pclass.d))
    Phi = pclass.feature_matrix(X).reshape(-1, pclass.d)
    target = (X @ K.T).reshape(-1)
    theta, *_ = np.linalg.lstsq(Phi, target, rcond=None)
    resid = float(np.max(np.abs(Phi @ theta - target)))
    if resid > tol:
        raise RepresentationError(
            f"policy class cannot represent the optimal gain "
            f"(fit residual {resid:.3e} > {tol:g})"
        )
    return theta
