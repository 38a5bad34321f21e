"""Exact policy gradients, finite-difference oracles, and gradient descent.

The gradient of the truncated discounted cost with respect to the policy
coefficients theta is computed by reverse accumulation through the unrolled
closed loop, batched over all support points of the initial distribution.
At kinks of the basis functions the right-hand derivative is used; states
landing within 1e-9 of a kink are counted so callers can distrust the
gradient there.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, UnstableRolloutError
from .policies import PolicyClass
from .problem import (
    COST_OVERFLOW_GUARD,
    STATE_OVERFLOW_GUARD,
    InitialDistribution,
    LqrProblem,
    default_horizon,
    discounted_cost,
)

KINK_TOL = 1e-9
FD_GRAD_H = 1e-6
FD_HESS_H = 1e-4

# An accepted descent step may not increase the cost by more than this.
DESCENT_SLACK = 1e-10

_MAX_BACKTRACKS = 40


@dataclass(frozen=True)
class GradientReport:
    """Exact gradient of the truncated cost plus diagnostics."""

    grad: np.ndarray
    cost: float
    horizon_used: int
    kink_hits: int


@dataclass(frozen=True)
class PgConfig:
    """Hyperparameters of the inner gradient-descent loop."""

    step_size: float = 1e-3
    grad_tol: float = 1e-4
    max_iters: int = 100_000
    horizon: int | str = "auto"

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.grad_tol < 0:
            raise ValueError("grad_tol must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.horizon != "auto" and int(self.horizon) < 1:
            raise ValueError("horizon must be 'auto' or a positive integer")


@dataclass
class TrainLog:
    """Per-iteration training record for one gradient-descent run."""

    gamma: float
    iters: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    thetas: list = field(default_factory=list)
    tag: str = "running"

    def record(self, it: int, cost: float, grad_norm: float, theta):
        self.iters.append(it)
        self.costs.append(float(cost))
        self.grad_norms.append(float(grad_norm))
        self.thetas.append(np.asarray(theta, dtype=float).copy())

    @property
    def iterations(self) -> int:
        return len(self.iters)

    def csv_rows(self):
        """Rows iter,gamma,cost,grad_norm,theta_0,...,theta_{d-1}."""
        for it, c, g, th in zip(self.iters, self.costs, self.grad_norms,
                                self.thetas):
            yield [it, self.gamma, repr(c), repr(g)] + [repr(v) for v in th]

    def csv_header(self) -> list[str]:
        d = len(self.thetas[0]) if self.thetas else 0
        return ["iter", "gamma", "cost", "grad_norm"] + [
            f"theta_{k}" for k in range(d)
        ]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.csv_header())
            for row in self.csv_rows():
                w.writerow(row)


def _resolve_horizon(problem, policy, dist, gamma, horizon):
    if horizon == "auto" or horizon is None:
        return default_horizon(problem, policy, dist, gamma)
    return int(horizon)


def cost_gradient(problem: LqrProblem, policy, dist: InitialDistribution,
                  gamma: float, T: int | None = None) -> GradientReport:
    """Exact gradient of the truncated cost by reverse accumulation.

    Forward pass unrolls the closed loop from every support point at once;
    the backward pass propagates adjoints through x_{t+1} = A x_t + B u_t
    and accumulates d cost / d theta_k via the feature values at each state.
    """
    pclass: PolicyClass = policy.pclass
    X0, W = dist.support_points()
    T = _resolve_horizon(problem, policy, dist, gamma, T)
    A, B, Q, R = problem.A, problem.B, problem.Q, problem.R

    b = X0.shape[0]
    X = np.empty((T + 1, b, problem.n))
    U = np.empty((T, b, problem.m))
    X[0] = X0
    cost = 0.0
    disc = 1.0
    discounts = np.empty(T)
    for t in range(T):
        U[t] = policy.eval_batch(X[t])
        stage = np.einsum("bi,ij,bj->b", X[t], Q, X[t]) + np.einsum(
            "bi,ij,bj->b", U[t], R, U[t]
        )
        cost += disc * float(W @ stage)
        if cost > COST_OVERFLOW_GUARD or not np.isfinite(cost):
            raise UnstableRolloutError(
                f"unstable policy at gamma={gamma}: cost exceeded guard "
                f"at step {t}", step=t,
            )
        discounts[t] = disc
        disc *= gamma
        X[t + 1] = X[t] @ A.T + U[t] @ B.T
        if not np.all(np.isfinite(X[t + 1])) or (
            np.max(np.abs(X[t + 1])) > STATE_OVERFLOW_GUARD
        ):
            raise UnstableRolloutError(
                f"unstable policy at gamma={gamma}: state overflow at "
                f"step {t + 1}", step=t + 1,
            )

    grad = np.zeros(pclass.d)
    lam = np.zeros((b, problem.n))  # d cost / d x_{t+1}, per support point
    kink_hits = 0
    for t in range(T - 1, -1, -1):
        kink_hits += int(np.sum(pclass.kink_distance(X[t]) <= KINK_TOL))
        g_u = 2.0 * discounts[t] * (U[t] @ R) + lam @ B  # (b, m)
        Phi = pclass.feature_matrix(X[t])  # (b, m, d)
        grad += np.einsum("b,bm,bmd->d", W, g_u, Phi)
        Jpi = policy.jacobian_batch(X[t])  # (b, m, n)
        lam = (
            2.0 * discounts[t] * (X[t] @ Q)
            + lam @ A
            + np.einsum("bmn,bm->bn", Jpi, g_u)
        )
    return GradientReport(grad=grad, cost=cost, horizon_used=T,
                          kink_hits=kink_hits)


def fd_gradient(problem: LqrProblem, policy, dist: InitialDistribution,
                gamma: float, T: int, h: float = FD_GRAD_H) -> np.ndarray:
    """Central finite differences of the truncated cost per coordinate."""
    if h <= 0:
        raise ValueError("h must be positive")
    pclass = policy.pclass
    theta = policy.theta
    grad = np.empty(pclass.d)
    for k in range(pclass.d):
        e = np.zeros(pclass.d)
        e[k] = h
        c_plus = discounted_cost(problem, pclass.policy(theta + e), dist,
                                 gamma, T=T)
        c_minus = discounted_cost(problem, pclass.policy(theta - e), dist,
                                  gamma, T=T)
        grad[k] = (c_plus - c_minus) / (2.0 * h)
    return grad


def pg_inner(problem: LqrProblem, pclass: PolicyClass, theta0,
             dist: InitialDistribution, gamma: float,
             cfg: PgConfig = PgConfig()) -> tuple[np.ndarray, TrainLog]:
    """Gradient descent theta <- theta - step * grad with a descent guard.

    Only strictly cost-decreasing steps are accepted; an uphill step is
    backtracked (the step size is halved). If no strict decrease exists at
    any scale the iterate is a descent fixed point (e.g. a non-smooth local
    minimum, where the gradient norm need not vanish) and the run exits
    tagged 'stalled'. Exits tagged 'converged' on ||grad||_inf <= grad_tol,
    otherwise 'hit_iteration_cap'.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    log = TrainLog(gamma=gamma)
    try:
        for it in range(cfg.max_iters):
            policy = pclass.policy(theta)
            T = _resolve_horizon(problem, policy, dist, gamma, cfg.horizon)
            rep = cost_gradient(problem, policy, dist, gamma, T=T)
            gnorm = float(np.max(np.abs(rep.grad)))
            log.record(it, rep.cost, gnorm, theta)
            if gnorm <= cfg.grad_tol:
                log.tag = "converged"
                return theta, log
            step = cfg.step_size
            accepted = False
            for _ in range(_MAX_BACKTRACKS):
                cand = theta - step * rep.grad
                try:
                    c_cand = discounted_cost(
                        problem, pclass.policy(cand), dist, gamma, T=T
                    )
                except UnstableRolloutError:
                    step *= 0.5
                    continue
                if c_cand < rep.cost:
                    theta = cand
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                log.tag = "stalled"
                return theta, log
    except UnstableRolloutError as exc:
        log.tag = "diverged"
        raise DivergenceError(
            f"policy gradient diverged at gamma={gamma}: {exc}", log=log
        ) from exc
    log.tag = "hit_iteration_cap"
    return theta, log


def hessian_at(problem: LqrProblem, pclass: PolicyClass, theta,
               dist: InitialDistribution, gamma: float, T: int,
               h: float = FD_HESS_H) -> np.ndarray:
    """Symmetrized central second-difference Hessian of the truncated cost."""
    theta = np.asarray(theta, dtype=float)
    d = pclass.d

    def C(th):
        return discounted_cost(problem, pclass.policy(th), dist, gamma, T=T)

    c0 = C(theta)
    H = np.empty((d, d))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        H[i, i] = (C(theta + ei) - 2.0 * c0 + C(theta - ei)) / h**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            H[i, j] = (
                C(theta + ei + ej) - C(theta + ei - ej)
                - C(theta - ei + ej) + C(theta - ei - ej)
            ) / (4.0 * h**2)
            H[j, i] = H[i, j]
    return 0.5 * (H + H.T)


def hessian_series(problem: LqrProblem, pclass: PolicyClass, theta_star,
                   dist: InitialDistribution, gamma: float, P: np.ndarray,
                   T: int) -> np.ndarray:
    """Curvature of the cost at the optimum from completion of squares.

    With P the optimal value matrix, any control sequence satisfies the
    exact identity C(u) = E[x0'Px0] + sum_t gamma^t |u_t - K* x_t|^2 in the
    norm R + gamma B'PB. For a policy (theta* + d) that represents K*
    exactly at d = 0, u_t - K* x_t = Phi(x_t) d up to O(|d|^2), so

        C(theta* + d) - C(theta*)
            = d' E[ sum_t gamma^t Phi(x_t)'(R + gamma B'PB)Phi(x_t) ] d
              + o(|d|^2)

    along the optimal closed loop, and the Hessian is twice the bracketed
    matrix. Serves as an independent cross-check of the finite-difference
    Hessian at theta*.
    """
    policy = pclass.policy(theta_star)
    X0, W = dist.support_points()
    A, B, R = problem.A, problem.B, problem.R
    weight = R + gamma * (B.T @ np.asarray(P) @ B)

    H = np.zeros((pclass.d, pclass.d))
    x = X0.copy()
    disc = 1.0
    for _ in range(T):
        Phi = pclass.feature_matrix(x)
        H += disc * np.einsum("b,bmd,mk,bkc->dc", W, Phi, weight, Phi)
        u = policy.eval_batch(x)
        x = x @ A.T + u @ B.T
        disc *= gamma
        if disc == 0.0:
            break
    return 2.0 * H


def fit_decay_rate(gaps) -> float:
    """Least-squares geometric decay rate of a positive gap sequence.

    Fits log gap_i ~ a - rate * i and returns rate; nonpositive entries
    are dropped (they are below numerical resolution of the gap).
    """
    gaps = np.asarray(gaps, dtype=float)
    idx = np.arange(len(gaps))
    keep = gaps > 0
    if keep.sum() < 2:
        raise ValueError("need at least two positive gap values")
    coef = np.polyfit(idx[keep], np.log(gaps[keep]), 1)
    return float(-coef[0])
